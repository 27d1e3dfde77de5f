import itertools

import numpy as np
import pytest

from fermibath.lattice import (LEFT, RIGHT, LatticeGeometry, ModeLayout, build_system_hamiltonian,
                               build_total_hamiltonian, reorder_to_canonical,
                               reorder_to_partitions, star_bath)


def brute_force_bonds(L):
    bonds = set()
    for r, c, r2, c2 in itertools.product(range(L), repeat=4):
        if abs(r - r2) + abs(c - c2) == 1:
            bonds.add(frozenset({(r, c), (r2, c2)}))
    return bonds


@pytest.mark.parametrize("L", [1, 3, 0, -2, 5])
def test_rejects_bad_sizes(L):
    with pytest.raises(ValueError):
        LatticeGeometry(L)


def test_partition_halves_and_orientation():
    geom = LatticeGeometry(4)
    assert np.sum(geom.partition == LEFT) == geom.N // 2
    assert geom.partition[geom.site_index(3, 1)] == LEFT
    assert geom.partition[geom.site_index(0, 2)] == RIGHT


def test_city_block_metric():
    geom = LatticeGeometry(4)
    assert geom.city_block(geom.site_index(0, 0), geom.site_index(3, 2)) == 5
    for n, m in itertools.product(range(geom.N), repeat=2):
        d = geom.city_block(n, m)
        assert d == geom.city_block(m, n) == geom.distance_matrix[n, m]
        assert (d == 0) == (n == m)


def test_row_major_indexing():
    geom = LatticeGeometry(4)
    assert geom.site_index(1, 2) == 6
    assert geom.coords(6) == (1, 2)


def test_smallest_square():
    h = build_system_hamiltonian(LatticeGeometry(2), J=1.0, h_s=0.0)
    expected = -np.array([[0, 1, 1, 0], [1, 0, 0, 1], [1, 0, 0, 1], [0, 1, 1, 0]], dtype=float)
    np.testing.assert_array_equal(h, expected)


def test_zero_hopping_is_diagonal():
    h = build_system_hamiltonian(LatticeGeometry(4), J=0.0, h_s=2.5)
    np.testing.assert_array_equal(h, 2.5 * np.eye(16))


@pytest.mark.parametrize("L", [2, 4, 6, 8])
def test_bond_count_matches_enumeration(L):
    geom = LatticeGeometry(L)
    h = build_system_hamiltonian(geom, J=1.0, h_s=5.0)
    n_bonds = np.count_nonzero(np.triu(h, k=1))
    assert n_bonds == len(brute_force_bonds(L)) == 2 * L * (L - 1)
    assert np.abs(h - h.T).max() < 1e-12
    for b in brute_force_bonds(L):
        (r, c), (r2, c2) = sorted(b)
        assert h[geom.site_index(r, c), geom.site_index(r2, c2)] == -1.0


def test_bath_coupling_at_default_parameters():
    gamma = 0.7
    bath = star_bath(gamma, M=100, omega_max=10.0, h_s=5.0)
    assert bath.omega[-1] == pytest.approx(10.0)
    assert bath.coupling[-1] == pytest.approx(np.sqrt(gamma * 0.2 / np.pi), rel=1e-14)
    assert bath.omega[0] > 0


def test_star_graph_single_site():
    # N=1 needs L=1, which the geometry rejects; build the star by hand and
    # compare with the first site of an L=2 lattice with J=0.
    gamma, M, wmax, hs = 0.3, 2, 4.0, 2.0
    h, layout = build_total_hamiltonian(LatticeGeometry(2), 0.0, hs, gamma, M, wmax)
    w = np.array([2.0, 4.0])
    v = np.sqrt(gamma * (w / M) * (wmax / (np.pi * hs)))
    star = np.array([[hs, -v[0], -v[1]], [-v[0], w[0], 0], [-v[1], 0, w[1]]])
    idx = [0, layout.bath_index(0, 1), layout.bath_index(0, 2)]
    np.testing.assert_allclose(h[np.ix_(idx, idx)], star, rtol=0, atol=1e-15)


def test_total_hamiltonian_structure():
    geom = LatticeGeometry(2)
    h, layout = build_total_hamiltonian(geom, 1.0, 5.0, 0.4, 3, 10.0)
    N, M = geom.N, 3
    assert h.shape == (N * (M + 1),) * 2
    assert np.abs(h - h.T).max() < 1e-12
    bath = slice(N, None)
    hb = h[bath, bath]
    np.testing.assert_array_equal(hb, np.diag(np.diag(hb)))
    for n in range(N):
        others = [layout.bath_index(k, m) for k in range(N) if k != n for m in range(1, M + 1)]
        assert np.all(h[n, others] == 0)
        np.testing.assert_allclose(np.diag(h)[[layout.bath_index(n, m) for m in (1, 2, 3)]],
                                   [10 / 3, 20 / 3, 10.0])


def test_zero_gamma_is_block_diagonal():
    geom = LatticeGeometry(2)
    h, _ = build_total_hamiltonian(geom, 1.0, 5.0, 0.0, 4, 10.0)
    assert np.all(h[:geom.N, geom.N:] == 0)


@pytest.mark.parametrize("kwargs", [dict(M=0), dict(omega_max=0.0), dict(h_s=-1.0)])
def test_total_hamiltonian_rejects_bad_parameters(kwargs):
    args = dict(J=1.0, h_s=5.0, gamma=0.1, M=3, omega_max=10.0) | kwargs
    with pytest.raises(ValueError):
        build_total_hamiltonian(LatticeGeometry(2), **args)


def test_toy_layout_permutation():
    # 2 sites cannot form a square lattice; emulate with an L=2 lattice row:
    # sites 0 (left) and 1 (right) of row 0, M=1.
    layout = ModeLayout(LatticeGeometry(2), 1)
    # canonical: s0 s1 s2 s3 b0 b1 b2 b3; left sites are 0 and 2
    np.testing.assert_array_equal(layout.perm, [0, 2, 4, 6, 1, 3, 5, 7])
    np.testing.assert_array_equal(layout.lr_is_system, [1, 1, 0, 0, 1, 1, 0, 0])


def test_bath_modes_inherit_partition():
    layout = ModeLayout(LatticeGeometry(4), 3)
    for n in range(16):
        for m in (1, 2, 3):
            assert layout.partition[layout.bath_index(n, m)] == layout.geometry.partition[n]


def test_reorder_roundtrip_and_spectrum(rng):
    layout = ModeLayout(LatticeGeometry(2), 2)
    X = rng.normal(size=(12, 12)) + 1j * rng.normal(size=(12, 12))
    C = X @ X.conj().T
    lr = reorder_to_partitions(layout, C)
    np.testing.assert_array_equal(reorder_to_canonical(layout, lr), C)
    assert np.trace(lr) == pytest.approx(np.trace(C))
    np.testing.assert_allclose(np.linalg.eigvalsh(lr), np.linalg.eigvalsh(C), atol=1e-10)


def test_reorder_identity_for_bare_system():
    layout = ModeLayout(LatticeGeometry(2), 0)
    C = np.arange(16.0).reshape(4, 4)
    # left sites 0, 2 come first
    np.testing.assert_array_equal(reorder_to_partitions(layout, C)[0], C[0, [0, 2, 1, 3]])


def test_reorder_dimension_mismatch():
    with pytest.raises(ValueError):
        reorder_to_partitions(ModeLayout(LatticeGeometry(2), 1), np.eye(5))
