import numpy as np
import pytest

from cellkalman.spectral import (
    build_operators,
    diagnostics,
    hodge_decompose,
    inverse_tft,
    spectral_basis,
    spectral_process_cov,
    tft,
)
from cellkalman.topology import build_complex

from conftest import random_complex


def pinv_projector(a):
    """Oracle projector onto im(a) via pseudoinverse."""
    return a @ np.linalg.pinv(a)


@pytest.fixture
def two_triangles():
    edges = [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]
    faces = [[1, 2, -3], [4, 5, -6]]
    return build_complex(edges, faces)


class TestBuildOperators:
    def test_triangle_active_face(self, triangle_cc):
        ops = build_operators(triangle_cc)
        np.testing.assert_array_equal(ops.l1, 3 * np.eye(3, dtype=int))
        lam = np.linalg.eigvalsh(ops.l1.astype(float))
        np.testing.assert_allclose(lam, [3.0, 3.0, 3.0], atol=1e-12)

    def test_single_edge(self, edge_cc):
        ops = build_operators(edge_cc)
        np.testing.assert_array_equal(ops.l0, [[1, -1], [-1, 1]])
        np.testing.assert_array_equal(ops.l1, [[2]])
        np.testing.assert_array_equal(ops.l1_upper, [[0]])

    def test_triangle_inactive_face(self, triangle_cc):
        ops = build_operators(triangle_cc.with_activation([0]))
        np.testing.assert_array_equal(ops.l1, ops.l1_lower)
        lam = np.linalg.eigvalsh(ops.l1.astype(float))
        assert np.sum(lam < 1e-9) == 1

    def test_dirac_identities_exact(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            cc = random_complex(rng)
            cc = cc.with_activation((rng.random(cc.n_faces_pool) < 0.5).astype(int))
            ops = build_operators(cc)
            assert np.array_equal(ops.dirac, ops.dirac.T)
            assert np.array_equal(ops.dirac @ ops.dirac, ops.l_block)
            assert np.all(ops.l1_lower @ ops.l1_upper == 0)

    def test_power_split(self):
        rng = np.random.default_rng(1)
        for _ in range(5):
            cc = random_complex(rng)
            ops = build_operators(cc)
            l1 = ops.l1.astype(float)
            low = ops.l1_lower.astype(float)
            upp = ops.l1_upper.astype(float)
            for n in range(1, 6):
                np.testing.assert_allclose(
                    np.linalg.matrix_power(l1, n),
                    np.linalg.matrix_power(low, n) + np.linalg.matrix_power(upp, n),
                    atol=1e-8,
                )


class TestSpectralBasis:
    def test_orthonormal_and_band_sizes(self):
        rng = np.random.default_rng(2)
        for _ in range(8):
            cc = random_complex(rng)
            cc = cc.with_activation((rng.random(cc.n_faces_pool) < 0.7).astype(int))
            ops = build_operators(cc)
            basis = spectral_basis(ops)
            for u in (basis.u0, basis.u1, basis.u2):
                if u.size:
                    np.testing.assert_allclose(u.T @ u, np.eye(u.shape[1]), atol=1e-10)
            b2 = ops.b2.astype(float)
            assert basis.r_g == np.linalg.matrix_rank(ops.b1.astype(float))
            assert basis.r_c == (np.linalg.matrix_rank(b2) if b2.size else 0)
            assert basis.q_g.size == basis.r_g
            assert basis.q_c.size == basis.r_c
            assert basis.q_h.size == ops.n1 - basis.r_g - basis.r_c

    def test_harmonic_vectors_in_kernel(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            cc = random_complex(rng)
            ops = build_operators(cc)
            basis = spectral_basis(ops)
            if basis.q_h.size:
                harm = basis.u1[:, basis.q_h]
                assert np.abs(ops.l1.astype(float) @ harm).max() < 1e-8

    def test_u1_diagonalizes_l1(self):
        rng = np.random.default_rng(4)
        cc = random_complex(rng)
        ops = build_operators(cc)
        basis = spectral_basis(ops)
        recon = basis.u1 @ np.diag(basis.lam1) @ basis.u1.T
        np.testing.assert_allclose(recon, ops.l1.astype(float), atol=1e-8)

    def test_kernel_dimension_cycle_rank(self):
        # connected planar skeleton, no faces: dim ker L1 = N1 - N0 + 1
        edges = [(0, 1), (1, 2), (2, 3), (0, 3), (1, 3)]
        cc = build_complex(edges)
        ops = build_operators(cc)
        basis = spectral_basis(ops)
        assert basis.q_h.size == 5 - 4 + 1
        # all independent cycles filled: kernel empty
        cc2 = build_complex(edges, [[2, 3, -5], [1, 5, -4]])
        basis2 = spectral_basis(build_operators(cc2))
        assert basis2.q_h.size == 0


class TestHodgeDecomposition:
    def test_pure_gradient(self, triangle_cc):
        ops = build_operators(triangle_cc)
        rng = np.random.default_rng(5)
        s0 = rng.standard_normal(3)
        s1 = ops.b1.T.astype(float) @ s0
        grad, curl, harm = hodge_decompose(ops, s1)
        np.testing.assert_allclose(grad, s1, atol=1e-10)
        assert np.abs(curl).max() < 1e-10
        assert np.abs(harm).max() < 1e-10

    def test_pure_curl(self, triangle_cc):
        ops = build_operators(triangle_cc)
        s1 = ops.b2.astype(float) @ np.array([2.5])
        grad, curl, harm = hodge_decompose(ops, s1)
        np.testing.assert_allclose(curl, s1, atol=1e-10)
        assert np.abs(grad).max() < 1e-10
        assert np.abs(harm).max() < 1e-10

    def test_triangle_cycle_flow_harmonic(self, triangle_cc):
        ops = build_operators(triangle_cc.with_activation([0]))
        s1 = np.array([1.0, 1.0, -1.0])
        grad, curl, harm = hodge_decompose(ops, s1)
        # oracle: projectors via pseudoinverse
        pg = pinv_projector(ops.b1.T.astype(float))
        np.testing.assert_allclose(grad, pg @ s1, atol=1e-10)
        np.testing.assert_allclose(harm, s1, atol=1e-10)
        assert np.abs(curl).max() < 1e-12

    def test_orthogonality_and_reconstruction(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            cc = random_complex(rng)
            cc = cc.with_activation((rng.random(cc.n_faces_pool) < 0.5).astype(int))
            ops = build_operators(cc)
            for _ in range(10):
                s1 = rng.standard_normal(cc.n_edges)
                grad, curl, harm = hodge_decompose(ops, s1)
                scale = 1e-10 * (s1 @ s1)
                np.testing.assert_allclose(grad + curl + harm, s1, atol=1e-10)
                assert abs(grad @ curl) <= scale
                assert abs(grad @ harm) <= scale
                assert abs(curl @ harm) <= scale

    def test_matches_pinv_projector_oracle(self):
        rng = np.random.default_rng(7)
        cc = random_complex(rng)
        ops = build_operators(cc)
        pg = pinv_projector(ops.b1.T.astype(float))
        pc = pinv_projector(ops.b2.astype(float)) if ops.n2 else 0
        s1 = rng.standard_normal(cc.n_edges)
        grad, curl, _ = hodge_decompose(ops, s1)
        np.testing.assert_allclose(grad, pg @ s1, atol=1e-9)
        if ops.n2:
            np.testing.assert_allclose(curl, pc @ s1, atol=1e-9)


class TestTft:
    def test_zero_signal(self, triangle_cc):
        basis = spectral_basis(build_operators(triangle_cc))
        assert np.abs(tft(basis, np.zeros(7))).max() == 0

    def test_eigenvector_unit_coefficient(self, triangle_cc):
        ops = build_operators(triangle_cc)
        basis = spectral_basis(ops)
        x = np.zeros(7)
        x[3:6] = basis.u1[:, 1]           # an edge-space basis vector
        coeff = tft(basis, x)
        expected = np.zeros(7)
        expected[3 + 1] = 1.0
        np.testing.assert_allclose(coeff, expected, atol=1e-12)

    def test_round_trip(self):
        rng = np.random.default_rng(8)
        for _ in range(5):
            cc = random_complex(rng)
            basis = spectral_basis(build_operators(cc))
            x = rng.standard_normal(cc.n_total)
            np.testing.assert_allclose(inverse_tft(basis, tft(basis, x)), x, atol=1e-10)


class TestSpectralProcessCov:
    def test_uniform_alpha_matches_eigenvalues(self):
        rng = np.random.default_rng(9)
        for _ in range(5):
            cc = random_complex(rng)
            ops = build_operators(cc)
            basis = spectral_basis(ops)
            c, dt = 0.7, 0.1
            q_hat = spectral_process_cov(ops, basis, np.full(ops.n_total, c), dt)
            np.testing.assert_allclose(
                np.diag(q_hat), dt * c**2 * basis.lam_full, atol=1e-8
            )

    def test_zero_alpha(self, triangle_cc):
        ops = build_operators(triangle_cc)
        basis = spectral_basis(ops)
        q_hat = spectral_process_cov(ops, basis, np.zeros(7), 0.1)
        assert np.abs(q_hat).max() == 0

    def test_degenerate_modes_decouple(self, two_triangles):
        """Two disjoint triangles: explicit localized eigenvectors give the
        degenerate curl pair distinct variances under non-uniform alpha."""
        ops = build_operators(two_triangles)
        basis = spectral_basis(ops)
        # both curl modes share eigenvalue 3
        np.testing.assert_allclose(basis.lam1[basis.q_c], [3.0, 3.0], atol=1e-10)

        # oracle: explicit per-triangle curl eigenvectors; their boundary flows
        # live on the faces, so distinct face uncertainties split the pair
        v1 = np.zeros(6); v1[:3] = np.array([1, 1, -1]) / np.sqrt(3)
        v2 = np.zeros(6); v2[3:] = np.array([1, 1, -1]) / np.sqrt(3)
        alpha = np.concatenate([np.full(6, 0.5), np.full(6, 0.5), [0.5, 2.0]])
        d = ops.dirac.astype(float)
        q = 0.1 * (d * alpha**2) @ d.T
        embed = lambda v: np.concatenate([np.zeros(6), v, np.zeros(2)])
        var1 = embed(v1) @ q @ embed(v1)
        var2 = embed(v2) @ q @ embed(v2)
        assert abs(var1 - var2) > 0.1

        # the built basis spans the same eigenspace; total spectral mass agrees
        q_hat = spectral_process_cov(ops, basis, alpha, 0.1)
        curl_idx = 6 + basis.q_c
        assert abs(np.trace(q_hat[np.ix_(curl_idx, curl_idx)]) - (var1 + var2)) < 1e-8

    def test_symmetric_psd(self):
        rng = np.random.default_rng(10)
        cc = random_complex(rng)
        ops = build_operators(cc)
        basis = spectral_basis(ops)
        alpha = rng.standard_normal(ops.n_total)
        q_hat = spectral_process_cov(ops, basis, alpha, 0.1)
        np.testing.assert_allclose(q_hat, q_hat.T, atol=1e-12)
        assert np.linalg.eigvalsh(q_hat).min() > -1e-10


def test_diagnostics_export(builtin_cc):
    ops = build_operators(builtin_cc)
    basis = spectral_basis(ops)
    doc = diagnostics(ops, basis)
    assert doc["ranks"] == {"r_g": 9, "r_c": 8}
    assert doc["bands"]["gradient"] == 9
    assert doc["bands"]["curl"] == 8
    assert doc["bands"]["harmonic"] == 0
    assert len(doc["eigenvalues"]["order_1"]) == 17
