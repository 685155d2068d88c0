import numpy as np
import pytest

from densmat.config import settings
from densmat.estimators.density_ops import (
    DensityAccumulator,
    FactorizedDensityMatrix,
    IncrementalFactorizer,
    born_probability,
    estimate_density_matrix,
    factorize,
    factorize_embeddings,
    measure_and_collapse,
    partial_trace_x,
    tensor_embed,
)
from densmat.estimators.eigensolver import jacobi_eigh, symmetric_eigh
from densmat.exceptions import InvalidArgumentError, NumericFailureError, ZeroEvidenceError


def unit_rows(n, dim, seed=0):
    z = np.random.default_rng(seed).normal(size=(n, dim))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def low_rank_unit_rows(n, dim, rank, seed=0):
    rng = np.random.default_rng(seed)
    basis, _ = np.linalg.qr(rng.normal(size=(dim, rank)))
    z = rng.normal(size=(n, rank)) @ basis.T
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def random_factorized(rank, dim, seed=0):
    rng = np.random.default_rng(seed)
    v, _ = np.linalg.qr(rng.normal(size=(dim, rank)))
    lam = rng.uniform(0.1, 1.0, size=rank)
    return FactorizedDensityMatrix(v=v.T.copy(), lam=lam / lam.sum())


class TestBornRule:
    phi = np.array([1.0, 1.0]) / np.sqrt(2.0)
    psi = np.array([1.0, -1.0]) / np.sqrt(2.0)

    def test_pure_state_measures_itself_with_certainty(self):
        rho1 = np.outer(self.phi, self.phi)
        assert born_probability(rho1, self.phi) == pytest.approx(1.0, abs=1e-12)

    def test_even_mixture_gives_one_half(self):
        rho2 = 0.5 * np.outer(self.phi, self.phi) + 0.5 * np.outer(self.psi, self.psi)
        assert born_probability(rho2, self.phi) == pytest.approx(0.5, abs=1e-12)

    def test_factorized_and_dense_agree(self):
        rho = random_factorized(3, 6, seed=4)
        z = unit_rows(10, 6, seed=5)
        assert np.allclose(born_probability(rho, z), born_probability(rho.to_dense(), z), atol=1e-14)

    def test_rejects_non_unit_or_mismatched_states(self):
        rho = random_factorized(2, 4)
        with pytest.raises(InvalidArgumentError):
            born_probability(rho, np.ones(4))
        with pytest.raises(InvalidArgumentError):
            born_probability(rho, np.ones(3) / np.sqrt(3))


def test_estimated_density_matrix_is_a_valid_state():
    rho = estimate_density_matrix(unit_rows(200, 8))
    assert np.allclose(rho, rho.T, atol=1e-12)
    assert np.trace(rho) == pytest.approx(1.0, abs=1e-9)
    assert np.linalg.eigvalsh(rho).min() >= -1e-8


def test_streamed_batches_match_one_pass():
    z = unit_rows(300, 5, seed=2)
    whole = estimate_density_matrix(z)
    streamed = estimate_density_matrix(iter([z[:100], z[100:250], z[250:]]))
    assert np.allclose(whole, streamed, atol=1e-14)


def test_estimation_rejects_empty_and_non_unit_input():
    with pytest.raises(InvalidArgumentError):
        estimate_density_matrix(iter([]))
    with pytest.raises(InvalidArgumentError):
        estimate_density_matrix(2.0 * unit_rows(4, 3))


def test_accumulator_merge_matches_single_pass():
    z = unit_rows(120, 6, seed=8)
    left = DensityAccumulator(6).add(z[:50])
    right = DensityAccumulator(6).add(z[50:])
    merged = left.merge(right)
    assert merged.count == 120
    assert np.allclose(merged.result(), estimate_density_matrix(z), atol=1e-14)


class TestFactorize:
    def test_full_rank_reconstructs(self):
        rho = estimate_density_matrix(unit_rows(50, 7, seed=1))
        fact = factorize(rho, 7)
        assert np.allclose(fact.to_dense(), rho, atol=1e-12)
        assert np.all(np.diff(fact.lam) <= 1e-15)
        assert fact.lam.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.allclose(fact.v @ fact.v.T, np.eye(7), atol=1e-8)

    def test_truncation_keeps_the_top_eigenvalues(self):
        rho = estimate_density_matrix(unit_rows(50, 7, seed=1))
        full = factorize(rho, 7)
        top = factorize(rho, 3)
        assert np.allclose(top.lam, full.lam[:3], atol=1e-12)
        assert top.lam.sum() <= 1.0 + 1e-9
        assert factorize(rho, 3, renormalize=True).lam.sum() == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("r", [0, 8])
    def test_rank_out_of_range(self, r):
        with pytest.raises(InvalidArgumentError):
            factorize(np.eye(7) / 7, r)


class TestEigensolver:
    def test_jacobi_agrees_with_lapack(self):
        a = np.random.default_rng(3).normal(size=(9, 9))
        a = a + a.T
        w_j, u_j = symmetric_eigh(a, solver="jacobi")
        w_l, _ = symmetric_eigh(a, solver="lapack")
        assert np.allclose(w_j, w_l, atol=1e-10)
        assert np.allclose(a @ u_j, u_j * w_j, atol=1e-8)
        assert np.all(np.diff(w_j) <= 0)

    def test_top_k_subset(self):
        a = np.diag([1.0, 5.0, 3.0, 2.0])
        w, u = symmetric_eigh(a, top=2)
        assert np.allclose(w, [5.0, 3.0])
        assert np.allclose(np.abs(u[:, 0]), [0, 1, 0, 0])

    def test_jacobi_reports_non_convergence(self):
        a = np.array([[2.0, 1.0], [1.0, 3.0]])
        with pytest.raises(NumericFailureError) as info:
            jacobi_eigh(a, max_sweeps=0)
        assert "sweeps" in info.value.diagnostics

    def test_rejects_non_finite_matrix(self):
        with pytest.raises(NumericFailureError):
            symmetric_eigh(np.array([[np.nan, 0.0], [0.0, 1.0]]))


class TestIncrementalFactorizer:
    def test_exact_when_rank_fits_the_budget(self):
        z = low_rank_unit_rows(200, 30, rank=5, seed=6)
        fact = IncrementalFactorizer(30, rank=10).add(z[:90]).add(z[90:]).result()
        assert np.allclose(fact.to_dense(), estimate_density_matrix(z), atol=1e-10)

    def test_merge_of_shards(self):
        z = low_rank_unit_rows(160, 20, rank=4, seed=9)
        left = IncrementalFactorizer(20, rank=8).add(z[:70])
        right = IncrementalFactorizer(20, rank=8).add(z[70:])
        fact = left.merge(right).result()
        assert np.allclose(fact.to_dense(), estimate_density_matrix(z), atol=1e-10)

    def test_large_dimension_path_pads_to_requested_rank(self, monkeypatch):
        monkeypatch.setattr(settings, "dense_dim_limit", 10)
        z = low_rank_unit_rows(100, 30, rank=5, seed=3)
        fact = factorize_embeddings([z[:40], z[40:]], dim=30, r=8)
        assert fact.rank == 8
        assert np.allclose(fact.lam[5:], 0.0)
        assert np.allclose(fact.v @ fact.v.T, np.eye(8), atol=1e-8)
        assert np.allclose(fact.to_dense(), estimate_density_matrix(z), atol=1e-10)


def test_tensor_embed_uses_x_major_layout():
    zx = np.array([1.0, 2.0, 3.0])
    zy = np.array([10.0, 20.0])
    joint = tensor_embed(zx, zy)
    for a in range(3):
        for b in range(2):
            assert joint[a * 2 + b] == zx[a] * zy[b]
    batch = tensor_embed(np.vstack([zx, zx]), np.vstack([zy, zy]))
    assert np.array_equal(batch[1], joint)


def test_partial_trace_of_product_state():
    rho_a = estimate_density_matrix(unit_rows(5, 3, seed=1))
    rho_b = estimate_density_matrix(unit_rows(5, 2, seed=2))
    assert np.allclose(partial_trace_x(np.kron(rho_a, rho_b), 3, 2), rho_b, atol=1e-14)


def test_measure_and_collapse_matches_dense_projection():
    dx, dy = 3, 2
    rho = random_factorized(4, dx * dy, seed=12)
    z = unit_rows(1, dx, seed=13)[0]
    projector = np.kron(np.outer(z, z), np.eye(dy))
    projected = projector @ rho.to_dense() @ projector
    expected = partial_trace_x(projected, dx, dy) / np.trace(projected)

    state = measure_and_collapse(rho, z, dx, dy)
    assert np.allclose(state.rho_y, expected, atol=1e-12)
    assert state.evidence == pytest.approx(np.trace(projected), rel=1e-12)
    assert np.trace(state.rho_y) == pytest.approx(1.0, abs=1e-12)


def test_collapse_without_support_raises():
    # joint state e2 (x) e1; querying e1 on the input side finds nothing
    v = np.kron([0.0, 1.0], [1.0, 0.0]).reshape(1, -1)
    rho = FactorizedDensityMatrix(v=v, lam=np.array([1.0]))
    with pytest.raises(ZeroEvidenceError):
        measure_and_collapse(rho, np.array([1.0, 0.0]), 2, 2)
