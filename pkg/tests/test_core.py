import numpy as np
import pytest

from proxmag.core import (
    AdjointReport,
    CallableOperator,
    ComplexImage,
    IdentityOperator,
    MagPhase,
    MatrixOperator,
    adjoint_check,
    decompose,
    operator_norm_estimate,
    recompose,
)


class TestDecompose:
    def test_identity_case(self):
        m = decompose(ComplexImage([1.0 + 0.0j]))
        assert m.magnitude.ravel()[0] == 1.0
        assert m.phase.ravel()[0] == 1.0 + 0.0j

    def test_zero_convention(self):
        m = decompose(ComplexImage([0.0 + 0.0j]))
        assert m.magnitude.ravel()[0] == 0.0
        assert m.phase.ravel()[0] == 1.0 + 0.0j

    def test_axis_aligned_phases(self):
        m = decompose(ComplexImage([3.0j, -2.0 + 0.0j]))
        assert np.allclose(m.magnitude.ravel(), [3.0, 2.0])
        assert np.allclose(m.phase.ravel(), [1.0j, -1.0], atol=1e-15)

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            ComplexImage([np.nan + 0.0j])
        with pytest.raises(ValueError):
            ComplexImage([1.0 + 1j * np.inf])


class TestRecompose:
    def test_simple_cases(self):
        assert recompose(MagPhase([1.0], [1.0 + 0j])).data.ravel()[0] == 1.0
        assert recompose(MagPhase([2.0], [1.0j])).data.ravel()[0] == 2.0j

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            MagPhase(np.ones(3), np.ones(2, dtype=complex))

    def test_invariants_checked(self):
        with pytest.raises(ValueError):
            MagPhase([-1.0], [1.0 + 0j])
        with pytest.raises(ValueError):
            MagPhase([1.0], [2.0 + 0j])

    def test_roundtrip_100_random_images(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            z = ComplexImage(
                rng.standard_normal((2, 3, 4)) + 1j * rng.standard_normal((2, 3, 4))
            )
            m = decompose(z)
            assert np.max(np.abs(np.abs(m.phase) - 1.0)) <= 1e-12
            back = recompose(m)
            err = np.max(np.abs(back.data - z.data)) / np.max(np.abs(z.data))
            assert err < 1e-12


class TestOperatorNorm:
    def test_identity(self):
        assert operator_norm_estimate(IdentityOperator((5,)), iters=50) == pytest.approx(
            1.0, abs=1e-6
        )

    def test_diagonal_scaling(self):
        op = MatrixOperator(2.0 * np.eye(5))
        assert operator_norm_estimate(op, iters=50) == pytest.approx(2.0, abs=1e-6)

    def test_zero_operator(self):
        op = MatrixOperator(np.zeros((4, 4)))
        assert operator_norm_estimate(op) == 0.0

    def test_random_matrix_vs_jacobi_svd_oracle(self):
        rng = np.random.default_rng(11)
        a = rng.standard_normal((4, 3))
        est = operator_norm_estimate(MatrixOperator(a), iters=300)
        assert est == pytest.approx(_jacobi_largest_singular_value(a), abs=1e-4)

    def test_deterministic_given_seed(self):
        op = MatrixOperator(np.random.default_rng(0).standard_normal((6, 6)))
        assert operator_norm_estimate(op, seed=5) == operator_norm_estimate(op, seed=5)

    def test_iters_validated(self):
        with pytest.raises(ValueError):
            operator_norm_estimate(IdentityOperator((2,)), iters=0)


def _jacobi_largest_singular_value(a: np.ndarray) -> float:
    """One-sided Jacobi: rotate column pairs until orthogonal, read norms."""
    u = a.astype(np.float64).copy()
    n = u.shape[1]
    for _ in range(60):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = u[:, p] @ u[:, q]
                app = u[:, p] @ u[:, p]
                aqq = u[:, q] @ u[:, q]
                off = max(off, abs(apq))
                if abs(apq) < 1e-15:
                    continue
                theta = 0.5 * np.arctan2(2 * apq, app - aqq)
                c, s = np.cos(theta), np.sin(theta)
                up = c * u[:, p] + s * u[:, q]
                uq = -s * u[:, p] + c * u[:, q]
                u[:, p], u[:, q] = up, uq
        if off < 1e-15:
            break
    return float(np.sqrt(max(u[:, j] @ u[:, j] for j in range(n))))


class TestAdjointCheck:
    def test_identity_passes(self):
        rep = adjoint_check(IdentityOperator((7,)))
        assert rep.passed and rep.worst_error < 1e-14

    def test_constructed_violation_fails(self):
        bad = CallableOperator((4,), (4,), lambda x: 2.0 * x, lambda y: y.copy())
        rep = adjoint_check(bad)
        assert isinstance(rep, AdjointReport)
        assert not rep.passed

    def test_reports_do_not_raise(self):
        bad = CallableOperator((4,), (4,), lambda x: 2.0 * x, lambda y: y.copy())
        adjoint_check(bad, trials=3, tol=1e-12)  # no exception

    def test_trials_validated(self):
        with pytest.raises(ValueError):
            adjoint_check(IdentityOperator((2,)), trials=0)


class TestComplexImage:
    def test_vector_coercion(self):
        img = ComplexImage([1.0, 2.0, 3.0])
        assert img.shape == (1, 1, 3)

    def test_plane_coercion(self):
        img = ComplexImage(np.ones((4, 5)))
        assert img.shape == (1, 4, 5)

    def test_immutable(self):
        img = ComplexImage(np.ones((2, 2)))
        with pytest.raises(ValueError):
            img.data[0, 0, 0] = 5.0

    def test_does_not_alias_input(self):
        buf = np.ones((2, 2), dtype=np.complex128)
        img = ComplexImage(buf)
        buf[0, 0] = 9.0
        assert img.data[0, 0, 0] == 1.0
