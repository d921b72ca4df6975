import numpy as np
import pytest

from gsmkit.alignment import AlignedDatabase, trapezoid_rule
from gsmkit.domain import Domain, FunctionSurface, SampleSet
from gsmkit.errors import RankDeficient
from gsmkit.gappy import (
    GappyProblem,
    GenericSurrogateModel,
    design_matrix,
    gappy_fit_linear,
    gappy_fit_transformed,
    gsm_eval,
    linear_gsm,
)
from gsmkit.pod import pod_from_database
from gsmkit.testbed import REFERENCE_DOMAIN

from conftest import lhs_unit


@pytest.fixture(scope="module")
def basis(aligned_db, quad):
    b = pod_from_database(aligned_db, quad, threshold=1.0 - 1e-7)
    assert b.rank >= 3
    return b


def points(n, seed=0):
    return REFERENCE_DOMAIN.from_unit(lhs_unit(np.random.default_rng(seed), n, 2))


def exact_samples(basis, a, n, p=None, seed=0):
    X = points(n, seed)
    p = np.zeros(5) if p is None else np.asarray(p)
    return SampleSet(X, design_matrix(basis, X, p[:-1]) @ a + p[-1])


class TestLinear:
    def test_first_mode(self, basis):
        l = basis.rank
        s = exact_samples(basis, np.eye(l)[0], l + 2)
        a = gappy_fit_linear(basis, s)
        np.testing.assert_allclose(a, np.eye(l)[0], atol=1e-8)
        r = design_matrix(basis, s.points) @ a - s.values
        assert np.linalg.norm(r) <= 1e-8

    def test_linear_combination(self, basis):
        a_true = np.zeros(basis.rank)
        a_true[:2] = [2.0, -0.5]
        a = gappy_fit_linear(basis, exact_samples(basis, a_true, 12))
        np.testing.assert_allclose(a, a_true, atol=1e-6)

    def test_matches_normal_equations(self, basis):
        b3 = basis.with_rank(3)
        X = points(10, 4)
        phi = np.sin(X[:, 0] * 5) + 0.1 * X[:, 1]
        Psi = design_matrix(b3, X)
        oracle = np.linalg.solve(Psi.T @ Psi, Psi.T @ phi)
        np.testing.assert_allclose(gappy_fit_linear(b3, SampleSet(X, phi)), oracle, rtol=1e-8, atol=1e-10)

    def test_least_squares_optimal(self, basis):
        X = points(15, 5)
        s = SampleSet(X, np.cos(3 * X[:, 0]) + 0.05 * X[:, 1] ** 2)
        a = gappy_fit_linear(basis, s)
        Psi = design_matrix(basis, X)
        best = np.linalg.norm(Psi @ a - s.values)
        rng = np.random.default_rng(0)
        for _ in range(50):
            eps = rng.normal(size=a.size)
            eps *= 1e-3 / np.linalg.norm(eps)
            assert best <= np.linalg.norm(Psi @ (a + eps) - s.values)

    def test_too_few_samples(self, basis):
        with pytest.raises(RankDeficient):
            gappy_fit_linear(basis, exact_samples(basis, np.ones(basis.rank), basis.rank - 1))

    def test_numerically_rank_deficient(self):
        unit = Domain((0.0,), (1.0,))
        db = AlignedDatabase([FunctionSurface(lambda X: X[:, 0], d=1), FunctionSurface(lambda X: X[:, 0] ** 2, d=1)], unit)
        b = pod_from_database(db, trapezoid_rule(unit, 21), threshold=1.0)
        with pytest.raises(RankDeficient):
            gappy_fit_linear(b, SampleSet([[0.0], [1.0]], [0.0, 1.0]))


class TestEval:
    def test_first_basis_function(self, basis):
        gsm = GenericSurrogateModel(basis, np.eye(basis.rank)[0], np.zeros(5), 0.0)
        X = points(20, 1)
        np.testing.assert_allclose(gsm_eval(gsm, X), basis(X)[:, 0], rtol=1e-14)

    def test_constant(self, basis):
        gsm = GenericSurrogateModel(basis, np.zeros(basis.rank), np.array([0, 0, 0, 0, 0.3]), 0.0)
        np.testing.assert_allclose(gsm(points(5)), 0.3)

    def test_linear_fit_interpolates_exact_data(self, basis):
        s = exact_samples(basis, np.arange(1.0, basis.rank + 1), 9)
        np.testing.assert_allclose(linear_gsm(basis, s)(s.points), s.values, atol=1e-6)

    def test_pullback_consistency(self, basis):
        a = np.random.default_rng(2).normal(size=basis.rank)
        gsm = GenericSurrogateModel(basis, a, np.zeros(5), 0.0)
        X = points(20, 2)
        Y = basis.db.evaluate(X)
        np.testing.assert_allclose(Y @ gsm.a_y, basis(X) @ a, rtol=1e-8, atol=1e-10)
        np.testing.assert_allclose(gsm.a_y, basis.V_l @ (a / basis.sigma_l), rtol=1e-10)


class TestTransformed:
    def test_untransformed_data(self, basis):
        a_true = np.random.default_rng(3).normal(size=basis.rank)
        s = exact_samples(basis, a_true, 25)
        lin = gappy_fit_linear(basis, s)
        gsm = gappy_fit_transformed(basis, s, delta=1e-3)
        assert np.max(np.abs(gsm.p)) <= 1e-4
        np.testing.assert_allclose(gsm.a_psi, lin, atol=1e-4)

    def test_value_shift(self, basis):
        # p5-only ridge tradeoff p5 = n rbar / (n + delta) gives 0.09996 for n = 25; the coefficients are
        # free, so a much larger delta would let the near-mean first mode absorb the offset instead
        a_true = np.random.default_rng(4).normal(size=basis.rank)
        s = exact_samples(basis, a_true, 25, p=[0, 0, 0, 0, 0.1])
        base = linear_gsm(basis, s)
        gsm = gappy_fit_transformed(basis, s, delta=1e-3)
        assert 0.08 <= gsm.p[-1] <= 0.1
        assert gsm.residual < base.residual

    def test_huge_penalty(self, basis):
        X = points(20, 6)
        s = SampleSet(X, np.sin(4 * X[:, 0]) + 0.05 * X[:, 1])
        gsm = gappy_fit_transformed(basis, s, delta=1e9)
        assert np.max(np.abs(gsm.p)) <= 1e-6
        np.testing.assert_allclose(gsm.a_psi, gappy_fit_linear(basis, s), atol=1e-6)

    def test_input_shift_recovery(self, basis):
        a_true = np.random.default_rng(5).normal(size=basis.rank)
        s = exact_samples(basis, a_true, 30, p=[0.01, 0.02, -0.01, 0.4, 0.05])
        base = linear_gsm(basis, s)
        gsm = gappy_fit_transformed(basis, s, delta=1e-8)
        assert gsm.residual <= 0.1 * base.residual

    def test_objective_not_above_start(self, basis):
        X = points(20, 7)
        s = SampleSet(X, np.sin(4 * X[:, 0]) + 0.05 * X[:, 1])
        gsm = gappy_fit_transformed(basis, s)
        assert gsm.info.objective <= gsm.info.initial_objective
        assert gsm.transformed and gsm.warning is None

    @pytest.mark.parametrize("seed", range(3))
    def test_gradient_matches_fd(self, plain_db, quad, seed):
        # unaligned database: the domain corners keep a margin to the validity region in every direction
        basis = pod_from_database(plain_db, quad, threshold=1.0 - 1e-7)
        X = points(20, seed)
        s = SampleSet(X, np.cos(2 * X[:, 0]) + 0.02 * X[:, 1])
        prob = GappyProblem(basis, s, 0.5)
        z = np.concatenate([gappy_fit_linear(basis, s), np.zeros(5)])
        _, g, _ = prob.linearize(z)
        h = 1e-6 * np.maximum(1.0, np.abs(z))
        fd = np.array([(prob.objective(z + h[i] * e) - prob.objective(z - h[i] * e)) / (2 * h[i]) for i, e in enumerate(np.eye(z.size))])
        assert np.linalg.norm(g - fd) <= 1e-5 * max(np.linalg.norm(g), 1e-12) or np.linalg.norm(g - fd) <= 1e-9

    def test_small_n_guard(self, basis):
        n = basis.rank + 4
        s = exact_samples(basis, np.ones(basis.rank), n)
        gsm = gappy_fit_transformed(basis, s)
        assert gsm.warning and not gsm.transformed
        np.testing.assert_array_equal(gsm.p, 0.0)

    def test_fitted_model_evaluable_on_domain(self, basis):
        X = points(20, 8)
        s = SampleSet(X, np.sin(6 * X[:, 0]) + 0.1 * X[:, 1])
        gsm = gappy_fit_transformed(basis, s, delta=1e-8)
        assert np.all(np.isfinite(gsm(REFERENCE_DOMAIN.grid(12))))
