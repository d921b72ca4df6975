import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gsmkit.alignment import trapezoid_rule
from gsmkit.domain import Domain, FunctionSurface, SampleSet
from gsmkit.hierarchical import build_hk
from gsmkit.kriging import CorrelationConfig, RegressionBasis, build_kriging
from gsmkit.pod import pod_from_database
from gsmkit.sampling import (
    AdaptivePlan,
    CandidateGrid,
    adaptive_discrepancy_step,
    adaptive_mse_step,
    latin_hypercube,
    run_adaptive,
)
from gsmkit.testbed import REFERENCE_DOMAIN, draw_distortion, holdout_member

UNIT2 = Domain((0.0, 0.0), (1.0, 1.0))
UNIT1 = Domain((0.0,), (1.0,))


def lofi(X):
    return 1.0 + np.sin(3 * X[:, 0]) + 0.5 * X[:, 1]


def instance(seed, n=8):
    rng = np.random.default_rng(seed)
    X = latin_hypercube(n, UNIT2, seed)
    Y = 1.2 * lofi(X) + 0.3 * np.cos(4 * X[:, 1])
    corr = CorrelationConfig(tuple(rng.uniform(3, 15, 2)))
    s = SampleSet(X, Y)
    return s, build_hk(s, lofi, corr), build_kriging(s, RegressionBasis(), corr), rng


class TestLatinHypercube:
    def test_single_point(self):
        X = latin_hypercube(1, REFERENCE_DOMAIN, 0)
        assert X.shape == (1, 2) and REFERENCE_DOMAIN.contains(X).all()

    def test_strata_n5(self):
        U = REFERENCE_DOMAIN.to_unit(latin_hypercube(5, REFERENCE_DOMAIN, 3))
        for k in range(2):
            assert sorted(np.floor(U[:, k] * 5).astype(int)) == [0, 1, 2, 3, 4]

    def test_determinism(self):
        a = latin_hypercube(10, UNIT2, 42)
        np.testing.assert_array_equal(a, latin_hypercube(10, UNIT2, 42))
        assert not np.array_equal(a, latin_hypercube(10, UNIT2, 43))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 60), st.integers(1, 4), st.integers(0, 2**31))
    def test_one_point_per_stratum(self, n, d, seed):
        dom = Domain(tuple(-np.arange(d, dtype=float)), tuple(np.arange(1, d + 1, dtype=float) ** 2))
        U = dom.to_unit(latin_hypercube(n, dom, seed))
        for k in range(d):
            assert np.array_equal(np.sort(np.floor(U[:, k] * n).astype(int)), np.arange(n))


class TestMseStep:
    def test_single_candidate(self):
        s, hk, _, _ = instance(0)
        grid = CandidateGrid(np.array([[0.5, 0.5]]))
        np.testing.assert_array_equal(adaptive_mse_step(hk, grid), [0.5, 0.5])

    def test_never_returns_sample(self):
        s, hk, _, _ = instance(1)
        grid = CandidateGrid(np.vstack([s.points[:1], [[0.42, 0.77]]]))
        np.testing.assert_array_equal(adaptive_mse_step(hk, grid), [0.42, 0.77])

    @pytest.mark.parametrize("seed", range(5))
    def test_brute_force(self, seed):
        s, hk, _, rng = instance(seed)
        pts = rng.uniform(size=(20, 2))
        best = None
        for x in pts:
            v = hk.predict_mse(x[None])[0]
            if best is None or v > best[0]:
                best = (v, x)
        np.testing.assert_array_equal(adaptive_mse_step(hk, CandidateGrid(pts)), best[1])

    def test_scaling_invariance(self):
        s, hk, _, rng = instance(2)
        grid = CandidateGrid(rng.uniform(size=(50, 2)))

        class Scaled:
            samples = hk.samples

            def predict_mse(self, X):
                return 7.5 * hk.predict_mse(X)

        np.testing.assert_array_equal(adaptive_mse_step(Scaled(), grid), adaptive_mse_step(hk, grid))

    def test_all_sampled(self):
        s, hk, _, _ = instance(3)
        with pytest.raises(ValueError):
            adaptive_mse_step(hk, CandidateGrid(s.points[:2]))


class TestDiscrepancyStep:
    def test_identical_models_tie_to_first(self):
        s, _, kri, rng = instance(4)
        hk1 = build_hk(s, lambda X: np.ones(len(X)), kri.corr)
        grid = CandidateGrid(rng.uniform(size=(30, 2)))
        np.testing.assert_array_equal(adaptive_discrepancy_step(hk1, kri, grid), grid.points[0])

    def test_sample_never_chosen(self):
        s, hk, kri, _ = instance(5)
        grid = CandidateGrid(np.vstack([s.points, [[0.5, 0.5]]]))
        np.testing.assert_array_equal(adaptive_discrepancy_step(hk, kri, grid), [0.5, 0.5])

    @pytest.mark.parametrize("seed", range(5))
    def test_brute_force(self, seed):
        s, hk, kri, rng = instance(10 + seed)
        pts = rng.uniform(size=(20, 2))
        d = [abs(hk.predict(x[None])[0] - kri.predict(x[None])[0]) for x in pts]
        np.testing.assert_array_equal(adaptive_discrepancy_step(hk, kri, CandidateGrid(pts)), pts[int(np.argmax(d))])


@pytest.fixture(scope="module")
def family_run(aligned_db, quad):
    basis = pod_from_database(aligned_db, quad)
    oracle = holdout_member(1, distortion=draw_distortion(np.random.default_rng(5), REFERENCE_DOMAIN))
    X = latin_hypercube(5, REFERENCE_DOMAIN, 0)

    def run():
        plan = AdaptivePlan("discrepancy", SampleSet(X, oracle(X)), 20)
        return run_adaptive(oracle, plan, REFERENCE_DOMAIN, basis)

    return run


class TestRun:
    def oracle1d(self):
        return FunctionSurface(lambda X: np.sin(6 * X[:, 0]) + X[:, 0], d=1)

    def test_no_steps(self):
        f = self.oracle1d()
        X = latin_hypercube(4, UNIT1, 0)
        res = run_adaptive(f, AdaptivePlan("mse", SampleSet(X, f(X)), 4), UNIT1)
        assert len(res.trace) == 1 and res.samples.n == 4

    def test_mse_three_steps(self):
        f = self.oracle1d()
        X = latin_hypercube(4, UNIT1, 1)
        res = run_adaptive(f, AdaptivePlan("mse", SampleSet(X, f(X)), 7), UNIT1)
        assert res.samples.n == 7 and len(res.plan.history) == 3
        new = np.array(res.plan.history)
        assert len({tuple(x) for x in new}) == 3
        assert not any(np.any(np.all(np.abs(X - x) < 1e-9, axis=1)) for x in new)
        assert [r.n for r in res.trace] == [4, 5, 6, 7]

    def test_discrepancy_improves(self, family_run):
        res = family_run()
        assert res.samples.n == 20
        assert res.trace[-1].eta1 < res.trace[0].eta1

    def test_trace_reproducible(self, family_run):
        assert family_run().to_csv() == family_run().to_csv()
