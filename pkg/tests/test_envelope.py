import numpy as np
import pytest

from canonical_ouq.canonical import InputSpec
from canonical_ouq.envelope import lower_envelope, max_quantile, model_output_range
from canonical_ouq.errors import BracketingFailure, DomainError
from canonical_ouq.models import BuiltinModel, builtin_model
from canonical_ouq.objective import INEQUALITY
from canonical_ouq.solver import SolverConfig

from oracles import markov_envelope

MARKOV = [InputSpec.from_moments(0.0, 1.0, [0.5])]
LINEAR = builtin_model("linear", 1)


class TestLowerEnvelope:
    def test_markov_grid(self):
        curve = lower_envelope(MARKOV, LINEAR, thresholds=[0.25, 0.75], solver=SolverConfig(seed=0))
        assert curve.values == pytest.approx([0.0, 1 / 3], abs=1e-3)
        assert not curve.errors

    def test_markov_analytic(self):
        h = np.linspace(0.05, 1.0, 12)
        curve = lower_envelope(MARKOV, LINEAR, thresholds=h, solver=SolverConfig(seed=1))
        assert curve.values == pytest.approx([markov_envelope(x) for x in h], abs=2e-3)
        assert curve.values[-1] == 1.0

    def test_at_or_above_maximum(self):
        curve = lower_envelope(MARKOV, LINEAR, thresholds=[1.0, 1.5], solver=SolverConfig(seed=0))
        assert curve.values == pytest.approx([1.0, 1.0])

    def test_monotone_and_below_raw(self):
        h = np.linspace(0.0, 1.0, 15)
        curve = lower_envelope(MARKOV, LINEAR, thresholds=h, solver=SolverConfig(seed=2, max_generations=30))
        assert np.all(np.diff(curve.values) >= 0)
        assert np.all(curve.values <= curve.raw_values + 1e-15)

    def test_witnesses_attain_values(self):
        h = np.linspace(0.3, 0.9, 5)
        curve = lower_envelope(MARKOV, LINEAR, thresholds=h, solver=SolverConfig(seed=0))
        for j, hj in enumerate(h):
            measure = curve.witness_measure(j)
            assert measure[0].moments(1)[0] == pytest.approx(0.5, abs=1e-12)
            assert measure.cdf(LINEAR, hj) == pytest.approx(curve.values[j], abs=1e-12)

    def test_crossing(self):
        h = np.linspace(0.0, 1.0, 21)
        curve = lower_envelope(MARKOV, LINEAR, thresholds=h, solver=SolverConfig(seed=0))
        assert curve.crossing(0.4) == pytest.approx(0.85)
        assert curve.crossing(1.1) is None

    def test_more_moments_raise_envelope(self):
        h = np.linspace(0.1, 0.9, 9)
        two = [InputSpec.from_moments(0.0, 1.0, [0.5, 1 / 3])]
        one = lower_envelope(MARKOV, LINEAR, thresholds=h, solver=SolverConfig(seed=0))
        more = lower_envelope(two, LINEAR, thresholds=h, solver=SolverConfig(seed=0))
        assert np.all(one.values <= more.values + 1e-3)
        assert np.any(more.values > one.values + 0.05)

    def test_inequality_lowers_envelope(self):
        h = np.linspace(0.1, 0.9, 9)
        relaxed = [MARKOV[0].relaxed(0.2)]
        eq = lower_envelope(MARKOV, LINEAR, thresholds=h, solver=SolverConfig(seed=0))
        ineq = lower_envelope(relaxed, LINEAR, mode=INEQUALITY, thresholds=h, solver=SolverConfig(seed=0))
        assert np.all(ineq.values <= eq.values + 1e-3)
        # mean may drop to 0.4: envelope is 1 - 0.6 / h above 0.6
        assert ineq.values[-1] == pytest.approx(1 - 0.6 / 0.9, abs=2e-3)

    def test_errors_recorded(self):
        def broken(points):
            raise DomainError("outside the model domain")

        model = BuiltinModel("broken", 1, broken)
        curve = lower_envelope(MARKOV, model, thresholds=[0.2, 0.4], solver=SolverConfig(seed=0, max_generations=5))
        assert sorted(curve.errors) == [0, 1]
        assert "DomainError" in curve.errors[0]
        assert np.all(np.isnan(curve.values))
        assert curve.witness_measure(0) is None

    @pytest.mark.parametrize("grid", [[], [0.5, 0.2], [[0.1, 0.2]]])
    def test_bad_grid(self, grid):
        with pytest.raises(ValueError):
            lower_envelope(MARKOV, LINEAR, thresholds=grid)

    def test_seeded(self):
        h = [0.3, 0.6, 0.9]
        a = lower_envelope(MARKOV, LINEAR, thresholds=h, solver=SolverConfig(seed=4))
        b = lower_envelope(MARKOV, LINEAR, thresholds=h, solver=SolverConfig(seed=4))
        assert np.array_equal(a.values, b.values)


@pytest.fixture(scope="module")
def markov_04():
    return max_quantile(MARKOV, LINEAR, level=0.4, interval=(0.0, 1.0), solver=SolverConfig(seed=0))


class TestMaxQuantile:
    def test_markov_level_04(self, markov_04):
        # envelope 1 - 0.5 / h crosses 0.4 at h = 5 / 6
        res = markov_04
        assert res.quantile == pytest.approx(5 / 6, abs=2e-3)
        assert res.lower <= res.quantile <= res.upper
        assert res.lower_value < 0.4 <= res.upper_value

    @pytest.mark.parametrize("level", [0.5, 0.95])
    def test_markov_high_levels(self, level):
        # envelope stays at or below 1/2 on [0, 1), so the quantile is the upper bound
        res = max_quantile(MARKOV, LINEAR, level=level, interval=(0.0, 1.0), solver=SolverConfig(seed=0))
        assert res.quantile == pytest.approx(1.0, abs=2e-3)

    def test_witness_certifies_lower_bound(self, markov_04):
        res = markov_04
        assert res.witness.cdf(LINEAR, res.lower) < 0.4
        assert res.witness[0].moments(1)[0] == pytest.approx(0.5, abs=1e-12)

    def test_interval_widened(self):
        res = max_quantile(MARKOV, LINEAR, level=0.4, interval=(0.9, 0.95), resolution=1e-2, solver=SolverConfig(seed=0))
        assert res.quantile == pytest.approx(5 / 6, abs=1e-2)

    def test_default_interval(self):
        res = max_quantile(MARKOV, LINEAR, level=0.4, solver=SolverConfig(seed=0))
        assert res.quantile == pytest.approx(5 / 6, abs=2e-3)

    def test_deterministic(self):
        fast = SolverConfig(seed=5, population=20, max_generations=60)
        a = max_quantile(MARKOV, LINEAR, level=0.4, interval=(0.0, 1.0), resolution=1e-2, solver=fast)
        b = max_quantile(MARKOV, LINEAR, level=0.4, interval=(0.0, 1.0), resolution=1e-2, solver=fast)
        assert a.probes == b.probes

    def test_bracketing_failure(self):
        # outputs above 1/2 are undefined; mass can sit there freely,
        # so the envelope never reaches the level
        model = BuiltinModel("holes", 1, lambda p: np.where(p[:, 0] > 0.5, np.nan, p[:, 0]))
        with pytest.raises(BracketingFailure):
            max_quantile(MARKOV, model, level=0.5, interval=(0.0, 1.0), solver=SolverConfig(seed=0, max_generations=20))

    def test_level_range(self):
        with pytest.raises(ValueError):
            max_quantile(MARKOV, LINEAR, level=1.0)


def test_output_range():
    lo, hi = model_output_range(MARKOV * 2, builtin_model("linear", 2))
    assert (lo, hi) == (0.0, 1.0)
