import math
import random

import pytest
from hypothesis import given, strategies as st

from swarmsim.metrics import (
    MetricsReport, ampe, land_rate, launch_rate, mean_position_error,
)


class TestMeanPositionError:
    def test_is_plain_average(self):
        assert mean_position_error([1.0, 2.0, 3.0]) == pytest.approx(2.0)

    def test_empty_instant_raises(self):
        with pytest.raises(ValueError):
            mean_position_error([])


class TestAmpe:
    def test_time_average_over_window(self):
        records = [(0.0, [10.0]), (1.0, [2.0, 4.0]), (2.0, [6.0])]
        # window drops the first record: mean(3.0, 6.0)
        assert ampe(records, window=(0.5, 2.5)) == pytest.approx(4.5)

    def test_no_window_uses_everything(self):
        records = [(0.0, [2.0]), (1.0, [4.0])]
        assert ampe(records) == pytest.approx(3.0)

    def test_empty_window_raises(self):
        with pytest.raises(ValueError):
            ampe([(0.0, [1.0])], window=(5.0, 6.0))


class TestRateIdentity:
    """The literal mean-time-between form must telescope to tau_N / N."""

    def test_known_log(self):
        # liftoffs at 2.5, 7.9, 13.1 seconds after the command
        r = launch_rate([2.5, 7.9, 13.1])
        assert r.value == pytest.approx(13.1 / 3)
        assert r.n == 3

    def test_thousand_random_logs(self):
        rng = random.Random(20260824)
        for _ in range(1000):
            n = rng.randint(1, 40)
            taus = sorted(rng.uniform(0.1, 500.0) for _ in range(n))
            r = launch_rate(taus)
            # literal sum, written out independently of the implementation
            literal = (taus[0] + sum(b - a for a, b in zip(taus, taus[1:]))) / n
            assert math.isclose(r.value, literal, rel_tol=1e-12)
            assert math.isclose(r.value, taus[-1] / n, rel_tol=1e-12)

    def test_completeness_flag(self):
        assert launch_rate([1.0, 2.0], expected_n=3).complete is False
        assert land_rate([1.0, 2.0, 3.0], expected_n=3).complete is True

    def test_empty_log_raises(self):
        with pytest.raises(ValueError):
            launch_rate([])

    def test_result_coerces_to_float(self):
        assert float(land_rate([4.0, 8.0])) == pytest.approx(4.0)


@given(st.lists(st.floats(min_value=0.01, max_value=1e4), min_size=1,
                max_size=50))
def test_rate_identity_property(taus):
    """Unordered inputs are sorted; identity holds for any positive log."""
    r = launch_rate(taus)
    assert math.isclose(r.value, max(taus) / len(taus), rel_tol=1e-9)


class TestMetricsReport:
    def test_as_dict_round_trip(self):
        rep = MetricsReport(duration=60.0, n_agents=3, ampe=1.5,
                            extras={"in_flight": 0})
        d = rep.as_dict()
        assert d["duration"] == 60.0
        assert d["ampe"] == 1.5
        assert d["in_flight"] == 0
