import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swarmsim.airframe import (
    G, PlatformConfig, VehicleState, VirtualControls, WindField,
    sample_gust, step_dynamics, total_energy,
)


def make_state(**kw):
    base = dict(east=0.0, north=0.0, altitude=100.0, airspeed=19.0,
                course=0.0, roll=0.0, pitch=0.0, timestamp=0.0)
    base.update(kw)
    return VehicleState(**base)


PLATFORM = PlatformConfig(name="default")
CALM = WindField()


class TestPlatformConfig:
    def test_speed_ordering_enforced(self):
        with pytest.raises(ValueError):
            PlatformConfig(name="bad", min_speed=20.0, cruise_speed=19.0)

    def test_drag_fit_balances_half_thrust_at_cruise(self):
        # c fitted so T_max/2 = c * V_cruise^2
        c = PLATFORM.drag_coefficient
        assert c * PLATFORM.cruise_speed**2 == pytest.approx(PLATFORM.max_thrust / 2)


class TestTotalEnergy:
    def test_zero_state(self):
        assert total_energy(make_state(airspeed=0.0, altitude=0.0), 1.1) == 0.0

    def test_default_mass_cruise_at_100m(self):
        # 0.55*361 + 1.1*9.80665*100, by hand
        e = total_energy(make_state(airspeed=19.0, altitude=100.0), 1.1)
        assert e == pytest.approx(1277.28, abs=0.01)

    def test_kinetic_term_quadratic(self):
        e1 = total_energy(make_state(airspeed=10.0, altitude=0.0), 2.0)
        e2 = total_energy(make_state(airspeed=20.0, altitude=0.0), 2.0)
        assert e2 == pytest.approx(4 * e1)

    def test_rejects_bad_mass(self):
        with pytest.raises(ValueError):
            total_energy(make_state(), 0.0)


class TestStepDynamics:
    def test_force_balance_keeps_speed(self):
        # throttle at 0.5 gives T = D at cruise with the fitted drag model
        s = make_state()
        out = step_dynamics(PLATFORM, s, VirtualControls(throttle=0.5), CALM, 0.05)
        assert out.airspeed == pytest.approx(19.0, abs=1e-9)

    def test_turn_rate_matches_coordinated_turn_formula(self):
        # chi_dot = (g/19)*tan(30 deg) = 0.2980 rad/s
        s = make_state(roll=math.radians(30.0))
        ctrl = VirtualControls(commanded_roll=math.radians(30.0), throttle=0.5)
        dt = 0.01
        out = step_dynamics(PLATFORM, s, ctrl, CALM, dt)
        rate = (out.course - s.course) / dt
        assert rate == pytest.approx((G / 19.0) * math.tan(math.radians(30.0)), abs=1e-4)
        assert rate == pytest.approx(0.2980, abs=1e-4)

    def test_wings_level_flies_straight(self):
        s = make_state(course=0.3)
        ctrl = VirtualControls(throttle=0.5)
        for _ in range(200):
            s = step_dynamics(PLATFORM, s, ctrl, CALM, 0.05)
        assert s.course == pytest.approx(0.3, abs=1e-12)
        # cross-track deviation from the initial course line stays zero
        e = -s.east * math.sin(0.3) + s.north * math.cos(0.3)
        assert abs(e) < 1e-9

    def test_energy_conserved_without_net_force(self):
        s = make_state()
        ctrl = VirtualControls(throttle=0.5)
        e0 = total_energy(s, PLATFORM.mass)
        for _ in range(400):
            s = step_dynamics(PLATFORM, s, ctrl, CALM, 0.05)
        assert total_energy(s, PLATFORM.mass) == pytest.approx(e0, rel=1e-6)

    def test_heading_rate_bounded_by_max_roll(self):
        s = make_state()
        ctrl = VirtualControls(commanded_roll=PLATFORM.max_roll, throttle=0.5)
        prev = s
        for _ in range(100):
            out = step_dynamics(PLATFORM, prev, ctrl, CALM, 0.05)
            rate = abs(out.course - prev.course) / 0.05
            limit = (G / max(prev.airspeed, 1.0)) * math.tan(PLATFORM.max_roll)
            assert rate <= limit + 1e-6
            prev = out

    def test_rejects_nonfinite_state(self):
        with pytest.raises(ValueError):
            step_dynamics(PLATFORM, make_state(airspeed=math.nan),
                          VirtualControls(), CALM, 0.05)

    def test_rejects_bad_dt(self):
        with pytest.raises(ValueError):
            step_dynamics(PLATFORM, make_state(), VirtualControls(), CALM, 0.2)

    def test_stall_flag(self):
        s = make_state(airspeed=PLATFORM.stall_speed - 1.0)
        out = step_dynamics(PLATFORM, s, VirtualControls(), CALM, 0.05)
        assert out.stalled

    def test_deterministic_replay(self):
        wind1 = WindField(gust_stddev=1.0, seed=3)
        wind2 = WindField(gust_stddev=1.0, seed=3)
        ctrl = VirtualControls(commanded_roll=0.2, throttle=0.6)
        a = b = make_state()
        for _ in range(100):
            a = step_dynamics(PLATFORM, a, ctrl, wind1, 0.05)
            b = step_dynamics(PLATFORM, b, ctrl, wind2, 0.05)
        assert a == b

    @given(st.floats(-math.pi, math.pi - 1e-9), st.floats(12.0, 26.0))
    @settings(max_examples=50, deadline=None)
    def test_course_stays_wrapped(self, chi, v):
        s = make_state(course=chi, airspeed=v, roll=0.4)
        out = step_dynamics(PLATFORM, s, VirtualControls(commanded_roll=0.4,
                                                         throttle=0.5), CALM, 0.05)
        assert -math.pi <= out.course < math.pi


class TestWindField:
    def test_zero_stddev_is_exactly_mean(self):
        w = WindField(mean_velocity=(3.0, -1.0), gust_stddev=0.0, seed=1)
        for t in (0.0, 1.0, 17.3):
            assert sample_gust(w, t) == (3.0, -1.0)

    def test_same_seed_same_time_identical(self):
        w1 = WindField(gust_stddev=2.0, seed=9)
        w2 = WindField(gust_stddev=2.0, seed=9)
        assert sample_gust(w1, 12.34) == sample_gust(w2, 12.34)
        # repeated query on the same instance too
        assert sample_gust(w1, 12.34) == sample_gust(w1, 12.34)

    def test_long_run_mean_approaches_mean_velocity(self):
        w = WindField(mean_velocity=(2.0, 0.5), gust_stddev=1.0, seed=7)
        # sample every 5 filter time constants so draws are near-independent
        xs = [sample_gust(w, 5.0 * k) for k in range(10000)]
        mx = sum(v[0] for v in xs) / len(xs)
        my = sum(v[1] for v in xs) / len(xs)
        assert abs(mx - 2.0) < 0.05
        assert abs(my - 0.5) < 0.05

    def test_rejects_negative_time(self):
        with pytest.raises(ValueError):
            sample_gust(WindField(gust_stddev=1.0), -1.0)

    def test_rejects_negative_stddev(self):
        with pytest.raises(ValueError):
            WindField(gust_stddev=-0.1)
