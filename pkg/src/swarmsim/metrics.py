"""Swarm performance metrics: AMPE, launch rate and land rate.

LaunchRate/LandRate are implemented both as the literal mean-time-between
sums and in the telescoped form tau_N / N; the two must agree to machine
precision, which the tests enforce on randomized logs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence


def mean_position_error(errors: Sequence[float]) -> float:
    """Swarm-mean distance between desired and real positions at one instant."""
    if not errors:
        raise ValueError("no members in formation at this instant")
    return sum(errors) / len(errors)


def ampe(formation_records: Sequence[tuple[float, Sequence[float]]],
         window: Optional[tuple[float, float]] = None) -> float:
    """Time-average of the per-instant mean position error.

    formation_records: per instant, (t, [distance desired->real per member]).
    """
    if window is not None:
        t0, t1 = window
        records = [r for r in formation_records if t0 <= r[0] <= t1]
    else:
        records = list(formation_records)
    if not records:
        raise ValueError("no formation records in the requested window")
    return sum(mean_position_error(e) for _, e in records) / len(records)


def _rate_literal(taus: Sequence[float]) -> float:
    # tau_1 + sum_{i>=2} (tau_i - tau_{i-1}), all over N
    total = taus[0]
    for a, b in zip(taus, taus[1:]):
        total += b - a
    return total / len(taus)


def _rate_telescoped(taus: Sequence[float]) -> float:
    return taus[-1] / len(taus)


@dataclass(frozen=True)
class RateResult:
    value: float
    n: int
    complete: bool  # False when not every agent launched/landed

    def __float__(self):
        return self.value


def _rate(taus: Sequence[float], expected_n: Optional[int]) -> RateResult:
    if not taus:
        raise ValueError("no timestamps recorded")
    taus = sorted(taus)
    lit = _rate_literal(taus)
    tel = _rate_telescoped(taus)
    if not math.isclose(lit, tel, rel_tol=1e-12, abs_tol=1e-12):
        raise AssertionError("telescoping identity violated")
    complete = expected_n is None or len(taus) == expected_n
    return RateResult(tel, len(taus), complete)


def launch_rate(launch_times: Sequence[float],
                expected_n: Optional[int] = None) -> RateResult:
    """Mean time between launches; times measured from the launch command."""
    return _rate(launch_times, expected_n)


def land_rate(land_times: Sequence[float],
              expected_n: Optional[int] = None) -> RateResult:
    """Mean time between landings; times measured from the landing command."""
    return _rate(land_times, expected_n)


@dataclass
class MetricsReport:
    duration: float = 0.0
    n_agents: int = 0
    ampe: Optional[float] = None
    launch_rate: Optional[float] = None
    land_rate: Optional[float] = None
    launch_times: list[float] = field(default_factory=list)
    land_times: list[float] = field(default_factory=list)
    channel_counters: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "duration": self.duration,
            "n_agents": self.n_agents,
            "ampe": self.ampe,
            "launch_rate": self.launch_rate,
            "land_rate": self.land_rate,
            "launch_times": list(self.launch_times),
            "land_times": list(self.land_times),
            "channel_counters": self.channel_counters,
            **self.extras,
        }
