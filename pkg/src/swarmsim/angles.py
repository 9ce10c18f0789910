"""Angle conventions and wrapping helpers.

All courses/bearings are measured in radians from the +east axis,
counterclockwise positive, so velocity = (V*cos(chi), V*sin(chi)) in the
(east, north) plane.  Positive roll produces a positive (counterclockwise)
course rate.
"""

import math

TWO_PI = 2.0 * math.pi


def wrap_course(angle: float) -> float:
    """Wrap an absolute course angle to [-pi, pi)."""
    a = (angle + math.pi) % TWO_PI - math.pi
    return a


def wrap_error(angle: float) -> float:
    """Wrap an angular error to (-pi, pi].

    The half-open side differs from wrap_course so that a 180-degree error
    resolves to +pi, making turn direction deterministic.
    """
    a = (angle + math.pi) % TWO_PI - math.pi
    if a == -math.pi:
        a = math.pi
    return a
