"""Geometry of the one-way circular route (a 1-D torus of length ``D``).

Positions are kept in distance units on ``[0, D)``. Traffic runs in the
direction of increasing position, so the *directed* distance from ``x`` to
``y`` is how far ``x`` must drive forward to reach ``y``.
"""

import math


def _check_length(D: float) -> None:
    if not D > 0:
        raise ValueError(f"route length D must be positive, got {D!r}")


def reduce(r: float, D: float) -> float:
    """Relative position on the torus of an absolute travelled distance ``r``."""
    _check_length(D)
    pos = r - D * math.floor(r / D)
    # r/D may round across an integer, leaving pos a hair outside [0, D)
    if pos < 0.0:
        pos += D
    if D - pos <= math.ulp(D):
        return 0.0
    return pos


def _check_position(p: float, D: float, name: str) -> None:
    if not 0.0 <= p < D:
        raise ValueError(f"{name}={p!r} is not a relative position in [0, {D!r})")


def dx(x: float, y: float, D: float) -> float:
    """Directed distance from ``x`` forward to ``y``."""
    _check_length(D)
    _check_position(x, D, "x")
    _check_position(y, D, "y")
    if x <= y:
        return y - x
    # D + (y - x) rounds up to D when x is a hair ahead of y
    return min(D + y - x, math.nextafter(D, 0.0))


def dy(x: float, y: float, D: float) -> float:
    """Directed distance from ``y`` forward to ``x``; ``dy(x, y) == dx(y, x)``."""
    return dx(y, x, D)


def minimal_distance(x: float, y: float, D: float) -> float:
    """Shorter of the two directed distances; never exceeds ``D / 2``."""
    return min(dx(x, y, D), dy(x, y, D))
