"""Mixed speed strategies and their exact expected payoffs.

A :class:`MixedStrategy` is a finite set of atoms plus uniform segments.
All payoffs in this module are normalized (``p * lam == 1``, ``c == 0``), so
player ``x``'s payoff is the directed distance ``dx`` at time ``T``.

Fix the start positions and write ``r0 = dx(x0, y0)``. For speeds
``(vx, vy)`` player ``x`` earns ``(r0 + T*(vy - vx)) mod D`` (``D/2`` on a
tie) and ``y`` earns ``D`` minus that. Against a uniform opponent speed the
argument ``t = r0 + T*(vy - vx)`` is uniform too, and ``t mod D`` is linear
apart from one drop of ``D`` where ``t`` crosses a multiple of ``D`` (the
overtaking speed). Averages of ``t mod D`` therefore have closed forms, and
the segment-vs-segment average is a piecewise-linear function of the own
speed whose kinks are known, so the trapezoid rule on those kinks is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from busgame import torus
from busgame.game import GameConfig

Player = Literal["x", "y"]

MASS_TOL = 1e-12
MERGE_RTOL = 1e-12


@dataclass(frozen=True)
class MixedStrategy:
    """Distribution over speeds: ``atoms`` of ``(speed, prob)`` and
    ``segments`` of ``(lo, hi, prob)`` carrying uniform mass on ``(lo, hi)``.

    Components are stored sorted (atoms by speed, segments by ``lo``); the
    inverse CDF walks atoms first, then segments, in that order.
    """

    atoms: tuple[tuple[float, float], ...] = ()
    segments: tuple[tuple[float, float, float], ...] = ()

    def __post_init__(self):
        atoms = tuple(sorted((float(v), float(p)) for v, p in self.atoms))
        segs = tuple(sorted((float(lo), float(hi), float(p)) for lo, hi, p in self.segments))
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "segments", segs)
        masses = [p for _, p in atoms] + [p for _, _, p in segs]
        if not masses:
            raise ValueError("a mixed strategy needs at least one component")
        if any(p < 0 or not math.isfinite(p) for p in masses):
            raise ValueError(f"negative or non-finite probability in {masses}")
        if abs(math.fsum(masses) - 1.0) > MASS_TOL:
            raise ValueError(f"probabilities sum to {math.fsum(masses)!r}, not 1")
        for lo, hi, _ in segs:
            if not lo < hi:
                raise ValueError(f"segment ({lo}, {hi}) needs lo < hi")
        for (_, hi, _), (lo, _, _) in zip(segs, segs[1:]):
            if lo < hi:
                raise ValueError("segments overlap")

    @classmethod
    def build(cls, atoms=(), segments=(), cfg: GameConfig | None = None) -> MixedStrategy:
        """Construct while dropping zero-mass pieces and merging near atoms.

        With ``cfg`` given, atoms closer than ``1e-12 * (v_max - v_min)``
        are merged and endpoints within that distance of the speed bounds are
        snapped onto them.
        """
        span = (cfg.v_max - cfg.v_min) if cfg is not None else 0.0
        tol = MERGE_RTOL * span

        def snap(v):
            if cfg is None:
                return v
            if abs(v - cfg.v_min) <= tol:
                return cfg.v_min
            if abs(v - cfg.v_max) <= tol:
                return cfg.v_max
            return v

        merged: list[list[float]] = []
        for v, p in sorted((snap(v), p) for v, p in atoms if p > 0):
            if merged and v - merged[-1][0] <= tol:
                merged[-1][1] += p
            else:
                merged.append([v, p])
        segs = [(snap(lo), snap(hi), p) for lo, hi, p in segments if p > 0]
        return cls(tuple(map(tuple, merged)), tuple(segs))

    @classmethod
    def point(cls, v: float) -> MixedStrategy:
        return cls(atoms=((v, 1.0),))

    @classmethod
    def uniform(cls, lo: float, hi: float) -> MixedStrategy:
        return cls(segments=((lo, hi, 1.0),))

    @property
    def is_pure(self) -> bool:
        return not self.segments and len(self.atoms) == 1

    def mean(self) -> float:
        return math.fsum([v * p for v, p in self.atoms]
                         + [(lo + hi) / 2 * p for lo, hi, p in self.segments])

    def validate(self, cfg: GameConfig) -> None:
        """Raise if any atom or segment endpoint leaves ``[v_min, v_max]``."""
        slack = MERGE_RTOL * max(cfg.v_max - cfg.v_min, 1.0)
        pts = [v for v, _ in self.atoms] + [e for lo, hi, _ in self.segments for e in (lo, hi)]
        for v in pts:
            if not cfg.v_min - slack <= v <= cfg.v_max + slack:
                raise ValueError(
                    f"support point {v!r} outside [{cfg.v_min}, {cfg.v_max}]")

    def breakpoints(self) -> list[float]:
        return [v for v, _ in self.atoms] + [e for lo, hi, _ in self.segments for e in (lo, hi)]

    def support_points(self, per_segment: int = 17) -> np.ndarray:
        """Atoms plus interior points of each (open) segment."""
        pts = [v for v, _ in self.atoms]
        for lo, hi, _ in self.segments:
            inner = np.linspace(lo, hi, per_segment + 2)[1:-1]
            pts.extend(inner.tolist())
        return np.asarray(pts)

    # sampling

    def quantile(self, u: float) -> float:
        """Inverse CDF at ``u`` in ``[0, 1)``."""
        cum = 0.0
        for v, p in self.atoms:
            prev, cum = cum, cum + p
            if u < cum:
                return v
        last = None
        for lo, hi, p in self.segments:
            prev, cum = cum, cum + p
            last = (lo, hi, p, prev)
            if u < cum:
                return min(hi, lo + (u - prev) / p * (hi - lo))
        if last is None:
            return self.atoms[-1][0]
        lo, hi, p, prev = last
        return min(hi, lo + (u - prev) / p * (hi - lo))

    def quantiles(self, u: np.ndarray) -> np.ndarray:
        """Vectorized :meth:`quantile`."""
        u = np.asarray(u, dtype=float)
        n_atoms = len(self.atoms)
        probs = [p for _, p in self.atoms] + [p for _, _, p in self.segments]
        cum = np.cumsum(probs)
        prev = np.concatenate(([0.0], cum[:-1]))
        idx = np.minimum(np.searchsorted(cum, u, side="right"), len(probs) - 1)
        out = np.empty_like(u)
        for i in range(len(probs)):
            mask = idx == i
            if not mask.any():
                continue
            if i < n_atoms:
                out[mask] = self.atoms[i][0]
            else:
                lo, hi, p = self.segments[i - n_atoms]
                out[mask] = np.minimum(hi, lo + (u[mask] - prev[i]) / p * (hi - lo))
        return out

    def sample(self, rng: np.random.Generator, size=None):
        if size is None:
            return self.quantile(rng.random())
        return self.quantiles(rng.random(size))

    # serialization

    def to_dict(self) -> dict:
        return {"atoms": [list(a) for a in self.atoms],
                "segments": [list(s) for s in self.segments]}

    @classmethod
    def from_dict(cls, data: dict) -> MixedStrategy:
        return cls(tuple(tuple(a) for a in data.get("atoms", ())),
                   tuple(tuple(s) for s in data.get("segments", ())))


# closed-form averages of t mod D

def wrap_pure(t, D: float, tie_tol: float):
    """``t mod D`` with the tie value ``D/2`` at multiples of ``D``."""
    m = np.mod(t, D)
    tie = (m <= tie_tol) | (D - m <= tie_tol)
    return np.where(tie, D / 2, m)


def wrap_mean(t_lo, t_hi, D: float):
    """Mean of ``t mod D`` for ``t`` uniform on ``[t_lo, t_hi]``.

    Requires ``t_hi - t_lo < D`` so at most one multiple of ``D`` is crossed.
    """
    t_lo = np.asarray(t_lo, dtype=float)
    t_hi = np.asarray(t_hi, dtype=float)
    n_lo = np.floor(t_lo / D)
    n_hi = np.floor(t_hi / D)
    width = t_hi - t_lo
    crossed = n_hi > n_lo
    safe = np.where(crossed, width, 1.0)
    frac_above = np.where(crossed, (t_hi - n_hi * D) / safe, 0.0)
    return (t_lo + t_hi) / 2 - D * n_lo - D * frac_above


def _offset(x0: float, y0: float, cfg: GameConfig) -> float:
    return torus.dx(x0, y0, cfg.D)


def _x_payoff_vs(v_own, opponent: MixedStrategy, r0: float, cfg: GameConfig):
    """Player x's expected payoff at own speed(s) ``v_own`` against ``opponent``."""
    D, T = cfg.D, cfg.T
    v = np.asarray(v_own, dtype=float)
    total = np.zeros_like(v)
    for w, q in opponent.atoms:
        total = total + q * wrap_pure(r0 + T * (w - v), D, cfg.tie_tol)
    for lo, hi, q in opponent.segments:
        total = total + q * wrap_mean(r0 + T * (lo - v), r0 + T * (hi - v), D)
    return total


def _y_payoff_vs(w_own, opponent: MixedStrategy, r0: float, cfg: GameConfig):
    """Player y's expected payoff at own speed(s) ``w_own`` against ``opponent``."""
    D, T = cfg.D, cfg.T
    w = np.asarray(w_own, dtype=float)
    total = np.zeros_like(w)
    for v, p in opponent.atoms:
        total = total + p * (D - wrap_pure(r0 + T * (w - v), D, cfg.tie_tol))
    for lo, hi, p in opponent.segments:
        total = total + p * (D - wrap_mean(r0 + T * (w - hi), r0 + T * (w - lo), D))
    return total


def conditional_expected_utility(
    x0: float,
    y0: float,
    own_speed,
    opponent: MixedStrategy,
    cfg: GameConfig,
    player: Player,
):
    """Normalized ``E[u_player | own speed]``; ``own_speed`` may be an array."""
    opponent.validate(cfg)
    r0 = _offset(x0, y0, cfg)
    if player == "x":
        out = _x_payoff_vs(own_speed, opponent, r0, cfg)
    elif player == "y":
        out = _y_payoff_vs(own_speed, opponent, r0, cfg)
    else:
        raise ValueError(f"player must be 'x' or 'y', got {player!r}")
    return float(out) if np.ndim(out) == 0 else out


def _segment_pair_x(seg_x, seg_y, r0: float, cfg: GameConfig) -> float:
    """x's payoff averaged over independent uniform speeds on two segments."""
    D, T = cfg.D, cfg.T
    lx, hx, _ = seg_x
    ly, hy, _ = seg_y
    t_min = r0 + T * (ly - hx)
    t_max = r0 + T * (hy - lx)
    nodes = [lx, hx]
    for j in range(math.floor(t_min / D), math.ceil(t_max / D) + 1):
        for edge in (ly, hy):
            # own speed at which this opponent endpoint sits exactly on j*D
            v = edge + (r0 - j * D) / T
            if lx < v < hx:
                nodes.append(v)
    nodes = np.unique(np.asarray(nodes))
    h = wrap_mean(r0 + T * (ly - nodes), r0 + T * (hy - nodes), D)
    return float(np.sum((h[1:] + h[:-1]) / 2 * np.diff(nodes)) / (hx - lx))


def expected_utility(
    x0: float,
    y0: float,
    X: MixedStrategy,
    Y: MixedStrategy,
    cfg: GameConfig,
    player: Player,
) -> float:
    """Exact normalized ``E[u_player]`` when x plays ``X`` and y plays ``Y``."""
    X.validate(cfg)
    Y.validate(cfg)
    r0 = _offset(x0, y0, cfg)
    terms = []
    for v, p in X.atoms:
        terms.append(p * float(_x_payoff_vs(v, Y, r0, cfg)))
    for seg_x in X.segments:
        lo, hi, p = seg_x
        for w, q in Y.atoms:
            m = wrap_mean(r0 + cfg.T * (w - hi), r0 + cfg.T * (w - lo), cfg.D)
            terms.append(p * q * float(m))
        for seg_y in Y.segments:
            terms.append(p * seg_y[2] * _segment_pair_x(seg_x, seg_y, r0, cfg))
    ux = math.fsum(terms)
    if player == "x":
        return ux
    if player == "y":
        return cfg.D - ux
    raise ValueError(f"player must be 'x' or 'y', got {player!r}")


def pure_payoffs(x0, y0, vx, vy, cfg: GameConfig):
    """Vectorized normalized payoffs ``(u_x, u_y)`` for arrays of speeds."""
    r0 = _offset(x0, y0, cfg)
    ux = wrap_pure(r0 + cfg.T * (np.asarray(vy) - np.asarray(vx)), cfg.D, cfg.tie_tol)
    return ux, cfg.D - ux
