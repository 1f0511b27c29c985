"""Brute-force checks of equilibria and social optima by grid search.

Deviations are searched over pure speeds only: a player's expected payoff is
linear in its own mixture, so the best pure deviation bounds every mixed one.
All comparisons happen in normalized units, where ``tolerance`` defaults to
``1e-6 * D``.

The payoff against a fixed opponent mixture is piecewise linear in the own
speed, with jumps where the own bus lands exactly on an opponent atom or
segment endpoint. The dense grid is augmented with those jump speeds (and a
hair either side), plus every atom and endpoint of the profile shifted by
``+-eps/T``, so the grid maximum sees the payoff near all its extrema.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Literal, Optional

import numpy as np

from busgame import torus
from busgame.equilibria import EquilibriumProfile
from busgame.game import GameConfig
from busgame.strategy import (MixedStrategy, Player, conditional_expected_utility,
                              expected_utility, pure_payoffs)

DEFAULT_GRID_N = 2001
DEFAULT_RTOL = 1e-6


@dataclass(frozen=True)
class VerificationReport:
    max_gain_x: float
    max_gain_y: float
    best_deviation_x: float
    best_deviation_y: float
    indifference_residual: float
    grid_n: int
    tolerance: float
    epsilon: float
    verdict: Literal["pass", "fail"]

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        return asdict(self)


def _jump_speeds(opponent: MixedStrategy, r0: float, cfg: GameConfig, player: Player):
    """Own speeds at which the final gap to an opponent breakpoint is a multiple of D."""
    D, T = cfg.D, cfg.T
    out = []
    for w in opponent.breakpoints():
        # x: r0 + T*(w - v) = j*D ; y: r0 + T*(v - w) = j*D
        for j in range(-1, 3):
            if player == "x":
                out.append(w + (r0 - j * D) / T)
            else:
                out.append(w - (r0 - j * D) / T)
    return out


def deviation_grid(
    opponent: MixedStrategy,
    x0: float,
    y0: float,
    cfg: GameConfig,
    player: Player,
    grid_n: int = DEFAULT_GRID_N,
    own: Optional[MixedStrategy] = None,
    epsilon: float = 0.0,
) -> np.ndarray:
    """Sorted candidate deviation speeds in ``[v_min, v_max]``."""
    if grid_n < 2:
        raise ValueError("grid_n must be >= 2")
    vmin, vmax = cfg.v_min, cfg.v_max
    pts = [np.linspace(vmin, vmax, grid_n)]
    marks = list(opponent.breakpoints())
    if own is not None:
        marks += own.breakpoints()
    shift = epsilon / cfg.T
    pts.append(np.array([m + s for m in marks for s in (-shift, 0.0, shift)]))
    r0 = torus.dx(x0, y0, cfg.D)
    hair = 1e-9 * max(vmax - vmin, 1e-300)
    jumps = np.array(_jump_speeds(opponent, r0, cfg, player))
    pts.append(np.concatenate([jumps - hair, jumps, jumps + hair]))
    grid = np.concatenate(pts)
    grid = grid[(grid >= vmin) & (grid <= vmax)]
    return np.unique(grid)


def grid_best_reply(
    opponent: MixedStrategy,
    x0: float,
    y0: float,
    cfg: GameConfig,
    player: Player,
    grid_n: int = DEFAULT_GRID_N,
    own: Optional[MixedStrategy] = None,
    epsilon: float = 0.0,
) -> tuple[float, float]:
    """Best pure reply on the augmented grid; ties go to the lower speed.

    Returns ``(speed, normalized expected payoff)``.
    """
    cfg = cfg.normalized()
    grid = deviation_grid(opponent, x0, y0, cfg, player, grid_n, own, epsilon)
    values = conditional_expected_utility(x0, y0, grid, opponent, cfg, player)
    i = int(np.argmax(values))
    return float(grid[i]), float(values[i])


def indifference_spread(own: MixedStrategy, opponent: MixedStrategy,
                        x0: float, y0: float, cfg: GameConfig, player: Player) -> float:
    """Spread of conditional payoffs over the own support (atoms, segment interiors)."""
    pts = own.support_points()
    values = np.atleast_1d(conditional_expected_utility(x0, y0, pts, opponent, cfg, player))
    return float(values.max() - values.min())


def verify_epsilon_equilibrium(
    profile: EquilibriumProfile,
    x0: float,
    y0: float,
    cfg: GameConfig,
    grid_n: int = DEFAULT_GRID_N,
    tolerance: Optional[float] = None,
) -> VerificationReport:
    """Largest unilateral gain of each player over the profile's payoff.

    Passes iff both gains are at most ``profile.epsilon + tolerance``
    (``epsilon`` is 0 for Nash profiles).
    """
    cfg = cfg.normalized()
    tol = DEFAULT_RTOL * cfg.D if tolerance is None else tolerance
    eps = profile.epsilon or 0.0
    X, Y = profile.strategy_x, profile.strategy_y
    eq_x = expected_utility(x0, y0, X, Y, cfg, "x")
    eq_y = expected_utility(x0, y0, X, Y, cfg, "y")
    bx, vx = grid_best_reply(Y, x0, y0, cfg, "x", grid_n, own=X, epsilon=eps)
    by, vy = grid_best_reply(X, x0, y0, cfg, "y", grid_n, own=Y, epsilon=eps)
    gain_x, gain_y = vx - eq_x, vy - eq_y
    residual = max(indifference_spread(X, Y, x0, y0, cfg, "x"),
                   indifference_spread(Y, X, x0, y0, cfg, "y"))
    ok = gain_x <= eps + tol and gain_y <= eps + tol
    return VerificationReport(gain_x, gain_y, bx, by, residual, grid_n, tol, eps,
                              "pass" if ok else "fail")


def coop_values(x0, y0, vx, vy, cfg: GameConfig):
    """Vectorized normalized joint payoff ``u_x + u_y - k*|u_x - u_y|``."""
    ux, uy = pure_payoffs(x0, y0, vx, vy, cfg)
    return ux + uy - cfg.k * np.abs(ux - uy)


def verify_social_optimum(
    profile: EquilibriumProfile,
    x0: float,
    y0: float,
    cfg: GameConfig,
    grid_n: int = DEFAULT_GRID_N,
    tolerance: Optional[float] = None,
) -> VerificationReport:
    """Best joint payoff over a grid of pure speed pairs versus the profile's pair."""
    if not cfg.k > 0:
        raise ValueError("social optimum check needs k > 0")
    cfg = cfg.normalized()
    tol = DEFAULT_RTOL * cfg.D if tolerance is None else tolerance
    vx0 = profile.strategy_x.atoms[0][0]
    vy0 = profile.strategy_y.atoms[0][0]
    base = float(coop_values(x0, y0, vx0, vy0, cfg))
    grid = np.unique(np.concatenate([np.linspace(cfg.v_min, cfg.v_max, grid_n), [vx0, vy0]]))
    best, best_pair = -math.inf, (vx0, vy0)
    chunk = max(1, 2_000_000 // grid.size)
    for start in range(0, grid.size, chunk):
        rows = grid[start:start + chunk, None]
        vals = coop_values(x0, y0, rows, grid[None, :], cfg)
        i = int(np.argmax(vals))
        if vals.flat[i] > best:
            best = float(vals.flat[i])
            r, c = divmod(i, grid.size)
            best_pair = (float(rows[r, 0]), float(grid[c]))
    # ties and half-route splits sit on lines vy - vx = const that a grid can miss
    r0 = torus.dx(x0, y0, cfg.D)
    offsets = [(j * cfg.D + h - r0) / cfg.T for j in range(-1, 3) for h in (0.0, cfg.D / 2)]
    vx = np.repeat(grid, len(offsets))
    vy = vx + np.tile(offsets, grid.size)
    keep = (vy >= cfg.v_min) & (vy <= cfg.v_max)
    if np.any(keep):
        vals = coop_values(x0, y0, vx[keep], vy[keep], cfg)
        i = int(np.argmax(vals))
        if vals[i] > best:
            best = float(vals[i])
            best_pair = (float(vx[keep][i]), float(vy[keep][i]))
    gain = best - base
    verdict = "pass" if gain <= tol else "fail"
    return VerificationReport(gain, gain, best_pair[0], best_pair[1], 0.0, grid_n, tol, 0.0,
                              verdict)
