"""Repeated play of the stage game and Monte Carlo estimators on the gap process.

Each period both buses re-solve the stage game from their current positions,
draw one speed each from the equilibrium (or social optimum) and drive for
``T``, optionally perturbed by ``sigma * Z`` displacement noise.

Randomness: run ``i`` of a batch seeded with ``seed`` owns the generator
``default_rng(SeedSequence(seed, spawn_key=(i,)))`` and draws, up front, a
``(horizon, 2)`` block of uniforms (inverse-CDF inputs for x and y) followed
by a ``(horizon, 2)`` block of standard normals. The scalar path
(:func:`run_trace`) and the vectorized path (:func:`simulate_batch`) consume
the same draws, so a run gives the same trace either way.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal, Optional, Sequence

import numpy as np

from busgame import torus
from busgame.equilibria import (BOUNDARY_RTOL, InfeasibleEpsilon, classify_gap, epsilon_bound,
                                solve_coop, solve_noncoop)
from busgame.game import GameConfig, final_positions
from busgame.strategy import MERGE_RTOL

Mode = Literal["noncoop", "coop"]

EPS_FLOOR_RTOL = 1e-9
HALF_RTOL = 1e-9

CASE_CODES = ("NC-a", "NC-b", "NC-c", "NC-d", "COOP-a", "COOP-b", "COOP-c")


def run_rng(seed: int, run_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(run_id,)))


def run_draws(seed: int, run_id: int, horizon: int) -> tuple[np.ndarray, np.ndarray]:
    rng = run_rng(seed, run_id)
    return rng.random((horizon, 2)), rng.standard_normal((horizon, 2))


def stage_epsilon(case: str, d_n: float, cfg: GameConfig) -> Optional[float]:
    """Slack used by the stage solver at gap ``d_n``.

    The feasibility window of epsilon moves with ``d_n``, so the configured
    value is capped at half the window and floored at ``1e-9 * D``; if the
    floor itself is infeasible a tenth of the window is used.
    """
    bound = epsilon_bound(case, d_n, cfg)
    if math.isinf(bound):
        return None
    base = cfg.epsilon if cfg.epsilon is not None else bound / 10
    eps = max(min(base, bound / 2), EPS_FLOOR_RTOL * cfg.D)
    if not eps < bound:
        eps = bound / 10
    return eps


@dataclass(frozen=True)
class RepeatedGameState:
    x: float
    y: float
    period: int = 0
    mode: Mode = "noncoop"
    rng_stream: int = 0
    D: float = field(default=1.0, repr=False)

    @property
    def d_n(self) -> float:
        return torus.minimal_distance(self.x, self.y, self.D)


@dataclass(frozen=True)
class StepRecord:
    vx: float
    vy: float
    case_tag: str
    roles_swapped: bool


def advance(state: RepeatedGameState, cfg: GameConfig, u: Sequence[float],
            z: Optional[Sequence[float]] = None) -> tuple[RepeatedGameState, StepRecord]:
    """One period given the inverse-CDF inputs ``u`` and normals ``z``."""
    x, y = state.x, state.y
    if state.mode == "coop":
        profile = solve_coop(x, y, cfg)
        vx, vy = profile.strategy_x.atoms[0][0], profile.strategy_y.atoms[0][0]
    else:
        d_n = torus.minimal_distance(x, y, cfg.D)
        case = classify_gap(d_n, cfg)
        eps = stage_epsilon(case, d_n, cfg)
        try:
            profile = solve_noncoop(x, y, cfg, epsilon=eps)
        except InfeasibleEpsilon:
            profile = solve_noncoop(x, y, cfg, epsilon=epsilon_bound(case, d_n, cfg) / 10)
        vx = profile.strategy_x.quantile(u[0])
        vy = profile.strategy_y.quantile(u[1])
    xn, yn = final_positions(x, y, vx, vy, cfg, noise=z)
    new = replace(state, x=xn, y=yn, period=state.period + 1)
    return new, StepRecord(vx, vy, profile.case_tag, profile.roles_swapped)


def step(state: RepeatedGameState, cfg: GameConfig,
         rng: np.random.Generator) -> RepeatedGameState:
    """Advance one period drawing two uniforms and two normals from ``rng``."""
    u = rng.random(2)
    z = rng.standard_normal(2)
    return advance(state, cfg, u, z)[0]


@dataclass
class DistanceTrace:
    """Realized path of one repeated game.

    ``N`` is the first period with ``d_n > d`` in non-cooperative mode and the
    first period with ``d_n == D/2`` in cooperative mode. ``M`` is the first
    period ``n >= 1`` with ``d_n != d``, defined only when ``d_0 == d``
    (boundary comparisons use a ``1e-9 * D`` tolerance).
    """

    d_sequence: list[float]
    positions: list[tuple[float, float]]
    speed_sequence: list[tuple[float, float]]
    case_tags: list[str]
    roles_swapped: list[bool]
    N: Optional[int]
    M: Optional[int]
    d_M: Optional[float]
    seed: int
    run_id: int
    horizon: int
    mode: Mode

    def rows(self):
        """CSV rows: one per period, the last one without a play."""
        for n, (xy, dn) in enumerate(zip(self.positions, self.d_sequence)):
            if n < self.horizon:
                vx, vy = self.speed_sequence[n]
                yield [self.run_id, n, xy[0], xy[1], dn, vx, vy,
                       self.case_tags[n], int(self.roles_swapped[n])]
            else:
                yield [self.run_id, n, xy[0], xy[1], dn, "", "", "", ""]


TRACE_COLUMNS = ["run_id", "period", "x", "y", "d_n", "vx_sampled", "vy_sampled",
                 "case_tag", "roles_swapped"]


def first_exit_times(d: np.ndarray, cfg: GameConfig, mode: Mode):
    """Vectorized ``N`` (and ``M``, ``d_M``) for an ``(R, H+1)`` array of gaps.

    Missing values are ``-1`` for times and ``nan`` for ``d_M``.
    """
    bc = BOUNDARY_RTOL * cfg.D
    if mode == "coop":
        hit = np.abs(d - cfg.D / 2) <= HALF_RTOL * cfg.D
    else:
        hit = d > cfg.d + bc
    N = np.where(hit.any(axis=1), hit.argmax(axis=1), -1)
    at_boundary = np.abs(d[:, 0] - cfg.d) <= bc
    left = np.abs(d[:, 1:] - cfg.d) > bc
    has_left = left.any(axis=1) & at_boundary
    M = np.where(has_left, left.argmax(axis=1) + 1, -1)
    rows = np.arange(d.shape[0])
    d_M = np.where(has_left, d[rows, np.maximum(M, 0)], np.nan)
    return N, M, d_M


def run_trace(cfg: GameConfig, x0: float, y0: float, mode: Mode = "noncoop",
              horizon: int = 1000, seed: int = 0, run_id: int = 0) -> DistanceTrace:
    """Simulate one repeated game through the stage solvers (reference path)."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    U, Z = run_draws(seed, run_id, horizon)
    x0, y0 = torus.reduce(float(x0), cfg.D), torus.reduce(float(y0), cfg.D)
    state = RepeatedGameState(x0, y0,
                              mode=mode, rng_stream=run_id, D=cfg.D)
    positions = [(state.x, state.y)]
    ds = [state.d_n]
    speeds, tags, swaps = [], [], []
    for n in range(horizon):
        state, rec = advance(state, cfg, U[n], Z[n])
        positions.append((state.x, state.y))
        ds.append(state.d_n)
        speeds.append((rec.vx, rec.vy))
        tags.append(rec.case_tag)
        swaps.append(rec.roles_swapped)
    N, M, d_M = first_exit_times(np.asarray([ds]), cfg, mode)
    return DistanceTrace(
        d_sequence=ds, positions=positions, speed_sequence=speeds, case_tags=tags,
        roles_swapped=swaps,
        N=None if N[0] < 0 else int(N[0]),
        M=None if M[0] < 0 else int(M[0]),
        d_M=None if M[0] < 0 else float(d_M[0]),
        seed=seed, run_id=run_id, horizon=horizon, mode=mode)


# vectorized kernel

def _reduce(r: np.ndarray, D: float) -> np.ndarray:
    pos = r - D * np.floor(r / D)
    pos = np.where(pos < 0.0, pos + D, pos)
    return np.where(D - pos <= np.spacing(D), 0.0, pos)


def _directed(x, y, D: float):
    below = np.nextafter(D, 0.0)
    gx = np.where(x <= y, y - x, np.minimum(D + y - x, below))
    gy = np.where(y <= x, x - y, np.minimum(D + x - y, below))
    return gx, gy


def _snap(v, cfg: GameConfig):
    tol = MERGE_RTOL * (cfg.v_max - cfg.v_min)
    v = np.where(np.abs(v - cfg.v_min) <= tol, cfg.v_min, v)
    return np.where(np.abs(v - cfg.v_max) <= tol, cfg.v_max, v)


def _stage_epsilons(case: np.ndarray, e: np.ndarray, cfg: GameConfig) -> np.ndarray:
    bound = np.where(case == 1, np.minimum(e, cfg.d - e) / 2, cfg.d / 2)
    base = cfg.epsilon if cfg.epsilon is not None else bound / 10
    eps = np.maximum(np.minimum(base, bound / 2), EPS_FLOOR_RTOL * cfg.D)
    return np.where(eps < bound, eps, bound / 10)


def _batch_speeds(x, y, u, cfg: GameConfig, mode: Mode):
    """Sampled speeds, case codes and swap flags for one period of every run."""
    D, T, d = cfg.D, cfg.T, cfg.d
    vmin, vmax = float(cfg.v_min), float(cfg.v_max)
    gx, gy = _directed(x, y, D)
    e = np.minimum(gx, gy)
    swapped = gy < gx
    u_tr = np.where(swapped, u[:, 1], u[:, 0])
    u_ld = np.where(swapped, u[:, 0], u[:, 1])

    if mode == "coop":
        zero = e <= cfg.tie_tol
        case = np.where(zero, 4, np.where(e + d < D / 2, 5, 6))
        v_tr = np.full_like(e, vmin)
        v_ld = np.where(case == 6, np.minimum(vmax, vmin + (D / 2 - e) / T), vmax)
    else:
        case = np.full(e.shape, 3)
        case = np.where(e < d, 1, case)
        if d > 0:
            case = np.where(np.abs(e - d) <= BOUNDARY_RTOL * D, 2, case)
        case = np.where(e <= cfg.tie_tol, 0, case)
        eps = _stage_epsilons(case, e, cfg)

        v_tr = np.where(case == 0, vmax, vmin).astype(float)
        v_ld = v_tr.copy()

        b = case == 1
        if b.any():
            eb, ub_tr, ub_ld, epsb = e[b], u_tr[b], u_ld[b], eps[b]
            p2 = (d - eb) / D
            p1 = 1 - p2
            lo = vmin + eb / T
            seg = np.minimum(vmax, lo + (ub_tr - p1) / p2 * (vmax - lo))
            v_tr[b] = np.where(ub_tr < p1, vmin, seg)
            q2 = (d - eb) / D
            q1 = d / D - q2
            v_top = vmax - eb / T
            atom_hi = v_top + epsb / T
            cum2 = q1 + (1 - d / D)
            lo_l = _snap(v_top - q2 * D / T, cfg)
            seg_l = np.minimum(v_top, lo_l + (ub_ld - cum2) / q2 * (v_top - lo_l))
            v_ld[b] = np.where(ub_ld < q1, vmin, np.where(ub_ld < cum2, atom_hi, seg_l))

        c = case == 2
        if c.any():
            p_fast = 2 * eps[c] / D
            q_slow = 2 * d / D
            v_tr[c] = np.where(u_tr[c] < 1 - p_fast, vmin, vmax)
            v_ld[c] = np.where(u_ld[c] < q_slow, vmin, vmin + eps[c] / T)

    vx = np.where(swapped, v_ld, v_tr)
    vy = np.where(swapped, v_tr, v_ld)
    return vx, vy, case, swapped


@dataclass
class BatchResult:
    d: np.ndarray          # (R, H+1)
    x: np.ndarray          # (R, H+1)
    y: np.ndarray          # (R, H+1)
    vx: np.ndarray         # (R, H)
    vy: np.ndarray         # (R, H)
    case: np.ndarray       # (R, H) codes into CASE_CODES
    swapped: np.ndarray    # (R, H)


def simulate_batch(cfg: GameConfig, x0, y0, mode: Mode, U: np.ndarray,
                   Z: np.ndarray) -> BatchResult:
    """Vectorized repeated game for ``R`` runs given draws of shape ``(R, H, 2)``."""
    R, H, _ = U.shape
    x = _reduce(np.broadcast_to(np.asarray(x0, dtype=float), (R,)).copy(), cfg.D)
    y = _reduce(np.broadcast_to(np.asarray(y0, dtype=float), (R,)).copy(), cfg.D)
    xs = np.empty((R, H + 1))
    ys = np.empty((R, H + 1))
    vxs = np.empty((R, H))
    vys = np.empty((R, H))
    cases = np.empty((R, H), dtype=np.int8)
    swaps = np.empty((R, H), dtype=bool)
    xs[:, 0], ys[:, 0] = x, y
    noisy = cfg.sigma > 0
    for n in range(H):
        vx, vy, case, swapped = _batch_speeds(x, y, U[:, n], cfg, mode)
        sx = cfg.T * vx
        sy = cfg.T * vy
        if noisy:
            sx = sx + cfg.sigma * Z[:, n, 0]
            sy = sy + cfg.sigma * Z[:, n, 1]
        x = _reduce(x + sx, cfg.D)
        y = _reduce(y + sy, cfg.D)
        xs[:, n + 1], ys[:, n + 1] = x, y
        vxs[:, n], vys[:, n], cases[:, n], swaps[:, n] = vx, vy, case, swapped
    gx, gy = _directed(xs, ys, cfg.D)
    return BatchResult(np.minimum(gx, gy), xs, ys, vxs, vys, cases, swaps)


def batch_draws(seed: int, run_ids, horizon: int) -> tuple[np.ndarray, np.ndarray]:
    pairs = [run_draws(seed, int(i), horizon) for i in run_ids]
    return np.stack([p[0] for p in pairs]), np.stack([p[1] for p in pairs])


def iter_batches(cfg: GameConfig, x0: float, y0: float, mode: Mode, horizon: int,
                 n_runs: int, seed: int, chunk_elems: int = 4_000_000):
    """Yield :class:`BatchResult` chunks covering runs ``0 .. n_runs-1`` in order."""
    chunk = max(1, chunk_elems // max(horizon, 1))
    for start in range(0, n_runs, chunk):
        ids = range(start, min(n_runs, start + chunk))
        U, Z = batch_draws(seed, ids, horizon)
        yield simulate_batch(cfg, x0, y0, mode, U, Z)


# estimators

def _se(p: np.ndarray, n: int) -> np.ndarray:
    return np.sqrt(p * (1 - p) / n)


@dataclass
class SurvivalEstimate:
    k: np.ndarray
    p_hat: np.ndarray
    std_error: np.ndarray
    bound: np.ndarray
    n_runs: int
    seed: int
    d0: float

    def rows(self):
        for row in zip(self.k.tolist(), self.p_hat.tolist(), self.std_error.tolist(),
                       self.bound.tolist()):
            yield list(row)

    def to_dict(self) -> dict:
        return {"k": self.k.tolist(), "estimate": self.p_hat.tolist(),
                "std_error": self.std_error.tolist(), "bound": self.bound.tolist(),
                "n_runs": self.n_runs, "seed": self.seed, "d0": self.d0}


def estimate_survival(cfg: GameConfig, d0: float, k_max: int = 10, n_runs: int = 100_000,
                      seed: int = 0) -> SurvivalEstimate:
    """Empirical ``P(N > k)`` for ``k = 0..k_max`` from ``n_runs`` traces.

    ``bound`` holds ``(d/D)**k`` for comparison.
    """
    if cfg.sigma != 0:
        raise ValueError("survival estimates assume sigma == 0")
    bc = BOUNDARY_RTOL * cfg.D
    if not (cfg.tie_tol < d0 < cfg.d - bc):
        raise ValueError(f"need 0 < d0 < d for the survival law, got d0={d0!r}, d={cfg.d!r}")
    alive = np.zeros(k_max + 1)
    for batch in iter_batches(cfg, 0.0, d0, "noncoop", k_max, n_runs, seed):
        N, _, _ = first_exit_times(batch.d, cfg, "noncoop")
        N = np.where(N < 0, k_max + 1, N)
        alive += (N[:, None] > np.arange(k_max + 1)[None, :]).sum(axis=0)
    p_hat = alive / n_runs
    k = np.arange(k_max + 1)
    return SurvivalEstimate(k, p_hat, _se(p_hat, n_runs), (cfg.d / cfg.D) ** k,
                            n_runs, seed, d0)


@dataclass
class BoundaryEstimate:
    mean_M: float
    se_M: float
    pmf_M: dict[int, float]
    p_zero: float
    se_p_zero: float
    n_low: int           # runs with 0 < d_M <= d
    n_censored: int      # runs still at d after the horizon
    theory_mean_M: float
    theory_p_zero: float
    epsilon: float
    n_runs: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "estimate": {"mean_M": self.mean_M, "p_zero": self.p_zero},
            "std_error": {"mean_M": self.se_M, "p_zero": self.se_p_zero},
            "theory": {"mean_M": self.theory_mean_M, "p_zero": self.theory_p_zero},
            "pmf_M": {str(k): float(v) for k, v in self.pmf_M.items()},
            "n_low": self.n_low, "n_censored": self.n_censored,
            "epsilon": self.epsilon, "n_runs": self.n_runs, "seed": self.seed,
        }


def boundary_theory(cfg: GameConfig, eps: float) -> tuple[float, float]:
    """Geometric parameter of ``M`` and ``P(d_M = 0)`` at start gap ``d``."""
    D, d = cfg.D, cfg.d
    param = 1 - (1 - 2 * eps / D) * (2 * d / D)
    return param, 4 * eps * d / (D ** 2 * param)


def estimate_boundary_law(cfg: GameConfig, n_runs: int = 100_000, seed: int = 0,
                          horizon: int = 64) -> BoundaryEstimate:
    """Law of the exit time ``M`` and of ``d_M`` when play starts at gap ``d``."""
    if cfg.sigma != 0:
        raise ValueError("the boundary law assumes sigma == 0")
    if not cfg.d > 0:
        raise ValueError("boundary law needs a positive escape distance")
    eps = stage_epsilon("NC-c", cfg.d, cfg)
    Ms, dMs = [], []
    for batch in iter_batches(cfg, 0.0, cfg.d, "noncoop", horizon, n_runs, seed):
        _, M, d_M = first_exit_times(batch.d, cfg, "noncoop")
        Ms.append(M)
        dMs.append(d_M)
    M = np.concatenate(Ms)
    d_M = np.concatenate(dMs)
    done = M > 0
    n_done = int(done.sum())
    Md = M[done].astype(float)
    zero = np.abs(d_M[done]) <= cfg.tie_tol
    low = (~zero) & (d_M[done] <= cfg.d + BOUNDARY_RTOL * cfg.D)
    values, counts = np.unique(M[done], return_counts=True)
    param, p0 = boundary_theory(cfg, eps)
    p_zero = float(zero.mean())
    return BoundaryEstimate(
        mean_M=float(Md.mean()), se_M=float(Md.std(ddof=1) / math.sqrt(n_done)),
        pmf_M={int(v): int(c) / n_done for v, c in zip(values, counts)},
        p_zero=p_zero, se_p_zero=float(math.sqrt(p_zero * (1 - p_zero) / n_done)),
        n_low=int(low.sum()), n_censored=int(n_runs - n_done),
        theory_mean_M=1 / param, theory_p_zero=p0, epsilon=eps,
        n_runs=n_runs, seed=seed)


@dataclass
class NoisySummary:
    sigma: float
    d0: float
    horizon: int
    n_runs: int
    seed: int
    # non-cooperative play
    frac_reached: float = math.nan
    mean_first_passage: float = math.nan
    mean_occupation_above: float = math.nan
    se_occupation_above: float = math.nan
    # cooperative play
    coop_mean_abs_dev: float = math.nan
    coop_min_abs_dev: float = math.nan
    coop_max_abs_dev: float = math.nan
    coop_frac_locked: float = math.nan

    def to_dict(self) -> dict:
        est = {k: v for k, v in self.__dict__.items()
               if k not in ("sigma", "d0", "horizon", "n_runs", "seed", "se_occupation_above")}
        return {"estimate": est,
                "std_error": {"mean_occupation_above": self.se_occupation_above},
                "sigma": self.sigma, "d0": self.d0, "horizon": self.horizon,
                "n_runs": self.n_runs, "seed": self.seed}


def noisy_regime_summary(cfg: GameConfig, d0: float, horizon: int = 1000, n_runs: int = 10_000,
                         seed: int = 0, modes: Sequence[Mode] = ("noncoop", "coop")
                         ) -> NoisySummary:
    """Monte Carlo summary of the gap process under displacement noise.

    Requires ``sigma > 0``. Non-cooperative: fraction of runs with ``d_n >= d`` for some ``n``, the
    mean first such ``n`` and the mean number of periods ``1..horizon`` spent
    strictly above ``d``. Cooperative: mean and minimum of ``|d_n - D/2|``
    (and maximum) over periods ``1..horizon`` and the fraction of those periods at ``D/2``
    (within ``1e-9 * D``).
    """
    if not cfg.sigma > 0:
        raise ValueError("noisy_regime_summary needs sigma > 0")
    out = NoisySummary(cfg.sigma, d0, horizon, n_runs, seed)
    if "noncoop" in modes:
        first, occ = [], []
        for batch in iter_batches(cfg, 0.0, d0, "noncoop", horizon, n_runs, seed):
            reached = batch.d >= cfg.d
            first.append(np.where(reached.any(axis=1), reached.argmax(axis=1), -1))
            occ.append((batch.d[:, 1:] > cfg.d).sum(axis=1))
        first = np.concatenate(first)
        occ = np.concatenate(occ).astype(float)
        ok = first >= 0
        out.frac_reached = float(ok.mean())
        out.mean_first_passage = float(first[ok].mean()) if ok.any() else math.nan
        out.mean_occupation_above = float(occ.mean())
        out.se_occupation_above = float(occ.std(ddof=1) / math.sqrt(n_runs))
    if "coop" in modes:
        dev_sum, dev_min, dev_max, locked = 0.0, math.inf, 0.0, 0
        for batch in iter_batches(cfg, 0.0, d0, "coop", horizon, n_runs, seed):
            dev = np.abs(batch.d[:, 1:] - cfg.D / 2)
            dev_sum += float(dev.sum())
            dev_min = min(dev_min, float(dev.min()))
            dev_max = max(dev_max, float(dev.max()))
            locked += int((dev <= HALF_RTOL * cfg.D).sum())
        total = n_runs * horizon
        out.coop_mean_abs_dev = dev_sum / total
        out.coop_min_abs_dev = dev_min
        out.coop_max_abs_dev = dev_max
        out.coop_frac_locked = locked / total
    return out
