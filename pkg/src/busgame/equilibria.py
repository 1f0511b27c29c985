"""Closed-form stage-game solutions.

Non-cooperative cases are tagged by the start gap ``d0`` (minimal distance)
against the escape distance ``d``:

* ``NC-a`` ``d0 == 0``: both race at ``v_max`` (Nash).
* ``NC-b`` ``0 < d0 < d``: mixed epsilon-equilibrium, see :func:`solve_noncoop`.
* ``NC-c`` ``d0 == d``: two-atom epsilon-equilibrium.
* ``NC-d`` ``d0 > d``: both hang back at ``v_min`` (Nash).

The formulas are stated for the *trailing* bus (the one whose directed
distance to the other is ``d0``). When that is ``y`` the roles are swapped
internally and the returned strategies are relabelled back to ``x``/``y``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Optional

from busgame import torus
from busgame.game import GameConfig
from busgame.strategy import MixedStrategy

CaseTag = Literal["NC-a", "NC-b", "NC-c", "NC-d", "COOP-a", "COOP-b", "COOP-c"]
Kind = Literal["nash", "epsilon", "social_optimum"]

#: |d0 - d| <= BOUNDARY_RTOL * D counts as the boundary case NC-c
BOUNDARY_RTOL = 1e-9


class InfeasibleEpsilon(ValueError):
    """The requested epsilon breaks the case structure of the equilibrium."""


class AllProfilesOptimal(ValueError):
    """With ``k == 0`` the joint payoff is constant, so nothing is singled out."""


@dataclass(frozen=True)
class QPolicy:
    """Choice of the leader's free weights in case NC-b.

    ``q2`` is the mass of the leader's uniform segment; ``None`` takes the
    largest admissible value ``(d - d0) / D``.
    """

    q2: Optional[float] = None

    def resolve(self, d: float, d0: float, D: float) -> tuple[float, float]:
        q2_max = (d - d0) / D
        q2 = q2_max if self.q2 is None else self.q2
        if not 0 <= q2 <= q2_max * (1 + 1e-12):
            raise ValueError(f"q2={q2!r} outside [0, (d - d0)/D = {q2_max!r}]")
        q1 = d / D - q2
        if q1 < 0:
            raise ValueError(f"q1 = d/D - q2 = {q1!r} is negative")
        return q1, q2


@dataclass(frozen=True)
class EquilibriumProfile:
    strategy_x: MixedStrategy
    strategy_y: MixedStrategy
    case_tag: CaseTag
    kind: Kind
    roles_swapped: bool
    epsilon: Optional[float] = None
    p1: Optional[float] = None
    p2: Optional[float] = None
    q1: Optional[float] = None
    q2: Optional[float] = None
    alternates: tuple[tuple[float, float], ...] = ()
    family: Optional[dict] = field(default=None, compare=False)

    @property
    def trailer(self) -> str:
        return "y" if self.roles_swapped else "x"

    def to_dict(self) -> dict:
        return {
            "strategy_x": self.strategy_x.to_dict(),
            "strategy_y": self.strategy_y.to_dict(),
            "case_tag": self.case_tag,
            "kind": self.kind,
            "roles_swapped": self.roles_swapped,
            "epsilon": self.epsilon,
            "p1": self.p1, "p2": self.p2, "q1": self.q1, "q2": self.q2,
            "alternates": [list(a) for a in self.alternates],
            "family": self.family,
        }

    @classmethod
    def from_dict(cls, data: dict) -> EquilibriumProfile:
        return cls(
            strategy_x=MixedStrategy.from_dict(data["strategy_x"]),
            strategy_y=MixedStrategy.from_dict(data["strategy_y"]),
            case_tag=data["case_tag"],
            kind=data["kind"],
            roles_swapped=bool(data["roles_swapped"]),
            epsilon=data.get("epsilon"),
            p1=data.get("p1"), p2=data.get("p2"), q1=data.get("q1"), q2=data.get("q2"),
            alternates=tuple(tuple(a) for a in data.get("alternates", ())),
            family=data.get("family"),
        )


def _geometry(x0: float, y0: float, cfg: GameConfig) -> tuple[float, bool]:
    """Start gap ``d0`` and whether ``y`` is the trailing bus."""
    gx = torus.dx(x0, y0, cfg.D)
    gy = torus.dy(x0, y0, cfg.D)
    return min(gx, gy), gy < gx


def classify_gap(d0: float, cfg: GameConfig) -> CaseTag:
    d = cfg.d
    if d0 <= cfg.tie_tol:
        return "NC-a"
    if d > 0 and abs(d0 - d) <= BOUNDARY_RTOL * cfg.D:
        return "NC-c"
    if d0 < d:
        # case-b hypothesis d < dy(x0, y0) follows from T*v_max < D/2
        assert d < cfg.D - d0
        return "NC-b"
    return "NC-d"


def classify(x0: float, y0: float, cfg: GameConfig) -> CaseTag:
    """Non-cooperative case tag of the start positions."""
    d0, _ = _geometry(x0, y0, cfg)
    return classify_gap(d0, cfg)


def epsilon_bound(case: CaseTag, d0: float, cfg: GameConfig) -> float:
    """Strict upper bound on epsilon keeping the case's equilibrium well formed."""
    if case == "NC-b":
        return min(d0, cfg.d - d0) / 2
    if case == "NC-c":
        return cfg.d / 2
    return float("inf")


def resolve_epsilon(case: CaseTag, d0: float, cfg: GameConfig,
                    epsilon: Optional[float] = None) -> float:
    bound = epsilon_bound(case, d0, cfg)
    eps = epsilon if epsilon is not None else cfg.epsilon
    if eps is None:
        return bound / 10
    if not 0 < eps < bound:
        raise InfeasibleEpsilon(
            f"{case}: epsilon={eps!r} must lie in (0, {bound!r}) at d0={d0!r}")
    return eps


def _orient(trailer: MixedStrategy, leader: MixedStrategy, swapped: bool):
    return (leader, trailer) if swapped else (trailer, leader)


def noncoop_case_b(d0: float, eps: float, cfg: GameConfig, qpolicy: QPolicy):
    """Trailer and leader strategies of case NC-b plus ``(p1, p2, q1, q2)``."""
    D, T, vmin, vmax, d = cfg.D, cfg.T, cfg.v_min, cfg.v_max, cfg.d
    p2 = (d - d0) / D
    p1 = 1 - p2
    q1, q2 = qpolicy.resolve(d, d0, D)
    trailer = MixedStrategy.build(
        atoms=[(vmin, p1)], segments=[(vmin + d0 / T, vmax, p2)], cfg=cfg)
    v_top = vmax - d0 / T
    leader = MixedStrategy.build(
        atoms=[(vmin, q1), (v_top + eps / T, 1 - d / D)],
        segments=[(v_top - q2 * D / T, v_top, q2)],
        cfg=cfg)
    return trailer, leader, (p1, p2, q1, q2)


def noncoop_case_c(eps: float, cfg: GameConfig):
    D, T, vmin, vmax, d = cfg.D, cfg.T, cfg.v_min, cfg.v_max, cfg.d
    p_fast = 2 * eps / D
    q_slow = 2 * d / D
    trailer = MixedStrategy.build(atoms=[(vmin, 1 - p_fast), (vmax, p_fast)], cfg=cfg)
    leader = MixedStrategy.build(atoms=[(vmin, q_slow), (vmin + eps / T, 1 - q_slow)], cfg=cfg)
    return trailer, leader, (1 - p_fast, p_fast, q_slow, 1 - q_slow)


def solve_noncoop(
    x0: float,
    y0: float,
    cfg: GameConfig,
    qpolicy: Optional[QPolicy] = None,
    epsilon: Optional[float] = None,
) -> EquilibriumProfile:
    """Equilibrium of the non-cooperative stage game started at ``(x0, y0)``.

    Args:
        x0, y0: start positions in ``[0, D)``.
        cfg: game parameters; only ``D, T, v_min, v_max`` and ``epsilon``
            matter (payoffs are compared in normalized units).
        qpolicy: leader weights for case NC-b (default: maximal ``q2``).
        epsilon: overrides ``cfg.epsilon``. If both are ``None`` a tenth of
            the feasibility bound is used.

    Raises:
        InfeasibleEpsilon: epsilon is outside ``(0, min(d0, d - d0)/2)`` in
            NC-b or ``(0, d/2)`` in NC-c.
    """
    d0, swapped = _geometry(x0, y0, cfg)
    case = classify_gap(d0, cfg)
    if case == "NC-a":
        s = MixedStrategy.point(cfg.v_max)
        return EquilibriumProfile(s, s, case, "nash", swapped, epsilon=0.0)
    if case == "NC-d":
        s = MixedStrategy.point(cfg.v_min)
        return EquilibriumProfile(s, s, case, "nash", swapped, epsilon=0.0)

    eps = resolve_epsilon(case, d0, cfg, epsilon)
    if case == "NC-b":
        trailer, leader, (p1, p2, q1, q2) = noncoop_case_b(d0, eps, cfg, qpolicy or QPolicy())
    else:
        trailer, leader, (p1, p2, q1, q2) = noncoop_case_c(eps, cfg)
    sx, sy = _orient(trailer, leader, swapped)
    return EquilibriumProfile(sx, sy, case, "epsilon", swapped,
                              epsilon=eps, p1=p1, p2=p2, q1=q1, q2=q2)


def classify_coop(x0: float, y0: float, cfg: GameConfig) -> CaseTag:
    d0, _ = _geometry(x0, y0, cfg)
    if d0 <= cfg.tie_tol:
        return "COOP-a"
    if d0 + cfg.d < cfg.D / 2:
        return "COOP-b"
    return "COOP-c"


def solve_coop(x0: float, y0: float, cfg: GameConfig) -> EquilibriumProfile:
    """Socially optimal speed pair of the cooperative stage game.

    The joint payoff only penalises inequality, so the optimum pushes the
    final gap as close to ``D/2`` as possible. COOP-a and COOP-b widen it by
    the full escape distance (trailer slow, leader fast). In COOP-c the gap
    can reach ``D/2`` exactly; any pair with ``T*(v_leader - v_trailer) ==
    D/2 - d0`` does, and the member with the trailer at ``v_min`` is
    returned. ``family`` records that constraint.
    """
    if not cfg.k > 0:
        raise AllProfilesOptimal("k must be > 0; with k == 0 every profile is optimal")
    d0, swapped = _geometry(x0, y0, cfg)
    case = classify_coop(x0, y0, cfg)
    vmin, vmax = cfg.v_min, cfg.v_max
    alternates: tuple = ()
    family = None
    if case == "COOP-a":
        v_tr, v_ld = vmin, vmax
        alternates = ((vmax, vmin),)
    elif case == "COOP-b":
        v_tr, v_ld = vmin, vmax
    else:
        gap_needed = cfg.D / 2 - d0
        v_tr, v_ld = vmin, min(vmax, vmin + gap_needed / cfg.T)
        family = {"leader_minus_trailer_displacement": gap_needed}
    sx, sy = _orient(MixedStrategy.point(v_tr), MixedStrategy.point(v_ld), swapped)
    return EquilibriumProfile(sx, sy, case, "social_optimum", swapped,
                              alternates=alternates, family=family)


def _case_b_inputs(d0: float, cfg: GameConfig, epsilon: Optional[float]) -> float:
    if not 0 < d0 < cfg.d:
        raise ValueError(f"best replies are defined for 0 < d0 < d, got d0={d0!r}, d={cfg.d!r}")
    return resolve_epsilon("NC-b", d0, cfg, epsilon)


def best_reply_x(v: float, d0: float, cfg: GameConfig, epsilon: Optional[float] = None) -> float:
    """Trailing bus's epsilon-best reply to a leader driving at ``v`` (case NC-b).

    Below the overtaking threshold ``v_max - d0/T`` the trailer passes the
    leader by ``eps``; the reply is capped at ``v_max``, which is itself an
    epsilon-best reply within ``eps/T`` of the threshold.
    """
    eps = _case_b_inputs(d0, cfg, epsilon)
    T = cfg.T
    threshold = cfg.v_max - d0 / T
    if abs(v - threshold) <= 1e-12 * max(cfg.v_max, 1.0):
        return cfg.v_max
    if v < threshold:
        return min(cfg.v_max, v + d0 / T + eps / T)
    return cfg.v_min


def best_reply_y(v: float, d0: float, cfg: GameConfig, epsilon: Optional[float] = None) -> float:
    """Leading bus's epsilon-best reply to a trailer driving at ``v`` (case NC-b)."""
    eps = _case_b_inputs(d0, cfg, epsilon)
    T = cfg.T
    # a trailer that would end within tie tolerance of a slow leader catches it
    if d0 - T * (v - cfg.v_min) > cfg.tie_tol:
        return cfg.v_min
    return v - d0 / T + eps / T
