"""Game parameters and payoff functions.

Money-valued utilities here are in the caller's units (fare ``p``, arrival
intensity ``lam``, driving cost ``c``). The two-player solvers work in
normalized units ``p * lam == 1, c == 0`` where a payoff is just a distance;
:meth:`GameConfig.normalized` and :func:`rescale` convert between the two.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional, Sequence

import jsonschema

from busgame import torus

#: relative tolerance (times D) for deciding two final positions coincide
TIE_RTOL = 1e-12

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "D": {"type": "number", "exclusiveMinimum": 0},
        "T": {"type": "number", "exclusiveMinimum": 0},
        "v_min": {"type": "number", "exclusiveMinimum": 0},
        "v_max": {"type": "number", "exclusiveMinimum": 0},
        "p": {"type": "number", "minimum": 0},
        "lambda": {"type": "number", "exclusiveMinimum": 0},
        "c": {"type": "number", "minimum": 0},
        "k": {"type": "number", "minimum": 0},
        "epsilon": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "sigma": {"type": "number", "minimum": 0},
    },
    "required": ["D", "T", "v_min", "v_max"],
    "additionalProperties": False,
}


class ConfigError(ValueError):
    """A game configuration violates one of its invariants."""


@dataclass(frozen=True)
class GameConfig:
    """Exogenous parameters of the bus game.

    ``epsilon`` is the equilibrium slack in normalized payoff units (a
    distance). ``None`` lets the stage-game solver pick a feasible default.
    """

    D: float
    T: float
    v_min: float
    v_max: float
    p: float = 1.0
    lam: float = 1.0
    c: float = 0.0
    k: float = 1.0
    epsilon: Optional[float] = None
    sigma: float = 0.0

    def __post_init__(self):
        for name in ("D", "T", "v_min", "v_max", "p", "lam", "c", "k", "sigma"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ConfigError(f"{name}: expected a finite number, got {value!r}")
        if self.D <= 0:
            raise ConfigError(f"D: must be > 0, got {self.D}")
        if self.T <= 0:
            raise ConfigError(f"T: must be > 0, got {self.T}")
        if not 0 < self.v_min <= self.v_max:
            raise ConfigError(
                f"v_min, v_max: need 0 < v_min <= v_max, got {self.v_min}, {self.v_max}")
        if not self.T * self.v_max < self.D / 2:
            raise ConfigError(
                f"T, v_max: need T*v_max < D/2, got {self.T * self.v_max} >= {self.D / 2}")
        if self.p < 0:
            raise ConfigError(f"p: must be >= 0, got {self.p}")
        if self.lam <= 0:
            raise ConfigError(f"lambda: must be > 0, got {self.lam}")
        if self.c < 0:
            raise ConfigError(f"c: must be >= 0, got {self.c}")
        if self.k < 0:
            raise ConfigError(f"k: must be >= 0, got {self.k}")
        if self.sigma < 0:
            raise ConfigError(f"sigma: must be >= 0, got {self.sigma}")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ConfigError(f"epsilon: must be > 0, got {self.epsilon}")

    @property
    def d(self) -> float:
        """Escape distance ``T * (v_max - v_min)``."""
        return escape_distance(self)

    @property
    def income_rate(self) -> float:
        """Expected income per unit of distance, ``p * lam``."""
        return self.p * self.lam

    @property
    def tie_tol(self) -> float:
        return TIE_RTOL * self.D

    def normalized(self) -> GameConfig:
        return dataclasses.replace(self, p=1.0, lam=1.0, c=0.0)

    def replace(self, **changes) -> GameConfig:
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "D": self.D, "T": self.T, "v_min": self.v_min, "v_max": self.v_max,
            "p": self.p, "lambda": self.lam, "c": self.c, "k": self.k,
            "epsilon": self.epsilon, "sigma": self.sigma,
        }

    @classmethod
    def from_dict(cls, data: dict) -> GameConfig:
        try:
            jsonschema.validate(data, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            where = ".".join(str(p) for p in exc.absolute_path) or "<config>"
            raise ConfigError(f"{where}: {exc.message}") from None
        kwargs = dict(data)
        if "lambda" in kwargs:
            kwargs["lam"] = kwargs.pop("lambda")
        return cls(**kwargs)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> GameConfig:
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> GameConfig:
        return cls.from_json(Path(path).read_text())


def rescale(value: float, cfg: GameConfig) -> float:
    """Convert a normalized payoff (a distance) to money for one player."""
    return cfg.income_rate * value - cfg.c * cfg.T


def escape_distance(cfg: GameConfig) -> float:
    return cfg.T * (cfg.v_max - cfg.v_min)


def check_speed(v: float, cfg: GameConfig, name: str = "v") -> None:
    slack = 1e-12 * max(cfg.v_max, 1.0)
    if not cfg.v_min - slack <= v <= cfg.v_max + slack:
        raise ValueError(f"{name}={v!r} outside [{cfg.v_min}, {cfg.v_max}]")


# single-player games

def single_fixed_distance_utility(v: float, cfg: GameConfig) -> float:
    """Net income of covering the whole route at speed ``v``: ``(p*lam - c) * D / v``."""
    if not v > 0:
        raise ValueError(f"speed must be positive, got {v!r}")
    return (cfg.income_rate - cfg.c) * cfg.D / v


def single_fixed_time_utility(v: float, cfg: GameConfig) -> float:
    """Net income of driving for ``T`` at speed ``v``: ``p*lam*T*v - c*T``."""
    return cfg.income_rate * cfg.T * v - cfg.c * cfg.T


def optimal_single_speed(
    cfg: GameConfig, kind: Literal["fixed_distance", "fixed_time"]
) -> float | Literal["indifferent"]:
    """Utility-maximising speed of a lone bus.

    Returns ``"indifferent"`` when every feasible speed is optimal (fixed
    distance with ``p*lam == c``).
    """
    if kind == "fixed_time":
        return cfg.v_max
    if kind != "fixed_distance":
        raise ValueError(f"unknown single-player game {kind!r}")
    net = cfg.income_rate - cfg.c
    if net > 0:
        return cfg.v_min
    if net < 0:
        return cfg.v_max
    return "indifferent"


# two-player games

def final_positions(
    x0: float,
    y0: float,
    vx: float,
    vy: float,
    cfg: GameConfig,
    noise: Optional[Sequence[float]] = None,
) -> tuple[float, float]:
    """Positions after one period; ``noise`` is a pair of standard normals."""
    sx = cfg.T * vx
    sy = cfg.T * vy
    if noise is not None and cfg.sigma > 0:
        sx += cfg.sigma * noise[0]
        sy += cfg.sigma * noise[1]
    return torus.reduce(x0 + sx, cfg.D), torus.reduce(y0 + sy, cfg.D)


def _is_tie(xt: float, yt: float, cfg: GameConfig) -> bool:
    gap = abs(xt - yt)
    return gap <= cfg.tie_tol or cfg.D - gap <= cfg.tie_tol


def noncoop_distances(x0, y0, vx, vy, cfg: GameConfig) -> tuple[float, float]:
    """Normalized non-cooperative payoffs: the directed distances at time ``T``.

    Coinciding final positions split the route evenly.
    """
    xt, yt = final_positions(x0, y0, vx, vy, cfg)
    if _is_tie(xt, yt, cfg):
        return cfg.D / 2, cfg.D / 2
    return torus.dx(xt, yt, cfg.D), torus.dy(xt, yt, cfg.D)


def noncoop_utilities(x0, y0, vx, vy, cfg: GameConfig) -> tuple[float, float]:
    """Money payoffs ``(u_x, u_y)`` of the non-cooperative game.

    Noise is ignored: utilities are defined on the deterministic final
    positions.
    """
    gx, gy = noncoop_distances(x0, y0, vx, vy, cfg)
    return rescale(gx, cfg), rescale(gy, cfg)


def coop_utility(x0, y0, vx, vy, cfg: GameConfig) -> float:
    """Joint payoff ``u_x + u_y - k * |u_x - u_y|``."""
    ux, uy = noncoop_utilities(x0, y0, vx, vy, cfg)
    return ux + uy - cfg.k * abs(ux - uy)
