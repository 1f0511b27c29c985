"""Batch command-line front end.

    busgame <command> --config exp.json [--out DIR] [--seed N] [--format csv|json]

The config file is either a bare game config or an experiment object::

    {"game": {"D": 10, "T": 1, "v_min": 1, "v_max": 4},
     "x0": 0, "y0": 1, "mode": "noncoop", "n_runs": 1000, "seed": 7,
     "sweep": {"parameter": "sigma", "values": [0.05, 0.1], "command": "noisy"}}

Exit codes: 0 success, 2 invalid input, 3 a ``verify`` run that failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

import jsonschema
import numpy as np

from busgame import dynamics, equilibria, oracle
from busgame.equilibria import EquilibriumProfile
from busgame.game import ConfigError, GameConfig
from busgame.strategy import MixedStrategy

COMMANDS = ("solve", "verify", "simulate", "survival", "boundary", "noisy", "sweep")
SWEEPABLE = ("solve", "verify", "simulate", "survival", "boundary", "noisy")
DEFAULT_SEED = 20240517

EXPERIMENT_SCHEMA = {
    "type": "object",
    "properties": {
        "game": {"type": "object"},
        "command": {"enum": list(COMMANDS)},
        "mode": {"enum": ["noncoop", "coop"]},
        "x0": {"type": "number"},
        "y0": {"type": "number"},
        "d0": {"type": "number", "minimum": 0},
        "horizon": {"type": "integer", "minimum": 1},
        "n_runs": {"type": "integer", "minimum": 1},
        "k_max": {"type": "integer", "minimum": 0},
        "grid_n": {"type": "integer", "minimum": 2},
        "tolerance": {"type": ["number", "null"], "minimum": 0},
        "seed": {"type": "integer", "minimum": 0},
        "sweep": {
            "type": "object",
            "properties": {
                "parameter": {"type": "string"},
                "values": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                "command": {"enum": list(SWEEPABLE)},
            },
            "required": ["parameter", "values"],
            "additionalProperties": False,
        },
        "out": {"type": "string"},
        "format": {"enum": ["csv", "json"]},
    },
    "required": ["game"],
    "additionalProperties": False,
}


class SpecError(ValueError):
    """An experiment description is malformed."""


@dataclass
class ExperimentSpec:
    command: str
    config: GameConfig
    x0: Optional[float] = None
    y0: Optional[float] = None
    d0: Optional[float] = None
    mode: str = "noncoop"
    horizon: int = 1000
    n_runs: int = 1
    k_max: int = 10
    grid_n: int = oracle.DEFAULT_GRID_N
    tolerance: Optional[float] = None
    seed: int = DEFAULT_SEED
    sweep_parameter: Optional[str] = None
    sweep_values: list = field(default_factory=list)
    sweep_command: str = "verify"
    out: Path = Path(".")
    format: str = "json"

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise SpecError(f"command: unknown {self.command!r}")
        if self.command == "sweep":
            names = {f.name for f in fields(GameConfig)} | {"lambda", "d0"}
            if self.sweep_parameter not in names:
                raise SpecError(f"sweep.parameter: {self.sweep_parameter!r} is not a game parameter")
            if not self.sweep_values:
                raise SpecError("sweep.values: need at least one value")

    def positions(self) -> tuple[float, float]:
        """Start positions; ``d0`` alone means ``(0, d0)``."""
        if self.x0 is not None and self.y0 is not None:
            return self.x0, self.y0
        if self.d0 is not None:
            return 0.0, self.d0
        raise SpecError("positions: give x0 and y0, or d0")

    @classmethod
    def from_dict(cls, data: dict, command: Optional[str] = None, **overrides) -> ExperimentSpec:
        if "game" not in data:
            data = {"game": data}
        try:
            jsonschema.validate(data, EXPERIMENT_SCHEMA)
        except jsonschema.ValidationError as exc:
            where = ".".join(str(p) for p in exc.absolute_path) or "<experiment>"
            raise SpecError(f"{where}: {exc.message}") from None
        try:
            cfg = GameConfig.from_dict(data["game"])
        except ConfigError as exc:
            raise SpecError(f"game.{exc}") from None
        kw: dict[str, Any] = {k: data[k] for k in
                              ("x0", "y0", "d0", "mode", "horizon", "n_runs", "k_max", "grid_n",
                               "tolerance", "seed", "format") if k in data}
        if "out" in data:
            kw["out"] = Path(data["out"])
        sweep = data.get("sweep")
        if sweep:
            kw["sweep_parameter"] = sweep["parameter"]
            kw["sweep_values"] = list(sweep["values"])
            kw["sweep_command"] = sweep.get("command", "verify")
        kw.update({k: v for k, v in overrides.items() if v is not None})
        cmd = command or data.get("command")
        if cmd is None:
            raise SpecError("command: none given")
        return cls(command=cmd, config=cfg, **kw)


# output

def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def json_bytes(obj) -> bytes:
    return (json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n").encode()


def csv_bytes(header, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue().encode()


def write_atomic(path: Path, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def strategy_density_rows(strategy: MixedStrategy, player: str, bins: int = 40):
    """``(player, kind, speed_lo, speed_hi, mass)``: atoms first, then equal bins."""
    for v, p in strategy.atoms:
        yield [player, "atom", v, v, p]
    for lo, hi, p in strategy.segments:
        edges = np.linspace(lo, hi, bins + 1)
        for a, b in zip(edges[:-1], edges[1:]):
            yield [player, "bin", float(a), float(b), p / bins]


def emit_plot_data(results, kind: str, path) -> Path:
    """Write plot-ready CSV for ``survival_curve``, ``trace_fan`` or ``strategy_density``."""
    if kind == "survival_curve":
        data = csv_bytes(["k", "estimate", "std_error", "bound"], results.rows())
    elif kind == "trace_fan":
        rows = [row for tr in results for row in tr.rows()]
        data = csv_bytes(dynamics.TRACE_COLUMNS, rows)
    elif kind == "strategy_density":
        rows = list(strategy_density_rows(results.strategy_x, "x"))
        rows += list(strategy_density_rows(results.strategy_y, "y"))
        data = csv_bytes(["player", "kind", "speed_lo", "speed_hi", "mass"], rows)
    else:
        raise ValueError(f"unknown plot kind {kind!r}")
    return write_atomic(Path(path), data)


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        elif isinstance(v, (list, tuple)):
            for i, item in enumerate(v):
                if isinstance(item, dict):
                    out.update(_flatten(item, f"{key}.{i}."))
                else:
                    out[f"{key}.{i}"] = item
        else:
            out[key] = v
    return out


# commands

@dataclass
class Outcome:
    summary: str
    payload: dict
    code: int = 0


def _profile(spec: ExperimentSpec) -> EquilibriumProfile:
    x0, y0 = spec.positions()
    cfg = spec.config
    x0, y0 = x0 % cfg.D, y0 % cfg.D
    if spec.mode == "coop":
        return equilibria.solve_coop(x0, y0, cfg)
    return equilibria.solve_noncoop(x0, y0, cfg)


def cmd_solve(spec: ExperimentSpec) -> Outcome:
    prof = _profile(spec)
    out = spec.out
    if spec.format == "json":
        write_atomic(out / "profile.json", json_bytes(prof.to_dict()))
    else:
        emit_plot_data(prof, "strategy_density", out / "strategy_density.csv")
    return Outcome(f"solve: {prof.case_tag} ({prof.kind}), trailer {prof.trailer}",
                   prof.to_dict())


def cmd_verify(spec: ExperimentSpec) -> Outcome:
    prof = _profile(spec)
    x0, y0 = spec.positions()
    x0, y0 = x0 % spec.config.D, y0 % spec.config.D
    if spec.mode == "coop":
        rep = oracle.verify_social_optimum(prof, x0, y0, spec.config, spec.grid_n, spec.tolerance)
    else:
        rep = oracle.verify_epsilon_equilibrium(prof, x0, y0, spec.config, spec.grid_n,
                                                spec.tolerance)
    payload = {"case_tag": prof.case_tag, **rep.to_dict()}
    if spec.format == "json":
        write_atomic(spec.out / "report.json", json_bytes(payload))
    else:
        flat = _flatten(payload)
        write_atomic(spec.out / "report.csv", csv_bytes(list(flat), [list(flat.values())]))
    return Outcome(
        f"verify: {prof.case_tag} {rep.verdict} (gain_x={rep.max_gain_x:.3g}, "
        f"gain_y={rep.max_gain_y:.3g}, eps={rep.epsilon:.3g})",
        payload, 0 if rep.passed else 3)


def cmd_simulate(spec: ExperimentSpec) -> Outcome:
    x0, y0 = spec.positions()
    traces = [dynamics.run_trace(spec.config, x0, y0, spec.mode, spec.horizon, spec.seed, i)
              for i in range(spec.n_runs)]
    payload = {"traces": [{"run_id": t.run_id, "N": t.N, "M": t.M, "d_M": t.d_M,
                           "d_sequence": t.d_sequence} for t in traces],
               "mode": spec.mode, "horizon": spec.horizon, "n_runs": spec.n_runs,
               "seed": spec.seed}
    if spec.format == "json":
        write_atomic(spec.out / "traces.json", json_bytes(payload))
    else:
        emit_plot_data(traces, "trace_fan", spec.out / "traces.csv")
    hit = sum(t.N is not None for t in traces)
    return Outcome(f"simulate: {spec.n_runs} runs x {spec.horizon} periods, N reached in {hit}",
                   payload)


def cmd_survival(spec: ExperimentSpec) -> Outcome:
    if spec.d0 is None:
        raise SpecError("d0: required for survival")
    est = dynamics.estimate_survival(spec.config, spec.d0, spec.k_max, spec.n_runs, spec.seed)
    if spec.format == "json":
        write_atomic(spec.out / "survival.json", json_bytes(est.to_dict()))
    else:
        emit_plot_data(est, "survival_curve", spec.out / "survival.csv")
    over = est.p_hat - (est.bound + 3 * est.std_error)
    worst = int(np.argmax(over))
    return Outcome(f"survival: {spec.n_runs} runs, max excess over bound+3SE "
                   f"{over[worst]:.4g} at k={worst}", est.to_dict())


def cmd_boundary(spec: ExperimentSpec) -> Outcome:
    cfg = spec.config
    if spec.d0 is not None and abs(spec.d0 - cfg.d) > equilibria.BOUNDARY_RTOL * cfg.D:
        raise SpecError(f"d0: the boundary law starts at d0 = d = {cfg.d}, got {spec.d0}")
    est = dynamics.estimate_boundary_law(cfg, spec.n_runs, spec.seed)
    payload = est.to_dict()
    if spec.format == "json":
        write_atomic(spec.out / "boundary.json", json_bytes(payload))
    else:
        rows = [["mean_M", est.mean_M, est.se_M, est.theory_mean_M],
                ["p_zero", est.p_zero, est.se_p_zero, est.theory_p_zero]]
        write_atomic(spec.out / "boundary.csv",
                     csv_bytes(["statistic", "estimate", "std_error", "theory"], rows))
        write_atomic(spec.out / "boundary_pmf.csv",
                     csv_bytes(["M", "probability"], sorted(est.pmf_M.items())))
    return Outcome(f"boundary: E[M]={est.mean_M:.4f} (theory {est.theory_mean_M:.4f}), "
                   f"P(d_M=0)={est.p_zero:.5f} (theory {est.theory_p_zero:.5f})", payload)


def cmd_noisy(spec: ExperimentSpec) -> Outcome:
    if spec.d0 is None:
        raise SpecError("d0: required for noisy")
    res = dynamics.noisy_regime_summary(spec.config, spec.d0, spec.horizon, spec.n_runs,
                                        spec.seed)
    payload = res.to_dict()
    if spec.format == "json":
        write_atomic(spec.out / "noisy.json", json_bytes(payload))
    else:
        flat = _flatten(payload)
        write_atomic(spec.out / "noisy.csv", csv_bytes(list(flat), [list(flat.values())]))
    return Outcome(f"noisy: sigma={res.sigma:g} reached={res.frac_reached:.4f} "
                   f"occupation_above={res.mean_occupation_above:.2f}", payload)


def _with_parameter(spec: ExperimentSpec, value) -> ExperimentSpec:
    name = spec.sweep_parameter
    changes = dict(spec.__dict__)
    changes.update(command=spec.sweep_command, sweep_parameter=None, sweep_values=[])
    if name == "d0":
        changes["d0"] = value
    else:
        game = spec.config.to_dict()
        game[name if name != "lam" else "lambda"] = value
        try:
            changes["config"] = GameConfig.from_dict(game)
        except ConfigError as exc:
            raise SpecError(f"sweep {name}={value}: {exc}") from None
    return ExperimentSpec(**changes)


def cmd_sweep(spec: ExperimentSpec) -> Outcome:
    rows, code = [], 0
    for value in spec.sweep_values:
        sub = _with_parameter(spec, value)
        sub.out = spec.out / f"{spec.sweep_parameter}={value!r}"
        res = HANDLERS[sub.command](sub)
        print(f"  {spec.sweep_parameter}={value!r}: {res.summary}")
        code = max(code, res.code)
        row = {spec.sweep_parameter: value}
        row.update(_flatten({k: v for k, v in res.payload.items() if k != "traces"}))
        rows.append(row)
    payload = {"parameter": spec.sweep_parameter, "command": spec.sweep_command,
               "seed": spec.seed, "rows": rows}
    if spec.format == "json":
        write_atomic(spec.out / "sweep.json", json_bytes(payload))
    else:
        header = list(dict.fromkeys(k for r in rows for k in r))
        write_atomic(spec.out / "sweep.csv",
                     csv_bytes(header, [[_plain(r.get(h, "")) for h in header] for r in rows]))
    return Outcome(f"sweep: {spec.sweep_command} over {spec.sweep_parameter} "
                   f"({len(rows)} points)", payload, code)


HANDLERS = {
    "solve": cmd_solve, "verify": cmd_verify, "simulate": cmd_simulate,
    "survival": cmd_survival, "boundary": cmd_boundary, "noisy": cmd_noisy, "sweep": cmd_sweep,
}


def run(spec: ExperimentSpec) -> int:
    """Run one experiment, print its summary line and return the exit code."""
    try:
        res = HANDLERS[spec.command](spec)
    except ValueError as exc:
        # SpecError, ConfigError, InfeasibleEpsilon and AllProfilesOptimal included
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(res.summary)
    return res.code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="busgame", description=__doc__.split("\n")[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="experiment or game config (JSON)")
    ap.add_argument("--out", help="output directory (default: current)")
    ap.add_argument("--seed", type=int, help="master seed (default: config or %d)" % DEFAULT_SEED)
    ap.add_argument("--format", choices=("csv", "json"), help="output format (default json)")
    ap.add_argument("--n-runs", type=int, dest="n_runs")
    ap.add_argument("--horizon", type=int)
    ap.add_argument("--d0", type=float)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        data = json.loads(Path(args.config).read_text())
        if not isinstance(data, dict):
            raise SpecError("<experiment>: expected a JSON object")
        spec = ExperimentSpec.from_dict(
            data, args.command, seed=args.seed, format=args.format,
            out=Path(args.out) if args.out else None,
            n_runs=args.n_runs, horizon=args.horizon, d0=args.d0)
        if spec.seed < 0 or spec.seed >= 2 ** 64:
            raise SpecError("seed: must be an unsigned 64-bit integer")
    except (OSError, json.JSONDecodeError, SpecError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return run(spec)


if __name__ == "__main__":
    sys.exit(main())
