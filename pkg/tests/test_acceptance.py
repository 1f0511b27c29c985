"""Acceptance criteria, one test each; every test logs a single PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -s`` to see the lines inline; they are
also collected in the terminal summary.
"""
import math
import time

import numpy as np
import pytest

from busgame import dynamics
from busgame.cli import DEFAULT_SEED
from busgame.equilibria import epsilon_bound, solve_noncoop
from busgame.game import (GameConfig, noncoop_utilities, optimal_single_speed,
                          single_fixed_distance_utility, single_fixed_time_utility)
from busgame.oracle import indifference_spread, verify_epsilon_equilibrium
from busgame.strategy import MixedStrategy, expected_utility, pure_payoffs
from busgame.torus import dx, dy, minimal_distance, reduce

from conftest import random_config

# pinned tolerances
GRID_N = 2001
ORACLE_RTOL = 1e-6            # times D
INDIFFERENCE_ATOL = 1e-9      # on top of epsilon, normalized units
IDENTITY_ULPS = 4
SURVIVAL_RUNS = 100_000
SURVIVAL_SE = 3
BOUNDARY_RUNS = 100_000
BOUNDARY_EPS = 0.05
BOUNDARY_SE = 4
MC_SAMPLES = 1_000_000
MC_SE = 4
ZERO_SUM_RTOL = 1e-12
TORUS_ULPS = 4
SHIFT_RTOL = 1e-8             # times D + |shift|
SINGLE_GRID = 10_000
NOISY_SIGMAS = (0.005, 0.01, 0.02)   # times D
NOISY_RUNS = 10_000
NOISY_HORIZON = 1000

TAGS = ("NC-a", "NC-b", "NC-c", "NC-d")


def fixture():
    return GameConfig(D=10, T=1, v_min=1, v_max=4)


def verdict(ok: bool) -> str:
    return "PASS" if ok else "FAIL"


def tagged_instance(rng: np.random.Generator, tag: str):
    """Random config and start positions that land in case ``tag``."""
    cfg = random_config(rng)
    D, d = cfg.D, cfg.d
    d0 = {"NC-a": 0.0, "NC-b": d * rng.uniform(0.01, 0.99), "NC-c": d,
          "NC-d": rng.uniform(d, D / 2)}[tag]
    if tag in ("NC-b", "NC-c"):
        bound = epsilon_bound(tag, d0, cfg)
        cfg = cfg.replace(epsilon=bound * rng.uniform(0.01, 0.99))
    x0 = float(rng.uniform(0, D))
    y0 = reduce(x0 - d0 if rng.random() < 0.5 else x0 + d0, D)
    return cfg, x0, y0


def test_criterion_1_closed_form_passes_oracle(acceptance_log):
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    failures = []
    for tag in TAGS:
        for _ in range(100):
            cfg, x0, y0 = tagged_instance(rng, tag)
            prof = solve_noncoop(x0, y0, cfg)
            assert prof.case_tag == tag
            rep = verify_epsilon_equilibrium(prof, x0, y0, cfg, GRID_N, ORACLE_RTOL * cfg.D)
            if not rep.passed:
                failures.append((tag, cfg, x0, y0, rep))
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 60
    acceptance_log(f"criterion 1 closed form vs oracle: {verdict(ok)} "
                   f"({400 - len(failures)}/400 profiles, {elapsed:.1f}s, target < 60s)")
    assert not failures, failures[:3]
    assert elapsed < 60


def test_criterion_2_indifference_residuals(acceptance_log):
    rng = np.random.default_rng(2)
    worst = -math.inf
    for tag in ("NC-b", "NC-c"):
        for _ in range(100):
            cfg, x0, y0 = tagged_instance(rng, tag)
            norm = cfg.normalized()
            prof = solve_noncoop(x0, y0, cfg)
            for own, opp, player in ((prof.strategy_x, prof.strategy_y, "x"),
                                     (prof.strategy_y, prof.strategy_x, "y")):
                spread = indifference_spread(own, opp, x0, y0, norm, player)
                worst = max(worst, spread - prof.epsilon)
    ok = worst <= INDIFFERENCE_ATOL
    acceptance_log(f"criterion 2 indifference residuals: {verdict(ok)} "
                   f"(max spread - eps = {worst:.3g}, allowed {INDIFFERENCE_ATOL:g})")
    assert ok


def test_criterion_3_mixture_identities(acceptance_log):
    rng = np.random.default_rng(3)
    bad = []
    for _ in range(500):
        cfg, x0, y0 = tagged_instance(rng, "NC-b")
        prof = solve_noncoop(x0, y0, cfg)
        D, T, d, vmax = cfg.D, cfg.T, cfg.d, cfg.v_max
        d0 = minimal_distance(x0, y0, D)
        trailer = prof.strategy_y if prof.roles_swapped else prof.strategy_x
        leader = prof.strategy_x if prof.roles_swapped else prof.strategy_y
        (u_lo, u_hi, _), = trailer.segments
        (v_lo, v_hi, _), = leader.segments
        checks = {
            "p1": prof.p1 == 1 - (d - d0) / D,
            "p2": prof.p2 == (d - d0) / D,
            "q1+q2": abs(prof.q1 + prof.q2 - d / D) <= IDENTITY_ULPS * math.ulp(d / D),
            "E(U)": abs((u_lo + u_hi) / 2 - (vmax - prof.p2 * D / (2 * T)))
            <= IDENTITY_ULPS * math.ulp(vmax),
            "E(V)": abs((v_lo + v_hi) / 2 - (vmax - d0 / T - prof.q2 * D / (2 * T)))
            <= IDENTITY_ULPS * math.ulp(vmax),
        }
        bad += [name for name, good in checks.items() if not good]
    ok = not bad
    acceptance_log(f"criterion 3 mixture identities: {verdict(ok)} "
                   f"(500 profiles, {len(bad)} violations, means within {IDENTITY_ULPS} ulp)")
    assert ok, sorted(set(bad))


def test_criterion_4_survival_bound(acceptance_log):
    start = time.perf_counter()
    est = dynamics.estimate_survival(fixture(), 1.0, k_max=10, n_runs=SURVIVAL_RUNS,
                                     seed=DEFAULT_SEED)
    elapsed = time.perf_counter() - start
    k = np.arange(1, 11)
    excess = est.p_hat[k] - (est.bound[k] + SURVIVAL_SE * est.std_error[k])
    worst = int(k[np.argmax(excess)])
    ok = bool(np.all(excess <= 0)) and elapsed < 30
    acceptance_log(f"criterion 4 survival bound (d/D)^k: {verdict(ok)} "
                   f"(P(N>1) = {est.p_hat[1]:.4f} vs bound 0.3; worst k={worst}; "
                   f"{elapsed:.1f}s, target < 30s)")
    assert np.all(excess <= 0), dict(zip(k.tolist(), est.p_hat[k].round(5).tolist()))
    assert elapsed < 30


@pytest.fixture(scope="module")
def boundary_estimate():
    cfg = fixture().replace(epsilon=BOUNDARY_EPS)
    return dynamics.estimate_boundary_law(cfg, n_runs=BOUNDARY_RUNS, seed=DEFAULT_SEED)


def test_criterion_5_boundary_law(acceptance_log, boundary_estimate):
    est = boundary_estimate
    z_M = abs(est.mean_M - est.theory_mean_M) / est.se_M
    z_0 = abs(est.p_zero - est.theory_p_zero) / est.se_p_zero
    ok = z_M <= BOUNDARY_SE and z_0 <= BOUNDARY_SE and est.n_censored == 0
    acceptance_log(f"criterion 5 boundary law E[M], P(d_M=0): {verdict(ok)} "
                   f"(E[M] {est.mean_M:.4f} vs {est.theory_mean_M:.4f}, z={z_M:.2f}; "
                   f"P {est.p_zero:.5f} vs {est.theory_p_zero:.6f}, z={z_0:.2f})")
    assert est.theory_mean_M == pytest.approx(1 / 0.406)
    assert est.theory_p_zero == pytest.approx(0.014778, abs=5e-7)
    assert ok


def test_criterion_5_exit_gap_exceeds_escape_distance(acceptance_log, boundary_estimate):
    est = boundary_estimate
    ok = est.n_low == 0
    acceptance_log(f"criterion 5 d_M > d whenever d_M != 0: {verdict(ok)} "
                   f"({est.n_low}/{est.n_runs} runs exit with 0 < d_M <= d)")
    assert ok


def test_criterion_6_cooperative_hitting_time(acceptance_log):
    rng = np.random.default_rng(6)
    cases = [(fixture(), d0) for d0 in (0.0, 1.0, 3.0)]
    while len(cases) < 50:
        cfg = random_config(rng)
        cases.append((cfg, float(rng.uniform(0, cfg.D / 2))))
    misses = 0
    for cfg, d0 in cases:
        bound = math.ceil(cfg.D / (2 * cfg.d))
        x0 = float(rng.uniform(0, cfg.D))
        tr = dynamics.run_trace(cfg, x0, reduce(x0 + d0, cfg.D), "coop", bound + 20,
                                seed=DEFAULT_SEED)
        tail = np.asarray(tr.d_sequence[bound:])
        if tr.N is None or tr.N > bound or \
                np.any(np.abs(tail - cfg.D / 2) > dynamics.HALF_RTOL * cfg.D):
            misses += 1
    ok = misses == 0
    acceptance_log(f"criterion 6 cooperative hitting time: {verdict(ok)} "
                   f"({len(cases) - misses}/{len(cases)} runs lock at D/2 by ceil(D/2d))")
    assert ok


def test_criterion_7_single_player_optima(acceptance_log):
    rng = np.random.default_rng(7)
    bad = 0
    for i in range(100):
        p, lam = rng.uniform(0.2, 5), rng.uniform(0.2, 5)
        c = [p * lam * rng.uniform(0.1, 0.9), p * lam, p * lam * rng.uniform(1.1, 3)][i % 3]
        cfg = random_config(rng, p=p, lam=lam, c=c)
        grid = np.linspace(cfg.v_min, cfg.v_max, SINGLE_GRID)
        fd = np.array([single_fixed_distance_utility(v, cfg) for v in grid])
        ft = np.array([single_fixed_time_utility(v, cfg) for v in grid])
        want = optimal_single_speed(cfg, "fixed_distance")
        if want == "indifferent":
            bad += np.ptp(fd) != 0
        else:
            bad += grid[np.argmax(fd)] != want
        bad += grid[np.argmax(ft)] != optimal_single_speed(cfg, "fixed_time")
    ok = bad == 0
    acceptance_log(f"criterion 7 single-player optima: {verdict(ok)} "
                   f"(100 configs, {bad} mismatches on a {SINGLE_GRID}-point grid)")
    assert ok


def _random_mixture(rng, cfg):
    w = rng.dirichlet(np.ones(4))
    cuts = np.sort(rng.uniform(cfg.v_min, cfg.v_max, 4))
    atoms = [(float(rng.uniform(cfg.v_min, cfg.v_max)), float(w[i])) for i in range(2)]
    segs = [(float(cuts[0]), float(cuts[1]), float(w[2])),
            (float(cuts[2]), float(cuts[3]), float(w[3]))]
    return MixedStrategy.build(atoms, segs, cfg)


def test_criterion_8_structural_invariants(acceptance_log):
    rng = np.random.default_rng(8)
    fails = {"zero-sum": 0, "dx+dy": 0, "shift": 0, "monte-carlo": 0}
    for _ in range(5000):
        cfg = random_config(rng, p=rng.uniform(0.1, 5), lam=rng.uniform(0.1, 5),
                            c=rng.uniform(0, 5))
        D = cfg.D
        x0, y0 = (float(v) for v in rng.uniform(0, D, 2))
        vx, vy = (float(v) for v in rng.uniform(cfg.v_min, cfg.v_max, 2))
        ux, uy = noncoop_utilities(x0, y0, vx, vy, cfg)
        total = cfg.p * cfg.lam * D - 2 * cfg.c * cfg.T
        fails["zero-sum"] += abs(ux + uy - total) > ZERO_SUM_RTOL * cfg.p * cfg.lam * D
        if x0 != y0:
            fails["dx+dy"] += abs(dx(x0, y0, D) + dy(x0, y0, D) - D) > TORUS_ULPS * math.ulp(D)
        r = float(rng.uniform(-1e3, 1e3))
        us, _ = noncoop_utilities(reduce(x0 + r, D), reduce(y0 + r, D), vx, vy, cfg)
        fails["shift"] += abs(us - ux) > SHIFT_RTOL * (D + abs(r)) * cfg.p * cfg.lam
    for _ in range(5):
        cfg = random_config(rng)
        X, Y = _random_mixture(rng, cfg), _random_mixture(rng, cfg)
        x0, y0 = 0.0, float(rng.uniform(0, cfg.D))
        ux, uy = pure_payoffs(x0, y0, X.sample(rng, MC_SAMPLES), Y.sample(rng, MC_SAMPLES), cfg)
        for u, player in ((ux, "x"), (uy, "y")):
            se = u.std(ddof=1) / math.sqrt(MC_SAMPLES)
            fails["monte-carlo"] += abs(expected_utility(x0, y0, X, Y, cfg, player)
                                        - u.mean()) > MC_SE * se
    ok = not any(fails.values())
    acceptance_log(f"criterion 8 structural invariants: {verdict(ok)} "
                   f"(violations {({k: int(v) for k, v in fails.items()})})")
    assert ok


def test_criterion_9_noise_speeds_escape(acceptance_log):
    base = fixture()
    results = [dynamics.noisy_regime_summary(base.replace(sigma=s * base.D), 1.0,
                                             NOISY_HORIZON, NOISY_RUNS, DEFAULT_SEED,
                                             modes=("noncoop",))
               for s in NOISY_SIGMAS]
    occ = [r.mean_occupation_above for r in results]
    reached = min(r.frac_reached for r in results)
    decreasing = all(a > b for a, b in zip(occ, occ[1:]))
    ok = reached == 1.0 and decreasing
    acceptance_log(f"criterion 9 noisy extension: {verdict(ok)} "
                   f"(reached {reached:.4f}; occupation above d "
                   + ", ".join(f"{o:.1f}" for o in occ) + ")")
    assert ok
