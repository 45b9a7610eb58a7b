"""Acceptance checks: one test per criterion, each printing a PASS/FAIL line.

Statistical checks use fixed seeds, so reruns give identical verdicts.
"""

import json
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from conftest import record_acceptance
from distrl.algos import TdSchedule, bound_params
from distrl.cli import main
from distrl.envs import (
    generic_nonepisodic,
    hard_bandit,
    hard_episodic,
    hard_nonepisodic,
    rollout_chain,
    sample_history,
    sample_history_rng,
)
from distrl.linalg import FeatureMatrix, least_squares, weighted_gram_min_eigenvalue
from distrl.quantize import FRAMING_BYTES, QuantizerConfig, bits_for_precision, dequantize, quantize
from distrl.risk import Scenario, budget_frontier, estimate_risk, sweep
from distrl.seeding import make_rng
from oracles import normal_equation_solve

POW2_M = [1, 2, 4, 8, 16, 32, 64]
BANDIT_SIGNS = [1, -1, 1, 1, -1, 1, 1, 1]


def bandit_env_dict(n=8):
    return dict(constructor="hard_bandit", A=2, C=4, n=n, lambda_min=0.05, r_max=1.0, delta=0.02, v=BANDIT_SIGNS)


def check(number, passed, detail):
    record_acceptance(number, passed, detail)
    assert passed, detail


def test_criterion_01_least_squares_oracle():
    rng = np.random.default_rng(2024)
    cases = []
    while len(cases) < 200:
        cols = int(rng.integers(1, 7))
        rows = int(rng.integers(cols, 13))
        X = rng.normal(size=(rows, cols))
        X /= np.maximum(1.0, np.linalg.norm(X, axis=1))[:, None]
        if np.linalg.cond(X) > 1e6:
            continue
        cases.append((X, rng.normal(size=rows)))
    expected = [normal_equation_solve(X.tolist(), y.tolist()) for X, y in cases]
    start = time.perf_counter()
    got = [least_squares(FeatureMatrix(X), y) for X, y in cases]
    elapsed = time.perf_counter() - start
    worst = max(float(np.max(np.abs(g - np.asarray(e)))) for g, e in zip(got, expected))
    check(1, worst <= 1e-7 and elapsed < 1.0,
          f"200 instances, max componentwise error {worst:.2e} (tol 1e-7), {elapsed:.3f}s")


def test_criterion_02_quantizer_exactness():
    rng = np.random.default_rng(7)
    start = time.perf_counter()
    worst_ratio, formula_ok, size_ok = 0.0, True, True
    for _ in range(1000):
        lo = float(rng.uniform(-50, 50))
        width = float(rng.uniform(0.01, 100))
        cfg = QuantizerConfig(lo, lo + width, min(width * float(rng.uniform(1e-3, 1.0)), width))
        v = cfg.v_min + float(rng.uniform()) * (cfg.grid_max - cfg.v_min)
        msg = quantize([v], cfg)
        worst_ratio = max(worst_ratio, abs(dequantize(msg)[0] - v) / (cfg.precision / 2))
        exact_levels = math.ceil((cfg.v_max - cfg.v_min) / cfg.precision)
        formula_ok &= bits_for_precision(cfg) == math.log2(exact_levels) and msg.bits_per_value == math.log2(exact_levels)
        payload = 8 * (len(msg.to_packed_bytes()) - FRAMING_BYTES)
        size_ok &= 0 <= payload - msg.total_bits < 1 + 8
        size_ok &= len(msg.to_bytes()) == FRAMING_BYTES + 4 * msg.dim
    elapsed = time.perf_counter() - start
    passed = worst_ratio <= 1 + 1e-9 and formula_ok and size_ok and elapsed < 1.0
    check(2, passed, f"1000 pairs, max error/(P/2) {worst_ratio:.6f}, bit formula {formula_ok}, "
                     f"wire size {size_ok}, {elapsed:.3f}s")


def test_criterion_03_hard_instance_fidelity():
    start = time.perf_counter()
    failures = []
    # bandit: 125000 histories x 8 nonzero contexts = 10^6 reward draws
    env = hard_bandit(2, 4, 4, 0.05, 1.0, 0.1, BANDIT_SIGNS)
    rng = make_rng(31)
    reps = 125_000
    total = np.zeros((2, 4))
    for _ in range(reps):
        total += sample_history_rng(env, rng).rewards[:, :4]
    means = total / reps
    target = env.reward_mean[:, :4]
    se = np.sqrt(1.0 - target**2) / math.sqrt(reps)
    bandit_z = float(np.max(np.abs(means - target) / se))
    if bandit_z > 4:
        failures.append("bandit")

    # episodic: 10^6 episodes, 250000 from each level-h state
    env = hard_episodic(4, 4, 6, 2, 250_000, 0.25, 1.0, 0.2, [1, -1, 1, 1])
    h = sample_history(env, 5)
    returns = h.rewards.sum(axis=1)
    exact_pm = bool(np.all(np.abs(returns) == 4.0))
    z = []
    for j in range(4):
        r = returns[h.states[:, 0] == j]
        z.append(abs(r.mean() - env.reward_mean[j]) / (r.std(ddof=1) / math.sqrt(r.size)))
    episodic_z = float(max(z))
    if episodic_z > 4 or not exact_pm:
        failures.append("episodic")

    # non-episodic: analytic consistency, then 10^5 truncated rollouts per state
    identity_err, rollout_z = 0.0, 0.0
    for gamma in (0.5, 0.9):
        env = hard_nonepisodic(3, 3, gamma, 0.5, 0.3, 1.0, 0.0035 * (1 - gamma) / 0.5, [1, -1, 1])
        v, p, S = env.state_values(), env.jump_prob, 3
        for j in range(S):
            others = (v.sum() - v[j]) / (S - 1)
            rhs = (1 - p) * env.reward_mean[j, j] + p * env.reward_mean[j, (j + 1) % S] \
                + gamma * ((1 - p) * v[j] + p * others)
            identity_err = max(identity_err, abs(v[j] - rhs))
        T = math.ceil(math.log(1e-6) / math.log(gamma))
        starts = np.repeat(np.arange(S), 100_000)
        _, rewards = rollout_chain(env, starts, T, make_rng(int(gamma * 100)))
        disc = rewards @ gamma ** np.arange(T)
        for j in range(S):
            d = disc[starts == j]
            rollout_z = max(rollout_z, abs(d.mean() - v[j]) / (d.std(ddof=1) / math.sqrt(d.size)))
    if identity_err > 1e-10 or rollout_z > 5:
        failures.append("nonepisodic")
    elapsed = time.perf_counter() - start
    check(3, not failures and elapsed < 120,
          f"bandit max z {bandit_z:.2f} (<=4), episodic max z {episodic_z:.2f} (<=4), "
          f"consistency err {identity_err:.1e} (<=1e-10), rollout max z {rollout_z:.2f} (<=5), {elapsed:.0f}s")


def test_criterion_04_lse_scaling():
    start = time.perf_counter()
    base = Scenario(bandit_env_dict(), "LSE", 1)
    m_rep = sweep(base, "m", POW2_M, trials=10_000, base_seed=41)
    n_rep = sweep(base.with_value("m", 4), "n", [8, 16, 32, 64, 128, 256, 512], trials=10_000, base_seed=42)
    elapsed = time.perf_counter() - start
    worst = max(p.mse_mean / p.theory_bound for rep in (m_rep, n_rep) for p in rep.points)
    passed = (abs(m_rep.fitted_slope + 1) <= 0.15 and abs(n_rep.fitted_slope + 1) <= 0.15
              and worst <= 10 and elapsed < 600)
    check(4, passed, f"slope in m {m_rep.fitted_slope:.3f}, slope in n {n_rep.fitted_slope:.3f} (-1 +- 0.15), "
                     f"max MSE/bound {worst:.3f} (<=10), {elapsed:.0f}s")


def test_criterion_05_mc_lse_scaling():
    start = time.perf_counter()
    env = dict(constructor="hard_episodic", S_h=4, C=4, H=4, h=0, E=4, lambda_min=0.25, r_max=1.0, delta=0.05,
               v=[1, -1, 1, 1])
    base = Scenario(env, "MC_LSE", 1)
    m_rep = sweep(base, "m", POW2_M, trials=10_000, base_seed=51)
    e_rep = sweep(base.with_value("m", 4), "E", POW2_M, trials=10_000, base_seed=52)
    elapsed = time.perf_counter() - start
    worst = max(p.mse_mean / p.theory_bound for rep in (m_rep, e_rep) for p in rep.points)
    passed = (abs(m_rep.fitted_slope + 1) <= 0.15 and abs(e_rep.fitted_slope + 1) <= 0.15
              and worst <= 10 and elapsed < 600)
    check(5, passed, f"slope in m {m_rep.fitted_slope:.3f}, slope in E {e_rep.fitted_slope:.3f} (-1 +- 0.15), "
                     f"max MSE/bound {worst:.3f} (<=10), {elapsed:.0f}s")


def test_criterion_06_quantization_threshold():
    start = time.perf_counter()
    env_d = bandit_env_dict()
    m, trials, seed = 4, 10_000, 61
    lossless_sc = Scenario(env_d, "LSE", m)
    env = lossless_sc.build_env()
    lossless = estimate_risk(env, "LSE", m, trials=trials, base_seed=seed)
    dim = env.dim
    floor = math.sqrt(lossless.mse_mean / dim)

    # coarse grid: theta (near 0) sits a quarter step past a grid point
    P = 10 * floor
    coarse = QuantizerConfig(-1.25 * P, 1.75 * P + 1e-9, P)
    hi = estimate_risk(env, "LSE", m, qcfg=coarse, trials=trials, base_seed=seed)
    grid = dim * (P / 2) ** 2
    lo_edge, hi_edge = 0.05 * grid + lossless.mse_mean, 1.0 * grid + lossless.mse_mean
    coarse_ok = lo_edge <= hi.mse_mean <= hi_edge and hi.clamp_count == 0

    fine = QuantizerConfig(-env.r_max * 4, env.r_max * 4, floor / 10)
    lo = estimate_risk(env, "LSE", m, qcfg=fine, trials=trials, base_seed=seed)
    fine_ok = abs(lo.mse_mean - lossless.mse_mean) <= 2 * lossless.mse_stderr and lo.clamp_count == 0
    elapsed = time.perf_counter() - start
    check(6, coarse_ok and fine_ok and elapsed < 300,
          f"floor {floor:.3f}; P=10x: MSE {hi.mse_mean:.2f} in [{lo_edge:.2f}, {hi_edge:.2f}]; "
          f"P=x/10: |MSE - lossless| {abs(lo.mse_mean - lossless.mse_mean):.4f} <= 2 SE {2 * lossless.mse_stderr:.4f}; "
          f"{elapsed:.0f}s")


def test_criterion_07_td_plateau():
    start = time.perf_counter()
    env_d = dict(constructor="adversarial_td_bias_env", theta_hat_0=[1.0, 2.0, 0.0, 0.0], S=4, gamma=0.95,
                 r_max=1.0, lambda_min=0.25, norm="max")
    base = Scenario(env_d, "TD", 1, size=6400)
    env = base.build_env()
    params = bound_params(env, "TD", 1, 6400)
    variance_term = env.r_max**2 / (env.n_states * env.pi_min * env.lambda_min * 1)
    ratio = params["bias_sq"] / variance_term

    biased = sweep(base, "m", POW2_M, trials=200, base_seed=71)
    unbiased = sweep(Scenario(env_d, "TD", 1, size=6400, theta_0=tuple(env.true_theta.tolist())),
                     "m", POW2_M, trials=200, base_seed=72)
    n_values = [6400, 25600, 102400, 409600]
    n_rep = sweep(base, "n", n_values, trials=100, base_seed=73)
    mses = [p.mse_mean for p in n_rep.points]
    monotone = all(b < a for a, b in zip(mses, mses[1:]))
    ratios = [a / b for a, b in zip(mses, mses[1:])]
    elapsed = time.perf_counter() - start
    passed = (ratio >= 100 and abs(biased.fitted_slope) <= 0.1 and abs(unbiased.fitted_slope + 1) <= 0.2
              and monotone and all(2 <= r <= 8 for r in ratios) and elapsed < 900)
    check(7, passed, f"bias^2/variance {ratio:.0f} (>=100), biased slope {biased.fitted_slope:.3f} (0 +- 0.1), "
                     f"unbiased slope {unbiased.fitted_slope:.3f} (-1 +- 0.2), n->4n ratios "
                     f"{', '.join(f'{r:.2f}' for r in ratios)} (in [2, 8]), {elapsed:.0f}s")


def test_criterion_08_td_schedule_and_gradient():
    start = time.perf_counter()
    gamma, omega = 0.9, 0.37
    sched = TdSchedule.from_omega(omega, gamma)
    schedule_err = 0.0
    for t in (1, 10, 1000):
        g, w = Fraction(gamma), Fraction(omega)
        exact = (2 / ((1 - g) * w)) / (16 / ((1 - g) ** 2 * w) + Fraction(t) / w)
        schedule_err = max(schedule_err, abs(float(sched.alpha(t)) - float(exact)) / float(exact))

    rng = np.random.default_rng(8)
    S, C = 5, 3
    X = rng.normal(size=(S, C))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    P = rng.dirichlet(np.ones(S), size=S)
    theta = np.array([0.15, -0.1, 0.05])
    env = generic_nonepisodic(X, P, theta, 0.7, 1.0)
    w = weighted_gram_min_eigenvalue(env.features, env.stationary_dist)
    worst_margin = math.inf
    for k in range(20):
        theta_t = theta + rng.normal(size=C)
        h = sample_history(env, 1000 + k, 100_000)
        c, c_next = X[h.states], X[h.next_states]
        td_err = h.rewards + env.gamma * c_next @ theta_t - c @ theta_t
        proj = td_err * (c @ (theta - theta_t))
        lhs = proj.mean()
        se = proj.std(ddof=1) / math.sqrt(proj.size)
        rhs = w * (1 - env.gamma) * np.sum((theta - theta_t) ** 2)
        worst_margin = min(worst_margin, (lhs - rhs + 4 * se) / se)
    elapsed = time.perf_counter() - start
    check(8, schedule_err <= 1e-12 and worst_margin >= 0 and elapsed < 120,
          f"alpha_t relative error {schedule_err:.1e} (<=1e-12), min (lhs - bound)/SE + 4 = {worst_margin:.1f} "
          f"(>=0) over 20 theta_t, omega {w:.3f}, {elapsed:.0f}s")


def test_criterion_09_determinism(tmp_path):
    start = time.perf_counter()
    docs = {
        "lse": {
            "env": bandit_env_dict(),
            "algorithm": {"name": "LSE"},
            "comm": {"B": 6},
            "run": {"m": 4, "trials": 1500, "base_seed": 91, "sweep": {"axis": "m", "values": [2, 4, 8]}},
        },
        "td": {
            "env": {"constructor": "hard_nonepisodic", "S": 3, "C": 3, "gamma": 0.8, "p": 0.3,
                    "lambda_min": 0.3, "r_max": 1.0, "delta": 0.001, "v": [1, -1, 1]},
            "algorithm": {"name": "TD"},
            "run": {"m": 8, "n": 2000, "trials": 300, "base_seed": 92},
        },
    }
    outputs = {}
    for name, doc in docs.items():
        for threads in (1, 8, 1, 8):
            key = (name, threads, len([k for k in outputs if k[:2] == (name, threads)]))
            doc = dict(doc, output={"csv": str(tmp_path / f"{name}_{threads}_{key[2]}.csv")})
            path = tmp_path / f"{name}.json"
            path.write_text(json.dumps(doc))
            assert main(["run", "--threads", str(threads), "--config", str(path)]) == 0
            outputs[key] = (tmp_path / f"{name}_{threads}_{key[2]}.csv").read_bytes()
    identical = all(len({v for k, v in outputs.items() if k[0] == name}) == 1 for name in docs)
    elapsed = time.perf_counter() - start
    check(9, identical and elapsed < 60,
          f"LSE sweep and TD run, 1 vs 8 threads, two runs each: byte-identical CSV {identical}, {elapsed:.0f}s")


def test_criterion_10_budget_frontier():
    start = time.perf_counter()
    budgets = [1, 2, 3, 4, 5, 6, 7, 8, 10, 12]
    small = budget_frontier(Scenario(bandit_env_dict(8), "LSE", 2), budgets, trials=2000, base_seed=101)
    large = budget_frontier(Scenario(bandit_env_dict(32), "LSE", 8), budgets, trials=2000, base_seed=102)
    elapsed = time.perf_counter() - start
    passed = small.knee is not None and large.knee is not None and large.knee >= small.knee and elapsed < 600
    check(10, passed, f"knee at mn=16: {small.knee} bits, at mn=256: {large.knee} bits (nondecreasing), "
                      f"{elapsed:.0f}s")
