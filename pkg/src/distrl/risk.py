"""Monte-Carlo risk measurement, parameter sweeps and log-log slope fits.

Every trial is a full distributed round with fresh histories. Trial ``t``
uses seed ``derive_seed(base_seed, t)`` and machine ``i`` inside it uses
``derive_seed(trial_seed, i)``, so results do not depend on how trials are
grouped or scheduled. Trials are processed in fixed-size chunks whose size
depends only on the scenario, never on the worker count.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .algos import (
    Algorithm,
    TdSchedule,
    bound_params,
    central_average,
    local_estimates,
    theoretical_bound,
    transmit,
)
from .envs import EnvironmentSpec, EnvKind, env_from_dict
from .errors import BadAxis, BadParams, MachineError
from .linalg import FeatureMatrix, least_squares
from .quantize import QuantizerConfig
from .seeding import derive_seed

AXES = ("m", "n", "E", "B", "P", "bias")
MIN_REPORT_TRIALS = 30
KNEE_RATIO = 1.2
CHUNK_ELEMENTS = 2_000_000  # reward entries held in memory per trial chunk
MAX_CHUNK_TRIALS = 256
CSV_HEADER = ["axis", "value", "mse_mean", "mse_stderr", "trials", "theory_bound"]


@dataclass(frozen=True)
class Scenario:
    """Everything needed to run one distributed experiment point.

    ``env`` is a constructor dict (``{"constructor": name, **params}``) so the
    ``n`` axis can rebuild bandit designs. Exactly one of ``precision`` and
    ``bits`` may be set; neither means lossless transmission.
    """

    env: dict
    algorithm: Algorithm
    m: int
    size: int | None = None
    v_min: float | None = None
    v_max: float | None = None
    precision: float | None = None
    bits: float | None = None
    theta_0: tuple | None = None
    omega: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm.parse(self.algorithm))
        if self.precision is not None and self.bits is not None:
            raise BadParams("exactly one of P, B may be given")
        if self.m < 1:
            raise BadParams("need at least one machine")

    def build_env(self) -> EnvironmentSpec:
        return env_from_dict(self.env)

    def quantizer(self, env: EnvironmentSpec | None = None) -> QuantizerConfig | None:
        if self.precision is None and self.bits is None:
            return None
        lo, hi = self.v_min, self.v_max
        if lo is None or hi is None:
            env = env or self.build_env()
            span = env.r_max * env.features.cols
            lo = -span if lo is None else lo
            hi = span if hi is None else hi
        if self.bits is not None:
            return QuantizerConfig.from_bits(lo, hi, self.bits)
        return QuantizerConfig(lo, hi, self.precision)

    def with_value(self, axis: str, value) -> "Scenario":
        """The scenario with one swept parameter replaced."""
        if axis == "m":
            return dataclasses.replace(self, m=int(value))
        if axis == "n":
            if self.algorithm is Algorithm.LSE:
                return dataclasses.replace(self, env={**self.env, "n": int(value)})
            if self.algorithm is Algorithm.TD:
                return dataclasses.replace(self, size=int(value))
            raise BadAxis("axis 'n' applies to LSE and TD; use 'E' for MC_LSE")
        if axis == "E":
            if self.algorithm is not Algorithm.MC_LSE:
                raise BadAxis("axis 'E' applies to MC_LSE only")
            return dataclasses.replace(self, size=int(value), env={**self.env, "E": int(value)})
        if axis == "B":
            return dataclasses.replace(self, bits=float(value), precision=None)
        if axis == "P":
            return dataclasses.replace(self, precision=float(value), bits=None)
        if axis == "bias":
            if self.algorithm is not Algorithm.TD:
                raise BadAxis("axis 'bias' applies to TD only")
            env = self.build_env()
            direction = env.initial_theta - env.true_theta if env.initial_theta is not None else None
            if direction is None or not np.any(direction):
                direction = np.eye(env.dim)[0]
            direction = direction / np.linalg.norm(direction)
            theta_0 = env.true_theta + float(value) * direction
            return dataclasses.replace(self, theta_0=tuple(theta_0.tolist()))
        raise BadAxis(f"unknown sweep axis {axis!r}; expected one of {', '.join(AXES)}")


@dataclass(frozen=True)
class RiskEstimate:
    mse_mean: float
    mse_stderr: float
    trials: int
    clamp_count: int = 0


@dataclass(frozen=True)
class RiskPoint:
    value: float
    mse_mean: float
    mse_stderr: float
    trials: int
    theory_bound: float


@dataclass(frozen=True)
class RiskReport:
    sweep_axis: str
    points: tuple[RiskPoint, ...]
    fitted_slope: float
    slope_stderr: float
    knee: float | None = None
    lossless_mse: float | None = None
    notes: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.sweep_axis not in AXES:
            raise BadAxis(f"unknown sweep axis {self.sweep_axis!r}")
        object.__setattr__(self, "points", tuple(self.points))
        for p in self.points:
            if p.trials < MIN_REPORT_TRIALS:
                raise BadParams(f"every report point needs at least {MIN_REPORT_TRIALS} trials, got {p.trials}")
            if p.mse_mean < 0 or p.mse_stderr < 0:
                raise BadParams("MSE and standard error must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "sweep_axis": self.sweep_axis,
            "points": [dataclasses.asdict(p) for p in self.points],
            "fitted_slope": _json_float(self.fitted_slope),
            "slope_stderr": _json_float(self.slope_stderr),
            "knee": self.knee,
            "lossless_mse": self.lossless_mse,
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RiskReport":
        return cls(
            d["sweep_axis"],
            tuple(RiskPoint(**p) for p in d["points"]),
            _from_json_float(d["fitted_slope"]),
            _from_json_float(d["slope_stderr"]),
            d.get("knee"),
            d.get("lossless_mse"),
            tuple(d.get("notes", ())),
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for p in self.points:
            w.writerow([self.sweep_axis, repr(p.value), repr(p.mse_mean), repr(p.mse_stderr), p.trials,
                        repr(p.theory_bound)])
        if self.lossless_mse is not None:
            buf.write(f"# lossless_mse={self.lossless_mse!r}\n")
        if self.knee is not None:
            buf.write(f"# knee={self.knee!r}\n")
        buf.write(f"# slope={self.fitted_slope!r} stderr={self.slope_stderr!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "RiskReport":
        lines = text.splitlines()
        comments = {}
        for ln in lines:
            if ln.startswith("#"):
                for item in ln[1:].split():
                    key, _, val = item.partition("=")
                    comments[key] = float(val)
        rows = list(csv.reader(ln for ln in lines if ln and not ln.startswith("#")))
        if not rows or rows[0] != CSV_HEADER:
            raise ValueError("not a risk report: unexpected CSV header")
        body = rows[1:]
        axis = body[0][0] if body else "m"
        points = tuple(RiskPoint(float(r[1]), float(r[2]), float(r[3]), int(r[4]), float(r[5])) for r in body)
        return cls(axis, points, comments.get("slope", math.nan), comments.get("stderr", math.nan),
                   comments.get("knee"), comments.get("lossless_mse"))


def _json_float(x):
    return None if x is None or not math.isfinite(x) else x


def _from_json_float(x):
    return math.nan if x is None else float(x)


# ---------------------------------------------------------------------------
# slope fitting

def fit_loglog_slope(x, y) -> tuple[float, float]:
    """OLS slope of ``log y`` on ``log x`` and its standard error.

    Returns ``(nan, nan)`` when some ``y`` is not positive.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size or x.size < 2:
        raise BadParams("need at least two matching points for a slope")
    if np.any(x <= 0):
        raise BadParams("axis values must be positive for a log-log fit")
    if np.any(y <= 0):
        return math.nan, math.nan
    design = np.column_stack([np.ones(x.size), np.log(x)])
    coef = least_squares(FeatureMatrix(design, normalized=False), np.log(y))
    if x.size == 2:
        return float(coef[1]), math.nan
    resid = np.log(y) - design @ coef
    s2 = resid @ resid / (x.size - 2)
    cov = s2 * np.linalg.inv(design.T @ design)
    return float(coef[1]), float(math.sqrt(max(cov[1, 1], 0.0)))


# ---------------------------------------------------------------------------
# risk estimation

def _elements_per_machine(env: EnvironmentSpec, algorithm: Algorithm, size) -> int:
    if algorithm is Algorithm.LSE:
        return env.n_arms * env.features.rows
    if algorithm is Algorithm.MC_LSE:
        E = env.episodes_per_state if size is None else size
        return env.n_states * E * max(env.steps_after_level, 1)
    return int(size or 1)


def trial_chunk_size(env: EnvironmentSpec, algorithm, m: int, size=None) -> int:
    """Trials processed together; a function of the scenario only."""
    per_trial = m * _elements_per_machine(env, Algorithm.parse(algorithm), size)
    return int(max(1, min(MAX_CHUNK_TRIALS, CHUNK_ELEMENTS // max(per_trial, 1))))


def trial_squared_errors(env: EnvironmentSpec, algorithm, m: int, trial_seeds, size=None,
                         qcfg: QuantizerConfig | None = None, theta_0=None,
                         schedule: TdSchedule | None = None) -> tuple[np.ndarray, int]:
    """Squared errors ``||theta_hat - theta||^2`` for a batch of trials, plus total clamps."""
    seeds, ids = [], []
    for ts in trial_seeds:
        for i in range(m):
            seeds.append(derive_seed(ts, i))
            ids.append(i)
    k = len(trial_seeds)
    local = local_estimates(env, algorithm, seeds, size, theta_0, schedule, machine_ids=ids)
    received, clamps = transmit(local, qcfg)
    final = central_average(received.reshape(k, m, env.dim))
    return np.sum((final - env.true_theta) ** 2, axis=1), clamps


def estimate_risk(env: EnvironmentSpec, algorithm, m: int, size=None, qcfg: QuantizerConfig | None = None,
                  trials: int = 1000, base_seed: int = 0, theta_0=None, schedule: TdSchedule | None = None,
                  threads: int = 1) -> RiskEstimate:
    """Mean squared error over ``trials`` independent distributed rounds and its standard error."""
    if trials < 2:
        raise BadParams("need at least two trials for a standard error")
    algorithm = Algorithm.parse(algorithm)
    if algorithm is Algorithm.TD and schedule is None:
        schedule = TdSchedule.from_env(env)
    chunk = trial_chunk_size(env, algorithm, m, size)
    trial_seeds = [derive_seed(base_seed, t) for t in range(trials)]
    batches = [trial_seeds[i : i + chunk] for i in range(0, trials, chunk)]

    def work(batch):
        return trial_squared_errors(env, algorithm, m, batch, size, qcfg, theta_0, schedule)

    try:
        if threads > 1 and len(batches) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(work, batches))
        else:
            results = [work(b) for b in batches]
    except MachineError:
        raise
    errors = np.concatenate([r[0] for r in results])
    clamps = sum(r[1] for r in results)
    mean = float(np.mean(errors))
    stderr = float(np.std(errors, ddof=1) / math.sqrt(trials))
    return RiskEstimate(mean, stderr, trials, clamps)


def scenario_risk(scenario: Scenario, trials: int, base_seed: int = 0, threads: int = 1,
                  env: EnvironmentSpec | None = None) -> tuple[RiskEstimate, float]:
    """Risk of a scenario together with its theoretical bound."""
    env = env or scenario.build_env()
    qcfg = scenario.quantizer(env)
    schedule = TdSchedule.from_env(env, scenario.omega) if scenario.algorithm is Algorithm.TD else None
    est = estimate_risk(env, scenario.algorithm, scenario.m, scenario.size, qcfg, trials, base_seed,
                        scenario.theta_0, schedule, threads)
    params = bound_params(env, scenario.algorithm, scenario.m, scenario.size, qcfg, scenario.theta_0)
    return est, theoretical_bound(scenario.algorithm, **params)


def _check_values(values, positive=True):
    values = [float(v) for v in values]
    if len(values) < 3:
        raise BadParams("a sweep needs at least three values")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise BadParams("sweep values must be strictly increasing")
    if positive and values[0] <= 0:
        raise BadParams("sweep values must be positive")
    return values


def sweep(base: Scenario, axis: str, values, trials: int, base_seed: int = 0, threads: int = 1) -> RiskReport:
    """One risk estimate per axis value, theoretical bounds attached, log-log slope fitted."""
    if axis not in AXES:
        raise BadAxis(f"unknown sweep axis {axis!r}; expected one of {', '.join(AXES)}")
    values = _check_values(values)
    points = []
    for v in values:
        sc = base.with_value(axis, v)
        est, bound = scenario_risk(sc, trials, base_seed, threads)
        points.append(RiskPoint(v, est.mse_mean, est.mse_stderr, est.trials, bound))
    slope, se = fit_loglog_slope(values, [p.mse_mean for p in points])
    return RiskReport(axis, tuple(points), slope, se)


def budget_frontier(base: Scenario, budgets, trials: int, base_seed: int = 0, threads: int = 1) -> RiskReport:
    """Risk against per-value bit budget; the knee is the smallest budget within 1.2x of lossless."""
    budgets = _check_values(budgets)
    env = base.build_env()
    lossless = dataclasses.replace(base, precision=None, bits=None)
    ref, _ = scenario_risk(lossless, trials, base_seed, threads, env)
    points = []
    for b in budgets:
        est, bound = scenario_risk(base.with_value("B", b), trials, base_seed, threads, env)
        points.append(RiskPoint(b, est.mse_mean, est.mse_stderr, est.trials, bound))
    knee = next((p.value for p in points if p.mse_mean <= KNEE_RATIO * ref.mse_mean), None)
    slope, se = fit_loglog_slope(budgets, [p.mse_mean for p in points])
    return RiskReport("B", tuple(points), slope, se, knee=knee, lossless_mse=ref.mse_mean)


def worst_case_risk(scenarios, trials: int, base_seed: int = 0, threads: int = 1) -> tuple[RiskEstimate, int]:
    """Largest measured risk over a grid of environments and the index that attains it.

    This approximates the supremum over all data-generating processes by a
    maximum over the supplied candidates (typically hard instances plus a few
    generic environments).
    """
    best, arg = None, -1
    for k, sc in enumerate(scenarios):
        est, _ = scenario_risk(sc, trials, base_seed, threads)
        if best is None or est.mse_mean > best.mse_mean:
            best, arg = est, k
    if best is None:
        raise BadParams("no scenarios given")
    return best, arg


__all__ = [
    "AXES",
    "RiskEstimate",
    "RiskPoint",
    "RiskReport",
    "Scenario",
    "budget_frontier",
    "estimate_risk",
    "fit_loglog_slope",
    "scenario_risk",
    "sweep",
    "trial_chunk_size",
    "trial_squared_errors",
    "worst_case_risk",
]
