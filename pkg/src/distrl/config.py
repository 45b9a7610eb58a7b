"""Experiment configuration: JSON documents parsed into a validated ``ExperimentConfig``.

Schema (all blocks are JSON objects)::

    env        {"constructor": <name>, ...constructor arguments...}
               a sign vector may be given as "v": [...] or "v_seed": <int>
    algorithm  {"name": "LSE" | "MC_LSE" | "TD", "theta_0": [...] (TD), "omega": <float> (TD)}
    comm       {"v_min": <float>, "v_max": <float>, "P": <float>} or with "B" instead of "P";
               omit the block for lossless transmission
    run        {"m": <int>, "n": <int> (TD transitions), "E": <int> (MC_LSE episodes per state),
                "trials": <int>, "base_seed": <int>,
                "sweep": {"axis": <m|n|E|B|P|bias>, "values": [...]}  or  "budgets": [...]}
    output     {"csv": <path>, "report": <path>}
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

from .algos import EXPECTED_KIND, Algorithm
from .envs import CONSTRUCTORS, env_from_dict, random_signs
from .errors import ConfigSyntaxError, ConfigValidationError, DistRLError
from .risk import AXES, MIN_REPORT_TRIALS, Scenario

DEFAULT_TRIALS = 1000
SIGN_LENGTH = {
    "hard_bandit": lambda p: p.get("A", 1) * p.get("C", 1),
    "hard_episodic": lambda p: p.get("C", 1),
    "hard_nonepisodic": lambda p: p.get("C", 1),
}
BLOCKS = ("env", "algorithm", "comm", "run", "output")


@dataclass(frozen=True)
class ExperimentConfig:
    env: dict
    algorithm: str
    m: int
    trials: int = DEFAULT_TRIALS
    base_seed: int = 0
    size: int | None = None
    theta_0: tuple | None = None
    omega: float | None = None
    lossless: bool = True
    v_min: float | None = None
    v_max: float | None = None
    P: float | None = None
    B: float | None = None
    sweep_axis: str | None = None
    sweep_values: tuple | None = None
    budgets: tuple | None = None
    csv_path: str | None = None
    report_path: str | None = None

    @property
    def mode(self) -> str:
        if self.sweep_axis is not None:
            return "sweep"
        if self.budgets is not None:
            return "frontier"
        return "single"

    def scenario(self) -> Scenario:
        return Scenario(
            env=self.env,
            algorithm=Algorithm.parse(self.algorithm),
            m=self.m,
            size=self.size,
            v_min=self.v_min,
            v_max=self.v_max,
            precision=self.P,
            bits=self.B,
            theta_0=self.theta_0,
            omega=self.omega,
        )

    def to_dict(self) -> dict:
        """The resolved document; parsing it again gives an equal config."""
        algorithm = {"name": self.algorithm}
        if self.theta_0 is not None:
            algorithm["theta_0"] = list(self.theta_0)
        if self.omega is not None:
            algorithm["omega"] = self.omega
        doc = {"env": dict(self.env), "algorithm": algorithm}
        if not self.lossless:
            comm = {"v_min": self.v_min, "v_max": self.v_max}
            comm["P" if self.P is not None else "B"] = self.P if self.P is not None else self.B
            doc["comm"] = comm
        run = {"m": self.m, "trials": self.trials, "base_seed": self.base_seed}
        if self.size is not None:
            run["E" if self.algorithm == Algorithm.MC_LSE.value else "n"] = self.size
        if self.sweep_axis is not None:
            run["sweep"] = {"axis": self.sweep_axis, "values": list(self.sweep_values)}
        if self.budgets is not None:
            run["budgets"] = list(self.budgets)
        doc["run"] = run
        output = {k: v for k, v in (("csv", self.csv_path), ("report", self.report_path)) if v is not None}
        if output:
            doc["output"] = output
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


class _Errors:
    def __init__(self):
        self.items: list[tuple[str, str]] = []

    def add(self, path: str, msg: str):
        self.items.append((path, msg))


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _is_num(x) -> bool:
    return (_is_int(x) or isinstance(x, float)) and math.isfinite(x)


def _get_int(block: dict, key: str, path: str, errs: _Errors, minimum: int, default=None, required=False):
    if key not in block:
        if required:
            errs.add(f"{path}.{key}", "required")
        return default
    value = block[key]
    if not _is_int(value) or value < minimum:
        errs.add(f"{path}.{key}", f"must be an integer >= {minimum}, got {value!r}")
        return default
    return value


def _get_num(block: dict, key: str, path: str, errs: _Errors):
    if key not in block or block[key] is None:
        return None
    value = block[key]
    if not _is_num(value):
        errs.add(f"{path}.{key}", f"must be a finite number, got {value!r}")
        return None
    return float(value)


def _increasing(values, path: str, errs: _Errors, min_len: int = 3):
    if not isinstance(values, list) or not all(_is_num(v) for v in values):
        errs.add(path, "must be a list of numbers")
        return None
    if len(values) < min_len:
        errs.add(path, f"needs at least {min_len} values")
        return None
    if any(b <= a for a, b in zip(values, values[1:])):
        errs.add(path, "values must be strictly increasing")
        return None
    if values[0] <= 0:
        errs.add(path, "values must be positive")
        return None
    return tuple(values)


def _load(text: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigSyntaxError(exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(doc, dict):
        raise ConfigSyntaxError("top level must be an object", 1, 1)
    return doc


def parse_config(text: str) -> ExperimentConfig:
    """Parse and fully validate a config document, reporting every problem found."""
    doc = _load(text)
    errs = _Errors()
    for key in doc:
        if key not in BLOCKS:
            errs.add(key, "unknown block")
    blocks = {}
    for name in BLOCKS:
        block = doc.get(name, {})
        if not isinstance(block, dict):
            errs.add(name, "must be an object")
            block = {}
        blocks[name] = block

    # algorithm
    alg_block = blocks["algorithm"]
    algorithm = None
    if "name" not in alg_block:
        errs.add("algorithm.name", "required")
    else:
        try:
            algorithm = Algorithm.parse(alg_block["name"])
        except DistRLError as exc:
            errs.add("algorithm.name", str(exc))
    theta_0 = alg_block.get("theta_0")
    if theta_0 is not None:
        if not isinstance(theta_0, list) or not all(_is_num(t) for t in theta_0):
            errs.add("algorithm.theta_0", "must be a list of numbers")
            theta_0 = None
        else:
            theta_0 = tuple(float(t) for t in theta_0)
    omega = _get_num(alg_block, "omega", "algorithm", errs)
    if omega is not None and omega <= 0:
        errs.add("algorithm.omega", "must be positive")
    if algorithm is not None and algorithm is not Algorithm.TD:
        for key in ("theta_0", "omega"):
            if key in alg_block:
                errs.add(f"algorithm.{key}", "only meaningful for TD")

    # env
    env_block = dict(blocks["env"])
    env = None
    name = env_block.get("constructor")
    if name is None:
        errs.add("env.constructor", "required")
    elif name not in CONSTRUCTORS:
        errs.add("env.constructor", f"unknown constructor {name!r}; expected one of {', '.join(CONSTRUCTORS)}")
    else:
        if "v_seed" in env_block:
            seed = env_block.pop("v_seed")
            if "v" in env_block:
                errs.add("env.v_seed", "give either v or v_seed, not both")
            elif not _is_int(seed) or seed < 0 or name not in SIGN_LENGTH:
                errs.add("env.v_seed", "must be a nonnegative integer for a hard instance")
            else:
                env_block["v"] = random_signs(SIGN_LENGTH[name](env_block), seed)
        try:
            env = env_from_dict(env_block)
        except TypeError as exc:
            errs.add("env", f"bad arguments for {name}: {exc}")
        except (DistRLError, ValueError) as exc:
            errs.add("env", f"{type(exc).__name__}: {exc}")
    if env is not None:
        env_block = {"constructor": name, **env.params}
    if env is not None and algorithm is not None and env.kind is not EXPECTED_KIND[algorithm]:
        errs.add("algorithm.name", f"{algorithm.value} needs a {EXPECTED_KIND[algorithm].value} environment")

    # run
    run = blocks["run"]
    m = _get_int(run, "m", "run", errs, 1, required=True)
    trials = _get_int(run, "trials", "run", errs, MIN_REPORT_TRIALS, default=DEFAULT_TRIALS)
    base_seed = _get_int(run, "base_seed", "run", errs, 0, default=0)
    if _is_int(base_seed) and base_seed >= 2**64:
        errs.add("run.base_seed", "must fit in 64 bits")
    size = None
    if algorithm is Algorithm.TD:
        size = _get_int(run, "n", "run", errs, 1, required=True)
    elif algorithm is Algorithm.MC_LSE:
        size = _get_int(run, "E", "run", errs, 1)
        if size is not None and env is not None:
            env_block["E"] = size
            size = None
    if algorithm is not None:
        allowed = {Algorithm.TD: "n", Algorithm.MC_LSE: "E"}.get(algorithm)
        for key in ("n", "E"):
            if key in run and key != allowed:
                errs.add(f"run.{key}", f"not a run parameter for {algorithm.value}")
    sweep_axis = sweep_values = budgets = None
    if "sweep" in run and "budgets" in run:
        errs.add("run", "give either sweep or budgets, not both")
    if "sweep" in run:
        sw = run["sweep"]
        if not isinstance(sw, dict):
            errs.add("run.sweep", "must be an object with axis and values")
        else:
            sweep_axis = sw.get("axis")
            if sweep_axis not in AXES:
                errs.add("run.sweep.axis", f"must be one of {', '.join(AXES)}")
                sweep_axis = None
            sweep_values = _increasing(sw.get("values"), "run.sweep.values", errs)
            if sweep_axis is not None and algorithm is not None:
                valid = {"n": (Algorithm.LSE, Algorithm.TD), "E": (Algorithm.MC_LSE,), "bias": (Algorithm.TD,)}
                if algorithm not in valid.get(sweep_axis, tuple(Algorithm)):
                    errs.add("run.sweep.axis", f"axis {sweep_axis!r} does not apply to {algorithm.value}")
            if sweep_axis in ("m", "n", "E") and sweep_values is not None:
                if not all(float(v).is_integer() for v in sweep_values):
                    errs.add("run.sweep.values", f"axis {sweep_axis!r} needs integer values")
                else:
                    sweep_values = tuple(int(v) for v in sweep_values)
    if "budgets" in run:
        budgets = _increasing(run["budgets"], "run.budgets", errs)

    # comm
    comm = blocks["comm"]
    lossless = "comm" not in doc
    v_min = _get_num(comm, "v_min", "comm", errs)
    v_max = _get_num(comm, "v_max", "comm", errs)
    P = _get_num(comm, "P", "comm", errs)
    B = _get_num(comm, "B", "comm", errs)
    if not lossless:
        if ("P" in comm) == ("B" in comm):
            errs.add("comm", "exactly one of P, B must be given")
        if env is not None:
            span = env.r_max * env.features.cols
            v_min = -span if v_min is None else v_min
            v_max = span if v_max is None else v_max
        if v_min is not None and v_max is not None and not v_max > v_min:
            errs.add("comm.v_max", "must exceed v_min")
        if P is not None and not P > 0:
            errs.add("comm.P", "must be positive")
        if P is not None and v_min is not None and v_max is not None and P > v_max - v_min:
            errs.add("comm.P", "must not exceed v_max - v_min")
        if B is not None and not B > 0:
            errs.add("comm.B", "BudgetTooSmall: a budget of at most 0 bits gives fewer than one level")
    elif budgets is not None or sweep_axis in ("B", "P"):
        if env is not None:
            span = env.r_max * env.features.cols
            v_min, v_max = -span, span

    # td theta_0 dimension
    if theta_0 is not None and env is not None and len(theta_0) != env.dim:
        errs.add("algorithm.theta_0", f"needs {env.dim} entries")

    # output
    out = blocks["output"]
    paths = {}
    for key in ("csv", "report"):
        value = out.get(key)
        if value is not None and not isinstance(value, str):
            errs.add(f"output.{key}", "must be a path string")
            value = None
        paths[key] = value
    for key in out:
        if key not in ("csv", "report"):
            errs.add(f"output.{key}", "unknown field")

    if errs.items:
        raise ConfigValidationError(errs.items)
    return ExperimentConfig(
        env=env_block,
        algorithm=algorithm.value,
        m=m,
        trials=trials,
        base_seed=base_seed,
        size=size,
        theta_0=theta_0,
        omega=omega,
        lossless=lossless,
        v_min=v_min,
        v_max=v_max,
        P=P if not lossless else None,
        B=B if not lossless else None,
        sweep_axis=sweep_axis,
        sweep_values=sweep_values,
        budgets=budgets,
        csv_path=paths["csv"],
        report_path=paths["report"],
    )


def config_as_dict(cfg: ExperimentConfig) -> dict:
    return asdict(cfg)
