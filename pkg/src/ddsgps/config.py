"""
Run configuration: a TOML document with the tables ``problem``, ``schedule``,
``stepsize``, ``outputs`` and ``tolerances`` plus the scalars ``iterations``
and ``mu0``.

Example::

    iterations = 1500
    mu0 = "zero"
    problem = "ieee57"

    [schedule]
    kind = "static"

    [stepsize]
    kind = "inverse-sqrt"
    c = 2.0
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .benchmarks import BUILTINS
from .errors import ConfigError
from .graph import SCHEDULE_KINDS, GraphSchedule
from .problem import AgentProblem, Box, DiagonalQuadratic, ProblemInstance
from .pushsum import STEPSIZE_KINDS, StepsizeSchedule

TOP_LEVEL_KEYS = ("problem", "schedule", "stepsize", "iterations", "mu0", "outputs", "tolerances")
AGENT_KEYS = ("a", "b", "c", "lo", "hi", "A", "offset")


@dataclass(frozen=True)
class ScheduleConfig:
    kind: str = "static"
    m: int | None = None
    B: int | None = None
    seed: int = 0
    edges: tuple[tuple[int, int], ...] | None = None
    edge_prob: float = 0.1


@dataclass(frozen=True)
class StepsizeConfig:
    kind: str = "inverse-sqrt"
    c: float = 2.0
    table: tuple[float, ...] | None = None


@dataclass(frozen=True)
class OutputConfig:
    csv: str = "trace.csv"
    summary: str = "summary.json"


@dataclass(frozen=True)
class ToleranceConfig:
    consensus: float | None = None
    violation: float | None = None

    def as_dict(self) -> dict:
        return {k: v for k, v in (("consensus", self.consensus), ("violation", self.violation))
                if v is not None}


@dataclass(frozen=True)
class RunConfig:
    problem: str | dict
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    stepsize: StepsizeConfig = field(default_factory=StepsizeConfig)
    iterations: int = 1500
    mu0: str | tuple = "zero"
    outputs: OutputConfig = field(default_factory=OutputConfig)
    tolerances: ToleranceConfig = field(default_factory=ToleranceConfig)

    def build_problem(self) -> ProblemInstance:
        return _build_problem(self.problem)

    def build_schedule(self) -> GraphSchedule:
        s = self.schedule
        edges = None if s.edges is None else frozenset(s.edges)
        return GraphSchedule(s.kind, s.m, s.B, s.seed, edges, s.edge_prob)

    def build_stepsize(self) -> StepsizeSchedule:
        s = self.stepsize
        return StepsizeSchedule(s.kind, s.c, s.table)

    def mu0_vectors(self):
        return None if self.mu0 == "zero" else [list(v) for v in self.mu0]

    def to_dict(self) -> dict:
        """Canonical plain-data form (defaults filled in, ``None`` omitted)."""
        out: dict = {"iterations": self.iterations}
        out["mu0"] = self.mu0 if self.mu0 == "zero" else [list(v) for v in self.mu0]
        out["problem"] = self.problem if isinstance(self.problem, str) else _copy_problem(self.problem)
        s = self.schedule
        sched = {"kind": s.kind, "m": s.m, "B": s.B, "seed": s.seed}
        if s.edges is not None:
            sched["edges"] = [list(e) for e in s.edges]
        if s.kind == "random-window":
            sched["edge_prob"] = s.edge_prob
        out["schedule"] = sched
        step = {"kind": self.stepsize.kind}
        if self.stepsize.kind == "table":
            step["table"] = list(self.stepsize.table)
        else:
            step["c"] = self.stepsize.c
        out["stepsize"] = step
        out["outputs"] = {"csv": self.outputs.csv, "summary": self.outputs.summary}
        tol = self.tolerances.as_dict()
        if tol:
            out["tolerances"] = tol
        return out


def _copy_problem(problem: dict) -> dict:
    out = {}
    if "coupling_dim" in problem:
        out["coupling_dim"] = problem["coupling_dim"]
    out["agents"] = [{k: agent[k] for k in AGENT_KEYS if k in agent} for agent in problem["agents"]]
    return out


def _build_problem(problem) -> ProblemInstance:
    if isinstance(problem, str):
        if problem not in BUILTINS:
            raise ConfigError(f"problem: unknown builtin {problem!r} (known: {', '.join(BUILTINS)})")
        return BUILTINS[problem]()
    agents = []
    for i, ag in enumerate(problem["agents"]):
        try:
            agents.append(AgentProblem(
                DiagonalQuadratic(ag["a"], ag["b"], ag.get("c", 0.0)),
                Box(ag["lo"], ag["hi"]),
                ag["A"], ag["offset"],
            ))
        except ConfigError as exc:
            raise ConfigError(f"problem.agents[{i}]: {exc}") from None
    try:
        return ProblemInstance(tuple(agents), problem.get("coupling_dim", -1))
    except ConfigError as exc:
        raise ConfigError(f"problem: {exc}") from None


def _table(raw: dict, key: str) -> dict:
    val = raw.get(key, {})
    if not isinstance(val, dict):
        raise ConfigError(f"{key}: expected a table")
    return val


def _check_keys(table: dict, allowed, where: str) -> None:
    extra = sorted(set(table) - set(allowed))
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(extra)}")


def _int(value, name: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{name}: expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{name}: must be >= {minimum}, got {value}")
    return value


def _float(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name}: expected a number, got {value!r}")
    return float(value)


def config_from_dict(raw: dict) -> RunConfig:
    """Validate plain data (as parsed from TOML) into a :class:`RunConfig`."""
    _check_keys(raw, TOP_LEVEL_KEYS, "config")
    if "problem" not in raw:
        raise ConfigError("problem: missing (a builtin name or an inline table)")
    problem = raw["problem"]
    if isinstance(problem, dict):
        _check_keys(problem, ("agents", "coupling_dim"), "problem")
        if not isinstance(problem.get("agents"), list) or not problem["agents"]:
            raise ConfigError("problem.agents: expected a non-empty array of tables")
        for i, ag in enumerate(problem["agents"]):
            _check_keys(ag, AGENT_KEYS, f"problem.agents[{i}]")
            missing = [k for k in AGENT_KEYS if k not in ag and k != "c"]
            if missing:
                raise ConfigError(f"problem.agents[{i}]: missing {', '.join(missing)}")
    elif not isinstance(problem, str):
        raise ConfigError("problem: expected a builtin name or a table")
    inst = _build_problem(problem)

    s = _table(raw, "schedule")
    _check_keys(s, ("kind", "m", "B", "seed", "edges", "edge_prob"), "schedule")
    kind = s.get("kind", "static")
    if kind not in SCHEDULE_KINDS:
        raise ConfigError(f"schedule.kind: expected one of {SCHEDULE_KINDS}, got {kind!r}")
    m = _int(s.get("m", inst.m), "schedule.m", 1)
    if m != inst.m:
        raise ConfigError(f"schedule.m: {m} does not match the {inst.m} agents of the problem")
    B = _int(s.get("B", 1 if kind == "static" else m), "schedule.B", 1)
    seed = _int(s.get("seed", 0), "schedule.seed", 0)
    edges = s.get("edges")
    if edges is not None:
        if kind != "static":
            raise ConfigError("schedule.edges: only allowed with kind = 'static'")
        try:
            edges = tuple(sorted((int(j), int(i)) for j, i in edges))
        except (TypeError, ValueError):
            raise ConfigError("schedule.edges: expected a list of [sender, receiver] pairs") from None
    edge_prob = _float(s.get("edge_prob", 0.1), "schedule.edge_prob")
    schedule = ScheduleConfig(kind, m, B, seed, edges, edge_prob)

    st = _table(raw, "stepsize")
    _check_keys(st, ("kind", "c", "table"), "stepsize")
    skind = st.get("kind", "inverse-sqrt")
    if skind not in STEPSIZE_KINDS:
        raise ConfigError(f"stepsize.kind: expected one of {STEPSIZE_KINDS}, got {skind!r}")
    c = _float(st.get("c", 2.0), "stepsize.c")
    table = st.get("table")
    if table is not None:
        table = tuple(_float(v, "stepsize.table") for v in table)
    stepsize = StepsizeConfig(skind, c, table)

    iterations = _int(raw.get("iterations", 1500), "iterations", 1)
    if skind == "table" and table is not None and len(table) < iterations:
        raise ConfigError(f"stepsize.table: {len(table)} entries for {iterations} iterations")

    mu0 = raw.get("mu0", "zero")
    if mu0 != "zero":
        if not isinstance(mu0, list) or len(mu0) != inst.m:
            raise ConfigError(f"mu0: expected 'zero' or {inst.m} vectors of length {inst.p}")
        vecs = []
        for i, v in enumerate(mu0):
            v = v if isinstance(v, list) else [v]
            if len(v) != inst.p:
                raise ConfigError(f"mu0[{i}]: expected length {inst.p}")
            vecs.append(tuple(_float(x, f"mu0[{i}]") for x in v))
        mu0 = tuple(vecs)

    o = _table(raw, "outputs")
    _check_keys(o, ("csv", "summary"), "outputs")
    outputs = OutputConfig(str(o.get("csv", "trace.csv")), str(o.get("summary", "summary.json")))

    tl = _table(raw, "tolerances")
    _check_keys(tl, ("consensus", "violation"), "tolerances")
    tolerances = ToleranceConfig(
        *(None if tl.get(k) is None else _float(tl[k], f"tolerances.{k}")
          for k in ("consensus", "violation"))
    )

    cfg = RunConfig(problem, schedule, stepsize, iterations, mu0, outputs, tolerances)
    # surface constructor-level validation (e.g. edge ranges) as config errors
    cfg.build_schedule()
    cfg.build_stepsize() if skind != "constant" else None
    return cfg


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: parse error: {exc}") from None
    return config_from_dict(raw)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def dump_config(cfg: RunConfig) -> str:
    """Canonical TOML text; ``parse_config(dump_config(c)) == c``."""
    return tomli_w.dumps(cfg.to_dict())


def with_overrides(cfg: RunConfig, *, iterations=None, seed=None, c=None, out=None) -> RunConfig:
    if iterations is not None:
        cfg = replace(cfg, iterations=iterations)
    if seed is not None:
        cfg = replace(cfg, schedule=replace(cfg.schedule, seed=seed))
    if c is not None:
        cfg = replace(cfg, stepsize=replace(cfg.stepsize, c=c))
    if out is not None:
        cfg = replace(cfg, outputs=replace(cfg.outputs, csv=str(out)))
    return config_from_dict(cfg.to_dict())
