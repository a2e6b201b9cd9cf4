"""JSON scenario files.

Top-level keys (all but ``grid``, ``barriers``, ``driver``, ``terminal`` optional)::

    grid       {"T": 1.0, "N": 10}
    barriers   {"lower": BarrierSpec, "upper": BarrierSpec}
    driver     {"kind": ..., "params": [...], "L1": opt, "L2": opt}
    terminal   {"kind": ..., "params": [...]}
    picard     {"alpha", "beta", "gamma1", "gamma2", "tol", "max_iter", "c_b", "warm_start"}
    seed       unsigned 64-bit integer (default 0)
    outputs    list of paths; the first is the default output directory
    esm_check  {"paths": 1000, "N": 64, "knot_every": 4, "scale": 1.0, "pair_scale": 0.2,
               "lipschitz_constant": 1.0}
    depend     {"eps": [...], "perturbation": TerminalSpec}
    local_time {"mesh": [...], "paths": 100, "start": opt}
    converge   {"N": [...]}

Schema problems raise ConfigError carrying the dotted field path (and the
line/column for JSON syntax errors).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .experiments import ScenarioSpec
from .grid import BarrierSpec
from .solver import DriverSpec, PicardConfig, TerminalSpec

U64_MAX = 2**64 - 1

_TOP_KEYS = {"grid", "barriers", "driver", "terminal", "picard", "seed", "outputs", "esm_check", "depend", "local_time", "converge"}
_PICARD_KEYS = {"alpha", "beta", "gamma1", "gamma2", "tol", "max_iter", "c_b", "warm_start"}


class ConfigError(ValueError):
    def __init__(self, path: str, msg: str):
        self.path = path
        super().__init__(f"{path}: {msg}" if path else msg)


@dataclass(frozen=True)
class EsmCheckConfig:
    paths: int = 1000
    N: int = 64
    knot_every: int = 4
    scale: float = 1.0
    pair_scale: float = 0.2
    lipschitz_constant: float = 1.0


@dataclass(frozen=True)
class DependConfig:
    eps: tuple = (0.2, 0.1, 0.05)
    perturbation: TerminalSpec = TerminalSpec("constant", (1.0,))


@dataclass(frozen=True)
class LocalTimeConfig:
    mesh: tuple = (256, 1024, 4096)
    paths: int = 100
    start: float | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    T: float
    N: int
    lower: BarrierSpec
    upper: BarrierSpec
    driver: DriverSpec
    terminal: TerminalSpec
    picard: PicardConfig = PicardConfig()
    warm_start: bool = False
    seed: int = 0
    outputs: tuple = ()
    esm_check: EsmCheckConfig = EsmCheckConfig()
    depend: DependConfig = DependConfig()
    local_time: LocalTimeConfig = LocalTimeConfig()
    converge_N: tuple = (6, 8, 10, 12)

    @property
    def spec(self) -> ScenarioSpec:
        return ScenarioSpec(self.T, self.lower, self.upper, self.driver, self.terminal)


# -- field readers -----------------------------------------------------------


def _obj(d, path):
    if not isinstance(d, dict):
        raise ConfigError(path, f"expected an object, got {type(d).__name__}")
    return d


def _keys(d, path, allowed, required=()):
    for k in required:
        if k not in d:
            raise ConfigError(f"{path}.{k}" if path else k, "missing required field")
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        where = f"{path}.{unknown[0]}" if path else unknown[0]
        raise ConfigError(where, "unknown field")


def _num(v, path, positive=False, nonneg=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path, f"expected a number, got {v!r}")
    v = float(v)
    if v != v or v in (float("inf"), float("-inf")):
        raise ConfigError(path, "must be finite")
    if positive and v <= 0:
        raise ConfigError(path, f"must be positive, got {v}")
    if nonneg and v < 0:
        raise ConfigError(path, f"must be nonnegative, got {v}")
    return v


def _int(v, path, lo=None, hi=None):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(path, f"expected an integer, got {v!r}")
    if lo is not None and v < lo:
        raise ConfigError(path, f"must be >= {lo}, got {v}")
    if hi is not None and v > hi:
        raise ConfigError(path, f"must be <= {hi}, got {v}")
    return v


def _list(v, path, item):
    if not isinstance(v, list):
        raise ConfigError(path, f"expected a list, got {type(v).__name__}")
    return tuple(item(x, f"{path}[{i}]") for i, x in enumerate(v))


def _build(cls, d, path, extra_keys=()):
    d = _obj(d, path)
    _keys(d, path, {"kind", "params", *extra_keys}, required=("kind",))
    params = _list(d.get("params", []), f"{path}.params", _num)
    kwargs = {k: (None if d[k] is None else _num(d[k], f"{path}.{k}", nonneg=True)) for k in extra_keys if k in d}
    try:
        return cls(d["kind"], params, **kwargs)
    except (ValueError, TypeError) as e:
        raise ConfigError(path, str(e)) from None


def _picard(d, path="picard"):
    d = _obj(d, path)
    _keys(d, path, _PICARD_KEYS)
    kw = {}
    for k in ("alpha", "beta", "tol", "c_b"):
        if k in d:
            kw[k] = _num(d[k], f"{path}.{k}")
    for k in ("gamma1", "gamma2"):
        if d.get(k) is not None:
            kw[k] = _num(d[k], f"{path}.{k}")
    if "max_iter" in d:
        kw["max_iter"] = _int(d["max_iter"], f"{path}.max_iter", lo=1)
    warm = d.get("warm_start", False)
    if not isinstance(warm, bool):
        raise ConfigError(f"{path}.warm_start", "expected true or false")
    try:
        return PicardConfig(**kw), warm
    except ValueError as e:
        raise ConfigError(path, str(e)) from None


def parse_config(data: dict) -> ScenarioConfig:
    data = _obj(data, "")
    _keys(data, "", _TOP_KEYS, required=("grid", "barriers", "driver", "terminal"))

    grid = _obj(data["grid"], "grid")
    _keys(grid, "grid", {"T", "N"}, required=("T", "N"))
    T = _num(grid["T"], "grid.T", positive=True)
    N = _int(grid["N"], "grid.N", lo=1)

    bar = _obj(data["barriers"], "barriers")
    _keys(bar, "barriers", {"lower", "upper"}, required=("lower", "upper"))
    lower = _build(BarrierSpec, bar["lower"], "barriers.lower")
    upper = _build(BarrierSpec, bar["upper"], "barriers.upper")
    driver = _build(DriverSpec, data["driver"], "driver", extra_keys=("L1", "L2"))
    terminal = _build(TerminalSpec, data["terminal"], "terminal")
    picard, warm = _picard(data.get("picard", {}))
    seed = _int(data.get("seed", 0), "seed", lo=0, hi=U64_MAX)
    outputs = _list(data.get("outputs", []), "outputs", _str)

    esm = EsmCheckConfig()
    if "esm_check" in data:
        d = _obj(data["esm_check"], "esm_check")
        _keys(d, "esm_check", {"paths", "N", "knot_every", "scale", "pair_scale", "lipschitz_constant"})
        esm = EsmCheckConfig(
            paths=_int(d.get("paths", esm.paths), "esm_check.paths", lo=0),
            N=_int(d.get("N", esm.N), "esm_check.N", lo=1),
            knot_every=_int(d.get("knot_every", esm.knot_every), "esm_check.knot_every", lo=1),
            scale=_num(d.get("scale", esm.scale), "esm_check.scale", positive=True),
            pair_scale=_num(d.get("pair_scale", esm.pair_scale), "esm_check.pair_scale", nonneg=True),
            lipschitz_constant=_num(d.get("lipschitz_constant", esm.lipschitz_constant), "esm_check.lipschitz_constant", positive=True),
        )

    dep = DependConfig()
    if "depend" in data:
        d = _obj(data["depend"], "depend")
        _keys(d, "depend", {"eps", "perturbation"})
        dep = DependConfig(
            eps=_list(d["eps"], "depend.eps", _num) if "eps" in d else dep.eps,
            perturbation=_build(TerminalSpec, d["perturbation"], "depend.perturbation") if "perturbation" in d else dep.perturbation,
        )

    lt = LocalTimeConfig()
    if "local_time" in data:
        d = _obj(data["local_time"], "local_time")
        _keys(d, "local_time", {"mesh", "paths", "start"})
        lt = LocalTimeConfig(
            mesh=_list(d["mesh"], "local_time.mesh", lambda v, p: _int(v, p, lo=1)) if "mesh" in d else lt.mesh,
            paths=_int(d.get("paths", lt.paths), "local_time.paths", lo=0),
            start=None if d.get("start") is None else _num(d["start"], "local_time.start"),
        )

    conv = (6, 8, 10, 12)
    if "converge" in data:
        d = _obj(data["converge"], "converge")
        _keys(d, "converge", {"N"})
        if "N" in d:
            conv = _list(d["N"], "converge.N", lambda v, p: _int(v, p, lo=1))

    return ScenarioConfig(T, N, lower, upper, driver, terminal, picard, warm, seed, outputs, esm, dep, lt, conv)


def _str(v, path):
    if not isinstance(v, str):
        raise ConfigError(path, f"expected a string, got {v!r}")
    return v


def load_config(path) -> ScenarioConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigError("", f"cannot read {p}: {e.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError("", f"{p}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from None
    return parse_config(data)
