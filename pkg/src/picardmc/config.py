"""Run configuration: a single YAML document per run.

Unknown keys are rejected; every error names the offending key path and,
when the document came from a file, its line.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import yaml

from .fields import TestField, field_from_dict
from .heat import SpaceTimeGrid


class ConfigError(ValueError):
    def __init__(self, path: str, message: str, line: Optional[int] = None):
        where = f"{path or '<root>'}" + (f" (line {line})" if line else "")
        super().__init__(f"{where}: {message}")
        self.path, self.line = path, line


ALLOC_METHODS = ("exact", "paper", "uniform", "file")
MODES = ("convective_only", "full")
U0_MODES = ("exact", "mc")


@dataclass(frozen=True)
class GridConfig:
    times: Tuple[float, ...]
    points: Optional[Tuple[Tuple[float, ...], ...]] = None
    lo: Optional[Tuple[float, ...]] = None
    hi: Optional[Tuple[float, ...]] = None
    n: int = 1

    def build(self, d: int) -> SpaceTimeGrid:
        if self.points is not None:
            xs = np.array(self.points, dtype=float).reshape(-1, d)
            pts = [(x, t) for t in self.times for x in xs]
            return SpaceTimeGrid(np.array([p[0] for p in pts]), np.array([p[1] for p in pts]))
        return SpaceTimeGrid.box(self.lo, self.hi, self.n, self.times)

    def to_dict(self) -> dict:
        out: Dict[str, Any] = {"times": list(self.times)}
        if self.points is not None:
            out["points"] = [list(p) for p in self.points]
        else:
            out["box"] = {"lo": list(self.lo), "hi": list(self.hi), "n": self.n}
        return out


@dataclass(frozen=True)
class AllocConfig:
    method: str = "exact"
    entries: Optional[Tuple[Tuple[int, int], ...]] = None
    B: Optional[float] = None
    with_t: bool = False

    def to_dict(self) -> dict:
        out: Dict[str, Any] = {"method": self.method, "with_t": self.with_t}
        if self.entries is not None:
            out["entries"] = {k: v for k, v in self.entries}
        if self.B is not None:
            out["B"] = self.B
        return out


@dataclass(frozen=True)
class RieszConfig:
    eps: float = 1e-3
    R: float = 10.0
    N: int = 1000

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RunConfig:
    d: int
    grid: GridConfig
    a: Tuple[Optional[dict], ...]
    f: Tuple[Optional[dict], ...]
    n: int = 1
    seed: int = 0
    budget: Optional[int] = None
    alloc: AllocConfig = field(default_factory=AllocConfig)
    u0: str = "exact"
    n_leaf: int = 16
    mode: str = "convective_only"
    coupling: float = 1.0
    heat_samples: int = 10000
    nested: Optional[Tuple[int, ...]] = None
    chunk_size: int = 4096
    workers: int = 1
    per_point_streams: bool = False
    riesz: Optional[RieszConfig] = None

    # ------------------------------------------------------------------
    def fields_a(self) -> List[Optional[TestField]]:
        return [None if c is None else field_from_dict(c, self.d) for c in self.a]

    def fields_f(self) -> List[Optional[TestField]]:
        return [None if c is None else field_from_dict(c, self.d) for c in self.f]

    def build_grid(self) -> SpaceTimeGrid:
        return self.grid.build(self.d)

    def to_dict(self) -> dict:
        out = {
            "d": self.d,
            "grid": self.grid.to_dict(),
            "a": [None if c is None else dict(c) for c in self.a],
            "f": [None if c is None else dict(c) for c in self.f],
            "n": self.n,
            "seed": self.seed,
            "budget": self.budget,
            "alloc": self.alloc.to_dict(),
            "u0": self.u0,
            "n_leaf": self.n_leaf,
            "mode": self.mode,
            "coupling": self.coupling,
            "heat_samples": self.heat_samples,
            "nested": None if self.nested is None else list(self.nested),
            "chunk_size": self.chunk_size,
            "workers": self.workers,
            "per_point_streams": self.per_point_streams,
            "riesz": None if self.riesz is None else self.riesz.to_dict(),
        }
        return out

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form (worker count excluded: it never changes results)."""
        data = self.to_dict()
        data.pop("workers")
        blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def replace(self, **changes) -> "RunConfig":
        data = self.to_dict()
        data.update(changes)
        return config_from_dict(data)


# ----------------------------------------------------------------------
# validation


class _Ctx:
    def __init__(self, lines: Dict[str, int]):
        self.lines = lines

    def fail(self, path: str, msg: str):
        raise ConfigError(path, msg, self.lines.get(path))


def _line_map(text: str) -> Dict[str, int]:
    """Map key paths to 1-based source lines."""
    out: Dict[str, int] = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return out

    def walk(node, path):
        if node is None:
            return
        out.setdefault(path, node.start_mark.line + 1)
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                sub = f"{path}.{k.value}" if path else str(k.value)
                out[sub] = k.start_mark.line + 1
                walk(v, sub)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                walk(v, f"{path}[{i}]")

    walk(root, "")
    return out


_TOP = {
    "d", "grid", "a", "f", "n", "seed", "budget", "alloc", "u0", "n_leaf", "mode", "coupling",
    "heat_samples", "nested", "chunk_size", "workers", "per_point_streams", "riesz",
}


def _keys(ctx, data, allowed, path):
    if not isinstance(data, dict):
        ctx.fail(path, "expected a mapping")
    for k in data:
        if k not in allowed:
            sub = f"{path}.{k}" if path else str(k)
            ctx.fail(sub, f"unknown key {k!r}; allowed: {sorted(allowed)}")


def _int(ctx, v, path, lo=None):
    if isinstance(v, bool) or not isinstance(v, int):
        ctx.fail(path, f"expected an integer, got {v!r}")
    if lo is not None and v < lo:
        ctx.fail(path, f"must be >= {lo}, got {v}")
    return v


def _num(ctx, v, path, positive=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        ctx.fail(path, f"expected a number, got {v!r}")
    if positive and not v > 0:
        ctx.fail(path, f"must be positive, got {v}")
    return float(v)


def _vec(ctx, v, path, d):
    if not isinstance(v, list) or len(v) != d:
        ctx.fail(path, f"expected a list of {d} numbers")
    return tuple(_num(ctx, x, f"{path}[{i}]") for i, x in enumerate(v))


def _choice(ctx, v, path, options):
    if v not in options:
        ctx.fail(path, f"expected one of {options}, got {v!r}")
    return v


def _field_decls(ctx, v, path, d) -> Tuple[Optional[dict], ...]:
    if v is None:
        return (None,) * d
    decls = v if isinstance(v, list) else [v] * d
    if len(decls) != d:
        ctx.fail(path, f"expected one field per component ({d}) or a single field")
    out = []
    for i, decl in enumerate(decls):
        sub = f"{path}[{i}]" if isinstance(v, list) else path
        if decl is None:
            out.append(None)
            continue
        _keys(ctx, decl, {"kind", "params"}, sub)
        if "kind" not in decl:
            ctx.fail(sub, "missing key 'kind'")
        params = decl.get("params", [])
        if not isinstance(params, list):
            ctx.fail(f"{sub}.params", "expected a list")
        params = [_num(ctx, p, f"{sub}.params[{j}]") for j, p in enumerate(params)]
        try:
            TestField(decl["kind"], tuple(params), d)
        except ValueError as exc:
            ctx.fail(sub, str(exc))
        out.append({"kind": decl["kind"], "params": params})
    return tuple(out)


def _grid(ctx, g, d) -> GridConfig:
    _keys(ctx, g, {"times", "points", "box"}, "grid")
    if "times" not in g:
        ctx.fail("grid", "missing key 'times'")
    times = g["times"]
    if not isinstance(times, list) or not times:
        ctx.fail("grid.times", "expected a non-empty list")
    times = tuple(_num(ctx, t, f"grid.times[{i}]", positive=True) for i, t in enumerate(times))
    if ("points" in g) == ("box" in g):
        ctx.fail("grid", "give exactly one of 'points' or 'box'")
    if "points" in g:
        pts = g["points"]
        if not isinstance(pts, list) or not pts:
            ctx.fail("grid.points", "expected a non-empty list of points")
        return GridConfig(times, tuple(_vec(ctx, p, f"grid.points[{i}]", d) for i, p in enumerate(pts)))
    box = g["box"]
    _keys(ctx, box, {"lo", "hi", "n"}, "grid.box")
    for k in ("lo", "hi"):
        if k not in box:
            ctx.fail("grid.box", f"missing key {k!r}")
    lo, hi = _vec(ctx, box["lo"], "grid.box.lo", d), _vec(ctx, box["hi"], "grid.box.hi", d)
    if any(a > b for a, b in zip(lo, hi)):
        ctx.fail("grid.box", "lo must not exceed hi")
    n = _int(ctx, box.get("n", 1), "grid.box.n", 1)
    return GridConfig(times, None, lo, hi, n)


def config_from_dict(data: Any, lines: Optional[Dict[str, int]] = None) -> RunConfig:
    ctx = _Ctx(lines or {})
    _keys(ctx, data, _TOP, "")
    for req in ("d", "grid"):
        if req not in data:
            ctx.fail("", f"missing required key {req!r}")
    d = _int(ctx, data["d"], "d", 1)
    grid = _grid(ctx, data["grid"], d)
    a = _field_decls(ctx, data.get("a"), "a", d)
    f = _field_decls(ctx, data.get("f"), "f", d)
    n = _int(ctx, data.get("n", 1), "n", 0)
    seed = _int(ctx, data.get("seed", 0), "seed", 0)
    if seed >= 2**64:
        ctx.fail("seed", "must fit in 64 bits")
    budget = data.get("budget")
    if budget is not None:
        budget = _int(ctx, budget, "budget", 1)

    al = data.get("alloc") or {}
    _keys(ctx, al, {"method", "entries", "B", "with_t"}, "alloc")
    method = _choice(ctx, al.get("method", "exact"), "alloc.method", ALLOC_METHODS)
    entries = al.get("entries")
    if entries is not None:
        if not isinstance(entries, dict):
            ctx.fail("alloc.entries", "expected a mapping k -> N(k)")
        entries = tuple(sorted(
            (_int(ctx, int(k) if isinstance(k, str) and k.isdigit() else k, f"alloc.entries.{k}", 1),
             _int(ctx, v, f"alloc.entries.{k}", 1))
            for k, v in entries.items()
        ))
    B = al.get("B")
    if B is not None:
        B = _num(ctx, B, "alloc.B")
        if B < 0:
            ctx.fail("alloc.B", "must be non-negative")
    with_t = al.get("with_t", False)
    if not isinstance(with_t, bool):
        ctx.fail("alloc.with_t", "expected true or false")
    alloc = AllocConfig(method, entries, B, with_t)

    u0 = _choice(ctx, data.get("u0", "exact"), "u0", U0_MODES)
    mode = _choice(ctx, data.get("mode", "convective_only"), "mode", MODES)
    nested = data.get("nested")
    if nested is not None:
        if not isinstance(nested, list) or not nested:
            ctx.fail("nested", "expected a non-empty list N(0..L)")
        nested = tuple(_int(ctx, v, f"nested[{i}]", 1) for i, v in enumerate(nested))
    rz = data.get("riesz")
    riesz = None
    if rz is not None:
        _keys(ctx, rz, {"eps", "R", "N"}, "riesz")
        eps = _num(ctx, rz.get("eps", 1e-3), "riesz.eps", positive=True)
        R = _num(ctx, rz.get("R", 10.0), "riesz.R", positive=True)
        if eps >= R:
            ctx.fail("riesz", "need eps < R")
        riesz = RieszConfig(eps, R, _int(ctx, rz.get("N", 1000), "riesz.N", 1))
    pps = data.get("per_point_streams", False)
    if not isinstance(pps, bool):
        ctx.fail("per_point_streams", "expected true or false")
    return RunConfig(
        d=d, grid=grid, a=a, f=f, n=n, seed=seed, budget=budget, alloc=alloc, u0=u0,
        n_leaf=_int(ctx, data.get("n_leaf", 16), "n_leaf", 1),
        mode=mode,
        coupling=_num(ctx, data.get("coupling", 1.0), "coupling"),
        heat_samples=_int(ctx, data.get("heat_samples", 10000), "heat_samples", 1),
        nested=nested,
        chunk_size=_int(ctx, data.get("chunk_size", 4096), "chunk_size", 1),
        workers=_int(ctx, data.get("workers", 1), "workers", 1),
        per_point_streams=pps,
        riesz=riesz,
    )


def loads_config(text: str) -> RunConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError("", f"YAML syntax error: {exc}", mark.line + 1 if mark else None) from None
    return config_from_dict(data, _line_map(text))


def parse_config(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError("", f"config file {str(p)!r} not found")
    return loads_config(p.read_text())
