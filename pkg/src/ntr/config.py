"""Plain-text ``key = value`` run configuration.

A configuration file holds solver settings (any :class:`TrConfig` field),
the regularizer and the problem to solve, e.g.::

    # solver
    eps_stop = 1e-6
    max_iterations = 500
    model = semismooth

    [problem]
    problem = lasso
    n = 4096
    range = 40

Section headers are optional and only group keys for the reader; every key
must be unique across the file.  ``#`` and ``;`` start comments.
"""

from __future__ import annotations

import ast
import configparser
import dataclasses
from dataclasses import dataclass, field
from typing import Optional

from .core import UsageError
from .solver import TrConfig

PROBLEM_KEYS = {
    "problem": str, "n": int, "m": int, "range": float, "sigma": float, "seed": int,
    "N": int, "flip": float, "data": str, "scale": bool, "instance": str,
}
REGULARIZER_KEYS = {"regularizer": str, "mu": float, "mu_scale": float, "group_size": int}
BENCH_KEYS = {"ranges": list, "tolerances": list, "trials": int, "methods": list,
              "fista_max_iter": int}


@dataclass
class RunConfig:
    solver: TrConfig = field(default_factory=TrConfig)
    problem: dict = field(default_factory=dict)
    regularizer: dict = field(default_factory=dict)
    bench: dict = field(default_factory=dict)


def _parse_bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_list(text):
    parts = [p for p in text.replace(",", " ").split() if p]
    out = []
    for p in parts:
        try:
            out.append(float(p))
        except ValueError:
            out.append(p)
    return out


def convert(text, kind):
    """Convert the raw string ``text`` to ``kind`` (a type or a type hint string)."""
    text = text.strip()
    if isinstance(kind, str):
        # dataclass annotations are strings under postponed evaluation
        optional = kind.startswith("Optional[")
        base = kind[len("Optional["):-1] if optional else kind
        if optional and text.lower() in ("none", ""):
            return None
        kind = {"float": float, "int": int, "bool": bool, "str": str}.get(base)
        if kind is None:
            return ast.literal_eval(text)
    if kind is bool:
        return _parse_bool(text)
    if kind is list:
        return _parse_list(text)
    if kind is float:
        return float(text)
    if kind is int:
        return int(float(text)) if "e" in text.lower() else int(text)
    return text


def parse_config(text, source="<config>"):
    """Parse configuration text into a :class:`RunConfig`."""
    cp = configparser.ConfigParser(delimiters=("=",), comment_prefixes=("#", ";"),
                                   inline_comment_prefixes=("#",), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string("[__top__]\n" + text, source=source)
    except configparser.Error as exc:
        raise UsageError(f"{source}: {exc}") from None
    tr_fields = {f.name: f.type for f in dataclasses.fields(TrConfig)}
    solver, seen = {}, set()
    out = RunConfig()
    for section in cp.sections():
        for key, raw in cp.items(section):
            if key in seen:
                raise UsageError(f"{source}: duplicate key {key!r}")
            seen.add(key)
            try:
                if key in tr_fields:
                    solver[key] = convert(raw, tr_fields[key])
                elif key in PROBLEM_KEYS:
                    out.problem[key] = convert(raw, PROBLEM_KEYS[key])
                elif key in REGULARIZER_KEYS:
                    out.regularizer[key] = convert(raw, REGULARIZER_KEYS[key])
                elif key in BENCH_KEYS:
                    out.bench[key] = convert(raw, BENCH_KEYS[key])
                else:
                    raise UsageError(f"{source}: unknown key {key!r}")
            except (ValueError, SyntaxError) as exc:
                if isinstance(exc, UsageError):
                    raise
                raise UsageError(f"{source}: bad value for {key!r}: {raw!r}") from None
    out.solver = TrConfig(**solver)
    return out


def load_config(path: Optional[str]):
    """Read ``path`` (or return defaults when it is None)."""
    if path is None:
        return RunConfig()
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, source=str(path))


def dump_config(cfg: TrConfig):
    """Render solver settings in the file format (round-trips through :func:`parse_config`)."""
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
