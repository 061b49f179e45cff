"""Scenario files: YAML with line-anchored validation.

A scenario describes the growth rate, the block system, the perturbation,
the spectrum search and command options. See ``examples/`` in the README for
the schema.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import admissibility as adm
from . import growth, linear
from . import nonlinearity as nlin
from .errors import MudnfError

TOL_PROFILES = {
    "fast": {"spectrum_tol": 0.05, "n_nodes": 41, "rtol": 1e-9, "tail_tol": 1e-10},
    "accurate": {"spectrum_tol": 0.02, "n_nodes": 61, "rtol": 1e-11, "tail_tol": 1e-13},
}


class ConfigError(MudnfError):
    """The scenario file does not parse or does not validate."""

    def __init__(self, message: str, line: int | None = None):
        where = f"line {line}: " if line else ""
        super().__init__(where + message)
        self.line = line


class _Map(dict):
    line: int = 0


class _Loader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node):
    loader.flatten_mapping(node)
    out = _Map(loader.construct_pairs(node, deep=True))
    out.line = node.start_mark.line + 1
    return out


_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def parse_text(text: str) -> dict:
    try:
        data = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML parse error: {getattr(exc, 'problem', exc)}",
                          mark.line + 1 if mark else None) from exc
    if not isinstance(data, dict):
        raise ConfigError("scenario must be a mapping at top level", 1)
    return data


def _line(node) -> int | None:
    return getattr(node, "line", None)


def _get(node: dict, key: str, default: Any = ..., *, where: str = ""):
    if key in node:
        return node[key]
    if default is ...:
        raise ConfigError(f"missing key {key!r}{' in ' + where if where else ''}", _line(node))
    return default


def plain(obj):
    """Strip line bookkeeping for echoing into reports."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [plain(v) for v in obj]
    return obj


# ---- builders -----------------------------------------------------------------------

def build_rate(node) -> growth.GrowthRate:
    if node is None:
        return growth.exponential()
    if isinstance(node, str):
        node = _Map(kind=node)
    kind = _get(node, "kind", where="rate")
    if kind == "exponential":
        return growth.exponential()
    if kind == "polynomial":
        return growth.polynomial()
    if kind == "power":
        return growth.power_rate(float(_get(node, "p", where="rate")))
    if kind == "induced":
        name = _get(node, "nu", where="rate")
        if name not in growth.NAMED_INDUCED:
            raise ConfigError(f"unknown induced rate {name!r}; known: {sorted(growth.NAMED_INDUCED)}",
                              _line(node))
        return growth.NAMED_INDUCED[name]()
    raise ConfigError(f"unknown rate kind {kind!r}", _line(node))


def _matrix(value, node) -> np.ndarray:
    try:
        m = np.atleast_2d(np.asarray(value, dtype=float))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"matrix entries must be numbers: {exc}", _line(node)) from exc
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ConfigError(f"block matrix must be square, got shape {m.shape}", _line(node))
    return m


def build_block(node, rate: growth.GrowthRate):
    kind = _get(node, "type", where="block")
    try:
        if kind == "constant":
            return linear.ConstantBlock(_matrix(_get(node, "matrix", where="block"), node))
        if kind == "piecewise":
            mats = [_matrix(m, node) for m in _get(node, "matrices", where="block")]
            return linear.PiecewiseConstantBlock(tuple(float(b) for b in _get(node, "breakpoints", [])),
                                                 tuple(mats))
        if kind == "preset":
            name = _get(node, "name", where="block")
            params = plain(_get(node, "params", {}))
            if name == "gamma-shift":
                return linear.gamma_shift_block(rate, **params)
            if name not in linear.SMOOTH_PRESETS:
                raise ConfigError(f"unknown block preset {name!r}; known: "
                                  f"{sorted(linear.SMOOTH_PRESETS)}", _line(node))
            return linear.SMOOTH_PRESETS[name](**params)
    except MudnfError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), _line(node)) from exc
    except TypeError as exc:
        raise ConfigError(f"bad block parameters: {exc}", _line(node)) from exc
    raise ConfigError(f"unknown block type {kind!r}", _line(node))


def build_system(node, rate) -> linear.BlockSystem:
    blocks = _get(node, "blocks", where="system")
    if not isinstance(blocks, list) or not blocks:
        raise ConfigError("system.blocks must be a nonempty list", _line(node))
    return linear.BlockSystem([build_block(b, rate) for b in blocks])


def _named(node, table: dict, what: str):
    if isinstance(node, str):
        node = _Map(name=node)
    name = _get(node, "name", where=what)
    if name not in table:
        raise ConfigError(f"unknown {what} {name!r}; known: {sorted(table)}", _line(node))
    params = plain(_get(node, "params", []))
    try:
        if isinstance(params, dict):
            return table[name](**params)
        return table[name](*params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad parameters for {what} {name!r}: {exc}", _line(node)) from exc


def build_psi(node) -> adm.AdmissibleCandidate:
    table = {k: v for k, v in adm.PRESETS.items() if k != "tabulated"}
    return _named(node, table, "psi preset")


def build_nonlinearity(node, dims) -> nlin.PolynomialNonlinearity:
    if node is None:
        return nlin.PolynomialNonlinearity(dims, {}, order=2, psi=adm.zero())
    order = int(_get(node, "order", 2))
    terms = {}
    for t in _get(node, "terms", []) or []:
        j = int(_get(t, "j", where="term"))
        k = tuple(int(v) for v in _get(t, "k", where="term"))
        prof = nlin.constant_profile(1.0)
        if "profile" in t:
            prof = _named(t["profile"], nlin.PROFILES, "profile")
        if (j, k) in terms:
            raise ConfigError(f"duplicate term (j={j}, k={list(k)})", _line(t))
        terms[(j, k)] = (np.asarray(_get(t, "tensor", where="term"), float), prof)
    psi = build_psi(node["psi"]) if "psi" in node else None
    rem = None
    if "remainder" in node:
        r = node["remainder"]
        if isinstance(r, str):
            r = _Map(name=r)
        name = _get(r, "name", where="remainder")
        if name not in nlin.REMAINDERS:
            raise ConfigError(f"unknown remainder {name!r}; known: {sorted(nlin.REMAINDERS)}", _line(r))
        params = plain(_get(r, "params", {}))
        rem = nlin.REMAINDERS[name](order, **params)
    try:
        return nlin.PolynomialNonlinearity(dims, terms, order=order, psi=psi, remainder=rem)
    except MudnfError as exc:
        raise ConfigError(str(exc), _line(node)) from exc


@dataclass
class Scenario:
    name: str
    rate: growth.GrowthRate
    system: linear.BlockSystem
    nonlinearity: nlin.PolynomialNonlinearity
    raw: dict
    spectrum: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)

    @property
    def ell(self) -> int:
        return int(self.options.get("ell", self.nonlinearity.order))

    def operator(self) -> linear.EvolutionOperator:
        return linear.EvolutionOperator(self.system, self.rate)

    def target(self) -> tuple[int, tuple]:
        tg = self.options.get("target")
        if tg is None:
            raise ConfigError("options.target {j, k} is required for this command", _line(self.raw))
        return int(tg["j"]), tuple(int(v) for v in tg["k"])


def load_scenario(source, *, tol_profile: str = "fast") -> Scenario:
    """Load from a path or from YAML text."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source
                                    and Path(source).exists()):
        text = Path(source).read_text()
        default_name = Path(source).stem
    else:
        text = str(source)
        default_name = "scenario"
    data = parse_text(text)
    if tol_profile not in TOL_PROFILES:
        raise ConfigError(f"unknown tolerance profile {tol_profile!r}")
    rate = build_rate(data.get("rate"))
    system = build_system(_get(data, "system"), rate)
    nl = build_nonlinearity(data.get("nonlinearity"), system.dims)
    tols = dict(TOL_PROFILES[tol_profile])
    tols.update(plain(data.get("tolerances", {}) or {}))
    spec = plain(data.get("spectrum", {}) or {})
    if "intervals" in spec:
        ivs = spec["intervals"]
        if len(ivs) != system.n:
            raise ConfigError(f"spectrum.intervals has {len(ivs)} entries for {system.n} blocks",
                              _line(data["spectrum"]))
        for a, b in ivs:
            if not (math.isfinite(a) and math.isfinite(b) and a <= b):
                raise ConfigError(f"bad interval [{a}, {b}]", _line(data["spectrum"]))
    options = plain(data.get("options", {}) or {})
    tg = options.get("target")
    if tg is not None:
        if "j" not in tg or "k" not in tg or len(tg["k"]) != system.n:
            raise ConfigError("options.target needs j and a k with one entry per block",
                              _line(data["options"]))
    return Scenario(str(data.get("name", default_name)), rate, system, nl, plain(data),
                    spec, options, tols)
