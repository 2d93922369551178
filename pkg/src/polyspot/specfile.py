"""Model-spec files: a small YAML schema with line-anchored validation errors.

A spec declares the model kind, the price cap, factor parameters (either
kappa/theta/sigma or a/b/sigma per factor), one or two map c-vectors, the
switching intensities for the regime model, optional seasonality modes and
the pricing basis degree.  Unknown keys are rejected, with the offending line
reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import yaml

from .jacobi import JacobiParams
from .model import DoubleJacobiModel, ModelSpec, OneFactorModel, RegimeModel
from .polymap import map_from_c
from .pricing import SeasonalMode, Seasonality

__all__ = ["SpecFileError", "parse_spec", "load_spec", "emit_spec"]


class SpecFileError(ValueError):
    """Spec-file validation failure, anchored to a line when one is known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _compose(text: str):
    try:
        return yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise SpecFileError(str(exc).replace("\n", " "), None if mark is None else mark.line + 1) from exc


def _line(node) -> int:
    return node.start_mark.line + 1


def _as_mapping(node, context: str) -> dict:
    if not isinstance(node, yaml.MappingNode):
        raise SpecFileError(f"{context} must be a mapping", _line(node))
    out = {}
    for key_node, value_node in node.value:
        key = key_node.value
        if key in out:
            raise SpecFileError(f"duplicate key {key!r}", _line(key_node))
        out[key] = (key_node, value_node)
    return out


def _scalar(node, context: str) -> float:
    if not isinstance(node, yaml.ScalarNode):
        raise SpecFileError(f"{context} must be a number", _line(node))
    try:
        return float(node.value)
    except ValueError as exc:
        raise SpecFileError(f"{context} must be a number, got {node.value!r}", _line(node)) from exc


def _sequence(node, context: str) -> list:
    if not isinstance(node, yaml.SequenceNode):
        raise SpecFileError(f"{context} must be a list", _line(node))
    return node.value


def _check_keys(mapping: dict, allowed: set[str], required: set[str], context: str, node):
    for key, (key_node, _) in mapping.items():
        if key not in allowed:
            raise SpecFileError(f"unknown key {key!r} in {context}", _line(key_node))
    for key in required:
        if key not in mapping:
            raise SpecFileError(f"{context} is missing required key {key!r}", _line(node))


def _parse_factor(node, context: str) -> JacobiParams:
    mapping = _as_mapping(node, context)
    keys = set(mapping)
    try:
        if keys == {"kappa", "theta", "sigma"}:
            return JacobiParams(
                kappa=_scalar(mapping["kappa"][1], "kappa"),
                theta=_scalar(mapping["theta"][1], "theta"),
                sigma=_scalar(mapping["sigma"][1], "sigma"),
            )
        if keys == {"a", "b", "sigma"}:
            return JacobiParams.from_shape(
                a=_scalar(mapping["a"][1], "a"),
                b=_scalar(mapping["b"][1], "b"),
                sigma=_scalar(mapping["sigma"][1], "sigma"),
            )
    except ValueError as exc:
        raise SpecFileError(f"invalid {context}: {exc}", _line(node)) from exc
    raise SpecFileError(
        f"{context} must have keys (kappa, theta, sigma) or (a, b, sigma), got {sorted(keys)}",
        _line(node),
    )


def _parse_map(node, s_max: float, context: str):
    mapping = _as_mapping(node, context)
    _check_keys(mapping, {"c"}, {"c"}, context, node)
    items = _sequence(mapping["c"][1], f"{context}.c")
    c = [_scalar(item, f"{context}.c entry") for item in items]
    try:
        return map_from_c(np.array(c, dtype=float), s_max)
    except ValueError as exc:
        raise SpecFileError(f"invalid {context}: {exc}", _line(node)) from exc


def _parse_seasonality(node) -> Seasonality:
    modes = []
    for item in _sequence(node, "seasonality"):
        mapping = _as_mapping(item, "seasonality mode")
        _check_keys(mapping, {"kind", "weight", "freq", "phase"}, {"kind"}, "seasonality mode", item)
        kind_node = mapping["kind"][1]
        if not isinstance(kind_node, yaml.ScalarNode):
            raise SpecFileError("mode kind must be a string", _line(kind_node))
        kwargs = {"kind": kind_node.value}
        for key in ("weight", "freq", "phase"):
            if key in mapping:
                kwargs[key] = _scalar(mapping[key][1], key)
        try:
            modes.append(SeasonalMode(**kwargs))
        except ValueError as exc:
            raise SpecFileError(str(exc), _line(item)) from exc
    if not modes:
        raise SpecFileError("seasonality needs at least one mode", _line(node))
    return Seasonality(tuple(modes))


_TOP_KEYS = {
    "one_factor": {"model", "s_max", "factor", "map", "seasonality", "basis_degree"},
    "regime": {"model", "s_max", "factor", "lambda01", "lambda10", "map0", "map1", "seasonality", "basis_degree"},
    "double_jacobi": {"model", "s_max", "factor_x", "factor_y", "map0", "map1", "seasonality", "basis_degree"},
}
_TOP_REQUIRED = {
    "one_factor": {"model", "s_max", "factor", "map"},
    "regime": {"model", "s_max", "factor", "lambda01", "lambda10", "map0", "map1"},
    "double_jacobi": {"model", "s_max", "factor_x", "factor_y", "map0", "map1"},
}


def parse_spec(text: str) -> ModelSpec:
    """Parse a model-spec document; raises SpecFileError with a line number on failure."""
    root = _compose(text)
    if root is None:
        raise SpecFileError("empty spec document")
    mapping = _as_mapping(root, "spec")
    if "model" not in mapping:
        raise SpecFileError("spec is missing required key 'model'", _line(root))
    kind_node = mapping["model"][1]
    kind = kind_node.value if isinstance(kind_node, yaml.ScalarNode) else None
    if kind not in _TOP_KEYS:
        raise SpecFileError(
            f"model must be one of {sorted(_TOP_KEYS)}, got {kind!r}", _line(kind_node)
        )
    _check_keys(mapping, _TOP_KEYS[kind], _TOP_REQUIRED[kind], "spec", root)

    s_max = _scalar(mapping["s_max"][1], "s_max")
    if not (s_max > 0 and math.isfinite(s_max)):
        raise SpecFileError("s_max must be positive and finite", _line(mapping["s_max"][1]))
    seasonality = _parse_seasonality(mapping["seasonality"][1]) if "seasonality" in mapping else None
    basis_degree = None
    if "basis_degree" in mapping:
        basis_degree = int(_scalar(mapping["basis_degree"][1], "basis_degree"))
        if basis_degree < 1:
            raise SpecFileError("basis_degree must be at least 1", _line(mapping["basis_degree"][1]))

    if kind == "one_factor":
        model = OneFactorModel(
            factor=_parse_factor(mapping["factor"][1], "factor"),
            price_map=_parse_map(mapping["map"][1], s_max, "map"),
            seasonality=seasonality,
            basis_degree=basis_degree,
        )
    elif kind == "regime":
        lam01 = _scalar(mapping["lambda01"][1], "lambda01")
        lam10 = _scalar(mapping["lambda10"][1], "lambda10")
        if lam01 < 0 or lam10 < 0:
            raise SpecFileError("switching intensities must be nonnegative", _line(mapping["lambda01"][1]))
        model = RegimeModel(
            x_factor=_parse_factor(mapping["factor"][1], "factor"),
            lambda01=lam01,
            lambda10=lam10,
            map0=_parse_map(mapping["map0"][1], s_max, "map0"),
            map1=_parse_map(mapping["map1"][1], s_max, "map1"),
            seasonality=seasonality,
            basis_degree=basis_degree,
        )
    else:
        model = DoubleJacobiModel(
            x_factor=_parse_factor(mapping["factor_x"][1], "factor_x"),
            y_factor=_parse_factor(mapping["factor_y"][1], "factor_y"),
            map0=_parse_map(mapping["map0"][1], s_max, "map0"),
            map1=_parse_map(mapping["map1"][1], s_max, "map1"),
            seasonality=seasonality,
            basis_degree=basis_degree,
        )
    _validate_basis_degree(model)
    return model


def _validate_basis_degree(model: ModelSpec):
    if model.basis_degree is None:
        return
    if isinstance(model, OneFactorModel):
        need = model.price_map.degree
    else:
        need = max(model.map0.degree, model.map1.degree) + 1
    if model.basis_degree < need:
        raise SpecFileError(f"basis_degree must be at least {need} for these maps")


def load_spec(path) -> ModelSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_spec(fh.read())


def _c_of(price_map) -> list[float]:
    """Recover the c-vector from the stored factors (inverse of the encoding)."""
    from .polymap import ALPHA_MAX, ALPHA_MIN, beta_bar

    out: list[float] = []
    factors = price_map.factors
    n_struct = price_map.degree - 1  # structural phi degree == len(c)
    for i, f in enumerate(factors):
        unpaired_tail = n_struct % 2 == 1 and i == len(factors) - 1
        if unpaired_tail:
            out.append(float(f.beta / beta_bar(0.0)))
        else:
            out.append(float((f.alpha - ALPHA_MIN) * 2.0 / (ALPHA_MAX - ALPHA_MIN) - 1.0))
            bb = beta_bar(f.alpha)
            out.append(float(f.beta / bb) if bb > 0 else 0.0)
    return out


def emit_spec(model: ModelSpec) -> str:
    """Serialize a model back to spec-file text (round-trips through parse_spec)."""
    lines: list[str] = [f"model: {model.kind}", f"s_max: {float(model.s_max)!r}"]

    def factor_lines(name: str, f: JacobiParams):
        lines.append(f"{name}:")
        lines.append(f"  kappa: {float(f.kappa)!r}")
        lines.append(f"  theta: {float(f.theta)!r}")
        lines.append(f"  sigma: {float(f.sigma)!r}")

    def map_lines(name: str, pmap):
        c = ", ".join(repr(v) for v in _c_of(pmap))
        lines.append(f"{name}:")
        lines.append(f"  c: [{c}]")

    if isinstance(model, OneFactorModel):
        factor_lines("factor", model.factor)
        map_lines("map", model.price_map)
    elif isinstance(model, RegimeModel):
        factor_lines("factor", model.x_factor)
        lines.append(f"lambda01: {float(model.lambda01)!r}")
        lines.append(f"lambda10: {float(model.lambda10)!r}")
        map_lines("map0", model.map0)
        map_lines("map1", model.map1)
    else:
        factor_lines("factor_x", model.x_factor)
        factor_lines("factor_y", model.y_factor)
        map_lines("map0", model.map0)
        map_lines("map1", model.map1)
    if model.seasonality is not None:
        lines.append("seasonality:")
        for m in model.seasonality.modes:
            lines.append(
                f"  - {{kind: {m.kind}, weight: {float(m.weight)!r}, freq: {float(m.freq)!r}, phase: {float(m.phase)!r}}}"
            )
    if model.basis_degree is not None:
        lines.append(f"basis_degree: {model.basis_degree}")
    return "\n".join(lines) + "\n"
