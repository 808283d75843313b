"""Small closed set of serializable scalar functions of the weight.

Fitness components (g, h, envelope terms, table rows) are built from these
so that configs stay JSON-serializable and every function can be evaluated
on numpy arrays of quadrature nodes.

    {"expr": "const", "value": 0.25}
    {"expr": "id"}
    {"expr": "affine", "a": 1.0, "b": 1.0}        a*w + b
    {"expr": "power", "p": 2.0}                   w**p
    {"expr": "reciprocal", "c": 1.0}              1/(c - w)
    {"expr": "exp", "beta": 0.5}                  exp(beta*w)
    {"expr": "min", "args": [...]} / {"expr": "max", "args": [...]}
    {"expr": "scale", "factor": 2.0, "arg": {...}}
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import InvalidSpec

_PARAMS = {
    "const": ("value",),
    "id": (),
    "affine": ("a", "b"),
    "power": ("p",),
    "reciprocal": ("c",),
    "exp": ("beta",),
    "scale": ("factor",),
    "min": (),
    "max": (),
}


@dataclass(frozen=True)
class Expr:
    kind: str
    params: tuple = ()
    args: tuple = ()

    def __call__(self, w):
        w = np.asarray(w, dtype=float)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            return self._eval(w)

    def _eval(self, w):
        k, p = self.kind, self.params
        if k == "const":
            return np.full_like(w, p[0])
        if k == "id":
            return w.copy()
        if k == "affine":
            return p[0] * w + p[1]
        if k == "power":
            return np.power(w, p[0])
        if k == "reciprocal":
            d = p[0] - w
            return np.where(d == 0.0, np.inf, 1.0 / np.where(d == 0.0, 1.0, d))
        if k == "exp":
            return np.exp(p[0] * w)
        if k == "scale":
            return p[0] * self.args[0]._eval(w)
        vals = [a._eval(w) for a in self.args]
        if k == "min":
            return np.minimum.reduce(vals)
        return np.maximum.reduce(vals)

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"expr": self.kind}
        d.update(zip(_PARAMS[self.kind], self.params))
        if self.kind == "scale":
            d["arg"] = self.args[0].to_dict()
        elif self.kind in ("min", "max"):
            d["args"] = [a.to_dict() for a in self.args]
        return d

    def __repr__(self):
        return f"Expr({self.to_dict()})"


def parse_expr(spec) -> Expr:
    """Build an :class:`Expr` from its tagged-dict form (or pass one through)."""
    if isinstance(spec, Expr):
        return spec
    if isinstance(spec, (int, float)):
        return const(float(spec))
    if not isinstance(spec, dict) or "expr" not in spec:
        raise InvalidSpec(f"function spec must be a dict with an 'expr' tag, got {spec!r}")
    kind = spec["expr"]
    if kind not in _PARAMS:
        raise InvalidSpec(f"unknown function kind {kind!r}")
    allowed = set(_PARAMS[kind]) | {"expr"}
    if kind == "scale":
        allowed.add("arg")
    if kind in ("min", "max"):
        allowed.add("args")
    extra = set(spec) - allowed
    if extra:
        raise InvalidSpec(f"unknown keys {sorted(extra)} for function kind {kind!r}")
    try:
        params = tuple(float(spec[name]) for name in _PARAMS[kind])
    except KeyError as exc:
        raise InvalidSpec(f"function kind {kind!r} missing parameter {exc}") from None
    args: tuple = ()
    if kind == "scale":
        args = (parse_expr(spec["arg"]),)
    elif kind in ("min", "max"):
        if not spec.get("args"):
            raise InvalidSpec(f"{kind} needs a non-empty 'args' list")
        args = tuple(parse_expr(a) for a in spec["args"])
    return Expr(kind, params, args)


def const(value: float) -> Expr:
    return Expr("const", (float(value),))


def identity() -> Expr:
    return Expr("id")


def affine(a: float, b: float) -> Expr:
    return Expr("affine", (float(a), float(b)))


def power(p: float) -> Expr:
    return Expr("power", (float(p),))


def reciprocal(c: float) -> Expr:
    return Expr("reciprocal", (float(c),))


def exp(beta: float) -> Expr:
    return Expr("exp", (float(beta),))


def scale(factor: float, arg) -> Expr:
    return Expr("scale", (float(factor),), (parse_expr(arg),))


def minimum(*args) -> Expr:
    return Expr("min", (), tuple(parse_expr(a) for a in args))


def maximum(*args) -> Expr:
    return Expr("max", (), tuple(parse_expr(a) for a in args))
