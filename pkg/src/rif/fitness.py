"""Fitness functions ``f(k, w)`` with the structure the analysis exploits.

``k`` is the number of attachment events a vertex has had so far, i.e. its
out-degree divided by ``ell``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSpec
from .expressions import Expr, const, identity, parse_expr
from .weights import WeightDistribution

# codes understood by the numba kernels
AFFINE, CAYLEY, TABULAR = 0, 1, 2


@dataclass(frozen=True)
class Envelope:
    """Growth bound ``f(k, w) <= C*k + phi(w)``."""

    C: float
    phi: Expr


@dataclass(frozen=True, eq=False)
class FitnessModel:
    kind: str  # "gpaf" | "cayley" | "constant" | "tabular"
    ell: int = 1
    g: Expr | None = None
    h: Expr | None = None
    rows: tuple = ()
    extension: str = "clamp"
    envelope: Envelope | None = field(default=None)

    def __post_init__(self):
        if int(self.ell) != self.ell or self.ell < 1:
            raise InvalidSpec("ell must be a positive integer")
        if self.kind not in ("gpaf", "cayley", "constant", "tabular"):
            raise InvalidSpec(f"unknown fitness kind {self.kind!r}")
        if self.kind == "tabular":
            if not self.rows:
                raise InvalidSpec("tabular fitness needs at least one row")
            if self.extension not in ("clamp", "zero"):
                raise InvalidSpec("tabular extension must be 'clamp' or 'zero'")
        elif self.g is None or (self.kind == "gpaf" and self.h is None):
            raise InvalidSpec(f"{self.kind} fitness is missing a component function")

    # -- evaluation ---------------------------------------------------------
    def eval(self, k, w):
        """``f(k, w)``, vectorized over numpy-broadcastable ``k`` and ``w``."""
        k = np.asarray(k)
        w = np.asarray(w, dtype=float)
        if self.kind == "gpaf":
            return self.g(w) * k + self.h(w)
        if self.kind == "constant":
            return self.g(w) * np.ones_like(k, dtype=float)
        if self.kind == "cayley":
            return np.where(k == 0, self.g(w), 0.0)
        kk, ww = np.broadcast_arrays(k, w)
        out = np.zeros(kk.shape)
        kmax = len(self.rows) - 1
        for i, row in enumerate(self.rows):
            sel = kk == i
            if i == kmax and self.extension == "clamp":
                sel = kk >= i
            if sel.any():
                out[sel] = row(ww[sel])
        return out if out.ndim else float(out)

    def is_dead(self, k, w):
        return np.asarray(self.eval(k, w)) == 0.0

    __call__ = eval

    # -- structure used by the kernels ---------------------------------------
    def node_params(self, w):
        """Kernel encoding at weights ``w``: ``(code, slope, intercept, table)``.

        For the affine code ``f(k) = slope*k + intercept``; for the Cayley code
        ``f(0) = intercept`` and ``f(k >= 1) = 0``; the tabular code reads
        ``table[v, min(k, K)]`` (or 0 beyond ``K`` under the 'zero' rule).
        """
        w = np.asarray(w, dtype=float)
        dummy = np.zeros((1, 1))
        if self.kind == "gpaf":
            return AFFINE, self.g(w), self.h(w), dummy
        if self.kind == "constant":
            return AFFINE, np.zeros_like(w), self.g(w), dummy
        if self.kind == "cayley":
            return CAYLEY, np.zeros_like(w), self.g(w), dummy
        table = np.column_stack([r(w) for r in self.rows]) if w.ndim else np.array(
            [[float(r(w)) for r in self.rows]])
        return TABULAR, np.zeros_like(w), np.zeros_like(w), np.ascontiguousarray(table)

    @property
    def ext_zero(self) -> bool:
        return self.kind == "tabular" and self.extension == "zero"

    def ess_sup_g(self, dist: WeightDistribution) -> float:
        """``esssup g(W)`` for GPAF models (the reinforcement slope)."""
        if self.kind == "gpaf":
            return ess_sup(self.g, dist)
        return 0.0

    # -- validation ---------------------------------------------------------
    def validate(self, dist: WeightDistribution) -> None:
        """Check the model invariants against the support of ``dist``."""
        w = support_grid(dist)
        ks = np.concatenate([np.arange(64), np.geomspace(64, 1e6, 16).astype(int)])
        vals = self.eval(ks[:, None], w[None, :])
        if np.isnan(vals).any() or (vals < 0).any():
            raise InvalidSpec("fitness must be nonnegative on the support")
        # endpoints of a continuous part carry no mass
        c = dist.continuous
        atoms = {v for v, _ in dist.atoms}
        charged = np.array([x in atoms or (c is not None and c.a < x < c.top) for x in w])
        f0 = np.asarray(self.eval(0, w))
        if (f0[charged & np.isfinite(w)] <= 0).any():
            raise InvalidSpec("f(0, w) must be positive for mu-a.e. w")
        if self.kind == "gpaf":
            for name, fn in (("g", self.g), ("h", self.h)):
                if not _monotone(fn(w)):
                    raise InvalidSpec(f"GPAF component {name} must be monotone on the support")
        if self.envelope is not None:
            kg = np.arange(64)
            wg = np.quantile(w, np.linspace(0, 1, 64))
            lhs = self.eval(kg[:, None], wg[None, :])
            rhs = self.envelope.C * kg[:, None] + self.envelope.phi(wg)[None, :]
            if (lhs > rhs * (1 + 1e-12) + 1e-12).any():
                raise InvalidSpec("envelope f(k,w) <= C*k + phi(w) violated on the test grid")

    def auto_envelope(self, dist: WeightDistribution) -> Envelope | None:
        """The envelope implied by the model's structure, if any."""
        if self.envelope is not None:
            return self.envelope
        if self.kind == "gpaf":
            gs = ess_sup(self.g, dist)
            return Envelope(gs, self.h) if math.isfinite(gs) else None
        if self.kind in ("constant", "cayley"):
            return Envelope(0.0, self.g)
        return Envelope(0.0, _tabular_max(self.rows))

    # -- serialization --------------------------------------------------------
    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind, "ell": self.ell}
        if self.kind == "gpaf":
            d["g"], d["h"] = self.g.to_dict(), self.h.to_dict()
        elif self.kind in ("cayley", "constant"):
            d["g"] = self.g.to_dict()
        else:
            d["rows"] = [r.to_dict() for r in self.rows]
            d["extension"] = self.extension
        if self.envelope is not None:
            d["envelope"] = {"C": self.envelope.C, "phi": self.envelope.phi.to_dict()}
        return d

    def __repr__(self):
        return f"FitnessModel({self.to_dict()})"

    def with_h_scaled(self, c: float) -> "FitnessModel":
        """GPAF model with ``h`` replaced by ``c * h``."""
        if self.kind != "gpaf":
            raise InvalidSpec("h scaling applies to GPAF models only")
        from .expressions import scale
        h = const(c * self.h.params[0]) if self.h.kind == "const" else scale(c, self.h)
        return FitnessModel("gpaf", self.ell, self.g, h, envelope=self.envelope)


def _tabular_max(rows):
    # f is bounded by its largest row under both extension rules
    from .expressions import maximum
    return rows[0] if len(rows) == 1 else maximum(*rows)


def _monotone(v) -> bool:
    v = v[np.isfinite(v)]
    d = np.diff(v)
    tol = 1e-12 * max(1.0, float(np.max(np.abs(v)))) if len(v) else 0.0
    return bool((d >= -tol).all() or (d <= tol).all())


def support_grid(dist: WeightDistribution, n: int = 1025) -> np.ndarray:
    """Sorted grid of points in the support (atoms included)."""
    pts = [v for v, _ in dist.atoms]
    c = dist.continuous
    if c is not None:
        if math.isfinite(c.top):
            pts.extend(np.linspace(c.a, c.top, n)[:-1])
            # approach the top without touching it (poles of 1/(c - w) sit there)
            pts.extend(c.top - (c.top - c.a) * np.geomspace(1e-3, 1e-12, 10))
        else:
            pts.extend(np.concatenate([np.linspace(c.a, 10.0, n), np.geomspace(10.0, 1e6, 64)]))
    return np.unique(np.asarray(pts, dtype=float))


def ess_sup(fn: Expr, dist: WeightDistribution) -> float:
    """``esssup fn(W)`` for a function that is monotone on the support."""
    vals = [float(np.max(fn(np.array([v for v, _ in dist.atoms])))) if dist.atoms else -math.inf]
    c = dist.continuous
    if c is not None:
        grid = np.linspace(c.a, c.top, 257) if math.isfinite(c.top) else np.linspace(c.a, 50.0, 257)
        vals.append(float(np.max(fn(grid))))
        if math.isfinite(c.top):
            # limit from the left at the top of a continuous part
            vals.append(float(fn(np.array([c.top]))[0]))
        else:
            far = fn(np.geomspace(1e3, 1e300, 60))
            if not np.isfinite(far).all() or far[-1] > 1e100:
                return math.inf
            vals.append(float(np.max(far)))
    out = max(vals)
    return math.inf if math.isnan(out) else out


# ---------------------------------------------------------------------------
# constructors


def gpaf(g, h, ell: int = 1, envelope: Envelope | None = None) -> FitnessModel:
    """``f(k, w) = g(w)*k + h(w)``."""
    return FitnessModel("gpaf", int(ell), parse_expr(g), parse_expr(h), envelope=envelope)


def cayley(g=None, ell: int = 2) -> FitnessModel:
    """``f(0, w) = g(w)`` and ``f(k, w) = 0`` for ``k >= 1``."""
    return FitnessModel("cayley", int(ell), parse_expr(g if g is not None else identity()))


def constant_in_degree(g=None, ell: int = 1) -> FitnessModel:
    """``f(k, w) = g(w)``: weighted random recursive trees."""
    return FitnessModel("constant", int(ell), parse_expr(g if g is not None else identity()))


def tabular(rows, extension: str = "clamp", ell: int = 1) -> FitnessModel:
    return FitnessModel("tabular", int(ell), rows=tuple(parse_expr(r) for r in rows),
                        extension=extension)


_FKEYS = {
    "gpaf": {"g", "h"},
    "cayley": {"g"},
    "constant": {"g"},
    "tabular": {"rows", "extension"},
}


def from_dict(d: dict) -> FitnessModel:
    """Parse ``{"kind": "gpaf", "g": {...}, "h": {...}, "ell": 1}`` and friends."""
    if isinstance(d, FitnessModel):
        return d
    if not isinstance(d, dict) or d.get("kind") not in _FKEYS:
        raise InvalidSpec(f"unknown fitness spec {d!r}")
    kind = d["kind"]
    extra = set(d) - _FKEYS[kind] - {"kind", "ell", "envelope"}
    if extra:
        raise InvalidSpec(f"unknown keys {sorted(extra)} for fitness {kind!r}")
    env = None
    if "envelope" in d:
        e = d["envelope"]
        if not isinstance(e, dict) or set(e) != {"C", "phi"}:
            raise InvalidSpec("envelope must be {'C': number, 'phi': function}")
        env = Envelope(float(e["C"]), parse_expr(e["phi"]))
    ell = int(d.get("ell", 1))
    try:
        if kind == "gpaf":
            return FitnessModel("gpaf", ell, parse_expr(d["g"]), parse_expr(d["h"]), envelope=env)
        if kind == "tabular":
            return FitnessModel("tabular", ell, rows=tuple(parse_expr(r) for r in d["rows"]),
                                extension=d.get("extension", "clamp"), envelope=env)
        return FitnessModel(kind, ell, parse_expr(d["g"]), envelope=env)
    except KeyError as exc:
        raise InvalidSpec(f"fitness {kind!r} missing {exc}") from None


FitnessModel.from_dict = staticmethod(from_dict)
