"""Weight measures: sampling, expectations and support metadata.

A :class:`WeightDistribution` is a mixture of finitely many atoms and at most
one absolutely continuous part. Expectations of functionals are exact sums on
the atoms and Gauss-Legendre quadrature on the continuous part. The upper end
of a continuous part is treated with an exponential change of variables
``w = top - d0 * exp(-s)`` so that integrable singularities at the top of the
support (the usual situation in the condensation formulas) converge, and
non-integrable ones are recognised as divergent instead of overflowing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidSpec, NonConvergentQuadrature


@dataclass(frozen=True)
class QuadratureSpec:
    nodes: int = 256
    rtol: float = 1e-9
    overflow: float = 1e12
    # per unit-length panel of the exponential tail substitution
    tail_nodes: int = 16
    divergence_ratio: float = 0.99


DEFAULT_QUAD = QuadratureSpec()


@lru_cache(maxsize=32)
def _gl(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


# ---------------------------------------------------------------------------
# measurable sets


@dataclass(frozen=True)
class WeightSet:
    """Finite union of half-open intervals ``[lo, hi)`` plus explicit atoms."""

    intervals: tuple = ()
    atoms: tuple = ()
    label: str | None = None

    def contains(self, w):
        w = np.asarray(w, dtype=float)
        out = np.zeros(w.shape, dtype=bool)
        for lo, hi in self.intervals:
            out |= (w >= lo) & (w < hi)
        for a in self.atoms:
            out |= w == a
        return out

    @property
    def lo(self) -> float:
        return min([i[0] for i in self.intervals] + list(self.atoms))

    @property
    def hi(self) -> float:
        return max([i[1] for i in self.intervals] + list(self.atoms))

    def __str__(self):
        if self.label:
            return self.label
        parts = [f"[{lo:g},{hi:g})" for lo, hi in self.intervals]
        parts += [f"{{{a:g}}}" for a in self.atoms]
        return " U ".join(parts)

    def to_dict(self) -> dict:
        d: dict = {}
        if self.intervals:
            d["intervals"] = [list(i) for i in self.intervals]
        if self.atoms:
            d["atoms"] = list(self.atoms)
        return d

    @classmethod
    def from_dict(cls, d) -> "WeightSet":
        if isinstance(d, (list, tuple)) and len(d) == 2:
            return interval(*d)
        if not isinstance(d, dict) or set(d) - {"intervals", "atoms", "label"}:
            raise InvalidSpec(f"bad weight set {d!r}")
        ivs = tuple((float(lo), float(hi)) for lo, hi in d.get("intervals", ()))
        for lo, hi in ivs:
            if not lo < hi:
                raise InvalidSpec(f"empty interval [{lo}, {hi})")
        return cls(ivs, tuple(float(a) for a in d.get("atoms", ())), d.get("label"))


def interval(lo: float, hi: float) -> WeightSet:
    if not lo < hi:
        raise InvalidSpec(f"empty interval [{lo}, {hi})")
    return WeightSet(((float(lo), float(hi)),))


def atom(x: float) -> WeightSet:
    return WeightSet((), (float(x),))


REALS = WeightSet(((0.0, math.inf),))


def restrict_indicator(B: WeightSet, phi: Callable) -> Callable:
    """Return ``w -> phi(w) * 1_B(w)``."""

    def restricted(w):
        w = np.asarray(w, dtype=float)
        return np.where(B.contains(w), phi(w), 0.0)

    return restricted


# ---------------------------------------------------------------------------
# continuous parts


class _Continuous:
    """Absolutely continuous part of a weight law on ``[a, top]``.

    ``mass`` is its total probability; ``top`` may be below the density's own
    upper end when the part has been clipped by a truncation.
    """

    a: float
    b: float

    def __init__(self, top=None):
        self.top = self.b if top is None else float(top)

    @property
    def mass(self) -> float:
        return self.cdf(self.top) - self.cdf(self.a)

    def clipped(self, top):
        c = self._copy()
        c.top = min(float(top), self.top)
        return c

    def _copy(self):
        c = object.__new__(type(self))
        c.__dict__.update(self.__dict__)
        return c

    def rule(self, lo, hi, n, tail_nodes, with_tail):
        """Nodes, weights and panel ids for integrating over ``[lo, hi]``.

        Panel id -1 is the regular part; ids 0, 1, ... are successive unit
        panels of the tail substitution at ``self.top``.
        """
        lo = max(lo, self.a)
        hi = min(hi, self.top)
        if not lo < hi:
            return np.empty(0), np.empty(0), np.empty(0, dtype=int)
        if hi < self.top or not with_tail:
            x, w = _affine_gl(lo, hi, n)
            return x, w * self.density(x), np.full(n, -1)
        mid = lo + 0.5 * (hi - lo)
        xb, wb = _affine_gl(lo, mid, n)
        d0 = hi - mid
        smax = math.log(d0 / (64.0 * np.spacing(max(abs(hi), 1e-300)))) if d0 > 0 else 0.0
        npan = max(1, int(math.floor(smax)))
        xs, ws = _gl(tail_nodes)
        s = (np.arange(npan)[:, None] + 0.5 * (xs[None, :] + 1.0)).ravel()
        sw = np.tile(0.5 * ws, npan)
        d = d0 * np.exp(-s)
        xt = hi - d
        wt = sw * d * self.density(xt)
        nodes = np.concatenate([xb, xt])
        weights = np.concatenate([wb * self.density(xb), wt])
        panels = np.concatenate([np.full(n, -1), np.repeat(np.arange(npan), tail_nodes)])
        return nodes, weights, panels

    def to_dict(self):  # pragma: no cover - overridden
        raise NotImplementedError


def _affine_gl(lo, hi, n):
    x, w = _gl(n)
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w


class _Uniform(_Continuous):
    def __init__(self, a, b, top=None):
        self.a, self.b = float(a), float(b)
        super().__init__(top)

    def density(self, w):
        w = np.asarray(w, dtype=float)
        return np.where((w >= self.a) & (w <= self.b), 1.0 / (self.b - self.a), 0.0)

    def cdf(self, w):
        return float(np.clip((w - self.a) / (self.b - self.a), 0.0, 1.0))

    def draw(self, rng, size):
        return rng.uniform(self.a, self.b, size)


class _Polynomial(_Continuous):
    def __init__(self, coeffs, a, b, top=None):
        self.coeffs = tuple(float(c) for c in coeffs)
        self.a, self.b = float(a), float(b)
        self.poly = np.polynomial.Polynomial(self.coeffs)
        self.anti = self.poly.integ(lbnd=self.a)
        super().__init__(top)

    def density(self, w):
        w = np.asarray(w, dtype=float)
        return np.where((w >= self.a) & (w <= self.b), self.poly(w), 0.0)

    def cdf(self, w):
        return float(self.anti(min(max(w, self.a), self.b)))

    def draw(self, rng, size):
        u = rng.random(size)
        lo = np.full(np.shape(u), self.a)
        hi = np.full(np.shape(u), self.b)
        # bisection on the CDF; 64 halvings reach float resolution on [a, b]
        for _ in range(64):
            mid = 0.5 * (lo + hi)
            below = self.anti(mid) < u
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)


class _Exponential(_Continuous):
    """Integrated in probability space ``u = F(w)`` so the tail is handled
    by the same substitution at ``u = 1``."""

    def __init__(self, rate, top=None):
        self.rate = float(rate)
        self.a, self.b = 0.0, math.inf
        super().__init__(top)

    def density(self, w):
        w = np.asarray(w, dtype=float)
        return np.where(w >= 0, self.rate * np.exp(-self.rate * w), 0.0)

    def cdf(self, w):
        return float(-np.expm1(-self.rate * max(w, 0.0)))

    def draw(self, rng, size):
        return rng.exponential(1.0 / self.rate, size)

    def rule(self, lo, hi, n, tail_nodes, with_tail):
        lo = max(lo, 0.0)
        hi = min(hi, self.top)
        if not lo < hi:
            return np.empty(0), np.empty(0), np.empty(0, dtype=int)
        ulo, uhi = self.cdf(lo), self.cdf(hi)
        if math.isfinite(hi):
            u, w = _affine_gl(ulo, uhi, n)
            return -np.log1p(-u) / self.rate, w, np.full(n, -1)
        mid = 0.5 * (ulo + 1.0)
        ub, wb = _affine_gl(ulo, mid, n)
        d0 = 1.0 - mid
        npan = 64
        xs, ws = _gl(tail_nodes)
        s = (np.arange(npan)[:, None] + 0.5 * (xs[None, :] + 1.0)).ravel()
        sw = np.tile(0.5 * ws, npan)
        # 1 - u = d0 * exp(-s)  =>  w = (s - log d0) / rate, exactly
        xt = (s - math.log(d0)) / self.rate
        wt = sw * d0 * np.exp(-s)
        nodes = np.concatenate([-np.log1p(-ub) / self.rate, xt])
        weights = np.concatenate([wb, wt])
        panels = np.concatenate([np.full(n, -1), np.repeat(np.arange(npan), tail_nodes)])
        return nodes, weights, panels


# ---------------------------------------------------------------------------
# the distribution


@dataclass(frozen=True, eq=False)
class WeightDistribution:
    """The weight law ``mu`` of a model.

    Build instances through the constructors :func:`point_mass`,
    :func:`finite_atoms`, :func:`uniform`, :func:`polynomial_density`,
    :func:`exponential`, :func:`truncated_plus`, :func:`truncated_minus`, or
    from a config dict via :meth:`from_dict`.
    """

    kind: str
    params: dict
    atoms: tuple = ()  # ((value, prob), ...)
    continuous: _Continuous | None = field(default=None, repr=False)
    base: "WeightDistribution | None" = field(default=None, repr=False)

    # -- metadata -----------------------------------------------------------
    @property
    def support_sup(self) -> float:
        tops = [v for v, _ in self.atoms]
        if self.continuous is not None:
            tops.append(self.continuous.top)
        return max(tops)

    @property
    def support_inf(self) -> float:
        lows = [v for v, _ in self.atoms]
        if self.continuous is not None:
            lows.append(self.continuous.a)
        return min(lows)

    @property
    def has_atom_at_sup(self) -> bool:
        top = self.support_sup
        return any(v == top for v, _ in self.atoms)

    @property
    def is_bounded(self) -> bool:
        return math.isfinite(self.support_sup)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        d.update(self.params)
        if self.base is not None:
            d["base"] = self.base.to_dict()
        return d

    def __repr__(self):
        return f"WeightDistribution({self.to_dict()})"

    # -- sampling -----------------------------------------------------------
    def sample(self, rng: np.random.Generator, size=None):
        """Draw from ``mu``; deterministic given the generator state."""
        if self.kind == "point":
            return self.params["value"] if size is None else np.full(size, self.params["value"])
        if self.kind == "atoms":
            vals = np.array([v for v, _ in self.atoms])
            probs = np.array([p for _, p in self.atoms])
            out = rng.choice(vals, size=size, p=probs)
            return float(out) if size is None else out
        if self.kind in ("truncated_plus", "truncated_minus"):
            x = np.asarray(self.base.sample(rng, size), dtype=float)
            cut = self.base.support_sup - self.params["eps"]
            if self.kind == "truncated_minus":
                out = np.minimum(x, cut)
            else:
                out = np.where(x > cut, self.base.support_sup, x)
            return float(out) if size is None else out
        out = self.continuous.draw(rng, size)
        return float(out) if size is None else out

    # -- integration --------------------------------------------------------
    def mass(self, B: WeightSet) -> float:
        """``mu(B)``."""
        return expect(self, _one, on=B)

    def quadrature_rule(self, on: WeightSet | None = None, nodes: int = 256, tail_nodes: int = 16):
        """Nodes and weights (atoms included) of the rule used by :func:`expect`."""
        xs, ws = [], []
        for v, p in self._atoms_in(on):
            xs.append(np.array([v]))
            ws.append(np.array([p]))
        for x, w, _ in self._continuous_rules(on, nodes, tail_nodes):
            xs.append(x)
            ws.append(w)
        if not xs:
            return np.empty(0), np.empty(0)
        return np.concatenate(xs), np.concatenate(ws)

    def _atoms_in(self, on):
        if on is None:
            return list(self.atoms)
        return [(v, p) for v, p in self.atoms if on.contains(v)]

    def _continuous_rules(self, on, n, tail_nodes):
        c = self.continuous
        if c is None:
            return []
        ivs = [(c.a, c.top)] if on is None else on.intervals
        out = []
        for lo, hi in ivs:
            with_tail = hi >= c.top
            x, w, pan = c.rule(lo, hi, n, tail_nodes, with_tail)
            if len(x):
                out.append((x, w, pan))
        return out


def _one(w):
    return np.ones_like(np.asarray(w, dtype=float))


def expect(dist: WeightDistribution, phi: Callable, quad: QuadratureSpec = DEFAULT_QUAD,
           on: WeightSet | None = None) -> float:
    """``E[phi(W) 1_on(W)]``.

    Atoms are summed exactly. The continuous part is integrated at two
    refinement levels (``quad.nodes`` and twice that); the finer value is
    returned when they agree to ``quad.rtol``. Returns ``math.inf`` when the
    integral is recognised as divergent.

    Raises NonConvergentQuadrature when the levels disagree without a
    divergence signature.
    """
    atoms = dist._atoms_in(on)
    atom_terms = []
    for v, p in atoms:
        val = float(phi(np.array([v]))[0])
        if math.isnan(val):
            raise NonConvergentQuadrature(f"integrand is NaN at atom {v}")
        atom_terms.append(p * val)
    if any(math.isinf(x) for x in atom_terms):
        return math.inf if any(x == math.inf for x in atom_terms) else -math.inf
    atom_sum = math.fsum(atom_terms)
    if dist.continuous is None:
        return atom_sum

    levels = []
    for n, tn in ((quad.nodes, quad.tail_nodes), (2 * quad.nodes, 2 * quad.tail_nodes)):
        total = 0.0
        for x, w, pan in dist._continuous_rules(on, n, tn):
            val = _integrate_pieces(phi, x, w, pan, quad)
            if math.isinf(val):
                return val
            total += val
        levels.append(total)
    coarse, fine = levels
    if abs(coarse - fine) > quad.rtol * abs(fine) + 1e-15:
        raise NonConvergentQuadrature(
            f"quadrature levels disagree: {coarse!r} vs {fine!r} (rtol {quad.rtol})")
    return atom_sum + fine


def _integrate_pieces(phi, x, w, pan, quad):
    vals = np.asarray(phi(x), dtype=float)
    if vals.shape != x.shape:
        vals = np.broadcast_to(vals, x.shape)
    live = w != 0
    bad = live & ~np.isfinite(vals)
    if bad.any():
        if np.isnan(vals[bad]).any():
            raise NonConvergentQuadrature("integrand is NaN on the support")
        return math.inf if (vals[bad] > 0).all() else -math.inf
    contrib = np.where(live, vals * w, 0.0)
    body = float(np.sum(contrib[pan < 0]))
    if not (pan >= 0).any():
        return body
    npan = int(pan.max()) + 1
    panels = np.bincount(pan[pan >= 0], weights=contrib[pan >= 0], minlength=npan)
    total = body + float(np.sum(panels))
    if abs(total) > quad.overflow:
        return math.inf if total > 0 else -math.inf
    last, prev = abs(panels[-1]), abs(panels[-2]) if npan > 1 else 0.0
    if prev > 0 and last > 0:
        r = last / prev
        if r >= quad.divergence_ratio and last > quad.rtol * max(abs(total), 1e-300):
            return math.inf if panels[-1] > 0 else -math.inf
        if r < 1.0:
            total += float(panels[-1]) * r / (1.0 - r)
    return total


# ---------------------------------------------------------------------------
# constructors


def point_mass(c: float) -> WeightDistribution:
    c = float(c)
    if c < 0:
        raise InvalidSpec("weights are nonnegative")
    return WeightDistribution("point", {"value": c}, ((c, 1.0),))


def finite_atoms(values: Sequence[float], probs: Sequence[float]) -> WeightDistribution:
    values = [float(v) for v in values]
    probs = [float(p) for p in probs]
    if len(values) != len(probs) or not values:
        raise InvalidSpec("values and probs must be non-empty and of equal length")
    if any(v < 0 for v in values):
        raise InvalidSpec("weights are nonnegative")
    if any(not 0 < p <= 1 for p in probs) or abs(math.fsum(probs) - 1.0) > 1e-12:
        raise InvalidSpec("atom probabilities must lie in (0, 1] and sum to 1")
    merged: dict = {}
    for v, p in zip(values, probs):
        merged[v] = merged.get(v, 0.0) + p
    atoms = tuple(sorted(merged.items()))
    return WeightDistribution("atoms", {"values": values, "probs": probs}, atoms)


def uniform(a: float = 0.0, b: float = 1.0) -> WeightDistribution:
    if not 0 <= a < b or not math.isfinite(b):
        raise InvalidSpec("uniform needs 0 <= a < b < inf")
    return WeightDistribution("uniform", {"a": float(a), "b": float(b)}, (), _Uniform(a, b))


def polynomial_density(coeffs: Sequence[float], a: float = 0.0, b: float = 1.0) -> WeightDistribution:
    """Density ``sum_i coeffs[i] * w**i`` on ``[a, b]``."""
    if not 0 <= a < b or not math.isfinite(b):
        raise InvalidSpec("polynomial density needs 0 <= a < b < inf")
    part = _Polynomial(coeffs, a, b)
    grid = np.linspace(a, b, 1025)
    if (part.poly(grid) < -1e-12).any():
        raise InvalidSpec("polynomial density is negative on its support")
    if abs(part.cdf(b) - 1.0) > 1e-12:
        raise InvalidSpec(f"polynomial density integrates to {part.cdf(b)!r}, not 1")
    return WeightDistribution("polynomial",
                              {"coeffs": [float(c) for c in coeffs], "a": float(a), "b": float(b)},
                              (), part)


def exponential(rate: float = 1.0) -> WeightDistribution:
    if not rate > 0:
        raise InvalidSpec("exponential rate must be positive")
    return WeightDistribution("exponential", {"rate": float(rate)}, (), _Exponential(rate))


def _truncate(base: WeightDistribution, eps: float, plus: bool) -> WeightDistribution:
    top = base.support_sup
    if not math.isfinite(top):
        raise InvalidSpec("truncation needs a bounded base distribution")
    if not 0 < eps < top - base.support_inf:
        raise InvalidSpec("eps must lie strictly inside the support")
    cut = top - eps
    atoms: dict = {}
    moved = 0.0
    for v, p in base.atoms:
        keep = v <= cut if plus else v < cut
        if keep:
            atoms[v] = atoms.get(v, 0.0) + p
        else:
            moved += p
    cont = None
    if base.continuous is not None:
        c = base.continuous
        moved += c.cdf(c.top) - c.cdf(cut)
        cont = c.clipped(cut)
        if cont.mass <= 0:
            cont = None
    target = top if plus else cut
    if moved > 0:
        atoms[target] = atoms.get(target, 0.0) + moved
    kind = "truncated_plus" if plus else "truncated_minus"
    return WeightDistribution(kind, {"eps": float(eps)}, tuple(sorted(atoms.items())), cont, base)


def truncated_plus(base: WeightDistribution, eps: float) -> WeightDistribution:
    """Law of ``W 1{W <= w* - eps} + w* 1{W > w* - eps}``."""
    return _truncate(base, eps, plus=True)


def truncated_minus(base: WeightDistribution, eps: float) -> WeightDistribution:
    """Law of ``min(W, w* - eps)``."""
    return _truncate(base, eps, plus=False)


_KEYS = {
    "point": {"value"},
    "atoms": {"values", "probs"},
    "uniform": {"a", "b"},
    "polynomial": {"coeffs", "a", "b"},
    "exponential": {"rate"},
    "truncated_plus": {"base", "eps"},
    "truncated_minus": {"base", "eps"},
}


def from_dict(d: dict) -> WeightDistribution:
    """Parse a tagged distribution spec such as ``{"kind": "uniform", "a": 0, "b": 1}``."""
    if isinstance(d, WeightDistribution):
        return d
    if not isinstance(d, dict) or d.get("kind") not in _KEYS:
        raise InvalidSpec(f"unknown weight distribution spec {d!r}")
    kind = d["kind"]
    extra = set(d) - _KEYS[kind] - {"kind"}
    if extra:
        raise InvalidSpec(f"unknown keys {sorted(extra)} for distribution {kind!r}")
    try:
        if kind == "point":
            return point_mass(d["value"])
        if kind == "atoms":
            return finite_atoms(d["values"], d["probs"])
        if kind == "uniform":
            return uniform(d.get("a", 0.0), d.get("b", 1.0))
        if kind == "polynomial":
            return polynomial_density(d["coeffs"], d.get("a", 0.0), d.get("b", 1.0))
        if kind == "exponential":
            return exponential(d.get("rate", 1.0))
        base = from_dict(d["base"])
        return _truncate(base, float(d["eps"]), plus=kind == "truncated_plus")
    except KeyError as exc:
        raise InvalidSpec(f"distribution {kind!r} missing {exc}") from None


WeightDistribution.from_dict = staticmethod(from_dict)


# ---------------------------------------------------------------------------
# bins


def partition_bins(dist: WeightDistribution, n: int) -> tuple:
    """``n`` equal half-open bins over the support, plus an atom bin at ``w*``
    when the law has one there."""
    lo, top = dist.support_inf, dist.support_sup
    if not math.isfinite(top):
        raise InvalidSpec("partition_bins needs bounded support")
    if lo == top:
        return (atom(top),)
    edges = np.linspace(lo, top, n + 1)
    bins = [interval(a, b) for a, b in zip(edges[:-1], edges[1:])]
    if dist.has_atom_at_sup:
        bins.append(atom(top))
    else:
        # samples are < top almost surely; keep the float edge inside the last bin
        last = bins[-1].intervals[0]
        bins[-1] = interval(last[0], float(np.nextafter(top, math.inf)))
    return tuple(bins)


def parse_bins(spec, dist: WeightDistribution | None = None) -> tuple:
    """Bins from config: ``{"partition": n}`` or a list of weight-set specs."""
    if isinstance(spec, dict) and set(spec) == {"partition"}:
        if dist is None:
            raise InvalidSpec("partition bins need the weight distribution")
        return partition_bins(dist, int(spec["partition"]))
    if isinstance(spec, (list, tuple)):
        return tuple(WeightSet.from_dict(s) for s in spec)
    raise InvalidSpec(f"bad bins spec {spec!r}")
