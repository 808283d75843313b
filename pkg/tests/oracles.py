"""Independent reference computations used to freeze expected values.

Nothing here imports the package: each function recomputes a target from
its own closed form, by brute-force enumeration, or with a naive loop.
"""
from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np
from scipy import integrate, optimize


def bb_m(lam: float) -> float:
    """m(lambda) for f(i,w) = (i+1)w with uniform weights: -1 + lam*log(lam/(lam-1))."""
    return -1.0 + lam * math.log(lam / (lam - 1.0))


def bb_alpha() -> float:
    return optimize.brentq(lambda x: bb_m(x) - 1.0, 1.0 + 1e-12, 10.0, xtol=1e-15, rtol=1e-15)


def port_pk(k):
    k = np.asarray(k, dtype=float)
    return 4.0 / ((k + 1) * (k + 2) * (k + 3))


def wrrt_pk(k):
    return 0.5 ** (np.asarray(k, dtype=float) + 1)


def integrate_density(fn, density, a, b):
    """Adaptive quadrature (scipy) as an independent route to an expectation."""
    val, _ = integrate.quad(lambda w: fn(w) * density(w), a, b, limit=200)
    return val


def gpaf_degree_law_direct(g, h, c, weights, probs, kmax):
    """p_k = sum_w P(w) * c/(f(k,w)+c) * prod_{i<k} f(i,w)/(f(i,w)+c), plain loops."""
    out = np.zeros(kmax + 1)
    for w, pw in zip(weights, probs):
        prod = 1.0
        for k in range(kmax + 1):
            f = g(w) * k + h(w)
            out[k] += pw * prod * c / (f + c)
            prod *= f / (f + c)
    return out


def root_degree_law_port(t: int) -> dict:
    """Exact law of the root's out-degree after ``t`` events of f(k) = k + 1,
    by enumerating every attachment sequence with its probability."""
    law: dict = {}

    def rec(step, degs, prob):
        if step == t:
            law[degs[0]] = law.get(degs[0], Fraction(0)) + prob
            return
        z = sum(d + 1 for d in degs)
        for j, d in enumerate(degs):
            nd = list(degs)
            nd[j] += 1
            rec(step + 1, nd + [0], prob * Fraction(d + 1, z))

    rec(0, [0], Fraction(1))
    return law


def root_degree_law_uniform(t: int) -> dict:
    """Root out-degree law of the uniform recursive tree after ``t`` events."""
    law: dict = {}
    for seq in itertools.product(*[range(n) for n in range(1, t + 1)]):
        # seq[s] is the parent chosen at event s+1 among s+1 vertices
        d = sum(1 for p in seq if p == 0)
        law[d] = law.get(d, Fraction(0)) + Fraction(1, math.factorial(t))
    return law


def linear_scan_sample(weights, u):
    """Smallest i with prefix_sum(i) > u*total."""
    total = math.fsum(weights)
    target = u * total
    s = 0.0
    for i, w in enumerate(weights):
        s += w
        if s > target and w > 0:
            return i
    for i in range(len(weights) - 1, -1, -1):
        if weights[i] > 0:
            return i
    raise ValueError("all zero")


def naive_grow(weights_fn, f, t, rng, ell=1):
    """Attachment rule written out with rng.choice over explicit probabilities."""
    w = [weights_fn(rng)]
    k = [0]
    parents = [-1]
    for _ in range(t):
        fit = np.array([f(k[v], w[v]) for v in range(len(w))])
        j = int(rng.choice(len(w), p=fit / fit.sum()))
        k[j] += 1
        for _ in range(ell):
            parents.append(j)
            w.append(weights_fn(rng))
            k.append(0)
    return np.array(parents), np.array(k), np.array(w)
