"""Shared oracle implementations for the test suite.

These deliberately re-derive quantities through routes independent of the
library code they check (enumeration, series, replay), so agreement is
evidence rather than tautology.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np


def series_return_probability(rate: float, t: float, terms: int = 200) -> float:
    """P(rate-`rate` 1-d walk is back at 0 at time t) via the jump-count series."""
    total = 0.0
    log_rt = math.log(rate * t) if rate * t > 0 else -math.inf
    for k in range(0, terms, 2):
        if rate * t == 0.0:
            total = 1.0
            break
        log_term = -rate * t + k * log_rt - math.lgamma(k + 1)
        total += math.exp(log_term) * math.comb(k, k // 2) / 2.0**k
    return total


def walk_positions_at(path, times):
    return [path.position(t) for t in times]


def brute_force_extinction(path, field) -> float | None:
    """Scan every disaster at every visited site against the cadlag position."""
    visited = {path.start_site} | {s for _t, s in path.jumps}
    hits = []
    for site in visited:
        for t in field.stream_times(site, path.horizon):
            if path.position(float(t)) == site:
                hits.append(float(t))
    return min(hits) if hits else None


def hinge_majorized(mu, nu, tol: float = 1e-12) -> bool:
    """mu majorized by nu via the hinge-function characterization."""
    mu = list(mu)
    nu = list(nu)
    cuts = sorted(set(mu) | set(nu))
    for c in cuts:
        lhs = sum(max(x - c, 0.0) for x in mu)
        rhs = sum(max(x - c, 0.0) for x in nu)
        if lhs > rhs + tol:
            return False
    return abs(sum(mu) - sum(nu)) <= tol


def t_transform_majorized(mu, nu, tol: float = 1e-12) -> bool:
    """mu majorized by nu iff Robin-Hood moves drive nu's vector onto mu's."""
    x = np.sort(np.asarray(mu, dtype=np.float64))[::-1].copy()
    y = np.sort(np.asarray(nu, dtype=np.float64))[::-1].copy()
    if abs(x.sum() - y.sum()) > tol:
        return False
    for _ in range(4 * len(x) ** 2):
        y = np.sort(y)[::-1]
        diff = y - x
        if np.abs(diff).max() <= tol:
            return True
        over = np.flatnonzero(diff > tol)
        under = np.flatnonzero(diff < -tol)
        if not len(over) or not len(under):
            return False
        a, b = over[0], under[0]
        if a > b:
            return False  # nu's surplus sits below its deficit: not majorized
        move = min(diff[a], -diff[b])
        y[a] -= move
        y[b] += move
    return False


def convex_family_consistent(mu, nu, tol: float = 1e-9) -> bool:
    """Necessary conditions from the convex family x**(-delta) on (0, 1]."""
    mu = np.asarray(mu)
    nu = np.asarray(nu)
    if (mu <= 0).any() or (nu <= 0).any():
        return True  # family not applicable
    for delta in np.arange(0.1, 0.95, 0.1):
        if (mu**-delta).sum() > (nu**-delta).sum() + tol:
            return False
    return True


def exact_parity_enumeration(weights, k: int) -> dict:
    """Exact parity-pattern law by enumerating all bin assignments (rationals)."""
    from itertools import product

    wf = [Fraction(w) for w in weights]
    out: dict = {}
    for assign in product(range(len(weights)), repeat=k):
        pr = Fraction(1)
        for a in assign:
            pr *= wf[a]
        bits = tuple(sum(1 for a in assign if a == j) % 2 for j in range(len(weights)))
        out[bits] = out.get(bits, Fraction(0)) + pr
    return out
