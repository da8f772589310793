"""Space-time boxes, orthant exit counters, and correlation checks.

A box is [0, T] x {-L..L}^d (optionally shifted).  Its boundary is the top
slice at time T plus the 2d faces where one coordinate equals +-L; the
bottom slice is not boundary.  The top splits into 2^d orthants (sign of
the first coordinate, then signs of the rest) and each face into 2^(d-1)
orthants, with sign(0) = +1 throughout.

Exit counters follow first-hit semantics on the particle tree: a particle's
trajectory includes its ancestors' path, so a lineage contributes at most
one face hit, and only particles whose whole ancestral path avoided the
boundary before T are counted on the top.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import product as iter_product
from typing import Callable, Iterable, Mapping

import numpy as np

from .brw import BRWParams, Box, Caps, Event, simulate
from .env import DisasterField
from .rng import derive_seed

Site = tuple[int, ...]


def sign_of(v: int) -> int:
    """Sign with sign(0) = +1."""
    return 1 if v >= 0 else -1


@dataclass(frozen=True)
class SpaceTimeBox:
    half_width: int
    height: float
    dimension: int
    t0: float = 0.0
    x0: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.half_width < 1 or self.height <= 0.0 or self.dimension < 1:
            raise ValueError("need half_width >= 1, height > 0, dimension >= 1")
        if self.x0 is None:
            object.__setattr__(self, "x0", (0,) * self.dimension)
        elif len(self.x0) != self.dimension:
            raise ValueError("offset dimension mismatch")

    @property
    def t_end(self) -> float:
        return self.t0 + self.height

    def rel(self, site: Site) -> tuple[int, ...]:
        return tuple(c - o for c, o in zip(site, self.x0))

    def interior_region(self) -> Box:
        """Sites strictly inside (never on a face); leaving it means hitting a face."""
        w = self.half_width - 1
        return Box(lo=tuple(o - w for o in self.x0), hi=tuple(o + w for o in self.x0))


@dataclass(frozen=True)
class ExitRegion:
    kind: str  # "top" or "face"
    axis: int  # 0 for top; face normal axis otherwise
    sign: int  # sign of the distinguished coordinate
    theta: tuple[int, ...]  # orthant signs of the remaining d-1 coordinates

    def __post_init__(self):
        if self.kind not in ("top", "face"):
            raise ValueError("kind must be 'top' or 'face'")
        if self.kind == "top" and self.axis != 0:
            raise ValueError("top regions are signed along the first axis")
        if self.sign not in (-1, 1) or any(t not in (-1, 1) for t in self.theta):
            raise ValueError("signs must be +-1")


def top_regions(dimension: int) -> list[ExitRegion]:
    return [ExitRegion("top", 0, s, th)
            for s in (1, -1)
            for th in iter_product((1, -1), repeat=dimension - 1)]


def face_regions(dimension: int) -> list[ExitRegion]:
    return [ExitRegion("face", ax, s, th)
            for ax in range(dimension)
            for s in (1, -1)
            for th in iter_product((1, -1), repeat=dimension - 1)]


def classify_exit(box: SpaceTimeBox, t: float, site: Site) -> ExitRegion:
    """Unique boundary region containing (t, site).

    Precondition: the point lies on the boundary (t == t_end with the site
    inside the closed box, or t in [t0, t_end) with sup-norm distance exactly
    half_width).  At edges shared by several faces the smallest axis wins,
    and the top takes precedence at t == t_end; both ties are unreachable by
    first hits of lattice paths.
    """
    rel = box.rel(site)
    L = box.half_width
    if any(abs(c) > L for c in rel):
        raise ValueError("site outside the box")
    if t == box.t_end:
        return ExitRegion("top", 0, sign_of(rel[0]), tuple(sign_of(c) for c in rel[1:]))
    if not (box.t0 <= t < box.t_end):
        raise ValueError("time outside the box")
    for ax, c in enumerate(rel):
        if abs(c) == L:
            theta = tuple(sign_of(rel[j]) for j in range(box.dimension) if j != ax)
            return ExitRegion("face", ax, sign_of(c), theta)
    raise ValueError("point is interior, not on the boundary")


@dataclass
class ExitCounts:
    box: SpaceTimeBox
    top: dict
    face: dict

    @property
    def total_top(self) -> int:
        return sum(self.top.values())

    @property
    def total_face(self) -> int:
        return sum(self.face.values())

    def top_vector(self) -> np.ndarray:
        return np.array([self.top[r] for r in top_regions(self.box.dimension)], dtype=np.int64)

    def face_vector(self) -> np.ndarray:
        return np.array([self.face[r] for r in face_regions(self.box.dimension)], dtype=np.int64)


def exit_counts(events: Iterable[Event], box: SpaceTimeBox,
                log_horizon: float | None = None) -> ExitCounts:
    """First-hit face counts and untouched-survivor top counts from a log.

    The log must cover [box.t0, box.t_end]; pass the simulation horizon as
    `log_horizon` to have that verified.  Children inherit the ancestral
    first-touch, so a lineage that touched the boundary contributes nothing
    afterwards; a shell landing exactly at t_end is not a strict-past touch
    and the particle counts on the top.
    """
    if log_horizon is not None and log_horizon < box.t_end:
        raise ValueError("event log ends before the box does")
    L = box.half_width
    tops = {r: 0 for r in top_regions(box.dimension)}
    faces = {r: 0 for r in face_regions(box.dimension)}
    pos: dict = {}
    touched: dict = {}

    def on_shell(site: Site) -> bool:
        return max(abs(c) for c in box.rel(site)) == L

    def outside(site: Site) -> bool:
        return max(abs(c) for c in box.rel(site)) > L

    started = False

    def open_window() -> None:
        # standing starts on the shell when the observation window opens
        for pid, site in pos.items():
            if touched[pid] is None and on_shell(site):
                faces[classify_exit(box, box.t0, site)] += 1
                touched[pid] = box.t0

    def note_arrival(pid, site: Site, time: float) -> None:
        if started and time < box.t_end and touched.get(pid) is None \
                and (on_shell(site) or outside(site)):
            if not outside(site):
                faces[classify_exit(box, time, site)] += 1
            touched[pid] = time

    for ev in events:
        if ev.time > box.t_end:
            break
        if not started and ev.time >= box.t0:
            started = True
            open_window()
        if ev.kind == "birth":
            parent = ev.pid[:-1]
            pos[ev.pid] = ev.site
            touched[ev.pid] = touched.get(parent) if len(ev.pid) > 1 else None
            note_arrival(ev.pid, ev.site, ev.time)
        elif ev.kind in ("jump", "leave"):
            pos[ev.pid] = ev.site
            note_arrival(ev.pid, ev.site, ev.time)
            if ev.kind == "leave":
                pos.pop(ev.pid, None)
        elif ev.kind in ("branch", "disaster"):
            pos.pop(ev.pid, None)
    if not started:
        started = True
        open_window()
    for pid, site in pos.items():
        if touched.get(pid) is None and not outside(site):
            tops[classify_exit(box, box.t_end, site)] += 1
    return ExitCounts(box=box, top=tops, face=faces)


# ---------------------------------------------------------------------------
# positive-correlation (FKG) test
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CovarianceEstimate:
    cov: float
    std_err: float
    mean_f: float
    mean_g: float
    n_reps: int


def fkg_test(params: BRWParams, eta1: Mapping[Site, int], eta2: Mapping[Site, int],
             box: SpaceTimeBox, f: Callable, g: Callable, n_reps: int, seed: int,
             *, caps: Caps = Caps(max_alive=50_000, max_events=5_000_000)) -> CovarianceEstimate:
    """Covariance of monotone exit functionals of two trees sharing environments.

    Per replica one environment is drawn; two independent trees start from
    eta1 and eta2 in it, and f, g (nonnegative, coordinate-wise nondecreasing
    in the exit-count vectors; not checked) are evaluated on their counters.
    Shared disasters are the only coupling, and they hurt both trees, so the
    covariance target is nonnegative.  Both trees run truncated to the box
    interior, which leaves exit counts untouched: a lineage is dead to the
    counters once it hits the shell.
    """
    if box.t0 != 0.0:
        raise ValueError("fkg_test expects a box based at time 0")
    for eta in (eta1, eta2):
        for site, cnt in eta.items():
            if cnt > 0 and max(abs(c) for c in box.rel(site)) >= box.half_width:
                raise ValueError("initial configurations must start strictly inside the box")
    region = box.interior_region()
    fs = np.empty(n_reps)
    gs = np.empty(n_reps)
    for i in range(n_reps):
        fld = DisasterField(derive_seed(seed, "fkg-env", i), params.disaster_rate, params.dimension)
        out = []
        for label, eta in (("a", eta1), ("b", eta2)):
            res = simulate(params, eta, fld, 0.0, box.t_end,
                           derive_seed(seed, "fkg-tree", label, i), trunc=region, caps=caps)
            if res.capped:
                raise RuntimeError("cap tripped inside fkg_test; shrink the box or rates")
            out.append(exit_counts(res.events, box))
        fs[i] = f(out[0].top_vector(), out[0].face_vector())
        gs[i] = g(out[1].top_vector(), out[1].face_vector())
    h = (fs - fs.mean()) * (gs - gs.mean())
    cov = float(h.sum() / (n_reps - 1)) if n_reps > 1 else 0.0
    se = float(h.std(ddof=1) / math.sqrt(n_reps)) if n_reps > 1 else 0.0
    return CovarianceEstimate(cov=cov, std_err=se, mean_f=float(fs.mean()),
                              mean_g=float(gs.mean()), n_reps=n_reps)


# ---------------------------------------------------------------------------
# product bound for zero patterns
# ---------------------------------------------------------------------------

def zero_pattern_product_bound(joint, copies: int):
    """Check prod_i P(X_i = 0)^S <= P(all zero) + (m/(m+1))^((m+1)S).

    `joint` maps {0,1}^(m+1) patterns (tuples, or an array indexed by bit
    code) to probabilities; S = copies.  Works in exact arithmetic when fed
    Fractions.  Returns (holds, slack) with slack = rhs - lhs.
    """
    if copies < 1:
        raise ValueError("copies must be >= 1")
    if isinstance(joint, Mapping):
        items = list(joint.items())
        width = len(items[0][0])
        probs = {tuple(int(b) for b in k): v for k, v in items}
    else:
        arr = list(joint)
        width = int(math.log2(len(arr)))
        if 2**width != len(arr):
            raise ValueError("array joint must have 2^(m+1) entries")
        probs = {tuple((i >> b) & 1 for b in range(width)): v for i, v in enumerate(arr)}
    if width < 2:
        raise ValueError("need m >= 1, i.e. at least two variables")
    total = sum(probs.values())
    exact = isinstance(total, Fraction)
    if (exact and total != 1) or (not exact and abs(total - 1.0) > 1e-9):
        raise ValueError("joint pmf must sum to 1")
    if any(v < 0 for v in probs.values()):
        raise ValueError("joint pmf must be nonnegative")
    m = width - 1
    one = Fraction(1) if exact else 1.0
    lhs = one
    for i in range(width):
        pi0 = sum(v for k, v in probs.items() if k[i] == 0)
        lhs *= pi0**copies
    all_zero = probs.get((0,) * width, 0 * one)
    extra = (Fraction(m, m + 1) if exact else m / (m + 1)) ** ((m + 1) * copies)
    rhs = all_zero + extra
    slack = rhs - lhs
    holds = lhs <= rhs if exact else lhs <= rhs + 1e-12
    return holds, slack


# ---------------------------------------------------------------------------
# exit-count product bounds (Monte Carlo)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProductBoundReport:
    name: str
    lhs: float
    lhs_se: float
    rhs_prob: float
    rhs_prob_se: float
    additive_derived: float
    additive_printed: float
    violation_sigma: float

    @property
    def violated(self) -> bool:
        return self.violation_sigma > 3.0


def _product_with_se(ps: np.ndarray, ses: np.ndarray) -> tuple[float, float]:
    prod = float(np.prod(ps))
    if prod == 0.0:
        return 0.0, 0.0
    rel = np.sqrt(((ses / np.where(ps > 0, ps, 1.0)) ** 2).sum())
    return prod, prod * rel


def exit_product_bounds_check(params: BRWParams, eta: Mapping[Site, int], box: SpaceTimeBox,
                              k_top: int, k_face: int, copies: int, n_reps: int, seed: int,
                              *, caps: Caps = Caps(max_alive=50_000, max_events=5_000_000)) -> list[ProductBoundReport]:
    """Monte Carlo check of three product bounds on exit counts.

    Per-orthant probabilities are estimated for the process started from
    `copies * eta`, tail probabilities for the process from `eta`.  For each
    family of size n (top orthants, face orthants, the two totals) the bound
    adds ((n-1)/n)^(n*copies); the report also carries the n^(-n*copies)
    variant for reference (the two agree in one dimension).  A bound counts
    as violated only beyond 3 combined sigmas.
    """
    d = params.dimension
    region = box.interior_region()
    eta_big = {s: c * copies for s, c in eta.items()}

    def batch(start, tag):
        tv = np.empty((n_reps, 2**d), dtype=np.int64)
        fv = np.empty((n_reps, d * 2**d), dtype=np.int64)
        for i in range(n_reps):
            fld = DisasterField(derive_seed(seed, tag, "env", i), params.disaster_rate, d)
            res = simulate(params, start, fld, 0.0, box.t_end,
                           derive_seed(seed, tag, "tree", i), trunc=region, caps=caps)
            if res.capped:
                raise RuntimeError("cap tripped during product-bound check")
            ec = exit_counts(res.events, box)
            tv[i] = ec.top_vector()
            fv[i] = ec.face_vector()
        return tv, fv

    tv_big, fv_big = batch(eta_big, "epb-big")
    tv_one, fv_one = batch(eta, "epb-one")

    def prob(mask: np.ndarray) -> tuple[float, float]:
        p = float(mask.mean())
        return p, math.sqrt(max(p * (1 - p), 0.0) / n_reps)

    reports = []
    specs = [
        ("top-orthants", tv_big, k_top, tv_one.sum(axis=1), 2**d),
        ("face-orthants", fv_big, k_face, fv_one.sum(axis=1), d * 2**d),
    ]
    for name, big, kk, one_total, fam in specs:
        ps, ses = zip(*(prob(big[:, j] <= kk) for j in range(big.shape[1])))
        lhs, lhs_se = _product_with_se(np.array(ps), np.array(ses))
        rp, rse = prob(one_total <= fam * kk)
        derived = ((fam - 1) / fam) ** (fam * copies)
        printed = float(fam) ** (-fam * copies)
        sig = math.hypot(lhs_se, rse)
        viol = ((lhs - rp - derived) / sig) if sig > 0 else (math.inf if lhs > rp + derived else -math.inf)
        reports.append(ProductBoundReport(name=name, lhs=lhs, lhs_se=lhs_se, rhs_prob=rp,
                                          rhs_prob_se=rse, additive_derived=derived,
                                          additive_printed=printed, violation_sigma=viol))
    # combined: P(face total <= K) P(top total <= K') vs P(total <= K + K') + 4^-S
    pf, sef = prob(fv_big.sum(axis=1) <= k_face)
    pt, set_ = prob(tv_big.sum(axis=1) <= k_top)
    lhs, lhs_se = _product_with_se(np.array([pf, pt]), np.array([sef, set_]))
    rp, rse = prob(fv_one.sum(axis=1) + tv_one.sum(axis=1) <= k_face + k_top)
    derived = 4.0 ** (-copies)
    sig = math.hypot(lhs_se, rse)
    viol = ((lhs - rp - derived) / sig) if sig > 0 else (math.inf if lhs > rp + derived else -math.inf)
    reports.append(ProductBoundReport(name="combined-totals", lhs=lhs, lhs_se=lhs_se,
                                      rhs_prob=rp, rhs_prob_se=rse, additive_derived=derived,
                                      additive_printed=derived, violation_sigma=viol))
    return reports
