"""Embedded branching process of origin-returning particles.

Cutting the branching system at period boundaries and keeping only particles
that sit at the origin at each multiple of the period T yields a branching
process whose offspring law in period k is the quenched law of "particles at
the origin at kT descending from one particle at the origin at (k-1)T".
Disjoint periods read disjoint slices of the environment, so those laws form
an i.i.d. sequence over periods, and the mean of the first one ties to the
pinned single-particle survival via the growth factor exp(birth_rate*(m-1)T).

The phase classifier combines the Lyapunov estimate with the branching
growth rate: sign of birth_rate*(m-1) + p_hat decides survival vs extinction,
with a 3-sigma dead band reported as "critical-band".
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .brw import BRWParams, Caps, simulate
from .rng import derive_seed
from .walk import estimate_lyapunov, estimate_survival


@dataclass(frozen=True)
class OffspringSample:
    period_index: int
    pmf: tuple[float, ...]
    n_reps: int
    mean: float

    def __post_init__(self):
        if abs(sum(self.pmf) - 1.0) > 1e-12:
            raise ValueError("empirical pmf must sum to 1")
        implied = sum(k * p for k, p in enumerate(self.pmf))
        if abs(implied - self.mean) > 1e-12:
            raise ValueError("mean inconsistent with pmf")

    @property
    def p_zero(self) -> float:
        return self.pmf[0] if self.pmf else 1.0

    @property
    def mean_std_err(self) -> float:
        var = sum(p * (k - self.mean) ** 2 for k, p in enumerate(self.pmf))
        return math.sqrt(var / self.n_reps)


def sample_offspring(field, params: BRWParams, period: float, period_index: int,
                     n_reps: int, seed: int,
                     caps: Caps = Caps(max_alive=100_000, max_events=10_000_000)) -> OffspringSample:
    """Empirical law of origin occupancy after one period, in a fixed field.

    Starts one particle at the origin at (period_index-1)*period and counts
    particles at the origin at period_index*period, over n_reps independent
    trees sharing the field.
    """
    if period <= 0.0 or period_index < 1 or n_reps < 1:
        raise ValueError("need period > 0, period_index >= 1, n_reps >= 1")
    origin = (0,) * params.dimension
    t0 = (period_index - 1) * period
    t1 = period_index * period
    counts = np.zeros(n_reps, dtype=np.int64)
    for i in range(n_reps):
        res = simulate(params, {origin: 1}, field, t0, t1,
                       derive_seed(seed, "offspring", period_index, i),
                       caps=caps, snapshot_times=[t1], record_events=False)
        if res.capped:
            raise RuntimeError("population cap tripped while sampling offspring")
        counts[i] = sum(1 for _pid, site in res.snapshots[0].alive if site == origin)
    top = int(counts.max(initial=0))
    pmf = np.bincount(counts, minlength=top + 1) / n_reps
    return OffspringSample(period_index=period_index, pmf=tuple(float(x) for x in pmf),
                           n_reps=n_reps, mean=float(counts.mean()))


@dataclass(frozen=True)
class IdentityCheck:
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float

    @property
    def z(self) -> float:
        denom = math.hypot(self.lhs_se, self.rhs_se)
        return (self.lhs - self.rhs) / denom if denom > 0 else 0.0


def offspring_mean_identity_check(field, params: BRWParams, period: float, n_reps: int,
                                  seed: int, *, n_walkers: int | None = None) -> IdentityCheck:
    """First-period offspring mean vs growth-factor-scaled pinned survival.

    Both Monte Carlo estimates target the same quenched number, so their
    difference should be noise.
    """
    if period == 0.0:
        return IdentityCheck(lhs=1.0, lhs_se=0.0, rhs=1.0, rhs_se=0.0)
    sample = sample_offspring(field, params, period, 1, n_reps, derive_seed(seed, "ident-trees"))
    nw = n_walkers if n_walkers is not None else n_reps
    pinned = estimate_survival(field, params.jump_rate, period, nw, True,
                               derive_seed(seed, "ident-walkers"))
    factor = math.exp(params.birth_rate * (params.offspring_mean - 1.0) * period)
    return IdentityCheck(lhs=sample.mean, lhs_se=sample.mean_std_err,
                         rhs=factor * pinned.value, rhs_se=factor * pinned.std_err)


@dataclass(frozen=True)
class BoundCheck:
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float

    @property
    def violated_at(self) -> float:
        """Positive when the lower bound fails beyond combined noise (in sigmas)."""
        denom = math.hypot(self.lhs_se, self.rhs_se)
        return (self.rhs - self.lhs) / denom if denom > 0 else math.inf * (self.rhs > self.lhs)


def nonextinction_bound_check(field, params: BRWParams, period: float, n_reps: int,
                              seed: int, *, n_walkers: int | None = None) -> BoundCheck:
    """Check 1 - q_hat(0) >= exp(-birth_rate*period*q(0)) * pinned survival.

    Following a single line of first children through the tree survives all
    branchings with probability exp(-birth_rate*t*q(0)); if that line also
    dodges disasters and returns to the origin, at least one particle sits
    there, so the nonextinction probability dominates the product.
    """
    sample = sample_offspring(field, params, period, 1, n_reps, derive_seed(seed, "bound-trees"))
    lhs = 1.0 - sample.p_zero
    lhs_se = math.sqrt(max(lhs * (1.0 - lhs), 0.0) / n_reps)
    nw = n_walkers if n_walkers is not None else n_reps
    pinned = estimate_survival(field, params.jump_rate, period, nw, True,
                               derive_seed(seed, "bound-walkers"))
    factor = math.exp(-params.birth_rate * period * params.offspring[0])
    return BoundCheck(lhs=lhs, lhs_se=lhs_se, rhs=factor * pinned.value,
                      rhs_se=factor * pinned.std_err)


def suggest_period(params: BRWParams, lo: float = 0.5, hi: float = 50.0) -> float:
    """Period T with annealed expected offspring mean in [lo, hi].

    Uses exp(b(m-1)T) * E[pinned survival(T)], where the annealed pinned
    survival factorizes as exp(-alpha T) * P(walk at origin at T); each
    coordinate of the walk is a rate kappa/d walk whose return probability is
    the exponentially scaled Bessel term ive(0, kappa T / d).
    """
    growth = params.birth_rate * (params.offspring_mean - 1.0)

    def annealed_mean(t: float) -> float:
        ret = special.ive(0, params.jump_rate * t / params.dimension) ** params.dimension
        return math.exp((growth - params.disaster_rate) * t) * ret

    best, best_t = -math.inf, 1.0
    for t in np.linspace(0.25, 8.0, 32):
        v = annealed_mean(float(t))
        if lo <= v <= hi:
            return float(t)
        score = -abs(math.log(max(v, 1e-300)) - math.log(math.sqrt(lo * hi)))
        if score > best:
            best, best_t = score, float(t)
    return best_t


@dataclass(frozen=True)
class PhaseVerdict:
    criterion_value: float
    std_err: float
    verdict: str  # subcritical | critical-band | supercritical
    censor_fraction: float
    unreliable: bool

    def __post_init__(self):
        in_band = abs(self.criterion_value) <= 3.0 * self.std_err
        if in_band != (self.verdict == "critical-band"):
            raise ValueError("verdict inconsistent with dead band")


def phase_classify(params: BRWParams, t_lyap: float, n_env: int, n_walkers: int,
                   seed: int) -> PhaseVerdict:
    """Classify survival phase from birth_rate*(m-1) + p_hat(jump_rate).

    Positive beyond 3 sigma means the branching growth beats the quenched
    decay (survival with positive probability); negative beyond 3 sigma
    means extinction; in between, the estimate cannot distinguish, and a
    censor fraction above one half marks the verdict unreliable.
    """
    if t_lyap <= 0.0:
        raise ValueError("t_lyap must be > 0")
    lyap = estimate_lyapunov(params.jump_rate, params.disaster_rate, t_lyap, n_env,
                             n_walkers, False, seed, dimension=params.dimension)
    value = params.birth_rate * (params.offspring_mean - 1.0) + lyap.p_hat
    if abs(value) <= 3.0 * lyap.std_err:
        verdict = "critical-band"
    elif value > 0:
        verdict = "supercritical"
    else:
        verdict = "subcritical"
    return PhaseVerdict(criterion_value=value, std_err=lyap.std_err, verdict=verdict,
                        censor_fraction=lyap.censor_fraction,
                        unreliable=lyap.censor_fraction > 0.5)
