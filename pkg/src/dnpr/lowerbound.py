"""Bayesian lower bound for distributed estimation under a bit budget.

With a Gaussian prior ``theta_i ~ N(0, sigma_i^2)``, ``i <= ell``, and ``m``
machines each seeing ``N(theta_i, eps2)``, any protocol whose messages carry
at most ``m b`` nats in total has Bayes risk at least

    min  sum_i d_i
    s.t. sum_i [ 1/2 log(sigma_i^2 / d_i)
                 + m/2 log((m/eps2) / (1/sigma_i^2 + m/eps2 - 1/d_i)) ] <= m b
         sigma_i^2 (eps2/m) / (sigma_i^2 + eps2/m) <= d_i <= sigma_i^2 .

The solver works in the precision ``P_i = 1/d_i``, where the stationarity
condition of the Lagrangian is a quadratic with a stable closed-form root,
and bisects the multiplier to meet the budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from . import streams
from .model import ProblemConfig, Regime, ValidationError, classify_regime, ellipsoid_weights

LN2 = math.log(2.0)


class SolverError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class PriorSpec:
    """Gaussian prior variances ``sigma_1^2..sigma_ell^2`` on the first ``ell`` coefficients."""

    ell: int
    variances: np.ndarray
    gamma: float
    regime: Regime
    alpha: int
    c_tilde: float

    def __post_init__(self):
        v = np.array(self.variances, dtype=np.float64).ravel()
        if v.size != self.ell or self.ell < 1:
            raise ValidationError("variances must have ell >= 1 entries")
        if np.any(v <= 0) or not np.all(np.isfinite(v)):
            raise ValidationError("prior variances must be positive and finite")
        v.setflags(write=False)
        object.__setattr__(self, "variances", v)
        # 1 ulp of slack per term: the profiles are normalised to hit c_tilde^2 exactly.
        if self.weighted_sum > self.c_tilde ** 2 * (1 + 4 * self.ell * 2.0 ** -52):
            raise ValidationError("prior mass exceeds the ellipsoid radius")
        if self.flatness_ratio < self.ell / (2 * self.alpha + 1) * (1 - 1e-12):
            raise ValidationError("prior profile is not flat enough")

    @property
    def weighted(self):
        return ellipsoid_weights(self.ell, self.alpha) * self.variances

    @property
    def weighted_sum(self):
        return float(np.sum(self.weighted))

    @property
    def flatness_ratio(self):
        """``sum_i i^(2a) sigma_i^2 / max_i i^(2a) sigma_i^2``."""
        w = self.weighted
        return float(np.sum(w) / np.max(w))


def _ell(value):
    ell = int(round(value))
    if ell < 1:
        raise ValidationError(f"prior dimension rounds to {ell}; increase gamma")
    return ell


def flat_prior(ell, alpha, c_tilde, gamma=1.0, regime=Regime.SUFFICIENT):
    """Equal variances ``c_tilde^2 / sum_{i<=ell} i^(2 alpha)``."""
    var = c_tilde ** 2 / float(np.sum(ellipsoid_weights(ell, alpha)))
    return PriorSpec(ell, np.full(ell, var), gamma, Regime(regime), alpha, c_tilde)


def prior_for_regime(config, regime=None, gamma=1.0):
    """The least-favourable prior family used for each regime.

    insufficient: ``ell = gamma m b``, ``sigma_i^2 = c~^2 / (i^(2a) ell)``;
    intermediate: ``ell = (gamma m b n)^(1/(2a+2))``, flat;
    sufficient: ``ell = (gamma m n)^(1/(2a+1))``, flat.
    """
    if not (math.isfinite(gamma) and gamma > 0):
        raise ValidationError("gamma must be positive")
    regime = classify_regime(config) if regime is None else Regime(regime)
    m, b, n, a, ct = config.m, config.b, config.n, config.alpha, config.c_tilde
    if regime is Regime.INSUFFICIENT:
        ell = _ell(gamma * m * b)
        var = ct ** 2 / (ellipsoid_weights(ell, a) * ell)
        return PriorSpec(ell, var, gamma, regime, a, ct)
    if regime is Regime.INTERMEDIATE:
        ell = _ell((gamma * m * b * n) ** (1.0 / (2 * a + 2)))
    else:
        ell = _ell((gamma * m * n) ** (1.0 / (2 * a + 1)))
    return flat_prior(ell, a, ct, gamma, regime)


@dataclass(frozen=True)
class LowerBoundInstance:
    """``b`` is the per-machine budget in bits; the solver converts to nats."""

    m: int
    b: float
    eps2: float
    prior: PriorSpec

    def __post_init__(self):
        if self.m < 1:
            raise ValidationError("m must be >= 1")
        if not (self.b >= 0 and math.isfinite(self.b)):
            raise ValidationError("b must be a finite non-negative bit count")
        if not (self.eps2 > 0 and math.isfinite(self.eps2)):
            raise ValidationError("eps2 must be positive")

    @property
    def budget_nats(self):
        return self.m * self.b * LN2

    @property
    def box_low(self):
        s2, v = self.prior.variances, self.eps2 / self.m
        return s2 * v / (s2 + v)

    @property
    def box_high(self):
        return self.prior.variances


@dataclass(frozen=True)
class LowerBoundSolution:
    d: np.ndarray
    value: float
    multiplier: float
    active: bool
    residual: float


def constraint_terms(instance, d):
    """Per-coordinate budget usage ``g_i(d_i)`` in nats (``inf`` at the box bottom)."""
    s2 = instance.prior.variances
    m = instance.m
    w = m / instance.eps2
    d = np.asarray(d, dtype=np.float64)
    prec = 1.0 / d
    gap = 1.0 / s2 + w - prec
    with np.errstate(divide="ignore"):
        return 0.5 * np.log(s2 / d) + 0.5 * m * np.log(w / np.maximum(gap, 0.0))


def _precision_and_gap(a, w, m, lam):
    """Minimiser of ``1/P + lam g(P)`` over ``P`` in ``[a, a + w]``.

    Returns ``P`` and ``a + w - P`` computed without cancellation.
    """
    big_a = a + w
    la = lam * big_a
    b = la + 2.0
    root = np.sqrt(b * b + 8.0 * lam * (m - 1) * big_a)
    prec = 4.0 * big_a / (b + root)
    # root - 2 = (root^2 - 4) / (root + 2), expanded to avoid subtracting near-equal terms.
    root_minus_2 = la * (la + 4.0 + 8.0 * (m - 1)) / (root + 2.0)
    gap = big_a * (la + root_minus_2) / (b + root)
    low = prec < a
    prec = np.where(low, a, prec)
    gap = np.where(low, w, gap)
    return prec, gap


def _usage(a, w, m, prec, gap):
    return float(np.sum(0.5 * np.log(prec / a) + 0.5 * m * np.log(w / gap)))


def solve_optimization(instance, max_iter=4000):
    """Minimise ``sum d_i`` under the budget and box constraints."""
    s2 = instance.prior.variances
    m = instance.m
    a = 1.0 / s2
    w = m / instance.eps2
    budget = instance.budget_nats

    # The constraint term diverges at the box bottom; stop just above it.
    eps = 1e-12
    bottom = instance.box_low * (1 + eps)
    big_a = a + w
    bottom_usage = _usage(a, w, m, big_a / (1 + eps), big_a * eps / (1 + eps))
    if bottom_usage <= budget:
        return LowerBoundSolution(bottom, float(np.sum(bottom)), 0.0, False, bottom_usage - budget)

    def usage(lam):
        prec, gap = _precision_and_gap(a, w, m, lam)
        return _usage(a, w, m, prec, gap)

    hi = 1.0
    it = 0
    while usage(hi) > budget:
        hi *= 2.0
        it += 1
        if it > max_iter:
            raise SolverError("multiplier bracket did not close", usage(hi) - budget)
    lo = hi / 2.0
    while usage(lo) <= budget:
        lo /= 2.0
        it += 1
        if it > max_iter or lo == 0.0:
            break
    for _ in range(max_iter):
        mid = math.sqrt(lo * hi)
        if not lo < mid < hi:
            break
        if usage(mid) > budget:
            lo = mid
        else:
            hi = mid
    else:
        raise SolverError("multiplier bisection hit the iteration cap", usage(hi) - budget)

    prec, gap = _precision_and_gap(a, w, m, hi)
    # Near the box bottom an ulp of d moves the constraint noticeably; round d
    # outward so the returned point is feasible in exact arithmetic too.
    d = np.minimum(1.0 / prec * (1.0 + 8.0 * 2.0 ** -52), s2)
    return LowerBoundSolution(d, float(np.sum(d)), hi, True, _usage(a, w, m, prec, gap) - budget)


# --- closed-form regime bounds ----------------------------------------


def closed_form_bound(config, regime=None, gamma=1.0):
    """Explicit relaxation of the optimisation problem for one regime's prior."""
    regime = classify_regime(config) if regime is None else Regime(regime)
    prior = prior_for_regime(config, regime, gamma)
    s2 = prior.variances
    ell = prior.ell
    budget = config.m * config.b * LN2
    if regime is Regime.INSUFFICIENT:
        return float(ell * math.exp(np.mean(np.log(s2)) - 2.0 * budget / ell))
    if regime is Regime.INTERMEDIATE:
        return float(np.sum(1.0 / (1.0 / s2 + 2.0 * budget * config.n / ell)))
    v = 1.0 / (config.m * config.n)
    return float(np.sum(s2 * v / (s2 + v)))


def insufficient_closed_form(ell, alpha, c_tilde, budget_nats):
    """``c~^2 (ell!)^(-2a/ell) exp(-2 B / ell)`` via log-gamma."""
    return c_tilde ** 2 * math.exp(-2 * alpha * gammaln(ell + 1) / ell - 2 * budget_nats / ell)


@dataclass(frozen=True)
class BoundReport:
    config: ProblemConfig
    regime: Regime
    solver_value: float
    closed_form_value: float
    prior: PriorSpec

    def row(self):
        c = self.config
        return {"n": c.n, "m": c.m, "b": c.b, "alpha": c.alpha, "regime": str(self.regime),
                "solver_value": self.solver_value, "closed_form_value": self.closed_form_value}


BOUND_FIELDS = ["n", "m", "b", "alpha", "regime", "solver_value", "closed_form_value"]


def bound_report(config, gamma=1.0):
    regime = classify_regime(config)
    prior = prior_for_regime(config, regime, gamma)
    sol = solve_optimization(LowerBoundInstance(config.m, config.b, 1.0 / config.n, prior))
    closed = closed_form_bound(config, regime, gamma)
    return BoundReport(config, regime, sol.value, closed, prior)


# --- prior concentration -----------------------------------------------


def prior_membership_check(prior, alpha, c_tilde, trials, seed, tau=0.5, chunk=2000):
    """Compare the ellipsoid-violation rate of a shrunken prior to the chi-square tail bound.

    Draws ``theta_i ~ N(0, (1 - tau) sigma_i^2)`` and counts draws with
    ``sum_i i^(2a) theta_i^2 > c_tilde^2``. The bound is
    ``exp(-t^2 / 8 * sum w / max w)`` with ``t = tau / (1 - tau)``.
    """
    if trials < 1000:
        raise ValidationError("need at least 1000 trials")
    if not 0 < tau < 1:
        raise ValidationError("tau must lie in (0, 1)")
    weights = ellipsoid_weights(prior.ell, alpha)
    scaled = (1 - tau) * prior.variances
    omega = weights * scaled
    t = tau / (1 - tau)
    bound = math.exp(-t * t / 8.0 * float(np.sum(omega) / np.max(omega)))
    rng = streams.generator(seed)
    sd = np.sqrt(scaled)
    limit = c_tilde ** 2
    violations = 0
    done = 0
    while done < trials:
        size = min(chunk, trials - done)
        theta = sd * rng.standard_normal((size, prior.ell))
        violations += int(np.count_nonzero((theta * theta) @ weights > limit))
        done += size
    rate = violations / trials
    q = min(bound, 1.0)
    se = math.sqrt(q * (1 - q) / trials)
    return {"empirical_violation_rate": rate, "tail_bound": bound, "std_error": se,
            "trials": trials, "pass": rate <= bound + 3 * se}
