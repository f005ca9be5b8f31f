"""Problem instances, Sobolev ellipsoids and the Gaussian sequence model.

A machine ``j`` observes ``X_ij ~ N(theta_i, 1/n)`` for the Fourier
coefficients ``theta_i`` of the regression function in the trigonometric
basis. Coefficient sequences are stored truncated at a finite length; every
entry past the stored length is zero.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from typing import Any, Union

import numpy as np

from . import streams


class ValidationError(ValueError):
    """An input violated a documented precondition."""


def _check_finite_positive(name, value):
    if not isinstance(value, (int, float, np.integer, np.floating)) or isinstance(value, bool):
        raise ValidationError(f"{name} must be numeric, got {value!r}")
    if not math.isfinite(value) or value <= 0:
        raise ValidationError(f"{name} must be finite and positive, got {value!r}")


def _check_int(name, value, lower=1):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        if isinstance(value, (float, np.floating)) and math.isfinite(value) and float(value).is_integer():
            value = int(value)
        else:
            raise ValidationError(f"{name} must be an integer, got {value!r}")
    if value < lower:
        raise ValidationError(f"{name} must be >= {lower}, got {value}")
    return int(value)


@dataclass(frozen=True)
class ProblemConfig:
    """One instance ``(n, m, b, alpha, c)`` of the distributed problem.

    ``n`` is the per-machine sample size (noise variance ``1/n``), ``m`` the
    number of machines and ``b`` the per-machine budget in bits.
    ``c_tilde`` is the ellipsoid radius and defaults to ``c / pi**alpha``.
    """

    n: int
    m: int
    b: int
    alpha: int
    c: float
    c_tilde: float = None

    def __post_init__(self):
        object.__setattr__(self, "n", _check_int("n", self.n))
        object.__setattr__(self, "m", _check_int("m", self.m))
        object.__setattr__(self, "b", _check_int("b", self.b))
        object.__setattr__(self, "alpha", _check_int("alpha", self.alpha))
        _check_finite_positive("c", self.c)
        if self.c_tilde is None:
            object.__setattr__(self, "c_tilde", self.c / math.pi ** self.alpha)
        _check_finite_positive("c_tilde", self.c_tilde)

    @property
    def noise_var(self):
        return 1.0 / self.n

    def replace(self, **changes):
        fields = dict(n=self.n, m=self.m, b=self.b, alpha=self.alpha, c=self.c, c_tilde=self.c_tilde)
        if "c" in changes and "c_tilde" not in changes:
            fields["c_tilde"] = None
        fields.update(changes)
        return ProblemConfig(**fields)


def make_config(n, m, b, alpha, c, c_tilde=None):
    return ProblemConfig(n=n, m=m, b=b, alpha=alpha, c=c, c_tilde=c_tilde)


def ellipsoid_weights(length, alpha):
    """``i**(2 alpha)`` for ``i = 1..length``."""
    return np.arange(1, length + 1, dtype=np.float64) ** (2 * alpha)


def _weighted_norm(values, alpha):
    values = np.asarray(values, dtype=np.float64)
    return float(np.sum(ellipsoid_weights(values.size, alpha) * values * values))


@dataclass(frozen=True)
class CoefficientSequence:
    """Truncated coefficient vector ``theta_1..theta_L`` inside ``Theta(alpha, c_tilde)``."""

    values: np.ndarray
    alpha: int
    c_tilde: float

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).ravel()
        if v.size < 1:
            raise ValidationError("coefficient sequence must be non-empty")
        if not np.all(np.isfinite(v)):
            raise ValidationError("coefficients must be finite")
        _check_int("alpha", self.alpha)
        _check_finite_positive("c_tilde", self.c_tilde)
        if _weighted_norm(v, self.alpha) > self.c_tilde ** 2:
            raise ValidationError("sequence lies outside the Sobolev ellipsoid")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    def padded(self, length):
        """Values as a vector of at least ``length`` entries (zeros past L)."""
        if length <= self.values.size:
            return self.values
        out = np.zeros(length)
        out[: self.values.size] = self.values
        return out

    def tail_energy(self, start):
        """``sum_{i > start} theta_i**2``."""
        return float(np.sum(self.values[start:] ** 2))


def ellipsoid_norm(theta):
    """``sum_i i**(2 alpha) theta_i**2`` for a CoefficientSequence."""
    return _weighted_norm(theta.values, theta.alpha)


def _fit_inside(values, alpha, c_tilde):
    # Rounding can leave a boundary point a few ulps outside; shrink until it is in.
    values = np.asarray(values, dtype=np.float64)
    limit = c_tilde ** 2
    while _weighted_norm(values, alpha) > limit:
        values = values * (1.0 - 2.0 ** -50)
    return values


# --- coefficient-sequence specifications -------------------------------


@dataclass(frozen=True)
class PolynomialDecay:
    """``theta_i = s * i**-(alpha + 1/2 + kappa)`` scaled to norm ``rho * c_tilde**2``."""

    kappa: float
    rho: float
    length: int = 100

    def __post_init__(self):
        if not math.isfinite(self.kappa) or self.kappa <= 0:
            raise ValidationError("kappa must be positive")
        if not (0 < self.rho <= 1):
            raise ValidationError("rho must lie in (0, 1] to stay inside the ellipsoid")
        _check_int("length", self.length)


@dataclass(frozen=True)
class SingleSpike:
    """``theta_{i0} = c_tilde / i0**alpha``; zero elsewhere."""

    i0: int
    length: int = None

    def __post_init__(self):
        _check_int("i0", self.i0)
        if self.length is None:
            object.__setattr__(self, "length", self.i0)
        if _check_int("length", self.length) < self.i0:
            raise ValidationError("length must cover the spike index")


@dataclass(frozen=True)
class GaussianPrior:
    """Independent ``N(0, sigma_i**2)`` coefficients conditioned on the ellipsoid.

    ``prior`` is any object with a ``variances`` array (a PriorSpec). ``mode``
    is ``"reject"`` (resample until inside) or ``"project"`` (rescale onto
    the boundary).
    """

    prior: Any
    mode: str = "reject"
    max_retries: int = 10_000

    def __post_init__(self):
        if self.mode not in ("reject", "project"):
            raise ValidationError(f"unknown gaussian-prior mode {self.mode!r}")

    @property
    def length(self):
        return len(self.prior.variances)


CoefficientSpec = Union[PolynomialDecay, SingleSpike, GaussianPrior]


def sample_coefficients(spec, c_tilde, alpha, seed=0):
    """Draw (or build) a coefficient sequence inside ``Theta(alpha, c_tilde)``.

    Deterministic kinds ignore ``seed``; the Gaussian-prior kind is a pure
    function of it.
    """
    _check_finite_positive("c_tilde", c_tilde)
    alpha = _check_int("alpha", alpha)
    if isinstance(spec, PolynomialDecay):
        i = np.arange(1, spec.length + 1, dtype=np.float64)
        shape = i ** -(alpha + 0.5 + spec.kappa)
        scale = math.sqrt(spec.rho * c_tilde ** 2 / _weighted_norm(shape, alpha))
        values = _fit_inside(scale * shape, alpha, c_tilde)
    elif isinstance(spec, SingleSpike):
        values = np.zeros(spec.length)
        values[spec.i0 - 1] = c_tilde / spec.i0 ** alpha
        values = _fit_inside(values, alpha, c_tilde)
    elif isinstance(spec, GaussianPrior):
        values = _sample_prior(spec, c_tilde, alpha, seed)
    else:
        raise ValidationError(f"unsupported coefficient spec {spec!r}")
    return CoefficientSequence(values, alpha, c_tilde)


def _sample_prior(spec, c_tilde, alpha, seed):
    sd = np.sqrt(np.asarray(spec.prior.variances, dtype=np.float64))
    rng = streams.generator(seed)
    limit = c_tilde ** 2
    for _ in range(spec.max_retries):
        values = sd * rng.standard_normal(sd.size)
        norm = _weighted_norm(values, alpha)
        if norm <= limit:
            return values
        if spec.mode == "project":
            return _fit_inside(values * math.sqrt(limit / norm), alpha, c_tilde)
    raise ValidationError(f"no prior draw inside the ellipsoid after {spec.max_retries} tries")


# --- observations ------------------------------------------------------


@dataclass(frozen=True)
class ObservationRow:
    machine: int
    values: np.ndarray = field(repr=False)


def sample_observation_row(theta, n, j, seed, length=None):
    """Machine ``j``'s observations ``X_ij = theta_i + Z_ij / sqrt(n)``.

    ``Z_ij`` comes from the counter stream keyed by ``(seed, j, i)``, so
    rows are reproducible per machine and independent across machines.
    """
    _check_finite_positive("n", n)
    j = _check_int("j", j)
    length = len(theta) if length is None else length
    i = np.arange(1, length + 1)
    z = streams.standard_normals(seed, j, i)
    return ObservationRow(j, theta.padded(length)[:length] + z / math.sqrt(n))


# --- function synthesis ------------------------------------------------


def basis(i, t):
    """Trigonometric basis ``phi_i(t)``: 1, sqrt2 cos(2 pi k t), sqrt2 sin(2 pi k t)."""
    t = np.asarray(t, dtype=np.float64)
    if i == 1:
        return np.ones_like(t)
    k = i // 2
    if i % 2 == 0:
        return math.sqrt(2.0) * np.cos(2 * math.pi * k * t)
    return math.sqrt(2.0) * np.sin(2 * math.pi * k * t)


def synthesize_function(theta, t_grid):
    """Evaluate ``f(t) = sum_i theta_i phi_i(t)`` on ``t_grid``."""
    t = np.asarray(t_grid, dtype=np.float64)
    if np.any((t < 0) | (t > 1)) or not np.all(np.isfinite(t)):
        raise ValidationError("t_grid must lie in [0, 1]")
    values = theta.values if isinstance(theta, CoefficientSequence) else np.asarray(theta, dtype=np.float64)
    f = np.zeros_like(t)
    for idx, coef in enumerate(values, start=1):
        if coef != 0.0:
            f += coef * basis(idx, t)
    return f


# --- regimes -----------------------------------------------------------


class Regime(str, enum.Enum):
    INSUFFICIENT = "insufficient"
    INTERMEDIATE = "intermediate"
    SUFFICIENT = "sufficient"

    def __str__(self):
        return self.value


def iroot(x, p):
    """Largest integer ``r`` with ``r**p <= x`` for integer ``x >= 0``."""
    x = int(x)
    if x < 0:
        raise ValidationError("iroot needs a non-negative argument")
    if x < 2 or p == 1:
        return x
    # Integer Newton from above: the iterates decrease monotonically to the floor root.
    r = 1 << -(-x.bit_length() // p)
    while True:
        nxt = ((p - 1) * r + x // r ** (p - 1)) // p
        if nxt >= r:
            return r
        r = nxt


def effective_dimension(config):
    """``(mn)**(1/(2 alpha + 1))``, the global effective dimension."""
    return (config.m * config.n) ** (1.0 / (2 * config.alpha + 1))


def classify_regime(config):
    """Sufficient if ``b > (mn)^(1/(2a+1))``, insufficient if ``mb <= n^(1/(2a+1))``.

    Both comparisons run in exact integer arithmetic.
    """
    p = 2 * config.alpha + 1
    if config.b ** p > config.m * config.n:
        return Regime.SUFFICIENT
    if (config.m * config.b) ** p <= config.n:
        return Regime.INSUFFICIENT
    return Regime.INTERMEDIATE


def default_length(config):
    return 4 * math.ceil(effective_dimension(config))


# --- file formats ------------------------------------------------------


def save_coefficients_csv(theta, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "theta_i"])
        for i, v in enumerate(theta.values, start=1):
            w.writerow([i, repr(float(v))])


def load_coefficients_csv(path, alpha, c_tilde):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValidationError(f"{path}: no coefficients")
    length = max(int(r["i"]) for r in rows)
    values = np.zeros(length)
    for r in rows:
        values[int(r["i"]) - 1] = float(r["theta_i"])
    return CoefficientSequence(values, alpha, c_tilde)


def coefficients_to_json(theta):
    return json.dumps({"alpha": theta.alpha, "c_tilde": theta.c_tilde,
                       "values": [float(v) for v in theta.values]})


def coefficients_from_json(text):
    data = json.loads(text)
    return CoefficientSequence(np.array(data["values"], dtype=np.float64), data["alpha"], data["c_tilde"])
