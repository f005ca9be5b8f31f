"""Subtractive-dithered uniform scalar quantizer with a fixed-width index codec.

The grid ``G(u, delta) = {u + z delta : z integer}`` is shifted by a dither
``u ~ Unif[0, delta)`` that both ends regenerate from a shared key. For any
input law on ``[-clamp, clamp]`` the error ``q(X) - X`` is then
``Unif(-delta/2, delta/2)`` and independent of ``X``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import streams
from ._backend import kernels
from .model import ValidationError


def bits_for(delta, clamp):
    """Index width covering every grid point within ``delta/2`` of ``[-clamp, clamp]``."""
    return max(1, math.ceil(math.log2(math.floor(2 * clamp / delta) + 2)))


@dataclass(frozen=True)
class QuantizerSpec:
    delta: float
    clamp: float
    bits_per_value: int = None

    def __post_init__(self):
        if not (math.isfinite(self.delta) and self.delta > 0):
            raise ValidationError(f"delta must be positive, got {self.delta}")
        if not (math.isfinite(self.clamp) and self.clamp > 0):
            raise ValidationError(f"clamp must be positive, got {self.clamp}")
        need = bits_for(self.delta, self.clamp)
        if self.bits_per_value is None:
            object.__setattr__(self, "bits_per_value", need)
        elif self.bits_per_value != need:
            raise ValidationError(f"bits_per_value must be {need} for this grid")

    @property
    def levels(self):
        return 1 << self.bits_per_value


@dataclass(frozen=True)
class DitherKey:
    seed: int
    i: int
    j: int


def dither(key, delta):
    """``U_ij ~ Unif[0, delta)`` regenerated from ``(seed, i, j)``."""
    return delta * float(streams.unit_uniforms(key.seed, streams.ROLE_DITHER, key.i, key.j))


def dithers(seed, i, j, delta):
    """Vectorised :func:`dither` over broadcast index arrays."""
    return delta * streams.unit_uniforms(seed, streams.ROLE_DITHER, i, j)


def quantize(x, u, delta):
    """Nearest point of ``G(u, delta)`` to ``x``; exact midpoints go down."""
    return u + np.ceil((np.asarray(x, dtype=np.float64) - u) / delta - 0.5) * delta


def clamp_values(x, c):
    return np.clip(x, -c, c)


def encode_value(x, key, spec):
    """Winsorize, quantize against the keyed grid and return the grid index."""
    _, z = kernels.encode_values(np.array([float(x)]), np.array([key.i]), np.array([key.j]),
                                 0.0, key.seed & streams.MASK64, spec.delta, spec.clamp, False)
    index = int(z[0])
    assert 0 <= index < spec.levels, "index escaped the b0-bit range"
    return index


def decode_value(index, key, spec):
    """Grid point for ``index`` under the dither regenerated from ``key``."""
    if not (0 <= index < spec.levels):
        raise ValidationError(f"index {index} outside [0, {spec.levels})")
    return float(kernels.decode_values(np.array([index]), np.array([key.i]), np.array([key.j]),
                                       key.seed & streams.MASK64, spec.delta, spec.clamp)[0])


def encode_array(x, i, j, seed, spec):
    """Vectorised :func:`encode_value` (no observation noise)."""
    x = np.asarray(x, dtype=np.float64).ravel()
    i = np.broadcast_to(np.asarray(i, dtype=np.int64), x.shape)
    j = np.broadcast_to(np.asarray(j, dtype=np.int64), x.shape)
    _, z = kernels.encode_values(x, i, j, 0.0, seed & streams.MASK64, spec.delta, spec.clamp, False)
    return z


def decode_array(index, i, j, seed, spec):
    index = np.asarray(index, dtype=np.int64).ravel()
    if index.size and (index.min() < 0 or index.max() >= spec.levels):
        raise ValidationError("index outside the b0-bit range")
    i = np.broadcast_to(np.asarray(i, dtype=np.int64), index.shape)
    j = np.broadcast_to(np.asarray(j, dtype=np.int64), index.shape)
    return kernels.decode_values(index, i, j, seed & streams.MASK64, spec.delta, spec.clamp)


def error_law_check(delta, clamp, samples, seed, input_sd=None):
    """Empirical check that the dithered error is uniform and independent of X.

    X is ``N(0, input_sd**2)`` (default variance ``0.1 clamp**2``) winsorized to the clamp.
    Returns KS p-value, correlation, and the ratio of mean squared error to
    ``delta**2 / 12``.
    """
    from scipy import stats

    spec = QuantizerSpec(delta, clamp)
    rng = streams.generator(seed)
    sd = math.sqrt(0.1) * clamp if input_sd is None else input_sd
    x = clamp_values(sd * rng.standard_normal(samples), clamp)
    keys = np.arange(1, samples + 1)
    z = encode_array(x, keys, 1, seed, spec)
    err = decode_array(z, keys, 1, seed, spec) - x
    ks = stats.kstest(err, stats.uniform(loc=-delta / 2, scale=delta).cdf)
    return {
        "ks_pvalue": float(ks.pvalue),
        "corr": float(np.corrcoef(err, x)[0, 1]),
        "mse_ratio": float(np.mean(err ** 2) / (delta ** 2 / 12)),
        "max_index": int(z.max()),
        "levels": spec.levels,
    }
