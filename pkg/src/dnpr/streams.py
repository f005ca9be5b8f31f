"""Counter-based random streams.

Every draw is a pure function of ``(seed, role, a, b)`` hashed through a
splitmix64 chain, so any single observation or dither value can be
regenerated on its own without replaying a sequential generator.
"""

import numpy as np

from ._backend import kernels

MASK64 = 0xFFFFFFFFFFFFFFFF
ROLE_NOISE = kernels.ROLE_NOISE
ROLE_DITHER = kernels.ROLE_DITHER
ROLE_DERIVE = 0x44455249564521


def derive_seed(seed, *parts):
    """Child seed for ``parts`` (trial index, sweep point, ...) under ``seed``."""
    h = int(seed) & MASK64
    for p in parts:
        h = int(kernels.key_hash(h, ROLE_DERIVE, np.array([int(p) & MASK64], dtype=np.uint64).view(np.int64),
                                 np.zeros(1, dtype=np.int64))[0])
    return h


def standard_normals(seed, j, i):
    """N(0, 1) draws keyed by machine ``j`` and coefficient ``i`` (broadcast)."""
    j, i = np.broadcast_arrays(np.asarray(j, dtype=np.int64), np.asarray(i, dtype=np.int64))
    return kernels.normals(int(seed) & MASK64, j.ravel(), i.ravel()).reshape(j.shape)


def unit_uniforms(seed, role, a, b):
    """Unif[0, 1) draws keyed by ``(role, a, b)``."""
    a, b = np.broadcast_arrays(np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64))
    return kernels.uniforms(int(seed) & MASK64, role, a.ravel(), b.ravel()).reshape(a.shape)


def generator(seed):
    """A numpy Generator on a Philox stream, for draws that need no per-entry keying."""
    return np.random.Generator(np.random.Philox(key=int(seed) & MASK64))
