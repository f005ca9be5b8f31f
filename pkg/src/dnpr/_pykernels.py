"""Pure-numpy kernels. Semantics match ``_ckernels.pyx`` exactly."""

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31, _S11 = (np.uint64(s) for s in (30, 27, 31, 11))
_TWO53 = 2.0 ** -53
TWO_PI = 6.283185307179586

ROLE_NOISE = 0x4E4F495345
ROLE_DITHER = 0x444954484552


def _mix(z):
    z = z + _GOLDEN
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _as_u64(a):
    return np.ascontiguousarray(a, dtype=np.int64).view(np.uint64)


def key_hash(seed, role, a, b):
    a = _as_u64(a)
    b = _as_u64(b)
    base = _mix(np.full(1, seed & 0xFFFFFFFFFFFFFFFF, dtype=np.uint64))
    base = _mix(base ^ np.uint64(role))
    return _mix(_mix(base ^ a) ^ b)


def uniforms(seed, role, a, b):
    return (key_hash(seed, role, a, b) >> _S11).astype(np.float64) * _TWO53


def normals(seed, j, i):
    h = key_hash(seed, ROLE_NOISE, j, i)
    u1 = ((h >> _S11).astype(np.float64) + 1.0) * _TWO53
    u2 = (_mix(h) >> _S11).astype(np.float64) * _TWO53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(TWO_PI * u2)


def _grid_z(x, u, delta):
    return np.ceil((x - u) / delta - 0.5)


def encode_values(theta_at, i_idx, j_idx, noise_scale, seed, delta, clamp, add_noise):
    """Observe, winsorize and quantize X_ij at the (i, j) pairs.

    Returns the clamped observations and the grid indices (int64).
    """
    x = np.array(theta_at, dtype=np.float64)
    if add_noise:
        x = x + noise_scale * normals(seed, j_idx, i_idx)
    x = np.clip(x, -clamp, clamp)
    u = delta * uniforms(seed, ROLE_DITHER, i_idx, j_idx)
    z = _grid_z(x, u, delta)
    z0 = _grid_z(-clamp, u, delta)
    return x, (z - z0).astype(np.int64)


def decode_values(index, i_idx, j_idx, seed, delta, clamp):
    u = delta * uniforms(seed, ROLE_DITHER, i_idx, j_idx)
    z0 = _grid_z(-clamp, u, delta)
    return u + (z0 + np.asarray(index, dtype=np.float64)) * delta
