# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; same contract as ``_pykernels``."""

import numpy as np
from libc.math cimport sqrt, log, cos, ceil, fmin, fmax
from libc.stdint cimport uint64_t, int64_t

cdef uint64_t _GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t _M1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t _M2 = 0x94D049BB133111EBULL
cdef double _TWO53 = 1.0 / 9007199254740992.0
cdef double TWO_PI = 6.283185307179586

ROLE_NOISE = 0x4E4F495345
ROLE_DITHER = 0x444954484552
cdef uint64_t _ROLE_NOISE = 0x4E4F495345ULL
cdef uint64_t _ROLE_DITHER = 0x444954484552ULL


cdef inline uint64_t _mix(uint64_t z) noexcept nogil:
    z = z + _GOLDEN
    z = (z ^ (z >> 30)) * _M1
    z = (z ^ (z >> 27)) * _M2
    return z ^ (z >> 31)


cdef inline uint64_t _base(uint64_t seed, uint64_t role) noexcept nogil:
    return _mix(_mix(seed) ^ role)


cdef inline double _unit(uint64_t h) noexcept nogil:
    return <double>(h >> 11) * _TWO53


cdef inline double _normal(uint64_t base, int64_t j, int64_t i) noexcept nogil:
    cdef uint64_t h = _mix(_mix(base ^ <uint64_t>j) ^ <uint64_t>i)
    cdef double u1 = (<double>(h >> 11) + 1.0) * _TWO53
    cdef double u2 = _unit(_mix(h))
    return sqrt(-2.0 * log(u1)) * cos(TWO_PI * u2)


cdef inline double _grid_z(double x, double u, double delta) noexcept nogil:
    return ceil((x - u) / delta - 0.5)


def _u64(seed):
    return int(seed) & 0xFFFFFFFFFFFFFFFF


def key_hash(seed, role, a, b):
    cdef const int64_t[::1] av = np.ascontiguousarray(a, dtype=np.int64)
    cdef const int64_t[::1] bv = np.ascontiguousarray(b, dtype=np.int64)
    cdef Py_ssize_t n = av.shape[0], k
    out = np.empty(n, dtype=np.uint64)
    cdef uint64_t[::1] ov = out
    cdef uint64_t base = _base(_u64(seed), _u64(role))
    with nogil:
        for k in range(n):
            ov[k] = _mix(_mix(base ^ <uint64_t>av[k]) ^ <uint64_t>bv[k])
    return out


def uniforms(seed, role, a, b):
    cdef const int64_t[::1] av = np.ascontiguousarray(a, dtype=np.int64)
    cdef const int64_t[::1] bv = np.ascontiguousarray(b, dtype=np.int64)
    cdef Py_ssize_t n = av.shape[0], k
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef uint64_t base = _base(_u64(seed), _u64(role))
    with nogil:
        for k in range(n):
            ov[k] = _unit(_mix(_mix(base ^ <uint64_t>av[k]) ^ <uint64_t>bv[k]))
    return out


def normals(seed, j, i):
    cdef const int64_t[::1] jv = np.ascontiguousarray(j, dtype=np.int64)
    cdef const int64_t[::1] iv = np.ascontiguousarray(i, dtype=np.int64)
    cdef Py_ssize_t n = jv.shape[0], k
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef uint64_t base = _base(_u64(seed), _ROLE_NOISE)
    with nogil:
        for k in range(n):
            ov[k] = _normal(base, jv[k], iv[k])
    return out


def encode_values(theta_at, i_idx, j_idx, double noise_scale, seed,
                  double delta, double clamp, bint add_noise):
    cdef const double[::1] tv = np.ascontiguousarray(theta_at, dtype=np.float64)
    cdef const int64_t[::1] iv = np.ascontiguousarray(i_idx, dtype=np.int64)
    cdef const int64_t[::1] jv = np.ascontiguousarray(j_idx, dtype=np.int64)
    cdef Py_ssize_t n = tv.shape[0], k
    x_out = np.empty(n, dtype=np.float64)
    z_out = np.empty(n, dtype=np.int64)
    cdef double[::1] xv = x_out
    cdef int64_t[::1] zv = z_out
    cdef uint64_t s = _u64(seed)
    cdef uint64_t nbase = _base(s, _ROLE_NOISE)
    cdef uint64_t dbase = _base(s, _ROLE_DITHER)
    cdef double x, u
    with nogil:
        for k in range(n):
            x = tv[k]
            if add_noise:
                x = x + noise_scale * _normal(nbase, jv[k], iv[k])
            x = fmax(fmin(x, clamp), -clamp)
            u = delta * _unit(_mix(_mix(dbase ^ <uint64_t>iv[k]) ^ <uint64_t>jv[k]))
            xv[k] = x
            zv[k] = <int64_t>(_grid_z(x, u, delta) - _grid_z(-clamp, u, delta))
    return x_out, z_out


def decode_values(index, i_idx, j_idx, seed, double delta, double clamp):
    cdef const int64_t[::1] zv = np.ascontiguousarray(index, dtype=np.int64)
    cdef const int64_t[::1] iv = np.ascontiguousarray(i_idx, dtype=np.int64)
    cdef const int64_t[::1] jv = np.ascontiguousarray(j_idx, dtype=np.int64)
    cdef Py_ssize_t n = zv.shape[0], k
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef uint64_t dbase = _base(_u64(seed), _ROLE_DITHER)
    cdef double u
    with nogil:
        for k in range(n):
            u = delta * _unit(_mix(_mix(dbase ^ <uint64_t>iv[k]) ^ <uint64_t>jv[k]))
            ov[k] = u + (_grid_z(-clamp, u, delta) + <double>zv[k]) * delta
    return out
