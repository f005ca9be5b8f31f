"""One-round quantize-allocate-average protocol.

Each machine quantizes ``btilde`` of its coordinates with a shared-seed
dither and sends the grid indices as ``b0``-bit fields. Coefficient ``i`` is
replicated on ``k`` machines; the centre averages the decoded copies for
``i <= istar`` and returns zero beyond.
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import streams
from ._backend import kernels
from .model import ProblemConfig, ValidationError, iroot
from .quantizer import QuantizerSpec

MAGIC = b"DNPRMSG1"
_HEADER = struct.Struct(">II")


class BudgetError(ValidationError):
    """The per-machine budget cannot carry a single quantized value."""


class BudgetExceeded(AssertionError):
    """A message came out longer than the per-machine budget."""


@dataclass(frozen=True)
class ProtocolPlan:
    config: ProblemConfig
    delta: float
    quantizer: QuantizerSpec
    b0: int
    btilde: int
    k: int
    istar: int

    @property
    def message_bits(self):
        return self.btilde * self.b0

    @property
    def covered(self):
        """Largest index with full ``k``-fold coverage, ``floor(m btilde / k)``."""
        return self.config.m * self.btilde // self.k

    @property
    def max_index(self):
        """Largest coefficient index any machine touches."""
        return -(-self.config.m * self.btilde // self.k)


def replication_count(config):
    """``k = floor((mb)^((2a+1)/(2a+2)) n^(-1/(2a+2)))`` clipped to ``[1, m]``, in exact integers."""
    m, a = config.m, config.alpha
    return min(max(iroot((m * config.b) ** (2 * a + 1) // config.n, 2 * a + 2), 1), m)


def plan(config, delta=None):
    """Derive step size, bit widths, replication count and truncation point.

    ``delta`` overrides the step-size rule (used by noiseless fixtures).
    """
    n, m, b, a = config.n, config.m, config.b, config.alpha
    if delta is None:
        delta = max((m * b) ** (-(2 * a + 1) / 2), n ** -0.5)
    quantizer = QuantizerSpec(delta, config.c_tilde)
    b0 = quantizer.bits_per_value
    btilde = b // b0
    if btilde < 1:
        raise BudgetError(f"budget b={b} is below one {b0}-bit value")
    k = replication_count(config)
    istar = min(m * btilde // k, iroot(m * n, 2 * a + 1))
    return ProtocolPlan(config, float(delta), quantizer, b0, btilde, k, istar)


def index_set(p, j):
    """``I_j = [ceil((m s + j) / k) for s in 0..btilde-1]``."""
    m, k = p.config.m, p.k
    if not 1 <= j <= m:
        raise ValidationError(f"machine index {j} outside 1..{m}")
    return [(m * s + j + k - 1) // k for s in range(p.btilde)]


def index_matrix(p):
    """All index sets as an ``(m, btilde)`` int64 array (row ``j-1`` is ``I_j``)."""
    m, k = p.config.m, p.k
    t = m * np.arange(p.btilde, dtype=np.int64)[None, :] + np.arange(1, m + 1, dtype=np.int64)[:, None]
    return (t + k - 1) // k


def coverage_count(p, i):
    """Number of machines whose index set contains ``i``."""
    if i < 1:
        raise ValidationError("coefficient indices start at 1")
    # t = m s + j runs once over 1..m*btilde and ceil(t/k) = i on a block of k values of t.
    hi = min(i * p.k, p.config.m * p.btilde)
    return max(0, hi - (i - 1) * p.k)


# --- messages ----------------------------------------------------------


@dataclass(frozen=True)
class Message:
    machine: int
    payload: bytes = field(repr=False)
    nbits: int
    budget: int

    def __post_init__(self):
        if self.nbits > self.budget:
            raise BudgetExceeded(f"machine {self.machine}: {self.nbits} bits > budget {self.budget}")
        if len(self.payload) != (self.nbits + 7) // 8:
            raise ValidationError("payload length does not match bit length")

    def to_bytes(self):
        return MAGIC + _HEADER.pack(self.machine, self.nbits) + self.payload


def pack_indices(indices, b0):
    """Pack rows of indices as ``b0``-bit big-endian fields, zero-padded to bytes."""
    indices = np.atleast_2d(np.asarray(indices, dtype=np.int64))
    shifts = np.arange(b0 - 1, -1, -1, dtype=np.int64)
    bits = ((indices[..., None] >> shifts) & 1).astype(np.uint8)
    return np.packbits(bits.reshape(indices.shape[0], -1), axis=1)


def unpack_indices(payload, count, b0):
    payload = np.atleast_2d(np.asarray(payload, dtype=np.uint8))
    bits = np.unpackbits(payload, axis=1)[:, : count * b0].reshape(payload.shape[0], count, b0)
    weights = (1 << np.arange(b0 - 1, -1, -1, dtype=np.int64))
    return bits.astype(np.int64) @ weights


def read_messages(data):
    """Parse one or more concatenated messages from bytes or a binary file."""
    stream = io.BytesIO(data) if isinstance(data, (bytes, bytearray)) else data
    out = []
    while True:
        magic = stream.read(len(MAGIC))
        if not magic:
            return out
        if magic != MAGIC:
            raise ValidationError("bad message magic")
        header = stream.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise ValidationError("truncated message header")
        machine, nbits = _HEADER.unpack(header)
        payload = stream.read((nbits + 7) // 8)
        if len(payload) != (nbits + 7) // 8:
            raise ValidationError("truncated message payload")
        out.append(Message(machine, payload, nbits, budget=nbits))


def write_transcript(messages, path):
    with open(path, "wb") as fh:
        for msg in messages:
            fh.write(msg.to_bytes())


def read_transcript(path):
    with open(path, "rb") as fh:
        return read_messages(fh)


# --- encoding ----------------------------------------------------------


def local_encode(p, row, seed):
    """Quantize machine ``row.machine``'s coordinates in ``I_j`` into a Message."""
    j = row.machine
    idx = np.asarray(index_set(p, j), dtype=np.int64)
    values = np.asarray(row.values, dtype=np.float64)
    if values.size < idx.max():
        raise ValidationError(f"row of length {values.size} does not reach index {idx.max()}")
    _, z = kernels.encode_values(values[idx - 1], idx, np.full(idx.size, j, dtype=np.int64),
                                 0.0, seed & streams.MASK64, p.delta, p.quantizer.clamp, False)
    return Message(j, pack_indices(z, p.b0)[0].tobytes(), p.message_bits, p.config.b)


@dataclass
class Transcript:
    """All ``m`` payloads of one trial, plus the clamped inputs for paired runs."""

    plan: ProtocolPlan
    payloads: np.ndarray = field(repr=False)
    clamped: np.ndarray = field(repr=False)

    def messages(self):
        b = self.plan.config.b
        return [Message(j + 1, self.payloads[j].tobytes(), self.plan.message_bits, b)
                for j in range(self.payloads.shape[0])]


def simulate_transcript(p, theta, seed, noise=True):
    """Run every machine's observation + encoding step in one pass.

    ``theta`` is a CoefficientSequence; machine ``j`` sees
    ``theta_i + Z_ij / sqrt(n)`` with ``Z_ij`` keyed by ``(seed, j, i)``, the
    same stream :func:`~dnpr.model.sample_observation_row` uses.
    """
    if p.message_bits > p.config.b:
        raise BudgetExceeded(f"{p.message_bits} bits > budget {p.config.b}")
    idx = index_matrix(p)
    m = p.config.m
    jdx = np.broadcast_to(np.arange(1, m + 1, dtype=np.int64)[:, None], idx.shape)
    theta_at = theta.padded(p.max_index)[idx.ravel() - 1]
    x, z = kernels.encode_values(theta_at, idx.ravel(), np.ascontiguousarray(jdx).ravel(),
                                 1.0 / math.sqrt(p.config.n), seed & streams.MASK64,
                                 p.delta, p.quantizer.clamp, bool(noise))
    return Transcript(p, pack_indices(z.reshape(idx.shape), p.b0), x.reshape(idx.shape))


# --- central estimator -------------------------------------------------


@dataclass(frozen=True)
class Estimate:
    values: np.ndarray

    def padded(self, length):
        out = np.zeros(length)
        k = min(length, self.values.size)
        out[:k] = self.values[:k]
        return out


def _average(p, copies, nominal_divisor):
    idx = index_matrix(p).ravel()
    keep = idx <= p.istar
    sums = np.bincount(idx[keep] - 1, weights=copies.ravel()[keep], minlength=p.istar)
    if nominal_divisor:
        return Estimate(sums / p.k)
    counts = np.bincount(idx[keep] - 1, minlength=p.istar)
    return Estimate(sums / counts)


def decode_payloads(p, payloads, seed, nominal_divisor=False):
    """Batch decoder over an ``(m, nbytes)`` payload array."""
    idx = index_matrix(p)
    m = p.config.m
    z = unpack_indices(payloads, p.btilde, p.b0)
    jdx = np.broadcast_to(np.arange(1, m + 1, dtype=np.int64)[:, None], idx.shape)
    copies = kernels.decode_values(z.ravel(), idx.ravel(), np.ascontiguousarray(jdx).ravel(),
                                   seed & streams.MASK64, p.delta, p.quantizer.clamp)
    return _average(p, copies, nominal_divisor)


def average_unquantized(p, clamped, nominal_divisor=False):
    """The estimator applied to the exact clamped values (quantization off)."""
    return _average(p, np.asarray(clamped, dtype=np.float64), nominal_divisor)


def central_decode(p, messages, seed, nominal_divisor=False):
    """Decode all ``m`` messages and average the copies of each ``i <= istar``.

    The divisor is the actual coverage of ``i`` unless ``nominal_divisor`` asks
    for the nominal ``k``.
    """
    m = p.config.m
    if len(messages) != m:
        raise ValidationError(f"expected {m} messages, got {len(messages)}")
    by_machine = {}
    for msg in messages:
        if msg.machine in by_machine:
            raise ValidationError(f"duplicate message from machine {msg.machine}")
        if not 1 <= msg.machine <= m:
            raise ValidationError(f"unknown machine {msg.machine}")
        if msg.nbits != p.message_bits:
            raise ValidationError(f"machine {msg.machine}: {msg.nbits} bits, expected {p.message_bits}")
        by_machine[msg.machine] = msg
    payloads = np.frombuffer(b"".join(by_machine[j].payload for j in range(1, m + 1)), dtype=np.uint8)
    return decode_payloads(p, payloads.reshape(m, -1), seed, nominal_divisor)
