"""Monte Carlo risk estimation, sweeps and log-log rate fits."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import lowerbound, protocol, streams
from .model import (GaussianPrior, ProblemConfig, Regime, ValidationError, classify_regime,
                    iroot, make_config, sample_coefficients)
from .quantizer import bits_for

CSV_FIELDS = ["n", "m", "b", "alpha", "c_tilde", "regime", "trials", "mean_risk", "std_error",
              "sampling_var", "quant_var", "tail_bias", "lower_solver", "lower_closed",
              "upper_analytic"]
PLAN_FIELDS = ["delta", "b0", "btilde", "k", "istar"]


@dataclass(frozen=True)
class MatchedPrior:
    """Gaussian prior chosen per config (regime family of the config unless fixed)."""

    gamma: float = 1.0
    regime: Regime = None
    mode: str = "reject"


def resolve_theta_spec(spec, config):
    if isinstance(spec, MatchedPrior):
        prior = lowerbound.prior_for_regime(config, spec.regime, spec.gamma)
        return GaussianPrior(prior, spec.mode)
    return spec


@dataclass
class BudgetAudit:
    """Counts every message produced and the longest one seen."""

    messages: int = 0
    violations: int = 0
    max_bits: int = 0

    def record(self, p, count):
        self.messages += count
        self.max_bits = max(self.max_bits, p.message_bits)
        if p.message_bits > p.config.b:
            self.violations += count
            raise protocol.BudgetExceeded(f"{p.message_bits} bits > budget {p.config.b}")

    def merge(self, other):
        self.messages += other.messages
        self.violations += other.violations
        self.max_bits = max(self.max_bits, other.max_bits)


@dataclass
class RiskReport:
    config: ProblemConfig
    plan: protocol.ProtocolPlan
    trials: int
    mean_risk: float
    std_error: float
    components: dict
    theta_spec: object = field(repr=False)
    audit: BudgetAudit = field(default_factory=BudgetAudit)

    def component_sum(self):
        return sum(self.components.values())


def estimate_risk(config, theta_spec, trials=200, seed=0, quantize=True, noise=True,
                  delta=None, nominal_divisor=False):
    """Average ``||theta_hat - theta||^2`` over independent end-to-end runs.

    Each trial also averages the exact clamped values on the same noise, which
    splits the risk into sampling, quantization and truncation-bias parts.
    """
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    p = protocol.plan(config, delta=delta)
    spec = resolve_theta_spec(theta_spec, config)
    fixed = None
    if not isinstance(spec, GaussianPrior):
        fixed = sample_coefficients(spec, config.c_tilde, config.alpha)
    audit = BudgetAudit()
    total = np.empty(trials)
    parts = np.empty((trials, 3))
    for t in range(trials):
        tseed = streams.derive_seed(seed, t)
        theta = fixed if fixed is not None else sample_coefficients(
            spec, config.c_tilde, config.alpha, streams.derive_seed(tseed, 1))
        tr = protocol.simulate_transcript(p, theta, tseed, noise=noise)
        audit.record(p, tr.payloads.shape[0])
        exact = protocol.average_unquantized(p, tr.clamped, nominal_divisor).values
        est = protocol.decode_payloads(p, tr.payloads, tseed, nominal_divisor).values if quantize else exact
        head = theta.padded(p.istar)[: p.istar]
        tail = theta.tail_energy(p.istar)
        total[t] = float(np.sum((est - head) ** 2)) + tail
        parts[t] = (float(np.sum((exact - head) ** 2)), float(np.sum((est - exact) ** 2)), tail)
    se = float(np.std(total, ddof=1) / math.sqrt(trials)) if trials > 1 else float("nan")
    mean_parts = parts.mean(axis=0)
    components = {"sampling_var": float(mean_parts[0]), "quant_var": float(mean_parts[1]),
                  "tail_bias": float(mean_parts[2])}
    return RiskReport(config, p, trials, float(total.mean()), se, components, spec, audit)


def analytic_upper_bound(p, theta_tail=None):
    """Variance, quantization and bias terms of the protocol's risk bound.

    The bias term is the worst case over the ellipsoid unless the exact tail
    energy ``theta_tail`` is supplied.
    """
    c = p.config
    sampling = p.istar / (c.n * p.k)
    quantization = p.istar * p.delta ** 2 / (3 * p.k)
    bias = c.c_tilde ** 2 / p.istar ** (2 * c.alpha) if theta_tail is None else float(theta_tail)
    return {"sampling": sampling, "quantization": quantization, "bias": bias,
            "total": sampling + quantization + bias}


# --- sweeps ------------------------------------------------------------

AXES = ("mb", "mn", "mnb", "n", "m", "b")


@dataclass(frozen=True)
class SweepSpec:
    """``axis`` values in ``points``; the other parameters come from ``held``.

    Composite axes move one parameter: ``mb`` sets ``m = value / b``,
    ``mn`` sets ``n = value / m`` and ``mnb`` sets ``n = value / (m b)``.
    ``configs`` may list explicit configs instead (then ``points`` are only
    the axis labels).
    """

    axis: str
    points: tuple
    held: dict
    theta_spec: object = MatchedPrior()
    trials: int = 200
    seed: int = 0
    gamma: float = 1.0
    configs: tuple = None

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValidationError(f"axis must be one of {AXES}")
        if len(self.points) < 4:
            raise ValidationError("a sweep needs at least 4 points")
        if self.configs is not None and len(self.configs) != len(self.points):
            raise ValidationError("one config per point")

    def config_at(self, index):
        if self.configs is not None:
            return self.configs[index]
        value = self.points[index]
        h = dict(self.held)
        if self.axis in ("n", "m", "b"):
            h[self.axis] = int(round(value))
        elif self.axis == "mb":
            h["m"] = int(round(value / h["b"]))
        elif self.axis == "mn":
            h["n"] = int(round(value / h["m"]))
        else:
            h["n"] = int(round(value / (h["m"] * h["b"])))
        return make_config(**h)


def axis_value(axis, config):
    c = config
    return {"mb": c.m * c.b, "mn": c.m * c.n, "mnb": c.m * c.n * c.b,
            "n": c.n, "m": c.m, "b": c.b}[axis]


@dataclass
class SweepRow:
    index: int
    axis_value: float
    config: ProblemConfig
    report: RiskReport = None
    lower_bound: float = float("nan")
    lower_closed: float = float("nan")
    upper_bound: float = float("nan")
    error: str = None

    def record(self):
        c = self.config
        rec = {"n": c.n, "m": c.m, "b": c.b, "alpha": c.alpha, "c_tilde": c.c_tilde,
               "regime": str(classify_regime(c)), "trials": 0, "mean_risk": float("nan"),
               "std_error": float("nan"), "sampling_var": float("nan"), "quant_var": float("nan"),
               "tail_bias": float("nan"), "lower_solver": self.lower_bound,
               "lower_closed": self.lower_closed, "upper_analytic": self.upper_bound}
        if self.report is not None:
            r = self.report
            rec.update(trials=r.trials, mean_risk=r.mean_risk, std_error=r.std_error, **r.components)
            rec.update({"delta": r.plan.delta, "b0": r.plan.b0, "btilde": r.plan.btilde,
                        "k": r.plan.k, "istar": r.plan.istar})
        if self.error:
            rec["error"] = self.error
        return rec


def run_point(sweep, index):
    config = sweep.config_at(index)
    row = SweepRow(index, axis_value(sweep.axis, config), config)
    try:
        report = estimate_risk(config, sweep.theta_spec, sweep.trials, streams.derive_seed(sweep.seed, index))
        bounds = lowerbound.bound_report(config, sweep.gamma)
        row.report = report
        row.lower_bound = bounds.solver_value
        row.lower_closed = bounds.closed_form_value
        row.upper_bound = analytic_upper_bound(report.plan)["total"]
    except (ValidationError, lowerbound.SolverError) as exc:
        row.error = f"{type(exc).__name__}: {exc}"
    return row


def worker_count(tasks):
    cap = os.environ.get("DNPR_WORKERS")
    limit = int(cap) if cap else 1
    return max(1, min(limit, tasks, os.cpu_count() or 1))


def run_sweep(sweep):
    """One row per point, in point order, reproducible per ``(seed, index)``."""
    n = len(sweep.points)
    workers = worker_count(n)
    if workers == 1:
        return [run_point(sweep, i) for i in range(n)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_point, [sweep] * n, range(n)))


# --- slope fitting -----------------------------------------------------


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r_squared: float


def fit_slope(points, log_log=True):
    """Least-squares line through ``(x, y)`` (in logs when ``log_log``)."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
        raise ValidationError("need at least two (x, y) points")
    x, y = pts[:, 0], pts[:, 1]
    if log_log:
        if np.any(x <= 0) or np.any(y <= 0):
            raise ValidationError("log-log fit needs positive values")
        x, y = np.log(x), np.log(y)
    if np.ptp(x) == 0:
        raise ValidationError("x values are all equal")
    fit = stats.linregress(x, y)
    r2 = float(np.clip(fit.rvalue ** 2, 0.0, 1.0)) if np.ptp(y) > 0 else 1.0
    return SlopeFit(float(fit.slope), float(fit.intercept), r2)


# --- regime experiments ------------------------------------------------

EXPECTED = {
    Regime.INSUFFICIENT: lambda a: -2.0 * a,
    Regime.INTERMEDIATE: lambda a: -a / (a + 1.0),
    Regime.SUFFICIENT: lambda a: -2.0 * a / (2.0 * a + 1.0),
}
TOLERANCE = {Regime.INSUFFICIENT: 0.3, Regime.INTERMEDIATE: 0.12, Regime.SUFFICIENT: 0.1}
COMPOSITE = {Regime.INSUFFICIENT: "mb", Regime.INTERMEDIATE: "mnb", Regime.SUFFICIENT: "mn"}


def _fixed_point_bits(alpha, m, values_per_machine, c_tilde, n=None):
    """Budget ``b = values * b0`` where ``b0`` itself depends on ``m b``."""
    b0 = 1
    for _ in range(64):
        b = values_per_machine * b0
        delta = (m * b) ** (-(2 * alpha + 1) / 2)
        if n is not None:
            delta = max(delta, n ** -0.5)
        nb0 = bits_for(delta, c_tilde)
        if nb0 == b0:
            return b
        b0 = nb0
    raise RuntimeError("bit width did not settle")


def canonical_configs(regime, alpha=1, c=math.pi):
    """Five configs per regime that respect the regime inequalities with a factor-4 margin."""
    regime = Regime(regime)
    c_tilde = c / math.pi ** alpha
    p = 2 * alpha + 1
    if regime is Regime.INSUFFICIENT:
        # m machines carry 8 values each; n is large enough that mb <= n^(1/p) / 4 throughout.
        ms = [1, 2, 4, 8, 16]
        bs = [_fixed_point_bits(alpha, m, 8, c_tilde) for m in ms]
        n = 10 ** math.ceil(p * math.log10(4 * max(m * b for m, b in zip(ms, bs))))
        return [make_config(n, m, b, alpha, c) for m, b in zip(ms, bs)]
    if regime is Regime.SUFFICIENT:
        # m = 8 and n a perfect cube scaled so (mn)^(1/p) is an integer; b carries 4x that many values.
        m = 8
        out = []
        for s in (20, 40, 80, 160, 320):
            n = -(-(s ** p) // m)
            delta = n ** -0.5
            b = bits_for(delta, c_tilde) * 4 * (iroot(m * n, p) + 1)
            out.append(make_config(n, m, b, alpha, c))
        return out
    # Intermediate: n fixed, m grows; b is the largest budget with b <= (m_min n)^(1/p) / 4.
    n = 10 ** (2 * p)
    ms = [64, 128, 256, 512, 1024]
    b = iroot(ms[0] * n, p) // 4
    return [make_config(n, m, b, alpha, c) for m in ms]


def check_regime_margins(config, regime, factor=4):
    """Whether ``config`` sits inside ``regime`` with an integer margin ``factor`` (exact)."""
    p = 2 * config.alpha + 1
    n, mn, mb, b = config.n, config.m * config.n, config.m * config.b, config.b
    regime = Regime(regime)
    if regime is Regime.INSUFFICIENT:
        return (factor * mb) ** p <= n
    if regime is Regime.SUFFICIENT:
        return b ** p >= factor ** p * mn
    return mb ** p >= factor ** p * n and (factor * b) ** p <= mn


def regime_experiment(regime, alpha=1, trials=200, seed=0, gamma=1.0):
    """Run the regime's canonical sweep and compare the fitted slope to the theory exponent."""
    regime = Regime(regime)
    configs = canonical_configs(regime, alpha)
    axis = COMPOSITE[regime]
    sweep = SweepSpec(axis, tuple(axis_value(axis, c) for c in configs), {},
                      MatchedPrior(gamma), trials, seed, gamma, tuple(configs))
    rows = run_sweep(sweep)
    failed = [r for r in rows if r.error]
    if failed:
        raise RuntimeError(f"sweep points failed: {[r.error for r in failed]}")
    fit = fit_slope([(r.axis_value, r.report.mean_risk) for r in rows])
    expected = EXPECTED[regime](alpha)
    tol = TOLERANCE[regime]
    audit = BudgetAudit()
    for r in rows:
        audit.merge(r.report.audit)
    return {"regime": str(regime), "alpha": alpha, "axis": axis, "slope": fit.slope,
            "r_squared": fit.r_squared, "expected_exponent": expected, "tolerance": tol,
            "pass": abs(fit.slope - expected) <= tol, "rows": rows, "audit": audit}


# --- output ------------------------------------------------------------


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(records, fields=None):
    fields = fields or CSV_FIELDS
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for rec in records:
        w.writerow([_fmt(rec.get(f, "")) for f in fields])
    return buf.getvalue()


def rows_to_json(records, fields=None):
    fields = fields or CSV_FIELDS
    out = []
    for rec in records:
        out.append({f: (None if isinstance(rec.get(f), float) and math.isnan(rec[f]) else rec.get(f))
                    for f in fields if f in rec})
    return json.dumps(out, indent=2, sort_keys=False) + "\n"
