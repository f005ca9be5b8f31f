import dataclasses
import json
import math

import pytest

from dnpr import harness, protocol
from dnpr.harness import (BudgetAudit, MatchedPrior, SweepSpec, analytic_upper_bound,
                          canonical_configs, check_regime_margins, estimate_risk, fit_slope,
                          rows_to_csv, rows_to_json, run_sweep)
from dnpr.model import (PolynomialDecay, Regime, SingleSpike, ValidationError, classify_regime,
                        make_config, sample_coefficients)

BASE = make_config(10**6, 100, 64, 1, math.pi)


def test_noiseless_unquantized_risk_is_pure_bias():
    config = make_config(10**12, 8, 400, 1, math.pi)
    theta = PolynomialDecay(0.5, 0.8, 200)
    rep = estimate_risk(config, theta, trials=3, seed=1, quantize=False, noise=False)
    tail = sample_coefficients(theta, 1.0, 1).tail_energy(rep.plan.istar)
    assert rep.mean_risk == pytest.approx(tail, rel=1e-12)
    assert rep.components["tail_bias"] == tail
    assert rep.components["sampling_var"] < 1e-28


def test_spike_past_truncation_sets_a_bias_floor():
    p = protocol.plan(BASE)
    spike = SingleSpike(p.istar + 5)
    rep = estimate_risk(BASE, spike, trials=20, seed=2)
    assert rep.mean_risk >= (1.0 / (p.istar + 5)) ** 2


def test_single_machine_below_upper_bound():
    config = make_config(10**4, 1, 200, 1, 1.0, c_tilde=1.0)
    rep = estimate_risk(config, PolynomialDecay(0.5, 1.0, 200), trials=500, seed=3)
    assert rep.plan.k == 1
    assert rep.mean_risk <= analytic_upper_bound(rep.plan)["total"]


def test_components_add_up():
    rep = estimate_risk(BASE, MatchedPrior(), trials=300, seed=4)
    assert abs(rep.component_sum() - rep.mean_risk) <= 3 * rep.std_error
    assert rep.mean_risk >= 0


def test_components_within_their_bounds():
    rep = estimate_risk(BASE, PolynomialDecay(0.5, 0.9, 200), trials=300, seed=5)
    ub = analytic_upper_bound(rep.plan)
    assert rep.components["sampling_var"] <= ub["sampling"] + 3 * rep.std_error
    assert rep.components["quant_var"] <= ub["quantization"] + 3 * rep.std_error


def test_analytic_upper_bound_example():
    ub = analytic_upper_bound(protocol.plan(BASE))
    assert ub["sampling"] == pytest.approx(1e-6)
    assert ub["quantization"] == pytest.approx(22e-6 / 66)
    assert ub["bias"] == pytest.approx(1 / 484)
    assert ub["total"] == pytest.approx(2.0675e-3, rel=1e-3)


def test_analytic_upper_bound_limits():
    p = protocol.plan(BASE)
    assert analytic_upper_bound(dataclasses.replace(p, delta=0.0))["quantization"] == 0.0
    assert analytic_upper_bound(dataclasses.replace(p, istar=10**9))["bias"] < 1e-17
    assert analytic_upper_bound(p, theta_tail=0.25)["bias"] == 0.25


def test_estimate_risk_is_reproducible():
    a = estimate_risk(BASE, MatchedPrior(), trials=30, seed=6)
    b = estimate_risk(BASE, MatchedPrior(), trials=30, seed=6)
    assert (a.mean_risk, a.std_error, a.components) == (b.mean_risk, b.std_error, b.components)
    c = estimate_risk(BASE, MatchedPrior(), trials=30, seed=7)
    assert c.mean_risk != a.mean_risk


def test_estimate_risk_rejects_zero_trials():
    with pytest.raises(ValidationError):
        estimate_risk(BASE, MatchedPrior(), trials=0)


def test_budget_audit_counts_and_raises():
    audit = BudgetAudit()
    p = protocol.plan(BASE)
    audit.record(p, 100)
    assert (audit.messages, audit.max_bits, audit.violations) == (100, 55, 0)
    with pytest.raises(protocol.BudgetExceeded):
        audit.record(dataclasses.replace(p, btilde=6), 1)
    assert audit.violations == 1


def _insufficient_sweep(trials=100, seed=0):
    b = 88
    points = tuple(float(b * m) for m in (1, 2, 3, 5, 8, 13, 21, 34))
    return SweepSpec("mb", points, {"n": 10**12, "b": b, "alpha": 1, "c": math.pi},
                     MatchedPrior(), trials, seed)


def test_insufficient_sweep_is_monotone():
    rows = run_sweep(_insufficient_sweep())
    assert all(r.error is None for r in rows)
    assert all(classify_regime(r.config) is Regime.INSUFFICIENT for r in rows)
    for a, b in zip(rows, rows[1:]):
        slack = 2 * math.hypot(a.report.std_error, b.report.std_error)
        assert b.report.mean_risk <= a.report.mean_risk + slack


def test_sweep_is_reproducible_and_worker_independent(monkeypatch):
    spec = _insufficient_sweep(trials=20, seed=3)
    first = rows_to_csv([r.record() for r in run_sweep(spec)])
    assert rows_to_csv([r.record() for r in run_sweep(spec)]) == first
    monkeypatch.setenv("DNPR_WORKERS", "2")
    assert rows_to_csv([r.record() for r in run_sweep(spec)]) == first


def test_sweep_keeps_going_past_failed_points():
    spec = SweepSpec("b", (1.0, 64.0, 128.0, 256.0), {"n": 10**6, "m": 10, "alpha": 1, "c": math.pi},
                     MatchedPrior(), 5, 0)
    rows = run_sweep(spec)
    assert rows[0].error and "BudgetError" in rows[0].error
    assert all(r.error is None and r.report is not None for r in rows[1:])
    assert "error" in rows[0].record()


def test_sweep_spec_validation():
    with pytest.raises(ValidationError):
        SweepSpec("q", (1, 2, 3, 4), {})
    with pytest.raises(ValidationError):
        SweepSpec("n", (1, 2, 3), {})


def test_composite_axes_move_one_parameter():
    held = {"n": 1000, "m": 4, "b": 10, "alpha": 1, "c": 1.0}
    assert SweepSpec("mb", (80.0,) * 4, held).config_at(0).m == 8
    assert SweepSpec("mn", (8000.0,) * 4, held).config_at(0).n == 2000
    assert SweepSpec("mnb", (80000.0,) * 4, held).config_at(0).n == 2000


def test_fit_slope_examples():
    fit = fit_slope([(1, 1), (10, 1e-2), (100, 1e-4)])
    assert fit.slope == pytest.approx(-2.0)
    assert fit.r_squared == pytest.approx(1.0)
    shifted = fit_slope([(1, 5), (10, 5e-2), (100, 5e-4)])
    assert shifted.slope == pytest.approx(fit.slope)
    assert shifted.intercept == pytest.approx(fit.intercept + math.log(5))
    with pytest.raises(ValidationError):
        fit_slope([(1, 1)])
    with pytest.raises(ValidationError):
        fit_slope([(1, 1), (0, 2)])
    assert fit_slope([(0, 1), (1, 3), (2, 5)], log_log=False).slope == pytest.approx(2.0)
    assert 0 <= fit_slope([(1, 3), (2, 1), (3, 4), (4, 1)]).r_squared <= 1


@pytest.mark.parametrize("alpha", [1, 2])
@pytest.mark.parametrize("regime", list(Regime))
def test_canonical_configs_hold_regime_margins(regime, alpha):
    configs = canonical_configs(regime, alpha)
    assert len(configs) == 5
    for c in configs:
        assert classify_regime(c) is regime
        assert check_regime_margins(c, regime)
        assert protocol.plan(c).message_bits <= c.b
    axis = harness.COMPOSITE[regime]
    values = [harness.axis_value(axis, c) for c in configs]
    assert values == sorted(values) and len(set(values)) == 5


def test_csv_and_json_share_fields():
    rows = run_sweep(_insufficient_sweep(trials=5))
    recs = [r.record() for r in rows]
    text = rows_to_csv(recs)
    assert text.splitlines()[0] == ",".join(harness.CSV_FIELDS)
    assert len(text.splitlines()) == 9
    data = json.loads(rows_to_json(recs))
    assert list(data[0]) == harness.CSV_FIELDS
    assert data[0]["mean_risk"] == recs[0]["mean_risk"]
