import dataclasses
import json
import math

import numpy as np
import pytest
from scipy import stats

from slicevol.errors import DomainError, InadmissibleEdgeError, SchemaError
from slicevol.estimation import (
    DELTA_MAX,
    FitConfig,
    FitReport,
    ModelParams,
    classify_edges,
    delta_neg_loglik,
    fit_all,
    fit_binned,
    fit_delta,
    fit_gamma_rate,
    fit_jump_betas,
    fit_lambdas,
    fit_sde,
    lambda_objective,
    naive_baseline_std,
    sde_neg_loglik,
    select_bin,
    stability,
)
from slicevol.jump_model import JumpParams
from slicevol.sde_core import SdeParams
from slicevol.slice_data import SliceSeries, reverse
from slicevol.synth import SynthConfig, default_params, generate, profile

SEED = 2026


@pytest.fixture(scope="module")
def hearts():
    return generate(SynthConfig(n_hearts=200, seed=SEED))


@pytest.fixture(scope="module")
def report(hearts):
    return fit_all(hearts)


def heart(g, p=None, hid="h"):
    p = np.full(len(g), 100.0) if p is None else np.asarray(p, float)
    p[0] = p[-1] = 0.0
    return SliceSeries(hid, p, np.asarray(g, float))


@pytest.mark.parametrize(
    "ends, code",
    [((0.0, 120.0), 0), ((35.0, 120.0), 1), ((0.0, 0.0), 2)],
)
def test_classify_examples(ends, code):
    g0, g1 = ends
    g = [g0, g1, 100, 100, 100, 120, 0]
    edges = classify_edges([heart(g)])
    assert edges.case[0] == code
    assert edges.case[1] == 0  # the other end is (0, 120)
    assert sum(len(s) for s in (edges.I_n, edges.I_u, edges.I_d)) == 2


def test_classify_rejects_fourth_case():
    edges = classify_edges([heart([0, 120, 100, 100, 100, 120, 0])])
    assert edges.counts() == {"n": 2, "u": 0, "d": 0, "edges": 2}
    # the fourth case is already rejected as disconnected by the series type
    with pytest.raises(SchemaError):
        heart([40, 0, 100, 100, 100, 120, 0])


def test_classify_rejects_fourth_case_directly():
    s = heart([0, 120, 100, 100, 100, 120, 0])
    g = s.g.copy()
    g[0], g[1] = 40.0, 0.0
    # bypass validation to reach the classifier's own guard
    object.__setattr__(s, "g", g)
    with pytest.raises(InadmissibleEdgeError):
        classify_edges([s])


def test_fit_requires_truth():
    s = SliceSeries("x", profile(6, 500.0))
    with pytest.raises(SchemaError, match="truth_area_mm2"):
        classify_edges([s])


def test_lambda_examples():
    assert fit_lambdas(5, 3, 100) == (0.05, 0.03)
    assert fit_lambdas(0, 0, 10) == (0.0, 0.0)
    with pytest.raises(DomainError):
        fit_lambdas(0, 0, 0)


def test_lambda_binomial_interval(report):
    # 200 hearts give 2M = 400 edges; true lambda_d = 0.06
    lo, hi = stats.binom.interval(0.99, 400, 0.06)
    assert report.counts["edges"] == 400
    assert lo / 400 <= report.lambda_d <= hi / 400


@pytest.mark.parametrize("n_u, n_d, n", [(30, 20, 400), (1, 1, 10), (0, 5, 50), (186, 23, 400)])
def test_lambda_is_optimal(n_u, n_d, n):
    lu, ld = fit_lambdas(n_u, n_d, n)
    best = lambda_objective(lu, ld, n_u, n_d, n)
    for du in (-1e-3, 0, 1e-3):
        for dd in (-1e-3, 0, 1e-3):
            u, d = lu + du, ld + dd
            if u < 0 or d < 0 or u + d > 1:
                continue
            assert lambda_objective(u, d, n_u, n_d, n) <= best


def test_one_sample_rate_hits_bound():
    beta, info = fit_gamma_rate([200.0], [200.0])
    assert beta == pytest.approx(FitConfig().beta_bounds[1], rel=1e-2)
    assert not info.converged
    assert "bound" in info.note


def test_rate_recovery_many_samples():
    rng = np.random.default_rng(5)
    mu = rng.uniform(50, 500, 10**4)
    x = rng.gamma(mu * 0.05, 1 / 0.05)
    beta, info = fit_gamma_rate(x, mu)
    assert info.converged
    assert abs(beta / 0.05 - 1) < 0.05


def test_rate_scale_equivariance():
    rng = np.random.default_rng(6)
    mu = rng.uniform(50, 500, 500)
    x = rng.gamma(mu * 0.05, 1 / 0.05)
    b1, _ = fit_gamma_rate(x, mu)
    b2, _ = fit_gamma_rate(2 * x, 2 * mu)
    assert b2 == pytest.approx(b1 / 2, rel=1e-9)


def test_betas_absent_for_empty_cases():
    edges = classify_edges([heart([0, 120, 100, 100, 100, 90, 0]), heart([0, 80, 100, 100, 100, 110, 0], hid="b")])
    out = fit_jump_betas(edges, 0.0, 0.0)
    assert out["beta_u0"][0] is None and out["beta_u1"][0] is None
    assert out["beta_n"][0] is not None


def transition_heart(g3):
    return heart([0, 100, 100, g3, 100, 0])


def test_sde_nll_closed_form():
    # N = 5: one transition 2 -> 3 with v = 0 and p = 100 throughout
    theta, alpha, p = 1.0, 2.0, 100.0
    var = alpha * p * (1 - math.exp(-2 * theta))
    expected = -stats.gamma.logpdf(100.0, p * p / var, scale=var / p)
    assert sde_neg_loglik(SdeParams(theta, alpha), [transition_heart(100.0)]) == pytest.approx(expected, rel=1e-8)


def test_sde_nll_monotone_for_perfect_predictor():
    p = profile(12, 900.0)
    data = [SliceSeries("perfect", p, p.copy())]
    nll = [sde_neg_loglik(SdeParams(1.0, a), data) for a in (0.1, 1.0, 10.0)]
    assert all(np.isfinite(nll))
    assert nll[0] < nll[1] < nll[2]


def test_sde_nll_palindrome_invariance():
    p = profile(12, 900.0)
    w = 1 + 0.1 * np.cos(np.arange(13) * 1.3)
    w = 0.5 * (w + w[::-1])
    g = p * w
    data = [SliceSeries("pal", p, g)]
    params = SdeParams(0.8, 12.0)
    assert sde_neg_loglik(params, data) == pytest.approx(sde_neg_loglik(params, [reverse(s) for s in data]), rel=1e-12)


def test_short_series_contribute_nothing():
    s = heart([0, 90, 100, 110, 0])  # N = 4
    assert sde_neg_loglik(SdeParams(1.0, 1.0), [s]) == 0.0


def test_sde_recovery(report):
    truth = default_params().sde
    assert abs(report.theta0 / truth.theta0 - 1) < 0.15
    assert abs(report.alpha / truth.alpha - 1) < 0.15
    assert report.stages["sde"].converged


def test_sde_union_of_halves(hearts):
    union, _ = fit_sde(hearts)
    for half in (hearts[:100], hearts[100:]):
        own, _ = fit_sde(half)
        assert sde_neg_loglik(union, half) - sde_neg_loglik(own, half) < 2.0


@pytest.mark.parametrize("factor", [100.0, 0.01])
def test_sde_far_initial_guess(hearts, report, factor):
    best = -report.loglik_sde
    est, info = fit_sde(hearts, init=(factor * report.theta0, factor * report.alpha))
    assert sde_neg_loglik(est, hearts) - best < 1e-2


def test_delta_recovery(report):
    assert abs(report.delta / default_params().delta - 1) < 0.30


def test_delta_stays_away_from_zero(hearts, report):
    delta, _ = fit_delta(hearts, report.params.sde, init=1e-4)
    assert delta >= 1e-3
    assert fit_delta(hearts, report.params.sde)[0] >= 1e-3


def test_delta_plateau(hearts):
    sde = SdeParams(5.0, 25.0)
    assert abs(delta_neg_loglik(4.0, sde, hearts) - delta_neg_loglik(5.0, sde, hearts)) < 1e-2


def test_delta_capped(hearts, report):
    delta, _ = fit_delta(hearts, report.params.sde, FitConfig(delta_max=0.2))
    assert delta <= 0.2 + 1e-12


def test_fit_all_zero_jumps():
    truth = dataclasses.replace(default_params(), jump=JumpParams(0.0, 0.0, None, None, 0.05))
    data = generate(SynthConfig(n_hearts=30, seed=3, true_params=truth))
    rep = fit_all(data)
    assert (rep.lambda_u, rep.lambda_d) == (0.0, 0.0)
    assert rep.beta_u0 is None and rep.beta_u1 is None and rep.beta_n is not None
    assert rep.complete and not rep.errors
    sde, _ = fit_sde(data)
    assert (rep.theta0, rep.alpha) == (sde.theta0, sde.alpha)
    assert isinstance(rep.params, ModelParams)


def test_stage_separability(hearts):
    edges = classify_edges(hearts)
    base = fit_jump_betas(edges, 0.45, 0.06)
    up, no = edges.I_u, edges.I_n
    g0, g1 = edges.g0.copy(), edges.g1.copy()
    g0[up] *= 1.7
    g1[up] *= 0.6
    moved = fit_jump_betas(dataclasses.replace(edges, g0=g0, g1=g1), 0.45, 0.06)
    assert moved["beta_n"][0] == base["beta_n"][0]
    assert moved["beta_u0"][0] != base["beta_u0"][0]
    g1 = edges.g1.copy()
    g1[no] *= 1.3
    moved = fit_jump_betas(dataclasses.replace(edges, g1=g1), 0.45, 0.06)
    assert moved["beta_u0"][0] == base["beta_u0"][0]
    assert moved["beta_u1"][0] == base["beta_u1"][0]


def test_likelihood_factorizes(report):
    total = report.loglik_jump + report.loglik_sde + report.loglik_delta
    assert report.loglik_total == total
    assert report.to_dict()["loglik"]["total"] == total


def test_counts_sum(report):
    c = report.counts
    assert c["n"] + c["u"] + c["d"] == c["edges"] == 400


def test_bitwise_reproducible(hearts, report):
    again = fit_all(hearts)
    assert json.dumps(again.to_dict()) == json.dumps(report.to_dict())


def test_report_json_round_trip(report):
    text = json.dumps(report.to_dict())
    back = FitReport.from_dict(json.loads(text))
    assert json.dumps(back.to_dict()) == text
    assert back.params == report.params


def test_params_dict_round_trip():
    p = default_params()
    assert ModelParams.from_dict(p.as_dict()) == p
    d = p.as_dict()
    del d["alpha"]
    with pytest.raises(SchemaError):
        ModelParams.from_dict(d)
    with pytest.raises(DomainError):
        dataclasses.replace(p, delta=DELTA_MAX * 2)


def test_fit_binned_trend(hearts, capsys):
    bins = fit_binned(hearts, 8)
    assert len(bins) == 8
    assert sum(b["n_hearts"] for b in bins) == 200
    los = [b["vol_lo_ml"] for b in bins]
    assert los == sorted(los)
    # reported, not asserted: alpha * theta0 per bin
    for b in bins:
        r = b["report"]
        if r.theta0 is not None:
            print(f"bin {b['bin']}: {b['vol_mid_ml']:.1f} ml, alpha*theta0 = {r.alpha * r.theta0:.2f}")
    assert select_bin(bins, -1.0)["bin"] == 0
    assert select_bin(bins, 1e9)["bin"] == 7
    assert select_bin(bins, bins[3]["vol_lo_ml"])["bin"] == 3


def test_stability_rows(hearts):
    full, rows = stability(hearts[:60], splits=3, repeats=1, seed=1)
    assert len(rows) == 6
    assert all(r["delta_nll"] >= -1e-6 for r in rows)
    assert {r["direction"] for r in rows} == {"forward", "reversed"}


def no_down_heart(i):
    # jump up at the start, no jump at the end
    return heart([30, 120, 100, 100, 100, 120, 0], hid=f"u{i}")


def test_jump_up_without_jump_down_is_degenerate():
    data = [no_down_heart(i) for i in range(3)]
    rep = fit_all(data)
    assert rep.lambda_d == 0.0 and rep.lambda_u > 0
    assert any(e.startswith("DEGENERATE_PARAMS") for e in rep.errors)
    assert rep.loglik_jump is None
    json.dumps(rep.to_dict(), allow_nan=False)


def test_binned_pools_degenerate_jumps(hearts):
    bins = fit_binned(hearts[:40], 8)
    pooled = fit_all(hearts[:40])
    for b in bins:
        rep = b["report"]
        assert rep.complete
        if b["jump_pooled"]:
            assert rep.lambda_d == pooled.lambda_d and rep.beta_u0 == pooled.beta_u0
            assert math.isfinite(rep.loglik_jump)
    assert any(b["jump_pooled"] for b in bins)


def test_empty_dataset_is_partial_report():
    rep = fit_all([])
    assert rep.errors and not rep.complete


@pytest.mark.parametrize(
    "probs, nu, mean, std",
    [([1.0] * 10, 1.0, 10.0, 0.0), ([0.5], 2.0, 1.0, 1.0), ([0.5] * 100, 1.0, 50.0, 5.0)],
)
def test_naive_baseline(probs, nu, mean, std):
    m, s = naive_baseline_std(probs, nu)
    assert m == pytest.approx(mean, abs=1e-12)
    assert s == pytest.approx(std, abs=1e-12)


def test_naive_baseline_domain():
    with pytest.raises(DomainError):
        naive_baseline_std([1.2], 1.0)
    with pytest.raises(DomainError):
        naive_baseline_std([0.2], 0.0)
