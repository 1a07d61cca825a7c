"""End-to-end acceptance suite.

Criteria 1-8 are property checks against independent oracles; criteria 9-14
are a desk-scale frequentist reproduction (J = 200 trials per hypothesis,
single-chain reduced MCMC) of the published operating characteristics for
toxicity scenario 1 / efficacy scenario 1. Each test prints a single
PASS/FAIL line with the measured value before asserting.

Run with `-s` (or read test_output.txt) to see the measured values.
"""

import pickle

import numpy as np
import pytest
from scipy import stats

from combodose.models import (
    DoseCombo,
    EfficacyParams,
    ToxicityParamsClinical,
    build_mtd_curve,
    clinical_to_natural,
    natural_to_clinical,
    prob_dlt,
    std_normal_quantile,
)
from combodose.inference import (
    McmcConfig,
    PosteriorDraws,
    conditional_mtd_solutions,
    conditional_mtd_quantile,
    sample_posterior,
    TrialData,
)
from combodose.design import (
    DesignConfig,
    new_trial,
    pooled_dlt_exceedance,
    stage2_sample_cohort,
)
from combodose.scenarios import builtin_scenario
from combodose.simulate import (
    calibrate_delta_u,
    rejection_rate_at,
    run_study,
    summarize_oc,
)

from oracles import (
    beta_exceedance,
    conditional_mtd_bisect,
    normal_quantile_bisect,
)

DESIGN = DesignConfig()
REDUCED_MCMC = McmcConfig(iterations=6000, burn_in=1500, chains=1)
J = 200
WORKERS = 8


def report(criterion, ok, detail):
    print(f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {criterion}: {detail}"


def random_clinical(rng):
    rho10, rho01 = rng.uniform(0.01, 0.99, 2)
    while rho10 == rho01:
        rho01 = rng.uniform(0.01, 0.99)
    rho00 = rng.uniform(1e-6, 1 - 1e-6) * min(rho10, rho01)
    return ToxicityParamsClinical(rho00, rho10, rho01, rng.uniform(0.0, 10.0))


# ---------------------------------------------------------------------------
# Property criteria (1-8)
# ---------------------------------------------------------------------------

def test_criterion_01_curve_identity():
    rng = np.random.default_rng(101)
    worst = 0.0
    checked = 0
    for _ in range(1000):
        p = random_clinical(rng)
        curve = build_mtd_curve(p, 0.33, 101)
        if curve.is_empty:
            continue
        nat = clinical_to_natural(p)
        errs = [abs(prob_dlt(nat, DoseCombo(float(x), float(y))) - 0.33)
                for x, y in curve.grid_points()]
        worst = max(worst, max(errs))
        checked += 1
    report(1, worst < 1e-9,
           f"curve identity |pi_Z - 0.33| max {worst:.3e} over "
           f"{checked} non-empty parameter sets (tol 1e-9)")


def test_criterion_02_reparameterization_round_trip():
    rng = np.random.default_rng(102)
    worst = 0.0
    for _ in range(1000):
        p = random_clinical(rng)
        back = natural_to_clinical(clinical_to_natural(p))
        worst = max(worst, abs(back.rho00 - p.rho00), abs(back.rho10 - p.rho10),
                    abs(back.rho01 - p.rho01), abs(back.alpha3 - p.alpha3))
    report(2, worst < 1e-10,
           f"clinical<->natural round trip max error {worst:.3e} (tol 1e-10)")


def test_criterion_03_quantile_accuracy():
    rng = np.random.default_rng(103)
    ps = np.concatenate([[1e-7, 1 - 1e-7, 0.5, 0.33, 0.975],
                         rng.uniform(1e-6, 1 - 1e-6, 995)])
    worst = max(abs(std_normal_quantile(float(p)) - normal_quantile_bisect(float(p)))
                for p in ps)
    report(3, worst < 1e-6,
           f"std_normal_quantile vs bisection oracle on {ps.size} points, "
           f"max error {worst:.3e} (tol 1e-6)")


def test_criterion_04_prior_recovery():
    cfg = McmcConfig(iterations=45000, burn_in=5000, thin=4, chains=4,
                     seed=104)
    tox = sample_posterior("toxicity", TrialData(), cfg)
    eff = sample_posterior("efficacy", TrialData(), cfg)
    assert tox.draws.shape[0] >= 40000 and eff.draws.shape[0] >= 40000

    worst = 0.0
    checks = []
    # toxicity: rho10, rho01 ~ beta(1,1); u = rho00/min(rho10,rho01) ~ beta(1,1)
    u = tox.draws[:, 0] / np.minimum(tox.draws[:, 1], tox.draws[:, 2])
    checks += [(tox.draws[:, 1], stats.uniform()), (tox.draws[:, 2],
                                                    stats.uniform()),
               (u, stats.uniform()),
               # alpha3 ~ gamma(0.1, rate 0.1)
               (tox.draws[:, 3], stats.gamma(0.1, scale=10.0)),
               # beta0, beta4, beta5 ~ N(0, 10^2); beta1..3 ~ gamma(0.1, 0.1)
               (eff.draws[:, 0], stats.norm(0, 10)),
               (eff.draws[:, 4], stats.norm(0, 10)),
               (eff.draws[:, 5], stats.norm(0, 10)),
               (eff.draws[:, 1], stats.gamma(0.1, scale=10.0)),
               (eff.draws[:, 3], stats.gamma(0.1, scale=10.0))]
    for draws, dist in checks:
        for p in (0.1, 0.25, 0.5, 0.75, 0.9):
            # probability-scale comparison: empirical CDF at the analytic
            # prior quantile
            worst = max(worst, abs(np.mean(draws <= dist.ppf(p)) - p))
    report(4, worst < 0.02,
           f"empty-data posterior vs analytic prior quantiles, max CDF "
           f"discrepancy {worst:.4f} over {len(checks)} margins "
           f"({tox.draws.shape[0]} retained draws/model, tol 0.02)")


def test_criterion_05_ewoc_closed_form():
    rng = np.random.default_rng(105)
    worst = 0.0
    for _ in range(200):
        p = random_clinical(rng)
        fixed = float(rng.uniform(0, 1))
        axis = "x" if rng.random() < 0.5 else "y"
        draws = PosteriorDraws("toxicity", np.array(
            [[p.rho00, p.rho10, p.rho01, p.alpha3]]), np.array([1.0]))
        sol = conditional_mtd_solutions(draws, axis, fixed, 0.33)[0]
        oracle = conditional_mtd_bisect(p.rho00, p.rho10, p.rho01, p.alpha3,
                                        axis=axis, fixed=fixed, theta_z=0.33)
        worst = max(worst, abs(sol - oracle))

    pts = [[p.rho00, p.rho10, p.rho01, p.alpha3]
           for p in (random_clinical(rng) for _ in range(100))]
    draws = PosteriorDraws("toxicity", np.array(pts), np.array([1.0]))
    qs = [conditional_mtd_quantile(draws, "y", 0.5, a, 0.33)
          for a in np.linspace(0.05, 0.95, 37)]
    monotone = all(b >= a - 1e-12 for a, b in zip(qs, qs[1:]))
    report(5, worst < 1e-8 and monotone,
           f"conditional MTD solutions vs per-draw bisection max error "
           f"{worst:.3e} (tol 1e-8); quantile monotone in alpha: {monotone}")


def test_criterion_06_stage2_safety_oracle():
    rng = np.random.default_rng(106)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(0, 61))
        s = int(rng.integers(0, n + 1))
        got = pooled_dlt_exceedance(n, s, 0.43)
        worst = max(worst, abs(got - beta_exceedance(n, s, 0.43)))
    arcsine = pooled_dlt_exceedance(0, 0, 0.43)
    report(6, worst < 1e-10 and abs(arcsine - 0.545) < 1e-3,
           f"pooled-DLT exceedance vs incomplete-beta oracle on 100 (n,s) "
           f"pairs, max error {worst:.3e} (tol 1e-10); n=0 arcsine value "
           f"{arcsine:.5f} (0.545 +/- 1e-3)")


def test_criterion_07_flat_efficacy_uniformity():
    tox = ToxicityParamsClinical(0.01, 0.4, 0.3, 1.0)
    state = new_trial(DESIGN, seed=107)
    state.phase = "stage2"
    state.pending = []
    state.medians_tox = tox
    state.medians_eff = EfficacyParams(0, 0, 0, 0, 0, 0)
    state.curve = build_mtd_curve(tox, DESIGN.theta_z, DESIGN.grid_size)
    rng = np.random.default_rng(1070)
    xs = []
    while len(xs) < 10000:
        xs.extend(a.dose.x for a in stage2_sample_cohort(state, rng=rng))
    lo, hi = state.curve.domain
    ks = stats.kstest(np.array(xs[:10000]), "uniform",
                      args=(lo, hi - lo)).statistic
    report(7, ks < 0.02,
           f"flat-efficacy stage-2 x samples vs uniform, KS statistic "
           f"{ks:.4f} on 10^4 samples (tol 0.02)")


def test_criterion_08_parallel_determinism():
    sc = builtin_scenario(1, 1, "H1")
    design = DesignConfig(n1=6, n2=10)
    mcmc = McmcConfig(iterations=800, burn_in=200)
    blobs = []
    for workers in (1, 4, 8):
        results = run_study(sc, j=20, base_seed=108, design=design,
                            mcmc=mcmc, workers=workers)
        blobs.append(pickle.dumps([
            (r.trial_index, r.seed, r.doses.tobytes(), r.z.tobytes(),
             r.e.tobytes(), r.max_exceedance, r.decision.reject_h0)
            for r in results]))
    ok = blobs[0] == blobs[1] == blobs[2]
    report(8, ok, "run_study(J=20) byte-identical across 1, 4, 8 workers")


# ---------------------------------------------------------------------------
# Desk-scale reproduction (9-14): tox scenario 1 / eff scenario 1
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def h1_results():
    return run_study(builtin_scenario(1, 1, "H1"), j=J, base_seed=20,
                     design=DESIGN, mcmc=REDUCED_MCMC, workers=WORKERS)


@pytest.fixture(scope="module")
def h0_results():
    return run_study(builtin_scenario(1, 1, "H0"), j=J, base_seed=40,
                     design=DESIGN, mcmc=REDUCED_MCMC, workers=WORKERS)


@pytest.fixture(scope="module")
def calibrated(h0_results):
    candidates = np.round(np.arange(0.50, 0.951, 0.05), 2)
    return calibrate_delta_u(h0_results, list(candidates), target=0.2)


def test_criterion_09_dlt_rate(h1_results):
    rep = summarize_oc(h1_results, builtin_scenario(1, 1, "H1"), DESIGN)
    ok = abs(rep.average_dlt_rate - 0.336) <= 0.05 \
        and rep.pct_dlt_rate_above_threshold <= 0.02
    report(9, ok,
           f"H1 average DLT rate {rep.average_dlt_rate:.3f} (0.336 +/- 0.05); "
           f"trials with DLT rate > 0.43: "
           f"{rep.pct_dlt_rate_above_threshold:.3f} (<= 0.02)")


def test_criterion_10_power(h1_results, calibrated):
    delta_u, type1, _ = calibrated
    power = rejection_rate_at(h1_results, delta_u)
    ok = 0.55 <= power <= 0.95
    report(10, ok,
           f"H1 rejection rate {power:.3f} at calibrated delta_u = {delta_u} "
           f"(band [0.55, 0.95]; published 0.70-0.85)")


def test_criterion_11_type_i_error(h0_results, calibrated):
    delta_u, type1, met = calibrated
    ok = type1 <= 0.35
    report(11, ok,
           f"H0 type-I error {type1:.3f} at calibrated delta_u = {delta_u} "
           f"(<= 0.35; published 0.07-0.29; calibration target met: {met})")


def test_criterion_12_stage2_allocation(h1_results):
    rep = summarize_oc(h1_results, builtin_scenario(1, 1, "H1"), DESIGN)
    ok = rep.prop_stage2_efficacious >= 0.60
    report(12, ok,
           f"H1 stage-2 patients at true pi_E > 0.15: "
           f"{rep.prop_stage2_efficacious:.3f} (>= 0.60; published 0.69-0.77)")


def test_criterion_13_bias_profile_shape(h1_results):
    rep = summarize_oc(h1_results, builtin_scenario(1, 1, "H1"), DESIGN)
    k = rep.bias.size // 3
    left = float(np.mean(np.abs(rep.bias[:k])))
    center = float(np.mean(np.abs(rep.bias[k:2 * k])))
    right = float(np.mean(np.abs(rep.bias[2 * k:])))
    ok = center < left and center < right
    report(13, ok,
           f"|bias| by curve third: left {left:.4f}, center {center:.4f}, "
           f"right {right:.4f} (center smallest; "
           f"{rep.n_curve_excluded} stopped trials excluded)")


def test_criterion_14_early_stopping(h1_results):
    futility = float(np.mean([r.stopped_futility for r in h1_results]))
    safety = float(np.mean([r.stopped_safety for r in h1_results]))
    ok = futility <= 0.05 and safety <= 0.02
    report(14, ok,
           f"H1 futility-stop rate {futility:.3f} (<= 0.05); safety-stop "
           f"rate {safety:.3f} (<= 0.02)")
