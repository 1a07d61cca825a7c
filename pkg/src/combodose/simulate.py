"""Monte Carlo trial replication and operating characteristics.

Trials are independent work units with per-trial seeds derived from the
base seed through a splittable counter construction, so a study's results
are byte-identical regardless of worker count or scheduling order.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .models import (
    DEFAULT_WINDOW,
    DoseCombo,
    MtdCurve,
    ToxicityParamsClinical,
    build_mtd_curve,
    clinical_to_natural,
    prob_dlt,
    prob_eff,
)
from .inference import McmcConfig
from .design import DesignConfig, FinalDecision, advance, final_decision, new_trial
from .scenarios import Scenario


# ---------------------------------------------------------------------------
# Outcome generation
# ---------------------------------------------------------------------------

def simulate_outcome(scenario: Scenario, dose: DoseCombo,
                     rng: np.random.Generator) -> Tuple[int, int]:
    """Independent Bernoulli DLT and efficacy draws from the true models."""
    nat = clinical_to_natural(scenario.tox)
    z = int(rng.random() < prob_dlt(nat, dose))
    e = int(rng.random() < prob_eff(scenario.eff, dose))
    return z, e


# ---------------------------------------------------------------------------
# Single-trial unit
# ---------------------------------------------------------------------------

@dataclass
class TrialResult:
    seed: int
    trial_index: int
    n_patients: int
    n_dlt: int
    doses: np.ndarray                    # (n, 2) standardized
    z: np.ndarray
    e: np.ndarray
    stages: np.ndarray
    true_pi_e: np.ndarray                # true efficacy at each assigned dose
    decision: FinalDecision
    est_params: Optional[ToxicityParamsClinical]  # final toxicity medians
    stopped_safety: bool
    stopped_futility: bool
    completed: bool

    @property
    def dlt_rate(self) -> float:
        return self.n_dlt / self.n_patients if self.n_patients else 0.0

    @property
    def max_exceedance(self) -> float:
        """Final max exceedance, or -1 when no final test was performed."""
        if self.decision.max_exceedance is None:
            return -1.0
        return self.decision.max_exceedance


def run_trial(scenario: Scenario, design: DesignConfig, mcmc: McmcConfig,
              seed: int, trial_index: int = 0) -> TrialResult:
    """Drive one trial end to end with simulated outcomes.

    Deterministic given (seed, trial_index): the outcome stream, the
    stage-2 randomization, and every MCMC refit all derive from them.
    """
    trial_seed = int(np.random.SeedSequence(
        entropy=seed, spawn_key=(trial_index,)).generate_state(1, np.uint64)[0])
    outcome_rng = np.random.default_rng(
        np.random.SeedSequence(entropy=trial_seed, spawn_key=(3,)))
    state = new_trial(design, window=DEFAULT_WINDOW, seed=trial_seed, mcmc=mcmc)
    while state.is_active and state.pending:
        outcomes = [simulate_outcome(scenario, a.dose, outcome_rng)
                    for a in state.pending]
        advance(state, outcomes)

    decision = final_decision(state)
    x, y, z, e = state.data.arrays()
    stages = np.array([r.stage for r in state.data.records], dtype=np.int8)
    true_pe = np.array([prob_eff(scenario.eff, r.dose) for r in state.data.records])
    return TrialResult(
        seed=trial_seed,
        trial_index=trial_index,
        n_patients=len(state.data),
        n_dlt=int(z.sum()) if z.size else 0,
        doses=np.column_stack([x, y]) if x.size else np.empty((0, 2)),
        z=np.asarray(z, dtype=np.int8),
        e=np.asarray(e, dtype=np.int8),
        stages=stages,
        true_pi_e=true_pe,
        decision=decision,
        est_params=state.medians_tox,
        stopped_safety=state.phase == "stopped_safety",
        stopped_futility=state.phase == "stopped_futility",
        completed=state.phase == "completed",
    )


# ---------------------------------------------------------------------------
# Parallel study execution
# ---------------------------------------------------------------------------

def _worker(args):
    scenario, design, mcmc, seed, j = args
    return run_trial(scenario, design, mcmc, seed, j)


def run_study(scenario: Scenario, j: int, base_seed: int,
              design: DesignConfig = DesignConfig(),
              mcmc: McmcConfig = McmcConfig(),
              workers: int = 1) -> List[TrialResult]:
    """Run J independent trials, merged in trial-index order."""
    if j < 1:
        raise ValueError("j must be >= 1")
    tasks = [(scenario, design, mcmc, base_seed, idx) for idx in range(j)]
    if workers <= 1:
        results = [_worker(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_worker, tasks, chunksize=1))
    results.sort(key=lambda r: r.trial_index)
    return results


# ---------------------------------------------------------------------------
# Curve-estimation metrics
# ---------------------------------------------------------------------------

def signed_min_distances(true_curve: MtdCurve, est_params: ToxicityParamsClinical,
                         theta_z: float, dense: int = 2001) -> np.ndarray:
    """Signed minimum distance from each true-curve grid point to an estimate.

    The magnitude is the minimum Euclidean distance to the estimated curve
    (evaluated on a dense grid); the sign compares the estimated curve's y
    at the same x (positive when the estimate sits above the truth), falling
    back to the nearest estimated endpoint when x is outside the estimated
    domain.
    """
    est = build_mtd_curve(est_params, theta_z, dense)
    if est.is_empty:
        raise ValueError("empty estimated curve")
    tp = true_curve.grid_points()                # (T, 2)
    ep = est.grid_points()                       # (D, 2)
    diff = tp[:, None, :] - ep[None, :, :]
    dist = np.sqrt(np.min(np.sum(diff * diff, axis=2), axis=1))

    lo, hi = est.domain
    xs = tp[:, 0]
    y_prime = np.where(xs < lo, est.ys[0], np.where(xs > hi, est.ys[-1],
                                                    est.y_at(np.clip(xs, lo, hi))))
    sign = np.sign(y_prime - tp[:, 1])
    sign[sign == 0.0] = 1.0
    return sign * dist


def pointwise_bias(true_curve: MtdCurve,
                   per_trial_distances: Sequence[np.ndarray]) -> np.ndarray:
    """Average signed distance profile over trials (true-curve grid)."""
    if not per_trial_distances:
        return np.zeros(true_curve.xs.size)
    return np.mean(np.stack(per_trial_distances), axis=0)


def percent_correct(true_curve: MtdCurve,
                    per_trial_distances: Sequence[np.ndarray],
                    p: float) -> np.ndarray:
    """Fraction of trials with |d| within p of the true point's distance to (0,0)."""
    if not (0.0 < p < 1.0):
        raise ValueError("p must be in (0,1)")
    if not per_trial_distances:
        return np.zeros(true_curve.xs.size)
    pts = true_curve.grid_points()
    delta = np.sqrt(np.sum(pts * pts, axis=1))
    d = np.abs(np.stack(per_trial_distances))
    return np.mean(d <= p * delta[None, :], axis=0)


# ---------------------------------------------------------------------------
# Operating characteristics report
# ---------------------------------------------------------------------------

@dataclass
class OcReport:
    scenario_name: str
    hypothesis: str
    j: int
    delta_u: float
    true_curve_x: np.ndarray
    true_curve_y: np.ndarray
    bias: np.ndarray
    pct_correct_p10: np.ndarray
    pct_correct_p20: np.ndarray
    n_curve_excluded: int                 # trials without a usable final curve
    average_dlt_rate: float
    pct_dlt_rate_above_threshold: float   # fraction of trials, in [0,1]
    recommended_doses: np.ndarray         # (k, 2)
    prop_recommended_efficacious: float
    rejection_rate: float                 # power under H1, type-I error under H0
    prop_stage2_efficacious: float
    futility_stop_rate: float
    safety_stop_rate: float

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario_name,
            "hypothesis": self.hypothesis,
            "j": self.j,
            "delta_u": self.delta_u,
            "true_curve": {"x": self.true_curve_x.tolist(),
                           "y": self.true_curve_y.tolist()},
            "bias": self.bias.tolist(),
            "pct_correct_p10": self.pct_correct_p10.tolist(),
            "pct_correct_p20": self.pct_correct_p20.tolist(),
            "n_curve_excluded": self.n_curve_excluded,
            "average_dlt_rate": self.average_dlt_rate,
            "pct_dlt_rate_above_threshold": self.pct_dlt_rate_above_threshold,
            "recommended_doses": self.recommended_doses.tolist(),
            "prop_recommended_efficacious": self.prop_recommended_efficacious,
            "rejection_rate": self.rejection_rate,
            "prop_stage2_efficacious": self.prop_stage2_efficacious,
            "futility_stop_rate": self.futility_stop_rate,
            "safety_stop_rate": self.safety_stop_rate,
        }


def summarize_oc(results: Sequence[TrialResult], scenario: Scenario,
                 design: DesignConfig = DesignConfig(),
                 bias_grid: int = 201) -> OcReport:
    """All operating characteristics for one batch of simulated trials.

    Early-stopped trials count toward DLT-rate, rejection, and stopping
    metrics but are excluded from curve-bias averages (their final curve is
    undefined); the exclusion count is reported.
    """
    j = len(results)
    if j < 1:
        raise ValueError("need at least one trial result")
    true_curve = build_mtd_curve(scenario.tox, design.theta_z, bias_grid)

    distances = []
    excluded = 0
    for r in results:
        if r.completed and r.est_params is not None and r.decision.curve is not None \
                and not r.decision.curve.is_empty:
            distances.append(signed_min_distances(true_curve, r.est_params,
                                                  design.theta_z))
        else:
            excluded += 1

    bias = pointwise_bias(true_curve, distances)
    p10 = percent_correct(true_curve, distances, 0.1)
    p20 = percent_correct(true_curve, distances, 0.2)

    dlt_rates = np.array([r.dlt_rate for r in results])
    threshold = design.theta_z + 0.1

    recs = [r.decision.opt_dose for r in results
            if r.decision.reject_h0 and r.decision.opt_dose is not None]
    rec_arr = (np.array([[d.x, d.y] for d in recs])
               if recs else np.empty((0, 2)))
    if recs:
        rec_pe = np.array([prob_eff(scenario.eff, d) for d in recs])
        prop_rec_eff = float(np.mean(rec_pe >= design.theta_e))
    else:
        prop_rec_eff = 0.0

    s2_pe = np.concatenate([r.true_pi_e[r.stages == 2] for r in results]) \
        if any((r.stages == 2).any() for r in results) else np.empty(0)
    prop_s2 = float(np.mean(s2_pe > design.theta_e)) if s2_pe.size else 0.0

    return OcReport(
        scenario_name=scenario.name,
        hypothesis=scenario.hypothesis,
        j=j,
        delta_u=design.delta_u,
        true_curve_x=true_curve.xs,
        true_curve_y=true_curve.ys,
        bias=bias,
        pct_correct_p10=p10,
        pct_correct_p20=p20,
        n_curve_excluded=excluded,
        average_dlt_rate=float(np.mean(dlt_rates)),
        pct_dlt_rate_above_threshold=float(np.mean(dlt_rates > threshold)),
        recommended_doses=rec_arr,
        prop_recommended_efficacious=prop_rec_eff,
        rejection_rate=float(np.mean([r.decision.reject_h0 for r in results])),
        prop_stage2_efficacious=prop_s2,
        futility_stop_rate=float(np.mean([r.stopped_futility for r in results])),
        safety_stop_rate=float(np.mean([r.stopped_safety for r in results])),
    )


# ---------------------------------------------------------------------------
# delta_u calibration
# ---------------------------------------------------------------------------

def rejection_rate_at(results: Sequence[TrialResult], delta_u: float) -> float:
    """Rejection rate if the final threshold had been delta_u (same posteriors)."""
    return float(np.mean([r.max_exceedance > delta_u for r in results]))


def calibrate_delta_u(results_h0: Sequence[TrialResult],
                      candidates: Sequence[float],
                      target: float) -> Tuple[float, float, bool]:
    """Smallest candidate threshold with estimated type-I error <= target.

    Reuses one batch of H0-trial posteriors (their stored final max
    exceedance) and sweeps the threshold. Returns (delta_u, type1_error,
    met_target); when no candidate meets the target, the closest one is
    returned with met_target False.
    """
    cands = sorted(candidates)
    if not cands or not all(0.0 < c < 1.0 for c in cands):
        raise ValueError("candidates must lie in (0,1)")
    errors = [rejection_rate_at(results_h0, c) for c in cands]
    for c, err in zip(cands, errors):
        if err <= target:
            return c, err, True
    k = int(np.argmin([abs(e - target) for e in errors]))
    return cands[k], errors[k], False
