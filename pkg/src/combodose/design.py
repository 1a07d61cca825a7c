"""Sequential two-stage trial state machine.

Stage 1 escalates cohorts of two patients with conditional overdose control:
each new coordinate is the alpha-quantile of the conditional posterior MTD
given the partner drug's previous dose, with the feasibility bound alpha
escalating from 0.25 to 0.5 in 0.05 steps. Stage 2 adaptively randomizes
cohorts of m2 patients along the continuously re-estimated MTD curve, with
sampling probability proportional to the plug-in efficacy density. Safety
and futility stopping rules run after every cohort, and the final test
rejects the null when the maximum posterior exceedance probability along
the final curve clears delta_u.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np
from scipy.special import betainc

from .models import (
    DEFAULT_WINDOW,
    DoseCombo,
    DoseWindow,
    EfficacyParams,
    MtdCurve,
    ToxicityParamsClinical,
    build_mtd_curve,
    eff_design_row,
    std_normal_cdf,
)
from .inference import (
    McmcConfig,
    PatientRecord,
    PosteriorDraws,
    TrialData,
    conditional_mtd_quantile,
    exceedance_profile,
    posterior_medians,
    sample_posterior,
)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DesignConfig:
    theta_z: float = 0.33
    theta_e: float = 0.15
    n1: int = 30
    n2: int = 30
    m1: int = 2
    m2: int = 5
    ewoc_alpha_start: float = 0.25
    ewoc_alpha_cap: float = 0.5
    ewoc_alpha_step: float = 0.05
    delta_u: float = 0.80
    delta0: float = 0.1
    delta_theta1: float = 0.5
    delta_theta2: float = 0.7
    grid_size: int = 201

    def __post_init__(self):
        for name in ("theta_z", "theta_e", "delta_u", "delta0",
                     "delta_theta1", "delta_theta2"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise ValueError(f"{name} must lie in (0,1)")
        if self.n1 % self.m1 != 0:
            raise ValueError("n1 must be a multiple of m1")
        if self.n2 % self.m2 != 0:
            raise ValueError("n2 must be a multiple of m2")
        if self.ewoc_alpha_start > self.ewoc_alpha_cap:
            raise ValueError("ewoc_alpha_start must be <= ewoc_alpha_cap")
        if self.grid_size < 2:
            raise ValueError("grid_size must be >= 2")

    @property
    def c1_total(self) -> int:
        return self.n1 // self.m1

    @property
    def c2_total(self) -> int:
        return self.n2 // self.m2


PHASES = ("stage1", "stage2", "stopped_safety", "stopped_futility", "completed")


class PhaseError(RuntimeError):
    """An operation was invoked in the wrong trial phase."""


# ---------------------------------------------------------------------------
# State
# ---------------------------------------------------------------------------

@dataclass
class PendingAssignment:
    index: int          # 1-based patient index
    dose: DoseCombo
    stage: int
    cohort: int
    alpha: Optional[float] = None   # feasibility bound (stage 1 only)


@dataclass
class TrialState:
    config: DesignConfig
    window: DoseWindow = DEFAULT_WINDOW
    seed: int = 0
    mcmc: McmcConfig = McmcConfig()
    data: TrialData = field(default_factory=TrialData)
    phase: str = "stage1"
    c1: int = 0                     # resolved stage-1 cohorts
    c2: int = 0                     # resolved stage-2 cohorts
    refits: int = 0                 # completed posterior refits
    pending: List[PendingAssignment] = field(default_factory=list)
    medians_tox: Optional[ToxicityParamsClinical] = None
    medians_eff: Optional[EfficacyParams] = None
    # Medians from the refit before the latest one: the warm-start points of
    # the latest refit, persisted so a reloaded snapshot can reproduce it.
    medians_tox_prev: Optional[ToxicityParamsClinical] = None
    medians_eff_prev: Optional[EfficacyParams] = None
    curve: Optional[MtdCurve] = None
    stop_reason: Optional[str] = None
    # Transient: latest posterior draws, never serialized.
    tox_draws: Optional[PosteriorDraws] = None
    eff_draws: Optional[PosteriorDraws] = None

    @property
    def is_active(self) -> bool:
        return self.phase in ("stage1", "stage2")

    @property
    def feasibility_bound(self) -> float:
        """Bound used for the currently pending stage-1 cohort."""
        return feasibility_schedule(self.c1 + 1, self.config)


def new_trial(config: DesignConfig, window: DoseWindow = DEFAULT_WINDOW,
              seed: int = 0, mcmc: McmcConfig = McmcConfig()) -> TrialState:
    """Fresh trial with the first cohort pending at the minimum combination."""
    state = TrialState(config=config, window=window, seed=seed, mcmc=mcmc)
    state.pending = [
        PendingAssignment(index=i + 1, dose=DoseCombo(0.0, 0.0), stage=1,
                          cohort=1, alpha=None)
        for i in range(config.m1)
    ]
    return state


# ---------------------------------------------------------------------------
# Deterministic substreams
# ---------------------------------------------------------------------------

def _refit_seed_seq(seed: int, refit: int, chain_hint: int = 0):
    # Chains spawn further inside sample_posterior; this keys the refit.
    return np.random.SeedSequence(entropy=seed, spawn_key=(2, refit, chain_hint))


def _stage2_rng(seed: int, cohort: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                        spawn_key=(1, cohort)))


def _mcmc_for_refit(state: TrialState, model_tag: int) -> McmcConfig:
    seq = np.random.SeedSequence(entropy=state.seed,
                                 spawn_key=(2, state.refits, model_tag))
    sub_seed = int(seq.generate_state(1, np.uint64)[0])
    return replace(state.mcmc, seed=sub_seed)


def refit_posteriors(state: TrialState):
    """Refit both models on the current data with deterministic seeds.

    Chains warm-start at the previous refit's medians, which keeps the
    short per-cohort chains well mixed as the posterior drifts.
    """
    state.medians_tox_prev = state.medians_tox
    state.medians_eff_prev = state.medians_eff
    state.tox_draws = sample_posterior("toxicity", state.data,
                                       _mcmc_for_refit(state, 0),
                                       init_point=state.medians_tox_prev)
    state.eff_draws = sample_posterior("efficacy", state.data,
                                       _mcmc_for_refit(state, 1),
                                       init_point=state.medians_eff_prev)
    state.refits += 1
    state.medians_tox = posterior_medians(state.tox_draws)
    state.medians_eff = posterior_medians(state.eff_draws)
    state.curve = build_mtd_curve(state.medians_tox, state.config.theta_z,
                                  state.config.grid_size)


def ensure_draws(state: TrialState):
    """Recreate the latest draws after deserialization (same seeds, same data)."""
    if state.tox_draws is None and state.refits > 0:
        refit = state.refits - 1
        tox_cfg = replace(state.mcmc, seed=int(np.random.SeedSequence(
            entropy=state.seed, spawn_key=(2, refit, 0)).generate_state(1, np.uint64)[0]))
        eff_cfg = replace(state.mcmc, seed=int(np.random.SeedSequence(
            entropy=state.seed, spawn_key=(2, refit, 1)).generate_state(1, np.uint64)[0]))
        state.tox_draws = sample_posterior("toxicity", state.data, tox_cfg,
                                           init_point=state.medians_tox_prev)
        state.eff_draws = sample_posterior("efficacy", state.data, eff_cfg,
                                           init_point=state.medians_eff_prev)


# ---------------------------------------------------------------------------
# Stage-1 escalation
# ---------------------------------------------------------------------------

def feasibility_schedule(c1: int, config: DesignConfig = DesignConfig()) -> float:
    """EWOC feasibility bound for stage-1 cohort c1 (1-based).

    The first model-based cohort (c1 = 2) uses the starting bound; each
    later cohort adds one step, capped.
    """
    if c1 < 1:
        raise ValueError("cohort index must be >= 1")
    return min(config.ewoc_alpha_start + config.ewoc_alpha_step * max(0, c1 - 2),
               config.ewoc_alpha_cap)


def stage1_next_assignments(state: TrialState) -> List[PendingAssignment]:
    """Doses for the next stage-1 cohort, per the conditional EWOC pattern.

    For even cohorts, the odd-indexed patient gets a new x holding the
    two-back patient's y, and the even-indexed patient gets a new y holding
    the two-back patient's x; odd cohorts mirror the roles.
    """
    if state.phase != "stage1":
        raise PhaseError(f"stage-1 assignment requested in phase {state.phase}")
    c = state.c1 + 1
    if c == 1:
        return [PendingAssignment(index=i + 1, dose=DoseCombo(0.0, 0.0),
                                  stage=1, cohort=1) for i in range(state.config.m1)]
    if state.tox_draws is None:
        raise PhaseError("posterior draws required before a model-based cohort")
    alpha = feasibility_schedule(c, state.config)
    theta_z = state.config.theta_z
    doses = [r.dose for r in state.data.records]
    prev_odd = doses[2 * c - 4]   # patient 2c-3
    prev_even = doses[2 * c - 3]  # patient 2c-2

    if c % 2 == 0:
        x_new = conditional_mtd_quantile(state.tox_draws, "x", prev_odd.y,
                                         alpha, theta_z)
        y_new = conditional_mtd_quantile(state.tox_draws, "y", prev_even.x,
                                         alpha, theta_z)
        first = DoseCombo(x_new, prev_odd.y)
        second = DoseCombo(prev_even.x, y_new)
    else:
        y_new = conditional_mtd_quantile(state.tox_draws, "y", prev_odd.x,
                                         alpha, theta_z)
        x_new = conditional_mtd_quantile(state.tox_draws, "x", prev_even.y,
                                         alpha, theta_z)
        first = DoseCombo(prev_odd.x, y_new)
        second = DoseCombo(x_new, prev_even.y)

    base = len(state.data)
    return [
        PendingAssignment(index=base + 1, dose=first, stage=1, cohort=c, alpha=alpha),
        PendingAssignment(index=base + 2, dose=second, stage=1, cohort=c, alpha=alpha),
    ]


# ---------------------------------------------------------------------------
# Stage-2 adaptive randomization
# ---------------------------------------------------------------------------

def stage2_density(curve: MtdCurve, eff: EfficacyParams) -> np.ndarray:
    """Normalized sampling weights over the curve grid cells.

    Weights are the plug-in efficacy density times cell width (dx measure),
    so a flat efficacy surface yields exactly uniform x over the domain.
    """
    pe = std_normal_cdf(eff.as_array() @ eff_design_row(curve.xs, curve.ys))
    edges = curve.cell_edges()
    widths = np.diff(edges)
    w = np.asarray(pe) * widths
    total = w.sum()
    if total <= 0.0:
        w = widths.copy()
        total = w.sum()
    return w / total


def stage2_sample_cohort(state: TrialState,
                         rng: Optional[np.random.Generator] = None
                         ) -> List[PendingAssignment]:
    """Sample the next stage-2 cohort along the plug-in MTD curve.

    Empty-curve policy: a sub-toxic estimate assigns the whole cohort at
    (1,1); a supra-toxic estimate is handled by the caller as a safety stop
    (this function raises PhaseError to flag misuse).
    """
    if state.phase != "stage2":
        raise PhaseError(f"stage-2 assignment requested in phase {state.phase}")
    curve = state.curve
    if curve is None or state.medians_eff is None:
        raise PhaseError("plug-in estimates required before stage-2 sampling")
    m2 = state.config.m2
    c = state.c2 + 1
    base = len(state.data)
    if curve.is_empty:
        if curve.empty_reason == "supra_toxic":
            raise PhaseError("supra-toxic estimated curve: safety stop path")
        return [PendingAssignment(index=base + i + 1, dose=DoseCombo(1.0, 1.0),
                                  stage=2, cohort=c) for i in range(m2)]

    if rng is None:
        rng = _stage2_rng(state.seed, c)
    weights = stage2_density(curve, state.medians_eff)
    edges = curve.cell_edges()
    cells = rng.choice(curve.xs.size, size=m2, p=weights)
    assignments = []
    for i, cell in enumerate(cells):
        x = float(rng.uniform(edges[cell], edges[cell + 1]))
        y = float(min(1.0, max(0.0, curve.y_at(x))))
        assignments.append(PendingAssignment(index=base + i + 1,
                                             dose=DoseCombo(x, y),
                                             stage=2, cohort=c))
    return assignments


# ---------------------------------------------------------------------------
# Stopping rules
# ---------------------------------------------------------------------------

def safety_check_stage1(tox_draws: PosteriorDraws, config: DesignConfig) -> bool:
    """Stop iff P(rho00 > theta_z + 0.1 | data) exceeds delta_theta1 (strict)."""
    rho00 = tox_draws.draws[:, 0]
    frac = float(np.mean(rho00 > config.theta_z + 0.1))
    return frac > config.delta_theta1


def pooled_dlt_exceedance(n: int, s: int, threshold: float) -> float:
    """P(Theta > threshold) under Theta ~ beta(0.5 + s, 0.5 + n - s)."""
    if not (0 <= s <= n):
        raise ValueError("need 0 <= s <= n")
    return 1.0 - float(betainc(0.5 + s, 0.5 + n - s, threshold))


def safety_check_stage2(n: int, s: int, config: DesignConfig) -> bool:
    """Stop iff the pooled-DLT-rate exceedance clears delta_theta2 (strict).

    Jeffreys beta(0.5, 0.5) prior on the pooled rate across both stages.
    """
    p = pooled_dlt_exceedance(n, s, config.theta_z + 0.1)
    return p > config.delta_theta2


def futility_check(eff_draws: PosteriorDraws, curve: MtdCurve,
                   config: DesignConfig) -> bool:
    """Stop iff the max exceedance along the curve falls below delta0 (strict)."""
    profile, _ = exceedance_profile(eff_draws, curve, config.theta_e)
    return float(profile.max()) < config.delta0


# ---------------------------------------------------------------------------
# Final decision
# ---------------------------------------------------------------------------

@dataclass
class FinalDecision:
    reject_h0: bool
    opt_dose: Optional[DoseCombo]
    opt_exceedance: Optional[float]
    max_exceedance: Optional[float]
    curve: Optional[MtdCurve]
    delta_u: float
    stop_reason: Optional[str] = None
    no_recommendation_reason: Optional[str] = None


def final_decision(state: TrialState) -> FinalDecision:
    """Final test and optimal-dose recommendation.

    Stopped trials never reject; an empty final curve yields a
    no-recommendation outcome with the emptiness reason.
    """
    cfg = state.config
    if state.is_active:
        raise PhaseError("final decision requested while the trial is active")
    if state.phase in ("stopped_safety", "stopped_futility"):
        return FinalDecision(reject_h0=False, opt_dose=None, opt_exceedance=None,
                             max_exceedance=None, curve=state.curve,
                             delta_u=cfg.delta_u, stop_reason=state.stop_reason)
    ensure_draws(state)
    curve = state.curve
    if curve is None or curve.is_empty:
        reason = curve.empty_reason if curve is not None else "no curve estimate"
        return FinalDecision(reject_h0=False, opt_dose=None, opt_exceedance=None,
                             max_exceedance=None, curve=curve, delta_u=cfg.delta_u,
                             no_recommendation_reason=reason)
    profile, argmax = exceedance_profile(state.eff_draws, curve, cfg.theta_e)
    best = float(profile[argmax])
    opt = DoseCombo(float(curve.xs[argmax]), float(curve.ys[argmax]))
    return FinalDecision(reject_h0=best > cfg.delta_u, opt_dose=opt,
                         opt_exceedance=best, max_exceedance=best,
                         curve=curve, delta_u=cfg.delta_u)


# ---------------------------------------------------------------------------
# Cohort advancement
# ---------------------------------------------------------------------------

def advance(state: TrialState, outcomes: List[Tuple[int, Optional[int]]]) -> TrialState:
    """Record outcomes for the pending cohort and move the trial forward.

    Outcomes are (z, e) pairs matching the pending assignments in order;
    e may be None while pending in conduct mode (such records are skipped by
    the efficacy likelihood). Applies stage-appropriate safety rules first,
    then futility in stage 2, then produces the next pending cohort or
    completes the trial. Raises on cohort-size mismatch without mutating
    the state.
    """
    if not state.is_active:
        raise PhaseError(f"cannot advance a trial in phase {state.phase}")
    if len(outcomes) != len(state.pending):
        raise ValueError(
            f"expected {len(state.pending)} outcomes, got {len(outcomes)}")
    cfg = state.config

    for assign, (z, e) in zip(state.pending, outcomes):
        state.data.append(PatientRecord(index=assign.index, dose=assign.dose,
                                        z=z, e=e, stage=assign.stage,
                                        cohort=assign.cohort))
    resolved_stage = state.pending[0].stage
    state.pending = []

    refit_posteriors(state)

    if resolved_stage == 1:
        state.c1 += 1
        if safety_check_stage1(state.tox_draws, cfg):
            state.phase = "stopped_safety"
            state.stop_reason = "stage-1 safety rule: excessive DLT risk at minimum dose"
            return state
        if state.c1 >= cfg.c1_total:
            state.phase = "stage2"
    else:
        state.c2 += 1
        _, _, z_arr, _ = state.data.arrays()
        if safety_check_stage2(int(z_arr.size), int(z_arr.sum()), cfg):
            state.phase = "stopped_safety"
            state.stop_reason = "stage-2 safety rule: excessive pooled DLT rate"
            return state
        if state.curve is not None and not state.curve.is_empty:
            if futility_check(state.eff_draws, state.curve, cfg):
                state.phase = "stopped_futility"
                state.stop_reason = "futility rule: no dose likely to beat theta_e"
                return state
        if state.c2 >= cfg.c2_total:
            state.phase = "completed"
            return state

    # Produce the next pending cohort.
    if state.phase == "stage1":
        state.pending = stage1_next_assignments(state)
    else:
        if state.curve is not None and state.curve.is_empty \
                and state.curve.empty_reason == "supra_toxic":
            state.phase = "stopped_safety"
            state.stop_reason = "estimated MTD curve entirely supra-toxic"
            return state
        state.pending = stage2_sample_cohort(state)
    return state
