"""Two-stage phase I-II dose-finding for two-drug combinations.

Design engine, MCMC inference, Monte Carlo operating characteristics, and
a conduct-mode service for running a live trial cohort by cohort.
"""

from .models import (
    DEFAULT_WINDOW,
    DoseCombo,
    DoseWindow,
    EfficacyParams,
    MtdCurve,
    ToxicityParamsClinical,
    ToxicityParamsNatural,
    build_mtd_curve,
    clinical_to_natural,
    destandardize,
    mtd_y_given_x,
    natural_to_clinical,
    prob_dlt,
    prob_eff,
    standardize,
    std_normal_cdf,
    std_normal_quantile,
)
from .inference import (
    CONDUCT_MCMC,
    McmcConfig,
    PatientRecord,
    PosteriorDraws,
    TrialData,
    conditional_mtd_quantile,
    exceedance_profile,
    log_post_eff,
    log_post_tox,
    posterior_medians,
    sample_posterior,
)
from .design import (
    DesignConfig,
    FinalDecision,
    TrialState,
    advance,
    feasibility_schedule,
    final_decision,
    futility_check,
    new_trial,
    safety_check_stage1,
    safety_check_stage2,
    stage1_next_assignments,
    stage2_sample_cohort,
)
from .scenarios import Scenario, builtin_scenario, builtin_scenarios, load_scenario
from .simulate import (
    OcReport,
    TrialResult,
    calibrate_delta_u,
    percent_correct,
    pointwise_bias,
    run_study,
    run_trial,
    simulate_outcome,
    summarize_oc,
)

__version__ = "0.1.0"
