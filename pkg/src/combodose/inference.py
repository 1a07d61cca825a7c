"""Priors, log-posteriors, MCMC sampling, and posterior summaries.

The toxicity model is sampled in the clinical parameterization via the
latent ratio u = rho00 / min(rho01, rho10), exactly as the prior is stated:
rho01, rho10 ~ beta(1,1), u ~ beta(1,1), alpha3 ~ gamma(0.1, rate 0.1).
The efficacy model uses N(0, 10^2) on beta0, beta4, beta5 and
gamma(0.1, 0.1) on beta1, beta2, beta3.

Sampling is adaptive random-walk Metropolis on an unconstrained transform
(logit for the probabilities and u, log for the positive coefficients,
identity for the unconstrained betas), Jacobian-corrected. Per-coordinate
step sizes are adapted during burn-in only (Robbins-Monro on a global scale
plus running marginal standard deviations) and frozen afterward, so the
post-burn-in chain is a valid Metropolis chain. Everything is deterministic
given the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import ndtr, ndtri

from .models import (
    DoseCombo,
    EfficacyParams,
    MtdCurve,
    ToxicityParamsClinical,
)

_PROB_CLAMP = 1e-12
_GAMMA_SHAPE = 0.1
_GAMMA_RATE = 0.1
_NORMAL_SD = 10.0

PENDING = None  # efficacy outcome not yet resolved (conduct mode)


# ---------------------------------------------------------------------------
# Trial data container
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PatientRecord:
    index: int                 # 1-based enrollment order
    dose: DoseCombo
    z: int                     # DLT indicator
    e: Optional[int]           # efficacy indicator, None while pending
    stage: int                 # 1 or 2
    cohort: int                # cohort index within its stage

    def __post_init__(self):
        if self.z not in (0, 1):
            raise ValueError("z must be 0 or 1")
        if self.e not in (0, 1, None):
            raise ValueError("e must be 0, 1, or None (pending)")
        if self.stage not in (1, 2):
            raise ValueError("stage must be 1 or 2")


@dataclass
class TrialData:
    """Ordered enrollment data; stage-1 records precede stage-2 records."""

    records: List[PatientRecord] = field(default_factory=list)

    def __post_init__(self):
        for i, r in enumerate(self.records):
            if r.index != i + 1:
                raise ValueError("record indices must be contiguous from 1")
        seen2 = False
        for r in self.records:
            if r.stage == 2:
                seen2 = True
            elif seen2:
                raise ValueError("stage-1 records must precede stage-2 records")

    def __len__(self):
        return len(self.records)

    def append(self, record: PatientRecord):
        if record.index != len(self.records) + 1:
            raise ValueError("record indices must be contiguous from 1")
        if record.stage == 1 and any(r.stage == 2 for r in self.records):
            raise ValueError("stage-1 records must precede stage-2 records")
        self.records.append(record)

    def arrays(self):
        """(x, y, z, e) float/int arrays; e is -1 where pending."""
        n = len(self.records)
        x = np.array([r.dose.x for r in self.records]) if n else np.empty(0)
        y = np.array([r.dose.y for r in self.records]) if n else np.empty(0)
        z = np.array([r.z for r in self.records], dtype=np.int8) if n else np.empty(0, np.int8)
        e = np.array([-1 if r.e is None else r.e for r in self.records],
                     dtype=np.int8) if n else np.empty(0, np.int8)
        return x, y, z, e


# ---------------------------------------------------------------------------
# MCMC configuration and output
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class McmcConfig:
    iterations: int = 6000
    burn_in: int = 1500
    thin: int = 1
    chains: int = 1
    target_acceptance: float = 0.35
    seed: int = 0

    def __post_init__(self):
        if self.iterations <= 0 or self.burn_in < 0 or self.thin < 1 or self.chains < 1:
            raise ValueError("invalid MCMC configuration")
        if self.burn_in >= self.iterations:
            raise ValueError("burn_in must be < iterations")
        if not (0.0 < self.target_acceptance < 1.0):
            raise ValueError("target_acceptance must be in (0,1)")


#: Stronger defaults for live-trial conduct, where a human acts on a single
#: posterior and deserves convergence evidence.
CONDUCT_MCMC = McmcConfig(iterations=20000, burn_in=5000, thin=1, chains=4)


@dataclass
class PosteriorDraws:
    """Retained draws in the clinical/natural parameter space.

    Columns: toxicity -> (rho00, rho10, rho01, alpha3);
    efficacy -> (beta0..beta5).
    """

    model: str                       # "toxicity" | "efficacy"
    draws: np.ndarray                # (S, d)
    acceptance: np.ndarray           # per-chain post-burn-in acceptance rate
    rhat: Optional[np.ndarray] = None  # split-chain diagnostic, per column

    def to_csv(self, path):
        names = (["rho00", "rho10", "rho01", "alpha3"] if self.model == "toxicity"
                 else [f"beta{i}" for i in range(6)])
        header = ",".join(names)
        np.savetxt(path, self.draws, delimiter=",", header=header, comments="")


# ---------------------------------------------------------------------------
# Log-posteriors (clinical-space API)
# ---------------------------------------------------------------------------

def _tox_loglik(rho00, rho10, rho01, alpha3, x, y, z):
    a0 = ndtri(rho00)
    a1 = ndtri(rho10) - a0
    a2 = ndtri(rho01) - a0
    p = ndtr(a0 + a1 * x + a2 * y + alpha3 * x * y)
    p = np.clip(p, _PROB_CLAMP, 1.0 - _PROB_CLAMP)
    return float(np.sum(np.log(np.where(z == 1, p, 1.0 - p))))


def _eff_loglik(beta, x, y, e):
    eta = (beta[0] + beta[1] * x + beta[2] * y + beta[3] * x * y
           + beta[4] * x * x + beta[5] * y * y)
    p = ndtr(eta)
    p = np.clip(p, _PROB_CLAMP, 1.0 - _PROB_CLAMP)
    return float(np.sum(np.log(np.where(e == 1, p, 1.0 - p))))


def _log_gamma_pdf(v):
    if v <= 0.0:
        return -math.inf
    return (_GAMMA_SHAPE * math.log(_GAMMA_RATE) - math.lgamma(_GAMMA_SHAPE)
            + (_GAMMA_SHAPE - 1.0) * math.log(v) - _GAMMA_RATE * v)


def log_post_tox(p: ToxicityParamsClinical, data: TrialData) -> float:
    """Log posterior density (clinical space) up to the likelihood constant.

    Invariant-violating parameters yield -inf rather than an exception, so
    the value is usable directly as a rejected MCMC state.
    """
    m = min(p.rho10, p.rho01)
    if not (0.0 < p.rho00 < m and 0.0 < p.rho10 < 1.0 and 0.0 < p.rho01 < 1.0
            and p.alpha3 >= 0.0):
        return -math.inf
    # beta(1,1) priors on rho01, rho10 and on u = rho00/m contribute only the
    # change of variables rho00 = u * m: density 1/m.
    lp = -math.log(m) + _log_gamma_pdf(p.alpha3)
    x, y, z, _ = data.arrays()
    if x.size:
        lp += _tox_loglik(p.rho00, p.rho10, p.rho01, p.alpha3, x, y, z)
    return lp


def log_post_eff(b: EfficacyParams, data: TrialData) -> float:
    """Log posterior for the efficacy model; pending outcomes are skipped."""
    if b.beta1 <= 0.0 or b.beta2 <= 0.0 or b.beta3 <= 0.0:
        return -math.inf
    lp = 0.0
    for v in (b.beta0, b.beta4, b.beta5):
        lp += -0.5 * (v / _NORMAL_SD) ** 2 - math.log(_NORMAL_SD * math.sqrt(2 * math.pi))
    for v in (b.beta1, b.beta2, b.beta3):
        lp += _log_gamma_pdf(v)
    x, y, _, e = data.arrays()
    keep = e >= 0
    if np.any(keep):
        lp += _eff_loglik(b.as_array(), x[keep], y[keep], e[keep])
    return lp


# ---------------------------------------------------------------------------
# Unconstrained-space log-posteriors used by the sampler
# ---------------------------------------------------------------------------

def _expit(t):
    if t < -700.0:
        # exp(-t) would overflow; the value underflows to 0 anyway
        return 0.0
    return 1.0 / (1.0 + math.exp(-t))


def _log_jac_logit(t):
    # log sigma(t) + log(1 - sigma(t)) = -t - 2 log(1 + exp(-t)), stable form
    a = abs(t)
    return -a - 2.0 * math.log1p(math.exp(-a))


def _tox_unconstrained_logpost(t, x, y, z):
    """t = (logit rho01, logit rho10, logit u, log alpha3)."""
    if t[3] > 700.0:
        return -math.inf   # gamma prior: -rate * alpha3 dominates
    rho01 = _expit(t[0])
    rho10 = _expit(t[1])
    u = _expit(t[2])
    alpha3 = math.exp(t[3])
    m = min(rho01, rho10)
    rho00 = u * m
    # float rounding of the logistic to exactly 0 or 1 would put the probit
    # link at +/-inf; such states have vanishing posterior mass
    if not (0.0 < rho00 and rho01 < 1.0 and rho10 < 1.0 and u < 1.0):
        return -math.inf
    # beta(1,1) prior densities are flat; change of variables to rho00 is
    # absorbed by sampling u directly. Jacobians for the transforms:
    lp = _log_jac_logit(t[0]) + _log_jac_logit(t[1]) + _log_jac_logit(t[2])
    lp += _log_gamma_pdf(alpha3) + t[3]
    if x.size:
        lp += _tox_loglik(rho00, rho10, rho01, alpha3, x, y, z)
    return lp


def _eff_unconstrained_logpost(t, x, y, e):
    """t = (beta0, log beta1, log beta2, log beta3, beta4, beta5)."""
    if t[1] > 700.0 or t[2] > 700.0 or t[3] > 700.0:
        return -math.inf   # gamma priors: -rate * beta_k dominates
    b1 = math.exp(t[1])
    b2 = math.exp(t[2])
    b3 = math.exp(t[3])
    lp = -0.5 * ((t[0] / _NORMAL_SD) ** 2 + (t[4] / _NORMAL_SD) ** 2
                 + (t[5] / _NORMAL_SD) ** 2)
    lp += _log_gamma_pdf(b1) + t[1] + _log_gamma_pdf(b2) + t[2] + _log_gamma_pdf(b3) + t[3]
    if x.size:
        beta = (t[0], b1, b2, b3, t[4], t[5])
        lp += _eff_loglik(np.asarray(beta), x, y, e)
    return lp


def _tox_to_clinical(chain):
    """Map unconstrained draws (S,4) to clinical columns (rho00,rho10,rho01,alpha3)."""
    rho01 = 1.0 / (1.0 + np.exp(-chain[:, 0]))
    rho10 = 1.0 / (1.0 + np.exp(-chain[:, 1]))
    u = 1.0 / (1.0 + np.exp(-chain[:, 2]))
    alpha3 = np.exp(chain[:, 3])
    rho00 = u * np.minimum(rho01, rho10)
    return np.column_stack([rho00, rho10, rho01, alpha3])


def _eff_to_natural(chain):
    out = chain.copy()
    out[:, 1:4] = np.exp(chain[:, 1:4])
    return out


# ---------------------------------------------------------------------------
# Adaptive random-walk Metropolis
# ---------------------------------------------------------------------------

def _run_chain(logpost, init, cfg: McmcConfig, rng: np.random.Generator):
    """One adaptive RWM chain; returns (retained unconstrained draws, accept rate).

    The proposal covariance is adapted during burn-in from the running chain
    covariance (with a Robbins-Monro global scale targeting the configured
    acceptance rate) and frozen afterward, preserving ergodicity of the
    retained portion.
    """
    d = init.size
    t = init.copy()
    lp = logpost(t)
    tries = 0
    while not math.isfinite(lp):
        tries += 1
        if tries > 100:
            raise RuntimeError("MCMC initialization failed: non-finite log-posterior")
        t = rng.normal(scale=0.5, size=d)
        lp = logpost(t)

    n_keep = (cfg.iterations - cfg.burn_in) // cfg.thin
    out = np.empty((n_keep, d))
    innovations = rng.standard_normal((cfg.iterations, d))
    log_u = np.log(rng.random(cfg.iterations))

    log_scale = math.log(0.5)
    chol = np.eye(d) * 0.5
    mean = t.copy()
    cov_acc = np.zeros((d, d))
    accepted_post = 0
    kept = 0

    for i in range(cfg.iterations):
        prop = t + math.exp(log_scale) * (chol @ innovations[i])
        lp_prop = logpost(prop)
        accept = (lp_prop - lp) > log_u[i]
        if accept:
            t = prop
            lp = lp_prop

        if i < cfg.burn_in:
            gamma = (i + 1) ** -0.6
            log_scale += gamma * ((1.0 if accept else 0.0) - cfg.target_acceptance)
            delta = t - mean
            mean += delta / (i + 2)
            cov_acc += np.outer(delta, t - mean)
            if i >= 100 and (i + 1) % 50 == 0:
                cov = cov_acc / (i + 1) + 1e-6 * np.eye(d)
                try:
                    chol = np.linalg.cholesky(cov)
                except np.linalg.LinAlgError:
                    pass
        else:
            if accept:
                accepted_post += 1
            k = i - cfg.burn_in
            if k % cfg.thin == 0 and kept < n_keep:
                out[kept] = t
                kept += 1

    rate = accepted_post / max(1, cfg.iterations - cfg.burn_in)
    return out[:kept], rate


def _split_rhat(chains: Sequence[np.ndarray]) -> np.ndarray:
    """Split-chain potential scale reduction factor per column."""
    halves = []
    for c in chains:
        h = c.shape[0] // 2
        if h >= 2:
            halves.extend([c[:h], c[h:2 * h]])
    if len(halves) < 2:
        return np.full(chains[0].shape[1], np.nan)
    arr = np.stack(halves)                       # (m, n, d)
    m, n, _ = arr.shape
    means = arr.mean(axis=1)                     # (m, d)
    variances = arr.var(axis=1, ddof=1)          # (m, d)
    w = variances.mean(axis=0)
    b = n * means.var(axis=0, ddof=1)
    var_hat = (n - 1) / n * w + b / n
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.sqrt(var_hat / w)


def _logit(p):
    return math.log(p / (1.0 - p))


def unconstrained_init(params) -> np.ndarray:
    """Map a typed parameter point to the sampler's unconstrained space."""
    if isinstance(params, ToxicityParamsClinical):
        m = min(params.rho01, params.rho10)
        u = min(max(params.rho00 / m, 1e-10), 1 - 1e-10)
        return np.array([_logit(params.rho01), _logit(params.rho10), _logit(u),
                         math.log(max(params.alpha3, 1e-10))])
    if isinstance(params, EfficacyParams):
        return np.array([params.beta0,
                         math.log(max(params.beta1, 1e-10)),
                         math.log(max(params.beta2, 1e-10)),
                         math.log(max(params.beta3, 1e-10)),
                         params.beta4, params.beta5])
    raise TypeError(f"unsupported parameter type {type(params)!r}")


def sample_posterior(model: str, data: TrialData, cfg: McmcConfig,
                     init_point=None) -> PosteriorDraws:
    """Sample the toxicity or efficacy posterior; deterministic given cfg.seed.

    Chains use independent substreams derived from the seed, so results do
    not depend on execution order or thread count. init_point optionally
    warm-starts every chain (e.g. at the previous refit's medians).
    """
    x, y, z, e = data.arrays()
    if model == "toxicity":
        def logpost(t):
            return _tox_unconstrained_logpost(t, x, y, z)
        d = 4
        init = np.zeros(d)
        init[3] = math.log(0.1)
        to_output = _tox_to_clinical
    elif model == "efficacy":
        keep = e >= 0
        xe, ye, ee = x[keep], y[keep], e[keep]

        def logpost(t):
            return _eff_unconstrained_logpost(t, xe, ye, ee)
        d = 6
        init = np.zeros(d)
        init[1:4] = math.log(0.1)
        to_output = _eff_to_natural
    else:
        raise ValueError(f"unknown model tag {model!r}")
    if init_point is not None:
        init = unconstrained_init(init_point)

    chains = []
    rates = []
    for k in range(cfg.chains):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed,
                                                           spawn_key=(k,)))
        chain, rate = _run_chain(logpost, init, cfg, rng)
        chains.append(chain)
        rates.append(rate)

    rhat = _split_rhat(chains) if cfg.chains >= 2 else None
    draws = to_output(np.concatenate(chains, axis=0))
    return PosteriorDraws(model=model, draws=draws,
                          acceptance=np.asarray(rates), rhat=rhat)


# ---------------------------------------------------------------------------
# Posterior summaries
# ---------------------------------------------------------------------------

def posterior_medians(draws: PosteriorDraws):
    """Componentwise marginal medians as a typed parameter point."""
    if draws.draws.shape[0] == 0:
        raise ValueError("empty draws")
    med = np.median(draws.draws, axis=0)
    if draws.model == "toxicity":
        return ToxicityParamsClinical(rho00=float(med[0]), rho10=float(med[1]),
                                      rho01=float(med[2]), alpha3=float(med[3]))
    return EfficacyParams(*[float(v) for v in med])


def conditional_mtd_solutions(draws: PosteriorDraws, axis: str, fixed: float,
                              theta_z: float) -> np.ndarray:
    """Per-draw closed-form solutions of prob_dlt = theta_z along one axis.

    axis='x' solves for x at Y = fixed; axis='y' solves for y at X = fixed.
    Solutions are unclamped and may fall outside [0, 1].
    """
    if draws.model != "toxicity":
        raise ValueError("conditional MTD solutions require toxicity draws")
    c = draws.draws
    a0 = ndtri(c[:, 0])
    a1 = ndtri(c[:, 1]) - a0
    a2 = ndtri(c[:, 2]) - a0
    a3 = c[:, 3]
    q = ndtri(theta_z)
    if axis == "x":
        return (q - a0 - a2 * fixed) / (a1 + a3 * fixed)
    if axis == "y":
        return (q - a0 - a1 * fixed) / (a2 + a3 * fixed)
    raise ValueError("axis must be 'x' or 'y'")


def conditional_mtd_quantile(draws: PosteriorDraws, axis: str, fixed: float,
                             alpha: float, theta_z: float) -> float:
    """EWOC dose: the alpha-quantile of the conditional MTD, clamped to [0,1].

    Linear interpolation between order statistics, so the result is
    continuous and nondecreasing in alpha.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must be in (0,1)")
    if not (0.0 <= fixed <= 1.0):
        raise ValueError("fixed dose must be in [0,1]")
    sol = conditional_mtd_solutions(draws, axis, fixed, theta_z)
    q = float(np.quantile(sol, alpha))
    return min(1.0, max(0.0, q))


def exceedance_profile(draws: PosteriorDraws, curve: MtdCurve,
                       theta_e: float) -> Tuple[np.ndarray, int]:
    """P(prob_eff > theta_e | data) at each curve grid point, plus the argmax.

    Ties break to the lowest x (first grid index).
    """
    if draws.model != "efficacy":
        raise ValueError("exceedance profile requires efficacy draws")
    if draws.draws.shape[0] == 0:
        raise ValueError("empty draws")
    if curve.is_empty:
        raise ValueError("empty MTD curve")
    xs, ys = curve.xs, curve.ys
    design = np.stack([np.ones_like(xs), xs, ys, xs * ys, xs * xs, ys * ys])
    eta = draws.draws @ design                   # (S, G)
    profile = np.mean(eta > ndtri(theta_e), axis=0)
    return profile, int(np.argmax(profile))
