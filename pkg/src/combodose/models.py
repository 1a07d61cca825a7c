"""Deterministic model mathematics for the two-drug combination design.

Doses live on the standardized unit square. The dose-toxicity model is a
probit with a linear predictor in (x, y, xy); the dose-efficacy model adds
quadratic terms. The maximum tolerated dose (MTD) curve is the level set
where the DLT probability equals the target theta_z, represented as a
uniform x-grid over the sub-interval where the curve stays inside the unit
square.

Everything in this module is a pure function of its inputs; the dataclasses
are frozen and safe to share across threads and processes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.special import ndtr, ndtri


# ---------------------------------------------------------------------------
# Standard normal link
# ---------------------------------------------------------------------------

def std_normal_cdf(t):
    """Standard normal CDF, elementwise on scalars or arrays."""
    out = ndtr(t)
    if np.isscalar(t) or np.ndim(t) == 0:
        return float(out)
    return out


def std_normal_quantile(p):
    """Inverse standard normal CDF; domain error outside (0, 1).

    Accurate deep into the tails (relative error < 1e-9 down to p = 1e-10),
    which matters because toxicity scenario parameters can be as small as
    rho00 = 1e-7.
    """
    arr = np.asarray(p, dtype=float)
    if np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise ValueError(f"quantile argument must lie strictly in (0,1), got {p}")
    out = ndtri(arr)
    if np.isscalar(p) or np.ndim(p) == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# Dose standardization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DoseWindow:
    """Raw dose ranges (mg/m^2) for agents X and Y."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ValueError("x_min must be < x_max")
        if not self.y_min < self.y_max:
            raise ValueError("y_min must be < y_max")


# Default window of the motivating cisplatin (X) / cabazitaxel (Y) trial.
DEFAULT_WINDOW = DoseWindow(x_min=50.0, x_max=100.0, y_min=10.0, y_max=25.0)


@dataclass(frozen=True)
class DoseCombo:
    """Standardized dose pair, each coordinate in [0, 1]."""

    x: float
    y: float

    def __post_init__(self):
        if not (0.0 <= self.x <= 1.0 and 0.0 <= self.y <= 1.0):
            raise ValueError(f"standardized doses must be in [0,1], got ({self.x}, {self.y})")


def standardize(x_raw: float, y_raw: float, window: DoseWindow) -> DoseCombo:
    """Map raw doses into the unit square via the affine window transforms."""
    if not (window.x_min <= x_raw <= window.x_max):
        raise ValueError(f"x dose {x_raw} outside window [{window.x_min}, {window.x_max}]")
    if not (window.y_min <= y_raw <= window.y_max):
        raise ValueError(f"y dose {y_raw} outside window [{window.y_min}, {window.y_max}]")
    return DoseCombo(
        x=(x_raw - window.x_min) / (window.x_max - window.x_min),
        y=(y_raw - window.y_min) / (window.y_max - window.y_min),
    )


def destandardize(dose: DoseCombo, window: DoseWindow) -> Tuple[float, float]:
    """Inverse of :func:`standardize`."""
    return (
        window.x_min + dose.x * (window.x_max - window.x_min),
        window.y_min + dose.y * (window.y_max - window.y_min),
    )


# ---------------------------------------------------------------------------
# Toxicity model parameterizations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ToxicityParamsClinical:
    """DLT probabilities at the dose-square corners plus interaction.

    rho00, rho10, rho01 are the DLT probabilities at (0,0), (1,0), (0,1);
    alpha3 >= 0 is the interaction coefficient. rho00 < min(rho10, rho01)
    keeps the natural-scale slopes positive.
    """

    rho00: float
    rho10: float
    rho01: float
    alpha3: float

    def __post_init__(self):
        for name in ("rho00", "rho10", "rho01"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise ValueError(f"{name} must lie in (0,1), got {v}")
        if not self.rho00 < min(self.rho10, self.rho01):
            raise ValueError("rho00 must be < min(rho10, rho01)")
        if self.alpha3 < 0.0:
            raise ValueError("alpha3 must be nonnegative")


@dataclass(frozen=True)
class ToxicityParamsNatural:
    """Probit-scale toxicity coefficients: F(a0 + a1 x + a2 y + a3 xy)."""

    alpha0: float
    alpha1: float
    alpha2: float
    alpha3: float

    def __post_init__(self):
        if self.alpha1 <= 0.0 or self.alpha2 <= 0.0:
            raise ValueError("alpha1 and alpha2 must be positive")
        if self.alpha3 < 0.0:
            raise ValueError("alpha3 must be nonnegative")


def clinical_to_natural(p: ToxicityParamsClinical) -> ToxicityParamsNatural:
    a0 = std_normal_quantile(p.rho00)
    return ToxicityParamsNatural(
        alpha0=a0,
        alpha1=std_normal_quantile(p.rho10) - a0,
        alpha2=std_normal_quantile(p.rho01) - a0,
        alpha3=p.alpha3,
    )


def natural_to_clinical(p: ToxicityParamsNatural) -> ToxicityParamsClinical:
    return ToxicityParamsClinical(
        rho00=std_normal_cdf(p.alpha0),
        rho10=std_normal_cdf(p.alpha0 + p.alpha1),
        rho01=std_normal_cdf(p.alpha0 + p.alpha2),
        alpha3=p.alpha3,
    )


# ---------------------------------------------------------------------------
# Marginal probability models
# ---------------------------------------------------------------------------

def prob_dlt(p: ToxicityParamsNatural, d: DoseCombo) -> float:
    """Marginal DLT probability at a standardized dose pair."""
    return std_normal_cdf(p.alpha0 + p.alpha1 * d.x + p.alpha2 * d.y + p.alpha3 * d.x * d.y)


def prob_dlt_clinical(p: ToxicityParamsClinical, d: DoseCombo) -> float:
    return prob_dlt(clinical_to_natural(p), d)


@dataclass(frozen=True)
class EfficacyParams:
    """Probit efficacy coefficients: F(b0 + b1 x + b2 y + b3 xy + b4 x^2 + b5 y^2).

    beta1..beta3 must be nonnegative: the fitted model constrains them to be
    strictly positive, but data-generating truths may sit on the boundary
    (a zero interaction term).
    """

    beta0: float
    beta1: float
    beta2: float
    beta3: float
    beta4: float
    beta5: float

    def __post_init__(self):
        for name in ("beta1", "beta2", "beta3"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be nonnegative")

    def as_array(self) -> np.ndarray:
        return np.array([self.beta0, self.beta1, self.beta2,
                         self.beta3, self.beta4, self.beta5])


def prob_eff(b: EfficacyParams, d: DoseCombo) -> float:
    """Marginal efficacy probability at a standardized dose pair."""
    eta = (b.beta0 + b.beta1 * d.x + b.beta2 * d.y + b.beta3 * d.x * d.y
           + b.beta4 * d.x * d.x + b.beta5 * d.y * d.y)
    return std_normal_cdf(eta)


def eff_design_row(x, y):
    """Efficacy design vector(s) (1, x, y, xy, x^2, y^2) for array inputs."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.stack([np.ones_like(x), x, y, x * y, x * x, y * y])


# ---------------------------------------------------------------------------
# MTD curve
# ---------------------------------------------------------------------------

def mtd_y_given_x(p: ToxicityParamsClinical, theta_z: float, x: float) -> Tuple[float, bool]:
    """Solve the MTD level set for y at a given x.

    Returns (y, in_range). y may fall outside [0,1]; callers decide whether
    to clamp or reject.
    """
    nat = clinical_to_natural(p)
    q = std_normal_quantile(theta_z)
    denom = nat.alpha2 + nat.alpha3 * x
    if denom == 0.0:
        raise ZeroDivisionError("singular MTD curve: zero denominator")
    y = (q - nat.alpha0 - nat.alpha1 * x) / denom
    return y, (0.0 <= y <= 1.0)


@dataclass(frozen=True)
class MtdCurve:
    """Grid representation of the MTD level set clipped to the unit square.

    When the level set does not intersect the unit square, xs/ys are empty
    and empty_reason records which side the curve missed on:
    'supra_toxic' (even (0,0) is above the target) or 'sub_toxic' (even
    (1,1) is below it).
    """

    params: ToxicityParamsClinical
    theta_z: float
    xs: np.ndarray
    ys: np.ndarray
    empty_reason: Optional[str] = None

    @property
    def is_empty(self) -> bool:
        return self.xs.size == 0

    @property
    def domain(self) -> Optional[Tuple[float, float]]:
        if self.is_empty:
            return None
        return float(self.xs[0]), float(self.xs[-1])

    def grid_points(self) -> np.ndarray:
        """(G, 2) array of curve points."""
        return np.column_stack([self.xs, self.ys])

    def y_at(self, x):
        """Evaluate the exact curve formula at x (no range check)."""
        nat = clinical_to_natural(self.params)
        q = std_normal_quantile(self.theta_z)
        return (q - nat.alpha0 - nat.alpha1 * np.asarray(x, dtype=float)) / (
            nat.alpha2 + nat.alpha3 * np.asarray(x, dtype=float))

    def cell_edges(self) -> np.ndarray:
        """Edges of the grid cells used for within-cell jitter, length G+1."""
        if self.is_empty:
            return np.empty(0)
        if self.xs.size == 1:
            return np.array([self.xs[0], self.xs[0]])
        h = (self.xs[-1] - self.xs[0]) / (self.xs.size - 1)
        edges = np.concatenate([[self.xs[0]], self.xs[:-1] + h / 2.0, [self.xs[-1]]])
        return edges


def build_mtd_curve(p: ToxicityParamsClinical, theta_z: float, grid_size: int) -> MtdCurve:
    """Build the in-range MTD curve on a uniform x-grid.

    The curve y(x) is strictly decreasing, so the in-range domain is the
    single interval between the closed-form solutions of y(x) = 1 and
    y(x) = 0, intersected with [0, 1]. Emptiness is a value, not an error.
    """
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    nat = clinical_to_natural(p)
    q = std_normal_quantile(theta_z)

    if prob_dlt(nat, DoseCombo(0.0, 0.0)) > theta_z:
        return MtdCurve(p, theta_z, np.empty(0), np.empty(0), empty_reason="supra_toxic")
    if prob_dlt(nat, DoseCombo(1.0, 1.0)) < theta_z:
        return MtdCurve(p, theta_z, np.empty(0), np.empty(0), empty_reason="sub_toxic")

    # y(x) = 0 at x = (q - a0)/a1; y(x) = 1 at x = (q - a0 - a2)/(a1 + a3)
    x_hi = (q - nat.alpha0) / nat.alpha1
    x_lo = (q - nat.alpha0 - nat.alpha2) / (nat.alpha1 + nat.alpha3)
    lo = max(0.0, x_lo)
    hi = min(1.0, x_hi)
    if hi < lo:  # cannot happen given the corner checks above, kept defensive
        return MtdCurve(p, theta_z, np.empty(0), np.empty(0), empty_reason="sub_toxic")

    xs = np.linspace(lo, hi, grid_size)
    ys = (q - nat.alpha0 - nat.alpha1 * xs) / (nat.alpha2 + nat.alpha3 * xs)
    ys = np.clip(ys, 0.0, 1.0)  # shave fp dust at the endpoints
    return MtdCurve(p, theta_z, xs, ys)
