"""Variance-component score tests with scaled chi-square calibration.

Both tests reduce to a quadratic form in the response whose null mean and
variance follow from trace identities; a two-moment (Satterthwaite) match
maps the statistic onto gamma * chi2_nu for the p-value.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincc

from .kernels import GramMatrix
from .mixed_model import ComponentSet, MixedModelFit

# below this (relative) size the null quadratic form carries no signal and
# the test degenerates to p = 1
DEGENERATE_RTOL = 1e-12


class TestKind(str, enum.Enum):
    OVERALL = "overall"
    COMPOSITE = "composite"


@dataclass(frozen=True)
class TestResult:
    kind: TestKind
    statistic: float
    gamma: float
    nu: float
    p_value: float
    mean: float
    variance: float


def satterthwaite(mean: float, variance: float) -> tuple[float, float]:
    """Scale and degrees of freedom matching the first two moments."""
    if mean <= 0.0 or variance <= 0.0:
        raise ValueError(f"moments must be positive, got mean={mean}, variance={variance}")
    gamma = variance / (2.0 * mean)
    nu = 2.0 * mean**2 / variance
    return gamma, nu


def scaled_chisq_pvalue(statistic: float, gamma: float, nu: float) -> float:
    """Upper tail P(gamma * chi2_nu >= statistic)."""
    if gamma <= 0.0 or nu <= 0.0:
        raise ValueError(f"need gamma > 0 and nu > 0, got {gamma}, {nu}")
    if statistic <= 0.0:
        return 1.0
    return float(gammaincc(nu / 2.0, statistic / (2.0 * gamma)))


def _finish(kind: TestKind, statistic: float, mean: float, variance: float) -> TestResult:
    scale = max(abs(mean), abs(variance), abs(statistic))
    if mean <= 0.0 or variance <= 0.0 or scale <= 0.0:
        # nothing to test against: quadratic form identically ~ 0 under the null
        return TestResult(kind, statistic, float("nan"), float("nan"), 1.0, mean, variance)
    gamma, nu = satterthwaite(mean, variance)
    p = scaled_chisq_pvalue(statistic, gamma, nu)
    return TestResult(kind, statistic, gamma, nu, p, mean, variance)


def overall_score_test(
    y: np.ndarray,
    x: np.ndarray,
    components: ComponentSet | tuple[GramMatrix, ...],
    exact_variance: bool = True,
) -> TestResult:
    """Score test of all component variances jointly being zero.

    Under the null the model is plain linear regression, so the statistic
    is the residual quadratic form r' K r / (2 s2) with K the sum of all
    component kernels and s2 the usual unbiased residual variance.

    Dividing by the fitted s2 makes the statistic a bounded ratio whose
    variance is strictly smaller than the asymptotic trace formula; with
    ``exact_variance`` (default) the finite-sample variance of the ratio
    is used, which converges to the asymptotic value as n grows but keeps
    small-n rejection rates near nominal.  ``exact_variance=False`` uses
    the asymptotic tr(P0 K P0 K)/2 instead.
    """
    kernels = components.kernels if isinstance(components, ComponentSet) else tuple(components)
    y = np.asarray(y, dtype=float).ravel()
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n, q = x.shape
    if n != y.size:
        raise ValueError("design rows do not match response length")
    if np.linalg.matrix_rank(x) < q:
        raise ValueError("design matrix is rank deficient")
    if n <= q:
        raise ValueError("need more samples than covariates")
    ksum = np.zeros((n, n))
    for k in kernels:
        if k.order != n:
            raise ValueError("kernel order does not match sample count")
        ksum += k.values

    beta, *_ = np.linalg.lstsq(x, y, rcond=None)
    r = y - x @ beta
    rss = float(r @ r)
    if rss <= 1e-12 * max(float(y @ y), np.finfo(float).tiny):
        raise ValueError("residual variance is zero; response fits the design exactly")
    s2 = rss / (n - q)
    statistic = float(r @ (ksum @ r)) / (2.0 * s2)

    # residual projector P0 = I - X (X'X)^-1 X'
    p0 = np.eye(n) - x @ np.linalg.solve(x.T @ x, x.T)
    pk = p0 @ ksum
    tr1 = float(np.trace(pk))
    tr2 = float(np.sum(pk * pk.T))
    mean = 0.5 * tr1
    if exact_variance:
        m = n - q
        variance = (m * tr2 - tr1**2) / (2.0 * (m + 2))
    else:
        variance = 0.5 * tr2
    kscale = max(float(np.abs(ksum).max()), 1.0)
    if mean <= DEGENERATE_RTOL * n * kscale:
        return TestResult(TestKind.OVERALL, statistic, float("nan"), float("nan"), 1.0, mean, variance)
    return _finish(TestKind.OVERALL, statistic, mean, variance)


def composite_score_test(
    y: np.ndarray,
    x: np.ndarray,
    components: ComponentSet,
    null_fit: MixedModelFit | None = None,
    legacy_prefactor: bool = False,
) -> TestResult:
    """Score test of the last component's variance being zero.

    The null model carries all remaining components, fit by ReML; the
    statistic is a quadratic form in the null-model residual projection.
    With ``legacy_prefactor`` the statistic and its moments are divided by
    the null residual variance as well; the p-value is identical because
    the scaling cancels in the moment match.
    """
    from .mixed_model import reml_fit

    if components.n_components < 2:
        raise ValueError("composite test needs a tested component plus a null set")
    y = np.asarray(y, dtype=float).ravel()
    x = np.atleast_2d(np.asarray(x, dtype=float))
    tested = components.kernels[-1].values
    null_comps = components.drop_last()
    if null_fit is None:
        null_fit = reml_fit(y, x, null_comps)
    if not null_fit.converged:
        raise RuntimeError("null model ReML did not converge; composite test unavailable")
    if null_fit.tau.size != null_comps.n_components:
        raise ValueError("null fit does not match the null component set")

    sig = null_fit.Sigma
    n = y.size
    sinv = np.linalg.solve(sig, np.eye(n))
    a = sinv @ x
    b = sinv - a @ np.linalg.solve(x.T @ a, a.T)  # null-model residual operator
    by = b @ y
    pre = 1.0 / (2.0 * null_fit.sigma2) if legacy_prefactor else 0.5
    statistic = pre * float(by @ (tested @ by))
    bkb_sigma = b @ tested @ b @ sig
    mean = pre * float(np.trace(bkb_sigma))
    variance = 2.0 * pre**2 * float(np.sum(bkb_sigma * bkb_sigma.T))
    # tr(B Sigma) = n - q, so this is the mean of a same-scale non-degenerate
    # kernel; anything this far below it is roundoff from B annihilating K
    kscale = max(float(np.abs(tested).max()), np.finfo(float).tiny)
    if mean <= DEGENERATE_RTOL * pre * kscale * max(n - x.shape[1], 1):
        return TestResult(TestKind.COMPOSITE, statistic, float("nan"), float("nan"), 1.0, mean, variance)
    return _finish(TestKind.COMPOSITE, statistic, mean, variance)
