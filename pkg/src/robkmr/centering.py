"""Robust centering of Gram matrices around an M-estimated mean element.

The mean element in feature space is fit by iteratively reweighted least
squares: at each pass every sample gets weight phi(eps_i) proportional to
how close it sits to the current weighted mean, distances being taken in
the kernel's feature space.  Least-squares loss reproduces the classical
uniform-mean centering exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import GramMatrix
from .losses import LossKind, RobustLoss, rho, tune_constants, weight

DEFAULT_THRESHOLD = 1e-8
DEFAULT_MAX_ITER = 200
WEIGHT_SUM_TOL = 1e-12


class DegenerateWeightsError(RuntimeError):
    """Every sample was rejected (all weights zero), so no mean exists."""


@dataclass(frozen=True)
class RobustCentering:
    """Result of one robust-centering run."""

    weights: np.ndarray
    centered: GramMatrix
    loss: RobustLoss  # with constants as actually used (after any tuning)
    objective_trace: np.ndarray
    converged: bool
    n_iter: int


def feature_distances(k: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Distance of each sample to the w-weighted mean, in kernel feature space.

    eps_i^2 = K_ii - 2 (Kw)_i + w'Kw; tiny negative radicands from roundoff
    are clamped to zero.
    """
    kw = k @ w
    quad = float(w @ kw)
    sq = np.diag(k) - 2.0 * kw + quad
    return np.sqrt(np.maximum(sq, 0.0))


def robust_center(k: GramMatrix, weights: np.ndarray) -> GramMatrix:
    """Center K around the weighted mean element: (I - 1w') K (I - w1')."""
    w = _check_simplex(weights, k.order)
    arr = k.values
    kw = arr @ w
    quad = float(w @ kw)
    centered = arr - kw[None, :] - kw[:, None] + quad
    return GramMatrix(centered)


def kirwls_objective(k: GramMatrix, loss: RobustLoss, weights: np.ndarray) -> float:
    """Mean loss of the per-sample feature-space distances at these weights."""
    w = _check_simplex(weights, k.order)
    eps = feature_distances(k.values, w)
    return float(np.mean(rho(loss, eps)))


def _check_simplex(weights: np.ndarray, n: int) -> np.ndarray:
    w = np.asarray(weights, dtype=float).ravel()
    if w.size != n:
        raise ValueError(f"expected {n} weights, got {w.size}")
    if np.any(w < 0) or abs(w.sum() - 1.0) > WEIGHT_SUM_TOL * n:
        raise ValueError("weights must be nonnegative and sum to one")
    return w


def kirwls_weights(
    k: GramMatrix,
    loss: RobustLoss,
    threshold: float = DEFAULT_THRESHOLD,
    max_iter: int = DEFAULT_MAX_ITER,
    retune_after_first_iter: bool = True,
) -> RobustCentering:
    """Fit robust mean-element weights by iterative reweighting.

    Starts from uniform weights and stops when the relative change of the
    mean-loss objective falls below ``threshold``.  Quantile-policy losses
    are tuned on the initial distance spectrum, re-tuned once after the
    first reweighting pass, then frozen; from that point the objective is
    non-increasing.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    arr = k.values
    n = k.order
    w = np.full(n, 1.0 / n)
    eps = feature_distances(arr, w)

    if eps.max() <= 0.0:
        # all samples coincide in feature space; nothing to do
        centered = robust_center(k, w)
        trace = np.array([0.0])
        return RobustCentering(w, centered, loss, trace, True, 0)

    wants_retune = loss.needs_tuning and retune_after_first_iter
    base_loss = loss
    loss = tune_constants(loss, eps)

    j_prev = float(np.mean(rho(loss, eps)))
    trace = [j_prev]
    converged = False
    n_iter = 0

    for h in range(1, max_iter + 1):
        phi = weight(loss, eps)
        total = phi.sum()
        if not np.isfinite(total) or total <= 0.0:
            raise DegenerateWeightsError(
                f"all {n} samples rejected at iteration {h} ({loss.kind.value})"
            )
        w = phi / total
        eps = feature_distances(arr, w)
        if h == 1 and wants_retune:
            loss = tune_constants(base_loss, eps)
        j = float(np.mean(rho(loss, eps)))
        trace.append(j)
        n_iter = h
        if j_prev == 0.0 or abs(j - j_prev) / j_prev < threshold:
            converged = True
            break
        j_prev = j

    centered = robust_center(k, w)
    return RobustCentering(w, centered, loss, np.asarray(trace), converged, n_iter)


def center_with_loss(
    k: GramMatrix,
    loss: RobustLoss,
    threshold: float = DEFAULT_THRESHOLD,
    max_iter: int = DEFAULT_MAX_ITER,
) -> RobustCentering:
    """Convenience wrapper: run the reweighting and return the centered Gram."""
    return kirwls_weights(k, loss, threshold=threshold, max_iter=max_iter)


def is_least_squares(loss: RobustLoss) -> bool:
    return loss.kind is LossKind.LEAST_SQUARES
