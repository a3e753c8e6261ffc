"""Shared path from raw views to the seven model components."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .centering import DEFAULT_MAX_ITER, DEFAULT_THRESHOLD, RobustCentering, kirwls_weights
from .kernels import DataView, GramMatrix, ViewKind, gaussian_gram, ibs_gram, linear_gram
from .losses import RobustLoss
from .mixed_model import ComponentSet, assemble_components

KERNEL_CHOICES = ("gaussian", "ibs", "linear")


def gram_for_view(
    view: DataView,
    kernel: str | None = None,
    bandwidth: float | None = None,
) -> GramMatrix:
    """Raw Gram matrix for one view; kernel defaults by view kind."""
    if kernel is None:
        kernel = "ibs" if view.kind is ViewKind.GENOTYPE else "gaussian"
    if kernel == "gaussian":
        return gaussian_gram(view, bandwidth)
    if kernel == "ibs":
        return ibs_gram(view)
    if kernel == "linear":
        return linear_gram(view)
    raise ValueError(f"unknown kernel {kernel!r}; choose from {KERNEL_CHOICES}")


@dataclass(frozen=True)
class PipelineResult:
    components: ComponentSet
    centerings: tuple[RobustCentering, ...]


def build_components(
    views: tuple[DataView, DataView, DataView],
    loss: RobustLoss,
    kernels: tuple[str | None, str | None, str | None] = (None, None, None),
    bandwidths: tuple[float | None, float | None, float | None] = (None, None, None),
    threshold: float = DEFAULT_THRESHOLD,
    max_iter: int = DEFAULT_MAX_ITER,
) -> PipelineResult:
    """Kernelize each view, robust-center it, then form all interaction products.

    Products are taken after centering so each factor is already anchored
    at its robust mean element.
    """
    if len(views) != 3:
        raise ValueError("exactly three views required")
    centerings = []
    for view, kern, bw in zip(views, kernels, bandwidths):
        gram = gram_for_view(view, kern, bw)
        centerings.append(kirwls_weights(gram, loss, threshold=threshold, max_iter=max_iter))
    centered = [c.centered for c in centerings]
    comps = assemble_components(*centered)
    return PipelineResult(comps, tuple(centerings))
