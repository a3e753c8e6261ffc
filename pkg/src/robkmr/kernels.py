"""Gram matrix construction for genotype and continuous sample views."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist, squareform

SYMMETRY_TOL = 1e-10
# eigenvalues may dip slightly negative from roundoff; anything worse is a bug
PSD_SLACK = 1e-8


class ViewKind(str, enum.Enum):
    GENOTYPE = "genotype"
    CONTINUOUS = "continuous"


@dataclass(frozen=True)
class DataView:
    """One block of sample-by-feature measurements.

    Genotype views must hold allele counts in {0, 1, 2}.  At least three
    samples are required: with fewer there is no distance spectrum to tune
    against and no meaningful centering.
    """

    values: np.ndarray
    kind: ViewKind = ViewKind.CONTINUOUS
    feature_ids: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim != 2:
            raise ValueError(f"view values must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 3:
            raise ValueError(f"need at least 3 samples, got {arr.shape[0]}")
        if arr.shape[1] < 1:
            raise ValueError("need at least one feature")
        if not np.all(np.isfinite(arr)):
            raise ValueError("view values must be finite")
        if self.kind is ViewKind.GENOTYPE and not np.isin(arr, (0.0, 1.0, 2.0)).all():
            raise ValueError("genotype values must be allele counts in {0, 1, 2}")
        if self.feature_ids and len(self.feature_ids) != arr.shape[1]:
            raise ValueError("feature_ids length does not match feature count")
        object.__setattr__(self, "values", arr)

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class GramMatrix:
    """A symmetric kernel matrix over samples."""

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError(f"gram matrix must be square, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("gram matrix must be finite")
        scale = max(np.abs(arr).max(), 1.0)
        if np.abs(arr - arr.T).max() > SYMMETRY_TOL * scale:
            raise ValueError("gram matrix is not symmetric")
        object.__setattr__(self, "values", 0.5 * (arr + arr.T))

    @property
    def order(self) -> int:
        return self.values.shape[0]

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.values)[0])


def _as_values(x: DataView | np.ndarray) -> np.ndarray:
    if isinstance(x, DataView):
        return x.values
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 2:
        raise ValueError("expected a 2-D sample-by-feature array")
    return arr


def median_bandwidth(x: DataView | np.ndarray) -> float:
    """Median of pairwise Euclidean distances (lower median for even counts)."""
    arr = _as_values(x)
    d = pdist(arr, metric="euclidean")
    if d.size == 0:
        raise ValueError("need at least two samples for a bandwidth")
    d.sort()
    bw = float(d[(d.size - 1) // 2])
    if bw <= 0.0:
        raise ValueError("median pairwise distance is zero; bandwidth undefined")
    return bw


def gaussian_gram(x: DataView | np.ndarray, bandwidth: float | None = None) -> GramMatrix:
    """exp(-||xi - xj||^2 / (2 bw^2)) with unit diagonal by construction."""
    arr = _as_values(x)
    if bandwidth is None:
        bandwidth = median_bandwidth(arr)
    if bandwidth <= 0.0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    sq = squareform(pdist(arr, metric="sqeuclidean"))
    k = np.exp(-sq / (2.0 * bandwidth**2))
    np.fill_diagonal(k, 1.0)
    return GramMatrix(k)


def ibs_gram(x: DataView | np.ndarray) -> GramMatrix:
    """Allele-sharing kernel: mean over loci of (2 - |gi - gj|) / 2."""
    arr = _as_values(x)
    if not np.isin(arr, (0.0, 1.0, 2.0)).all():
        raise ValueError("allele-sharing kernel needs genotype values in {0, 1, 2}")
    p = arr.shape[1]
    manhattan = squareform(pdist(arr, metric="cityblock"))
    k = 1.0 - manhattan / (2.0 * p)
    np.fill_diagonal(k, 1.0)
    return GramMatrix(k)


def linear_gram(x: DataView | np.ndarray) -> GramMatrix:
    arr = _as_values(x)
    return GramMatrix(arr @ arr.T)


def hadamard(a: GramMatrix, b: GramMatrix, *rest: GramMatrix) -> GramMatrix:
    """Entrywise product of Gram matrices (closed under positive semidefiniteness)."""
    mats = (a, b) + rest
    orders = {m.order for m in mats}
    if len(orders) != 1:
        raise ValueError(f"gram orders differ: {sorted(orders)}")
    out = mats[0].values.copy()
    for m in mats[1:]:
        out *= m.values
    return GramMatrix(out)


def classical_center(k: GramMatrix) -> GramMatrix:
    """Double centering H K H with H = I - (1/n) 11'."""
    arr = k.values
    col = arr.mean(axis=0)
    total = col.mean()
    centered = arr - col[None, :] - col[:, None] + total
    return GramMatrix(centered)
