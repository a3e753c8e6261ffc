"""Simulation harness: synthetic three-view datasets, power curves and ROC.

The generative model has a genotype view and two continuous views.  Signal
enters through standardized products of the first two features of each
view: a main effect of view 1, two pairwise interactions and the
three-way interaction, with strengths alpha = (a1, a2, a3):

    y = X b0 + a1 g1 + a2 (g12 + g23) + a3 g123 + e,   e ~ N(0, 1)

Replicates draw from independent counter-derived streams so runs are
reproducible and embarrassingly parallel.  Optional contamination swaps a
fraction of samples for heavy-tailed outliers (scaled t with 1 df), in the
response, the continuous features, or both.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .inference import TestKind, TestResult, composite_score_test, overall_score_test
from .kernels import DataView, ViewKind
from .losses import LossKind, RobustLoss, make_loss
from .mixed_model import reml_fit
from .pipeline import build_components

BETA0 = np.array([1.0, 0.02, -0.01])  # intercept, age, weight
CONTAM_TARGETS = ("y", "features", "both")
MAX_EXCLUDED_FRACTION = 0.05


@dataclass(frozen=True)
class SimConfig:
    n: int = 300
    alphas: tuple[float, float, float] = (0.0, 0.0, 0.0)
    n_features: tuple[int, int, int] = (4, 3, 3)
    reps: int = 200
    seed: int = 20240401
    alpha_level: float = 0.05
    loss: RobustLoss = field(default_factory=lambda: make_loss(LossKind.HUBER))
    contamination: float = 0.0
    outlier_scale: float = 10.0
    contam_target: str = "y"
    test_kind: TestKind = TestKind.COMPOSITE

    def __post_init__(self) -> None:
        if self.n < 10:
            raise ValueError("need at least 10 samples")
        if any(p < 2 for p in self.n_features):
            raise ValueError("each view needs at least 2 features (signal uses the first two)")
        if self.reps < 1:
            raise ValueError("reps must be positive")
        if not 0.0 <= self.contamination < 0.5:
            raise ValueError("contamination fraction must be in [0, 0.5)")
        if self.contam_target not in CONTAM_TARGETS:
            raise ValueError(f"contam_target must be one of {CONTAM_TARGETS}")
        if not 0.0 < self.alpha_level < 1.0:
            raise ValueError("alpha_level must be in (0, 1)")


@dataclass(frozen=True)
class SimDataset:
    y: np.ndarray
    x: np.ndarray
    views: tuple[DataView, DataView, DataView]
    outlier_idx: np.ndarray


def replicate_rng(seed: int, rep_index: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for one replicate (counter-based spawn key)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(rep_index, stream)))


def _standardized(v: np.ndarray) -> np.ndarray:
    s = v.std()
    if s < 1e-12:
        return np.zeros_like(v)
    return (v - v.mean()) / s


def simulate_dataset(cfg: SimConfig, rep_index: int) -> SimDataset:
    """Draw one replicate of the three-view generative model."""
    rng = replicate_rng(cfg.seed, rep_index)
    n = cfg.n
    p1, p2, p3 = cfg.n_features

    maf = rng.uniform(0.1, 0.4, size=p1)
    geno = rng.binomial(2, maf, size=(n, p1)).astype(float)
    m2 = rng.standard_normal((n, p2))
    m3 = rng.standard_normal((n, p3))
    age = rng.uniform(40.0, 90.0, size=n)
    wt = rng.normal(70.0, 10.0, size=n)
    noise = rng.standard_normal(n)

    x = np.column_stack([np.ones(n), age, wt])
    a1, a2, a3 = cfg.alphas
    g1 = _standardized(geno[:, 0] * geno[:, 1])
    g12 = _standardized(geno[:, 0] * m2[:, 0] + geno[:, 1] * m2[:, 1])
    g23 = _standardized(m2[:, 0] * m3[:, 0] + m2[:, 1] * m3[:, 1])
    g123 = _standardized(geno[:, 0] * m2[:, 0] * m3[:, 0] + geno[:, 1] * m2[:, 1] * m3[:, 1])
    y = x @ BETA0 + a1 * g1 + a2 * (g12 + g23) + a3 * g123 + noise

    outlier_idx = np.empty(0, dtype=int)
    if cfg.contamination > 0.0:
        k = math.ceil(cfg.contamination * n)
        outlier_idx = np.sort(rng.choice(n, size=k, replace=False))
        if cfg.contam_target in ("y", "both"):
            y[outlier_idx] = rng.standard_t(1, size=k) * cfg.outlier_scale
        if cfg.contam_target in ("features", "both"):
            m2[outlier_idx] = rng.standard_t(1, size=(k, p2)) * cfg.outlier_scale
            m3[outlier_idx] = rng.standard_t(1, size=(k, p3)) * cfg.outlier_scale

    views = (
        DataView(geno, ViewKind.GENOTYPE),
        DataView(m2, ViewKind.CONTINUOUS),
        DataView(m3, ViewKind.CONTINUOUS),
    )
    return SimDataset(y, x, views, outlier_idx)


def run_replicate(cfg: SimConfig, rep_index: int) -> TestResult:
    """Simulate one dataset and run the configured test on it."""
    data = simulate_dataset(cfg, rep_index)
    result = build_components(data.views, cfg.loss)
    if cfg.test_kind is TestKind.OVERALL:
        return overall_score_test(data.y, data.x, result.components)
    return composite_score_test(data.y, data.x, result.components)


@dataclass(frozen=True)
class PowerRow:
    alphas: tuple[float, float, float]
    test_kind: TestKind
    reps: int
    n_excluded: int
    rejections: int
    rate: float
    standard_error: float


def estimate_power(cfg: SimConfig, n_threads: int = 1) -> PowerRow:
    """Monte Carlo rejection rate at cfg.alpha_level over cfg.reps replicates.

    Replicates whose pipeline fails outright (singular fits and the like)
    are excluded; more than 5% exclusions voids the estimate.
    """

    def one(rep: int) -> float | None:
        try:
            return run_replicate(cfg, rep).p_value
        except Exception:
            return None

    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            pvals = list(pool.map(one, range(cfg.reps)))
    else:
        pvals = [one(rep) for rep in range(cfg.reps)]

    kept = [p for p in pvals if p is not None]
    n_excluded = cfg.reps - len(kept)
    if n_excluded > MAX_EXCLUDED_FRACTION * cfg.reps:
        raise RuntimeError(
            f"{n_excluded}/{cfg.reps} replicates failed; power estimate would be biased"
        )
    rejections = sum(p <= cfg.alpha_level for p in kept)
    rate = rejections / len(kept) if kept else float("nan")
    se = math.sqrt(max(rate * (1.0 - rate), 0.0) / cfg.reps)
    return PowerRow(cfg.alphas, cfg.test_kind, cfg.reps, n_excluded, rejections, rate, se)


@dataclass(frozen=True)
class RocResult:
    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float
    null_pvalues: np.ndarray
    alt_pvalues: np.ndarray


def _draw_alt_alphas(rng: np.random.Generator) -> tuple[float, float, float]:
    # fixed main effect; interaction strengths either absent or uniform
    a = 0.0 if rng.random() < 0.5 else float(rng.uniform(0.0, 1.0))
    return (1.0, a, a)


def roc_curve(cfg: SimConfig, threshold_step: float = 1e-4) -> RocResult:
    """Paired null/alternative sweep of the p-value threshold.

    Null replicates use alphas (0,0,0); alternatives fix a1 = 1 and draw
    a2 = a3 per replicate (zero half the time, else uniform).  Both arms
    reuse the same per-replicate streams so that pipelines with different
    losses see identical data.
    """
    null_cfg = replace(cfg, alphas=(0.0, 0.0, 0.0))
    null_ps: list[float] = []
    alt_ps: list[float] = []
    n_excluded = 0
    for rep in range(cfg.reps):
        alphas = _draw_alt_alphas(replicate_rng(cfg.seed, rep, stream=1))
        alt_cfg = replace(cfg, alphas=alphas)
        try:  # a failure in either arm drops the pair
            pn = run_replicate(null_cfg, rep).p_value
            pa = run_replicate(alt_cfg, rep).p_value
        except Exception:
            n_excluded += 1
            continue
        null_ps.append(pn)
        alt_ps.append(pa)
    if n_excluded > MAX_EXCLUDED_FRACTION * cfg.reps:
        raise RuntimeError(f"{n_excluded}/{cfg.reps} replicate pairs failed")
    return roc_from_pvalues(null_ps, alt_ps, threshold_step)


def roc_from_pvalues(
    null_ps, alt_ps, threshold_step: float = 1e-4
) -> RocResult:
    """Threshold sweep over raw p-values: rejection rates per arm, then AUC."""
    sn = np.sort(np.asarray(null_ps, dtype=float))
    sa = np.sort(np.asarray(alt_ps, dtype=float))
    if sn.size == 0 or sa.size == 0:
        raise ValueError("need at least one p-value per arm")
    thresholds = np.arange(0.0, 1.0 + threshold_step / 2, threshold_step)
    fpr = np.searchsorted(sn, thresholds, side="right") / sn.size
    tpr = np.searchsorted(sa, thresholds, side="right") / sa.size
    auc = float(np.trapezoid(tpr, fpr))
    return RocResult(thresholds, fpr, tpr, auc, sn, sa)
