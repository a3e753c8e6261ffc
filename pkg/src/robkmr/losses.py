"""Robust loss functions and their influence/weight companions.

Every loss is evaluated on nonnegative arguments (RKHS distances), so the
usual symmetric definitions are written for t >= 0 only.  For each kind we
expose rho (the loss itself), psi (its derivative) and weight
(psi(t)/t, the multiplier used inside reweighted least squares).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np


class LossKind(str, enum.Enum):
    LEAST_SQUARES = "least_squares"
    LEAST_ABSOLUTE = "least_absolute"
    HUBER = "huber"
    HAMPEL = "hampel"
    TUKEY = "tukey"
    CAUCHY = "cauchy"
    WELSCH = "welsch"
    GEMAN_MCCLURE = "geman_mcclure"


# number of tuning constants each kind carries once resolved
_N_CONSTANTS = {
    LossKind.LEAST_SQUARES: 0,
    LossKind.LEAST_ABSOLUTE: 1,  # weight-cap floor, not a shape constant
    LossKind.HUBER: 1,
    LossKind.HAMPEL: 3,
    LossKind.TUKEY: 1,
    LossKind.CAUCHY: 1,
    LossKind.WELSCH: 1,
    LossKind.GEMAN_MCCLURE: 0,
}

# default quantiles of the current distance spectrum used to set constants
_DEFAULT_QUANTILES = {
    LossKind.LEAST_ABSOLUTE: (0.5,),
    LossKind.HUBER: (0.5,),
    LossKind.HAMPEL: (0.5, 0.75, 0.85),
    LossKind.TUKEY: (0.5,),
    LossKind.CAUCHY: (0.5,),
    LossKind.WELSCH: (0.5,),
}

# the least-absolute weight 1/t is capped at 1/(FLOOR_SCALE * tuned scale)
LAD_FLOOR_SCALE = 1e-8


class DegenerateTuningError(ValueError):
    """Raised when distance quantiles cannot produce valid constants."""


@dataclass(frozen=True)
class RobustLoss:
    """A loss kind plus its tuning state.

    ``constants`` holds resolved tuning constants; empty means either the
    kind needs none or the constants still have to be tuned from data via
    the quantile policy in ``quantiles``.
    """

    kind: LossKind
    constants: tuple[float, ...] = ()
    quantiles: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.constants:
            _validate_constants(self.kind, self.constants)
        if self.quantiles:
            qs = self.quantiles
            if len(qs) != _N_CONSTANTS[self.kind]:
                raise ValueError(
                    f"{self.kind.value} takes {_N_CONSTANTS[self.kind]} quantiles, got {len(qs)}"
                )
            if any(not 0.0 < q < 1.0 for q in qs):
                raise ValueError("tuning quantiles must lie in (0, 1)")
            if any(b <= a for a, b in zip(qs, qs[1:])):
                raise ValueError("tuning quantiles must be strictly increasing")

    @property
    def resolved(self) -> bool:
        """True when rho/psi/weight can be evaluated."""
        return len(self.constants) == _N_CONSTANTS[self.kind]

    @property
    def needs_tuning(self) -> bool:
        return not self.resolved


def _validate_constants(kind: LossKind, constants: tuple[float, ...]) -> None:
    want = _N_CONSTANTS[kind]
    if len(constants) != want:
        raise ValueError(f"{kind.value} takes {want} constants, got {len(constants)}")
    if any(c <= 0 for c in constants):
        raise ValueError(f"{kind.value} constants must be positive: {constants}")
    if kind is LossKind.HAMPEL:
        c1, c2, c3 = constants
        if not c1 < c2 < c3:
            raise ValueError(f"hampel needs c1 < c2 < c3, got {constants}")


def make_loss(
    kind: LossKind | str,
    constants: tuple[float, ...] | None = None,
    quantiles: tuple[float, ...] | None = None,
) -> RobustLoss:
    """Build a loss; without explicit constants the default quantile policy applies."""
    kind = LossKind(kind)
    if constants is not None:
        return RobustLoss(kind, tuple(float(c) for c in constants))
    if quantiles is not None:
        return RobustLoss(kind, (), tuple(float(q) for q in quantiles))
    return RobustLoss(kind, (), _DEFAULT_QUANTILES.get(kind, ()))


def tune_constants(loss: RobustLoss, distances: np.ndarray) -> RobustLoss:
    """Resolve tuning constants as quantiles of the observed distances.

    Already-resolved losses pass through unchanged.  Tied or zero quantiles
    (possible with many duplicate samples) are nudged upward so that the
    positivity/ordering constraints still hold; if even the largest quantile
    is zero there is nothing to tune against and we refuse.
    """
    if loss.resolved:
        return loss
    d = np.asarray(distances, dtype=float).ravel()
    if d.size == 0 or not np.all(np.isfinite(d)):
        raise DegenerateTuningError("distances must be a nonempty finite array")
    qs = loss.quantiles or _DEFAULT_QUANTILES.get(loss.kind)
    if not qs:
        raise DegenerateTuningError(f"{loss.kind.value} has no quantile policy to tune with")
    raw = np.quantile(d, qs)
    top = float(raw[-1])
    if top <= 0.0:
        raise DegenerateTuningError(
            f"{loss.kind.value} tuning failed: quantile spectrum is all zero"
        )
    out: list[float] = []
    prev = 0.0
    for value in raw:
        c = float(value)
        if c <= prev:  # break ties upward at machine-eps scale
            c = prev + np.spacing(max(prev, top))
        out.append(c)
        prev = c
    if loss.kind is LossKind.LEAST_ABSOLUTE:
        out = [LAD_FLOOR_SCALE * out[0]]
    return replace(loss, constants=tuple(out))


def _checked(t: np.ndarray | float) -> np.ndarray:
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0):
        raise ValueError("loss argument must be nonnegative")
    return arr


def _require_resolved(loss: RobustLoss) -> None:
    if not loss.resolved:
        raise ValueError(f"{loss.kind.value} constants not tuned yet; call tune_constants first")


def rho(loss: RobustLoss, t: np.ndarray | float) -> np.ndarray:
    """Loss value at distance t (elementwise)."""
    _require_resolved(loss)
    t = _checked(t)
    kind, c = loss.kind, loss.constants
    if kind is LossKind.LEAST_SQUARES:
        return 0.5 * t**2
    if kind is LossKind.LEAST_ABSOLUTE:
        return t.copy()
    if kind is LossKind.HUBER:
        return np.where(t <= c[0], 0.5 * t**2, c[0] * t - 0.5 * c[0] ** 2)
    if kind is LossKind.HAMPEL:
        c1, c2, c3 = c
        cap = 0.5 * c1 * (c2 + c3 - c1)
        mid = c1 * t - 0.5 * c1**2
        tail = np.where(
            t < c3, cap - (c1 / (2.0 * (c3 - c2))) * (c3 - t) ** 2, cap
        )
        return np.where(t < c1, 0.5 * t**2, np.where(t < c2, mid, tail))
    if kind is LossKind.TUKEY:
        u = np.minimum(t / c[0], 1.0)
        return (c[0] ** 2 / 6.0) * (1.0 - (1.0 - u**2) ** 3)
    if kind is LossKind.CAUCHY:
        return 0.5 * c[0] ** 2 * np.log1p((t / c[0]) ** 2)
    if kind is LossKind.WELSCH:
        return 0.5 * c[0] ** 2 * (1.0 - np.exp(-((t / c[0]) ** 2)))
    if kind is LossKind.GEMAN_MCCLURE:
        return 0.5 * t**2 / (1.0 + t**2)
    raise AssertionError(kind)


def psi(loss: RobustLoss, t: np.ndarray | float) -> np.ndarray:
    """Derivative of rho (the influence function restricted to t >= 0)."""
    _require_resolved(loss)
    t = _checked(t)
    kind, c = loss.kind, loss.constants
    if kind is LossKind.LEAST_SQUARES:
        return t.copy()
    if kind is LossKind.LEAST_ABSOLUTE:
        return np.ones_like(t)
    if kind is LossKind.HUBER:
        return np.where(t <= c[0], t, c[0])
    if kind is LossKind.HAMPEL:
        c1, c2, c3 = c
        tail = np.where(t < c3, c1 * (c3 - t) / (c3 - c2), 0.0)
        return np.where(t < c1, t, np.where(t < c2, c1, tail))
    if kind is LossKind.TUKEY:
        u = t / c[0]
        return np.where(t <= c[0], t * (1.0 - u**2) ** 2, 0.0)
    if kind is LossKind.CAUCHY:
        return t / (1.0 + (t / c[0]) ** 2)
    if kind is LossKind.WELSCH:
        return t * np.exp(-((t / c[0]) ** 2))
    if kind is LossKind.GEMAN_MCCLURE:
        return t / (1.0 + t**2) ** 2
    raise AssertionError(kind)


def weight(loss: RobustLoss, t: np.ndarray | float) -> np.ndarray:
    """psi(t)/t with the t -> 0 limit filled in analytically.

    All kinds here have psi(t)/t -> 1 as t -> 0 except least-absolute,
    whose 1/t blowup is capped at 1/floor (floor tuned from the distance
    scale so that the cap never matters away from exact duplicates).
    """
    _require_resolved(loss)
    t = _checked(t)
    kind, c = loss.kind, loss.constants
    if kind is LossKind.LEAST_SQUARES:
        return np.ones_like(t)
    if kind is LossKind.LEAST_ABSOLUTE:
        return 1.0 / np.maximum(t, c[0])
    if kind is LossKind.HUBER:
        return np.where(t <= c[0], 1.0, c[0] / np.maximum(t, c[0]))
    if kind is LossKind.HAMPEL:
        c1, c2, c3 = c
        safe = np.maximum(t, c1)  # divisions only used on t >= c1 branches
        tail = np.where(t < c3, c1 * (c3 - t) / (safe * (c3 - c2)), 0.0)
        return np.where(t < c1, 1.0, np.where(t < c2, c1 / safe, tail))
    if kind is LossKind.TUKEY:
        u = t / c[0]
        return np.where(t <= c[0], (1.0 - u**2) ** 2, 0.0)
    if kind is LossKind.CAUCHY:
        return 1.0 / (1.0 + (t / c[0]) ** 2)
    if kind is LossKind.WELSCH:
        return np.exp(-((t / c[0]) ** 2))
    if kind is LossKind.GEMAN_MCCLURE:
        return 1.0 / (1.0 + t**2) ** 2
    raise AssertionError(kind)
