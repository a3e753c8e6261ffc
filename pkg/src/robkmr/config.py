"""Run configuration for the scan pipeline, loadable from TOML or JSON."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .centering import DEFAULT_MAX_ITER, DEFAULT_THRESHOLD
from .losses import LossKind, RobustLoss, make_loss
from .mixed_model import DEFAULT_MAX_ITER as REML_MAX_ITER
from .pipeline import KERNEL_CHOICES

NA_POLICIES = ("fail", "drop_feature", "mean_impute")


@dataclass(frozen=True)
class RunConfig:
    loss: RobustLoss = field(default_factory=lambda: make_loss(LossKind.HUBER))
    kernels: tuple[str, str, str] = ("ibs", "gaussian", "gaussian")
    bandwidths: tuple[float | None, float | None, float | None] = (None, None, None)
    kirwls_threshold: float = DEFAULT_THRESHOLD
    kirwls_max_iter: int = DEFAULT_MAX_ITER
    reml_max_iter: int = REML_MAX_ITER
    na_policy: str = "fail"
    checkpoint_every: int = 1000
    legacy_prefactor: bool = False

    def __post_init__(self) -> None:
        for k in self.kernels:
            if k not in KERNEL_CHOICES:
                raise ValueError(f"unknown kernel {k!r}; choose from {KERNEL_CHOICES}")
        if self.na_policy not in NA_POLICIES:
            raise ValueError(f"na_policy must be one of {NA_POLICIES}")
        if self.checkpoint_every < 1:
            raise ValueError("checkpoint_every must be positive")

    def canonical_json(self) -> str:
        """Stable serialization used for config hashing in run manifests."""
        payload = asdict(self)
        payload["loss"] = {
            "kind": self.loss.kind.value,
            "constants": list(self.loss.constants),
            "quantiles": list(self.loss.quantiles),
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def _loss_from_mapping(raw: dict) -> RobustLoss:
    kind = raw.get("kind", "huber")
    constants = raw.get("constants")
    quantiles = raw.get("quantiles")
    return make_loss(
        kind,
        tuple(constants) if constants is not None else None,
        tuple(quantiles) if quantiles is not None else None,
    )


def config_from_mapping(raw: dict) -> RunConfig:
    """Build a RunConfig from a parsed TOML/JSON document."""
    loss = _loss_from_mapping(raw.get("loss", {}))
    kern = raw.get("kernels", {})
    kernels = (
        kern.get("view1", "ibs"),
        kern.get("view2", "gaussian"),
        kern.get("view3", "gaussian"),
    )
    bandwidths = tuple(kern.get(f"bandwidth{i}") for i in (1, 2, 3))
    kirwls = raw.get("kirwls", {})
    reml = raw.get("reml", {})
    scan = raw.get("scan", {})
    test = raw.get("test", {})
    return RunConfig(
        loss=loss,
        kernels=kernels,
        bandwidths=bandwidths,
        kirwls_threshold=float(kirwls.get("threshold", DEFAULT_THRESHOLD)),
        kirwls_max_iter=int(kirwls.get("max_iter", DEFAULT_MAX_ITER)),
        reml_max_iter=int(reml.get("max_iter", REML_MAX_ITER)),
        na_policy=scan.get("na_policy", "fail"),
        checkpoint_every=int(scan.get("checkpoint_every", 1000)),
        legacy_prefactor=bool(test.get("legacy_prefactor", False)),
    )


def _raw_from_path(path: str | Path) -> dict:
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        return json.loads(text)
    if path.suffix.lower() == ".toml":
        try:
            import tomllib  # py311+
        except ModuleNotFoundError:
            import tomli as tomllib
        return tomllib.loads(text)
    raise ValueError(f"config must be .toml or .json, got {path.suffix!r}")


def load_config(path: str | Path) -> RunConfig:
    """Read a run configuration from a .toml or .json file."""
    return config_from_mapping(_raw_from_path(path))


def sim_config_from_mapping(raw: dict):
    """Build a SimConfig from a parsed document ([simulate] plus shared [loss])."""
    from .inference import TestKind
    from .simulate import SimConfig

    sim = raw.get("simulate", {})
    kwargs: dict = {}
    for key in ("n", "reps", "seed"):
        if key in sim:
            kwargs[key] = int(sim[key])
    for key in ("alpha_level", "contamination", "outlier_scale"):
        if key in sim:
            kwargs[key] = float(sim[key])
    for key, cast in (("alphas", float), ("n_features", int)):
        if key in sim:
            vals = tuple(cast(v) for v in sim[key])
            if len(vals) != 3:
                raise ValueError(f"{key} needs 3 entries")
            kwargs[key] = vals
    if "contam_target" in sim:
        kwargs["contam_target"] = sim["contam_target"]
    if "test_kind" in sim:
        kwargs["test_kind"] = TestKind(sim["test_kind"])
    if "loss" in raw:
        kwargs["loss"] = _loss_from_mapping(raw["loss"])
    return SimConfig(**kwargs)


def load_sim_config(path: str | Path):
    """Read a simulation configuration from a .toml or .json file."""
    return sim_config_from_mapping(_raw_from_path(path))
