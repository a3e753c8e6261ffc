"""Command line entry points.

Subcommands operate on plain numeric TSV files (no headers) for the
low-level steps and on the tabular bundle format for the scan.  Exit
codes: 0 success, 1 fatal error, 2 scan finished with failed triples.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from .bundle import load_bundle
from .centering import DEFAULT_MAX_ITER, DEFAULT_THRESHOLD, kirwls_weights
from .config import RunConfig, load_config, load_sim_config
from .inference import TestKind, composite_score_test, overall_score_test
from .kernels import GramMatrix
from .losses import make_loss
from .mixed_model import DEFAULT_MAX_ITER as REML_MAX_ITER
from .mixed_model import assemble_components, reml_fit
from .scan import triple_scan
from .simulate import SimConfig, estimate_power, roc_curve

THREADS_ENV = "ROBKMR_THREADS"


def _read_matrix(path: str) -> np.ndarray:
    m = np.loadtxt(path, delimiter="\t", ndmin=2)
    return np.asarray(m, dtype=float)


def _read_vector(path: str) -> np.ndarray:
    v = np.loadtxt(path, delimiter="\t")
    return np.atleast_1d(np.asarray(v, dtype=float)).ravel()


def _write_matrix(path: str, m: np.ndarray) -> None:
    np.savetxt(path, np.atleast_2d(m), delimiter="\t", fmt="%.10g")


def _write_json(path: str | None, payload: dict) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(","))


def _resolve_threads(flag_value: int) -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return max(1, flag_value)


def _loss_from_args(args: argparse.Namespace):
    constants = _floats(args.constants) if args.constants else None
    quantiles = _floats(args.quantiles) if args.quantiles else None
    return make_loss(args.loss, constants, quantiles)


def _components_from_args(args: argparse.Namespace):
    if len(args.kernels) != 3:
        raise SystemExit("--kernels needs exactly three comma separated paths")
    grams = tuple(GramMatrix(_read_matrix(p)) for p in args.kernels)
    return assemble_components(*grams)


def cmd_center(args: argparse.Namespace) -> int:
    gram = GramMatrix(_read_matrix(args.gram))
    loss = _loss_from_args(args)
    cent = kirwls_weights(gram, loss, threshold=args.threshold, max_iter=args.max_iter)
    _write_matrix(args.out_weights, cent.weights.reshape(-1, 1))
    _write_matrix(args.out_centered, cent.centered.values)
    report = {
        "loss": {
            "kind": cent.loss.kind.value,
            "constants": list(cent.loss.constants),
        },
        "converged": cent.converged,
        "n_iter": cent.n_iter,
        "objective_trace": [float(v) for v in cent.objective_trace],
    }
    if args.report:
        _write_json(args.report, report)
    print(
        f"centering {'converged' if cent.converged else 'did not converge'} "
        f"after {cent.n_iter} iterations; final objective {cent.objective_trace[-1]:.6g}"
    )
    return 0


def cmd_fit(args: argparse.Namespace) -> int:
    y = _read_vector(args.pheno)
    x = _read_matrix(args.design)
    comps = _components_from_args(args)
    fit = reml_fit(y, x, comps, max_iter=args.max_iter)
    payload = {
        "beta": [float(b) for b in fit.beta],
        "sigma2": float(fit.sigma2),
        "tau": {lab: float(t) for lab, t in zip(fit.labels, fit.tau)},
        "reml_loglik": float(fit.reml_loglik),
        "converged": fit.converged,
        "n_iter": fit.n_iter,
    }
    _write_json(args.out, payload)
    return 0


def cmd_test(args: argparse.Namespace) -> int:
    y = _read_vector(args.pheno)
    x = _read_matrix(args.design)
    comps = _components_from_args(args)
    if args.kind == TestKind.OVERALL.value:
        result = overall_score_test(y, x, comps)
    else:
        result = composite_score_test(y, x, comps, legacy_prefactor=args.legacy_prefactor)
    payload = {k: (v.value if k == "kind" else float(v)) for k, v in asdict(result).items()}
    _write_json(args.out, payload)
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = load_sim_config(args.config) if args.config else SimConfig()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    threads = _resolve_threads(args.threads)

    power = estimate_power(cfg, n_threads=threads)
    with (out / "power.tsv").open("w") as fh:
        fh.write("alpha1\talpha2\talpha3\ttest\treps\texcluded\trejections\trate\tse\n")
        fh.write(
            "\t".join(
                [
                    *(f"{a:.6g}" for a in power.alphas),
                    power.test_kind.value,
                    str(power.reps),
                    str(power.n_excluded),
                    str(power.rejections),
                    f"{power.rate:.6g}",
                    f"{power.standard_error:.6g}",
                ]
            )
            + "\n"
        )

    roc = roc_curve(cfg)
    with (out / "roc.tsv").open("w") as fh:
        fh.write("threshold\tfpr\ttpr\n")
        for t, f, s in zip(roc.thresholds, roc.fpr, roc.tpr):
            fh.write(f"{t:.6g}\t{f:.6g}\t{s:.6g}\n")

    manifest = {
        "config": {
            **{
                k: v
                for k, v in asdict(cfg).items()
                if k not in ("loss", "test_kind")
            },
            "loss": {
                "kind": cfg.loss.kind.value,
                "constants": list(cfg.loss.constants),
                "quantiles": list(cfg.loss.quantiles),
            },
            "test_kind": cfg.test_kind.value,
        },
        "power": {
            "rate": float(power.rate),
            "standard_error": float(power.standard_error),
            "rejections": power.rejections,
            "reps": power.reps,
            "excluded": power.n_excluded,
        },
        "roc_auc": float(roc.auc),
        "versions": {"robkmr": __version__, "numpy": np.__version__},
    }
    _write_json(str(out / "manifest.json"), manifest)
    print(f"power {power.rate:.3f} (se {power.standard_error:.3f}); roc auc {roc.auc:.4f}")
    return 0


def cmd_scan(args: argparse.Namespace) -> int:
    config = load_config(args.config) if args.config else RunConfig()
    if args.legacy_prefactor:
        config = replace(config, legacy_prefactor=True)
    views = tuple(args.views.split(","))
    genemaps = tuple(args.genemap.split(","))
    if len(views) != 3 or len(genemaps) != 3:
        raise SystemExit("--views and --genemap each need three comma separated paths")
    bundle = load_bundle(views, genemaps, args.pheno, args.covar, config)
    n_ok, n_failed = triple_scan(
        bundle,
        config,
        args.out,
        n_threads=_resolve_threads(args.threads),
        resume=args.resume,
    )
    print(f"scan wrote {n_ok + n_failed} triples to {args.out} ({n_failed} failed)")
    return 0 if n_failed == 0 else 2


def _add_loss_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--loss", default="huber", help="loss kind (huber, hampel, tukey, ...)")
    p.add_argument("--constants", default=None, help="comma separated tuning constants")
    p.add_argument("--quantiles", default=None, help="comma separated tuning quantiles")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robkmr", description=__doc__)
    parser.add_argument("--version", action="version", version=f"robkmr {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("center", help="robustly center a Gram matrix")
    p.add_argument("--gram", required=True, help="square Gram matrix TSV")
    _add_loss_args(p)
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)
    p.add_argument("--out-weights", required=True)
    p.add_argument("--out-centered", required=True)
    p.add_argument("--report", default=None, help="JSON diagnostics path")
    p.set_defaults(func=cmd_center)

    p = sub.add_parser("fit", help="fit the seven component kernel mixed model")
    p.add_argument("--pheno", required=True, help="response vector TSV")
    p.add_argument("--design", required=True, help="fixed effects design matrix TSV")
    p.add_argument("--kernels", required=True, nargs=3, metavar="K", help="three centered Gram TSVs")
    p.add_argument("--max-iter", type=int, default=REML_MAX_ITER)
    p.add_argument("--out", default=None, help="JSON output path (default stdout)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("test", help="variance component score test")
    p.add_argument("--pheno", required=True)
    p.add_argument("--design", required=True)
    p.add_argument("--kernels", required=True, nargs=3, metavar="K")
    p.add_argument("--kind", choices=[k.value for k in TestKind], default=TestKind.OVERALL.value)
    p.add_argument("--legacy-prefactor", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("simulate", help="power and ROC simulation")
    p.add_argument("--config", default=None, help="TOML or JSON simulation config")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("scan", help="gene triple scan over three views")
    p.add_argument("--views", required=True, help="three view TSVs, comma separated")
    p.add_argument("--genemap", required=True, help="three feature-to-gene TSVs, comma separated")
    p.add_argument("--pheno", required=True)
    p.add_argument("--covar", default=None)
    p.add_argument("--config", default=None, help="TOML or JSON run config")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--resume", action="store_true", help="reuse checkpointed triples")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--legacy-prefactor", action="store_true")
    p.set_defaults(func=cmd_scan)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        return 1
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
