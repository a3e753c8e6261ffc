"""Gene-triple scan: every (gene1, gene2, gene3) combination gets the full
centering + mixed-model + test pipeline, with per-triple failure isolation,
periodic checkpoints and deterministic outputs.

Per-gene kernels and their robust centerings are shared across all triples
containing that gene, so they are computed once up front.
"""

from __future__ import annotations

import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import product
from pathlib import Path

import numpy as np

from . import __version__
from .bundle import ScanBundle
from .centering import RobustCentering, kirwls_weights
from .config import RunConfig
from .inference import composite_score_test, overall_score_test
from .kernels import DataView, GramMatrix
from .mixed_model import assemble_components, reml_fit
from .pipeline import gram_for_view

P_THRESHOLDS = (0.05, 0.01, 0.001, 1e-4, 1e-5, 1e-6)

SCAN_COLUMNS = (
    "index", "gene1", "gene2", "gene3", "status",
    "sigma2",
    "tau_1", "tau_2", "tau_3", "tau_1x2", "tau_1x3", "tau_2x3", "tau_1x2x3",
    "overall_p", "composite_p",
    "full_converged", "full_iterations",
    "null_converged", "null_iterations",
    "kirwls1_converged", "kirwls1_iterations",
    "kirwls2_converged", "kirwls2_iterations",
    "kirwls3_converged", "kirwls3_iterations",
)

MANHATTAN_COLUMNS = ("index", "neglog10_overall_p", "neglog10_composite_p")


def _fmt(x: float | None) -> str:
    if x is None or (isinstance(x, float) and not np.isfinite(x)):
        return "NA"
    return f"{x:.6g}"


def _fmt_flag(b: bool | None) -> str:
    if b is None:
        return "NA"
    return "1" if b else "0"


def _fmt_int(i: int | None) -> str:
    return "NA" if i is None else str(i)


@dataclass
class TripleRecord:
    index: int
    genes: tuple[str, str, str]
    status: str = "ok"
    sigma2: float | None = None
    tau: tuple[float, ...] | None = None
    overall_p: float | None = None
    composite_p: float | None = None
    full_converged: bool | None = None
    full_iterations: int | None = None
    null_converged: bool | None = None
    null_iterations: int | None = None
    kirwls: tuple[tuple[bool, int] | None, ...] = (None, None, None)

    def to_line(self) -> str:
        tau = self.tau if self.tau is not None else (None,) * 7
        cells = [
            str(self.index), *self.genes, self.status,
            _fmt(self.sigma2),
            *(map(_fmt, tau)),
            _fmt(self.overall_p), _fmt(self.composite_p),
            _fmt_flag(self.full_converged), _fmt_int(self.full_iterations),
            _fmt_flag(self.null_converged), _fmt_int(self.null_iterations),
        ]
        for kw in self.kirwls:
            if kw is None:
                cells.extend(["NA", "NA"])
            else:
                cells.extend([_fmt_flag(kw[0]), _fmt_int(kw[1])])
        return "\t".join(cells)


def _sanitize(msg: str) -> str:
    return " ".join(str(msg).split())[:300]


def gene_centerings(
    bundle: ScanBundle, config: RunConfig
) -> list[dict[str, RobustCentering | Exception]]:
    """Kernel + robust centering for every (view, gene) pair, computed once."""
    out: list[dict[str, RobustCentering | Exception]] = []
    for i, (view, groups) in enumerate(zip(bundle.views, bundle.gene_features)):
        per_gene: dict[str, RobustCentering | Exception] = {}
        for gene in sorted(groups):
            cols = groups[gene]
            sub = DataView(view.values[:, cols], view.kind)
            try:
                gram = gram_for_view(sub, config.kernels[i], config.bandwidths[i])
                per_gene[gene] = kirwls_weights(
                    gram,
                    config.loss,
                    threshold=config.kirwls_threshold,
                    max_iter=config.kirwls_max_iter,
                )
            except Exception as exc:  # poisoned gene: every triple using it reports the error
                per_gene[gene] = exc
        out.append(per_gene)
    return out


def _run_triple(
    index: int,
    genes: tuple[str, str, str],
    centerings: tuple[RobustCentering | Exception, ...],
    bundle: ScanBundle,
    config: RunConfig,
) -> TripleRecord:
    rec = TripleRecord(index=index, genes=genes)
    for v, c in enumerate(centerings):
        if isinstance(c, Exception):
            rec.status = f"error:view{v+1}/{genes[v]}: {_sanitize(c)}"
            return rec
    rec.kirwls = tuple((c.converged, c.n_iter) for c in centerings)
    try:
        comps = assemble_components(*(c.centered for c in centerings))
        rec.overall_p = overall_score_test(bundle.y, bundle.x, comps).p_value
        null_fit = reml_fit(bundle.y, bundle.x, comps.drop_last(), max_iter=config.reml_max_iter)
        rec.null_converged = null_fit.converged
        rec.null_iterations = null_fit.n_iter
        rec.composite_p = composite_score_test(
            bundle.y, bundle.x, comps, null_fit=null_fit,
            legacy_prefactor=config.legacy_prefactor,
        ).p_value
        full_fit = reml_fit(bundle.y, bundle.x, comps, max_iter=config.reml_max_iter)
        rec.sigma2 = full_fit.sigma2
        rec.tau = tuple(float(t) for t in full_fit.tau)
        rec.full_converged = full_fit.converged
        rec.full_iterations = full_fit.n_iter
    except Exception as exc:
        rec.status = f"error:{type(exc).__name__}: {_sanitize(exc)}"
    return rec


def triple_scan(
    bundle: ScanBundle,
    config: RunConfig,
    out_dir: str | Path,
    n_threads: int = 1,
    resume: bool = False,
) -> tuple[int, int]:
    """Run the scan and write outputs; returns (n_ok, n_failed).

    Completed triples are appended to a checkpoint file every
    ``config.checkpoint_every`` records; with ``resume`` those lines are
    reused verbatim so interrupted runs pick up where they stopped.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint = out_dir / "checkpoint.tsv"

    lists = bundle.gene_lists
    triples = list(product(*lists))  # lexicographic by construction
    done: dict[int, str] = {}
    if resume and checkpoint.exists():
        for line in checkpoint.read_text().splitlines():
            cells = line.split("\t")
            if len(cells) == len(SCAN_COLUMNS):
                try:
                    done[int(cells[0])] = line
                except ValueError:
                    continue

    centerings = gene_centerings(bundle, config)
    pending = [i for i in range(len(triples)) if i not in done]

    lock = threading.Lock()
    buffer: list[str] = []

    def flush_buffer() -> None:
        if buffer:
            with checkpoint.open("a") as fh:
                fh.write("\n".join(buffer) + "\n")
            buffer.clear()

    def work(i: int) -> None:
        genes = triples[i]
        cents = tuple(centerings[v][genes[v]] for v in range(3))
        line = _run_triple(i, genes, cents, bundle, config).to_line()
        with lock:
            done[i] = line
            buffer.append(line)
            if len(buffer) >= config.checkpoint_every:
                flush_buffer()

    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            list(pool.map(work, pending))
    else:
        for i in pending:
            work(i)
    with lock:
        flush_buffer()

    lines = [done[i] for i in range(len(triples))]
    n_ok, n_failed = write_outputs(lines, out_dir, bundle, config)
    checkpoint.unlink(missing_ok=True)
    return n_ok, n_failed


def _parse_p(cell: str) -> float | None:
    if cell == "NA":
        return None
    return float(cell)


def write_outputs(
    lines: list[str], out_dir: str | Path, bundle: ScanBundle, config: RunConfig
) -> tuple[int, int]:
    """Write scan.tsv, manhattan.tsv and manifest.json from finished lines."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    scan_path = out_dir / "scan.tsv"
    with scan_path.open("w") as fh:
        fh.write("\t".join(SCAN_COLUMNS) + "\n")
        for line in lines:
            fh.write(line + "\n")

    i_status = SCAN_COLUMNS.index("status")
    i_op = SCAN_COLUMNS.index("overall_p")
    i_cp = SCAN_COLUMNS.index("composite_p")
    n_ok = 0
    counts = {"overall": [0] * len(P_THRESHOLDS), "composite": [0] * len(P_THRESHOLDS)}
    man_rows = []
    for line in lines:
        cells = line.split("\t")
        if cells[i_status] != "ok":
            continue
        n_ok += 1
        op, cp = _parse_p(cells[i_op]), _parse_p(cells[i_cp])
        for which, p in (("overall", op), ("composite", cp)):
            if p is None:
                continue
            for k, t in enumerate(P_THRESHOLDS):
                if p <= t:
                    counts[which][k] += 1
        man_rows.append(
            "\t".join(
                [cells[0]]
                + [
                    _fmt(-np.log10(max(p, 1e-300))) if p is not None else "NA"
                    for p in (op, cp)
                ]
            )
        )
    n_failed = len(lines) - n_ok

    with (out_dir / "manhattan.tsv").open("w") as fh:
        fh.write("\t".join(MANHATTAN_COLUMNS) + "\n")
        for row in man_rows:
            fh.write(row + "\n")

    manifest = {
        "config": json.loads(config.canonical_json()),
        "config_hash": config.config_hash(),
        "versions": {
            "robkmr": __version__,
            "numpy": np.__version__,
            "scipy": __import__("scipy").__version__,
        },
        "n_samples": len(bundle.sample_ids),
        "genes_per_view": [len(g) for g in bundle.gene_lists],
        "n_triples": len(lines),
        "n_ok": n_ok,
        "n_failed": n_failed,
        "dropped_features": [list(d) for d in bundle.dropped_features],
        "dropped_genes": [list(d) for d in bundle.dropped_genes],
        "significant_counts": {
            which: {f"{t:g}": counts[which][k] for k, t in enumerate(P_THRESHOLDS)}
            for which in ("overall", "composite")
        },
    }
    with (out_dir / "manifest.json").open("w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return n_ok, n_failed
