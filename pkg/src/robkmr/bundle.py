"""Input bundle loading for the gene-triple scan.

View files are feature-by-sample TSVs (header row carries sample IDs);
gene maps assign each feature to a gene; phenotype and covariate tables
are sample-keyed.  Samples are aligned by sorted intersection across all
inputs.  Missing values are handled per policy: refuse, drop the feature,
or mean-impute (continuous views only).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .config import RunConfig
from .kernels import DataView, ViewKind

NA_MARKERS = ("", "NA", "NaN", "nan", "na")


class BundleError(ValueError):
    """Malformed or inconsistent scan inputs."""


@dataclass(frozen=True)
class ScanBundle:
    views: tuple[DataView, DataView, DataView]
    gene_features: tuple[dict[str, np.ndarray], ...]  # gene -> column indices per view
    y: np.ndarray
    x: np.ndarray
    sample_ids: tuple[str, ...]
    covariate_names: tuple[str, ...]
    dropped_features: tuple[tuple[str, ...], ...]
    dropped_genes: tuple[tuple[str, ...], ...]

    @property
    def gene_lists(self) -> tuple[tuple[str, ...], ...]:
        return tuple(tuple(sorted(g)) for g in self.gene_features)


def _read_table(path: str | Path, what: str) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise BundleError(f"{what} file not found: {path}")
    df = pd.read_csv(path, sep="\t", index_col=0, dtype=str, keep_default_na=False)
    if df.index.has_duplicates:
        dups = df.index[df.index.duplicated()].unique().tolist()
        raise BundleError(f"duplicate ids in {what} {path.name}: {dups[:5]}")
    return df


def _to_float(df: pd.DataFrame, what: str) -> pd.DataFrame:
    cleaned = df.replace(list(NA_MARKERS), np.nan)
    try:
        return cleaned.astype(float)
    except ValueError as exc:
        raise BundleError(f"non-numeric value in {what}: {exc}") from exc


def _apply_na_policy(
    mat: pd.DataFrame, policy: str, genotype: bool, view_name: str
) -> tuple[pd.DataFrame, list[str]]:
    """Resolve missing values; returns the cleaned table and dropped feature ids."""
    has_na = mat.isna().any(axis=1)
    if not has_na.any():
        return mat, []
    bad = mat.index[has_na].tolist()
    if policy == "fail":
        raise BundleError(f"missing values in {view_name} feature(s) {bad[:5]} with na_policy=fail")
    if policy == "drop_feature":
        return mat.loc[~has_na], bad
    if genotype:
        raise BundleError(f"mean_impute is not valid for genotype view {view_name}")
    filled = mat.T.fillna(mat.mean(axis=1)).T
    if filled.isna().any().any():  # a feature that was all-missing has no mean
        allbad = filled.index[filled.isna().any(axis=1)].tolist()
        raise BundleError(f"feature(s) entirely missing in {view_name}: {allbad[:5]}")
    return filled, []


def _read_gene_map(path: str | Path, feature_ids: pd.Index, view_name: str) -> dict[str, list[str]]:
    df = _read_table(path, f"gene map for {view_name}")
    if df.shape[1] != 1:
        raise BundleError(f"gene map {path} must have exactly two columns")
    mapping = df.iloc[:, 0]
    missing = [f for f in feature_ids if f not in mapping.index]
    if missing:
        raise BundleError(f"features without gene assignment in {view_name}: {missing[:5]}")
    genes: dict[str, list[str]] = {}
    for fid in feature_ids:  # preserve view feature order within each gene
        genes.setdefault(str(mapping.loc[fid]), []).append(fid)
    return genes


def load_bundle(
    view_paths: tuple[str, str, str],
    genemap_paths: tuple[str, str, str],
    pheno_path: str,
    covar_path: str | None,
    config: RunConfig,
) -> ScanBundle:
    """Load, align and validate all scan inputs."""
    raw_views = [_read_table(p, f"view {i+1}") for i, p in enumerate(view_paths)]
    pheno = _to_float(_read_table(pheno_path, "phenotype"), "phenotype")
    if pheno.shape[1] != 1:
        raise BundleError("phenotype file must have exactly two columns (sample, value)")

    common: set[str] = set(pheno.index)
    sizes = [f"phenotype {pheno.shape[0]}"]
    for i, df in enumerate(raw_views):
        common &= set(df.columns)
        sizes.append(f"view{i+1} {df.shape[1]}")
    covar = None
    if covar_path is not None:
        covar = _to_float(_read_table(covar_path, "covariates"), "covariates")
        common &= set(covar.index)
        sizes.append(f"covariates {covar.shape[0]}")
    if len(common) < 3:
        raise BundleError(
            f"only {len(common)} samples shared across inputs ({', '.join(sizes)}); need at least 3"
        )
    samples = sorted(common)

    if pheno.loc[samples].isna().any().any():
        raise BundleError("phenotype contains missing values")
    y = pheno.loc[samples].to_numpy(dtype=float).ravel()

    if covar is not None:
        if covar.isna().loc[samples].any().any():
            raise BundleError("covariates contain missing values")
        x = np.column_stack([np.ones(len(samples)), covar.loc[samples].to_numpy(dtype=float)])
        covariate_names = ("intercept", *covar.columns.astype(str))
    else:
        x = np.ones((len(samples), 1))
        covariate_names = ("intercept",)

    views: list[DataView] = []
    gene_features: list[dict[str, np.ndarray]] = []
    dropped_features: list[tuple[str, ...]] = []
    dropped_genes: list[tuple[str, ...]] = []
    for i, (df, map_path) in enumerate(zip(raw_views, genemap_paths)):
        name = f"view {i+1}"
        genotype = config.kernels[i] == "ibs"
        mat = _to_float(df[samples], name)
        mat, dropped = _apply_na_policy(mat, config.na_policy, genotype, name)
        if mat.shape[0] == 0:
            raise BundleError(f"{name} has no features left after NA handling")
        if genotype and not np.isin(mat.to_numpy(), (0.0, 1.0, 2.0)).all():
            raise BundleError(f"{name} is a genotype view but has values outside {{0, 1, 2}}")
        genes = _read_gene_map(map_path, df.index, name)
        kept = set(mat.index)
        col_of = {fid: j for j, fid in enumerate(mat.index)}
        groups: dict[str, np.ndarray] = {}
        lost: list[str] = []
        for gene, feats in genes.items():
            cols = [col_of[f] for f in feats if f in kept]
            if cols:
                groups[gene] = np.asarray(cols, dtype=int)
            else:
                lost.append(gene)
        if not groups:
            raise BundleError(f"no genes with features remain in {name}")
        kind = ViewKind.GENOTYPE if genotype else ViewKind.CONTINUOUS
        views.append(DataView(mat.to_numpy(dtype=float).T, kind, tuple(mat.index)))
        gene_features.append(groups)
        dropped_features.append(tuple(dropped))
        dropped_genes.append(tuple(sorted(lost)))

    return ScanBundle(
        views=tuple(views),
        gene_features=tuple(gene_features),
        y=y,
        x=x,
        sample_ids=tuple(samples),
        covariate_names=covariate_names,
        dropped_features=tuple(dropped_features),
        dropped_genes=tuple(dropped_genes),
    )


def _num(v: float) -> str:
    return repr(float(v))  # shortest exact round-trip


def save_bundle(bundle: ScanBundle, out_dir: str | Path):
    """Write a bundle back to the on-disk input format.

    File names are canonical (view{i}.tsv, view{i}.map, pheno.tsv and,
    when covariates are present, covar.tsv); returns the four path groups
    in load_bundle argument order.  Numbers are written in shortest exact
    form, so save -> load -> save is byte-stable.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    samples = list(bundle.sample_ids)

    view_paths: list[str] = []
    map_paths: list[str] = []
    for i, (view, groups) in enumerate(zip(bundle.views, bundle.gene_features)):
        if len(view.feature_ids) != view.values.shape[1]:
            raise BundleError(f"view {i+1} has no usable feature ids; cannot serialize")
        vpath = out_dir / f"view{i+1}.tsv"
        with vpath.open("w") as fh:
            fh.write("\t".join(["feature"] + samples) + "\n")
            for j, fid in enumerate(view.feature_ids):
                fh.write("\t".join([fid] + [_num(v) for v in view.values[:, j]]) + "\n")
        gene_of = {}
        for gene, cols in groups.items():
            for c in cols:
                gene_of[int(c)] = gene
        mpath = out_dir / f"view{i+1}.map"
        with mpath.open("w") as fh:
            fh.write("feature\tgene\n")
            for j, fid in enumerate(view.feature_ids):
                if j not in gene_of:
                    raise BundleError(f"feature {fid} in view {i+1} belongs to no gene")
                fh.write(f"{fid}\t{gene_of[j]}\n")
        view_paths.append(str(vpath))
        map_paths.append(str(mpath))

    ppath = out_dir / "pheno.tsv"
    with ppath.open("w") as fh:
        fh.write("sample\tvalue\n")
        for sid, v in zip(samples, bundle.y):
            fh.write(f"{sid}\t{_num(v)}\n")

    cpath = None
    if len(bundle.covariate_names) > 1:
        cpath = out_dir / "covar.tsv"
        with cpath.open("w") as fh:
            fh.write("\t".join(["sample"] + list(bundle.covariate_names[1:])) + "\n")
            for k, sid in enumerate(samples):
                fh.write("\t".join([sid] + [_num(v) for v in bundle.x[k, 1:]]) + "\n")

    return (
        tuple(view_paths),
        tuple(map_paths),
        str(ppath),
        str(cpath) if cpath is not None else None,
    )
