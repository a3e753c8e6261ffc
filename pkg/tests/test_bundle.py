"""Scan-input loading: alignment, NA policies, genotype checks, gene maps."""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from robkmr.bundle import BundleError, load_bundle, save_bundle
from robkmr.config import RunConfig


def write_tsv(path, header, rows):
    lines = ["\t".join(header)] + ["\t".join(str(c) for c in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


@pytest.fixture
def inputs(tmp_path):
    """Six shared samples, deliberately shuffled per file, plus strays."""
    samples = ["s4", "s2", "s6", "s1", "s3", "s5"]
    write_tsv(
        tmp_path / "geno.tsv",
        ["feature"] + samples,
        [
            ["f1", 0, 1, 2, 0, 1, 2],
            ["f2", 1, 1, 0, 2, 0, 1],
            ["f3", 2, 0, 1, 1, 2, 0],
            ["f4", 0, 0, 1, 0, 1, 1],
        ],
    )
    write_tsv(
        tmp_path / "expr.tsv",
        ["feature", "s1", "s2", "s3", "s4", "s5", "s6"],
        [
            ["e1", 0.5, 1.5, -0.25, 2.0, 0.0, 1.0],
            ["e2", 1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            ["e3", -1.0, 0.0, 1.0, 2.0, 0.5, 0.25],
        ],
    )
    write_tsv(
        tmp_path / "meth.tsv",
        ["feature", "s1", "s2", "s3", "s4", "s5", "s6", "s9"],
        [
            ["t1", 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 9.9],
            ["t2", 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 9.9],
        ],
    )
    write_tsv(tmp_path / "geno.map", ["feature", "gene"],
              [["f1", "gA"], ["f2", "gA"], ["f3", "gB"], ["f4", "gB"]])
    write_tsv(tmp_path / "expr.map", ["feature", "gene"],
              [["e1", "gX"], ["e2", "gX"], ["e3", "gY"]])
    write_tsv(tmp_path / "meth.map", ["feature", "gene"],
              [["t1", "gM"], ["t2", "gN"]])
    write_tsv(
        tmp_path / "pheno.tsv",
        ["sample", "value"],
        [[f"s{i}", float(i)] for i in range(1, 8)],  # s7 is nowhere else
    )
    write_tsv(
        tmp_path / "covar.tsv",
        ["sample", "age", "weight"],
        [[f"s{i}", 40 + i, 70.0 + 0.5 * i] for i in range(1, 7)],
    )
    return tmp_path


def paths(d):
    return (
        (str(d / "geno.tsv"), str(d / "expr.tsv"), str(d / "meth.tsv")),
        (str(d / "geno.map"), str(d / "expr.map"), str(d / "meth.map")),
        str(d / "pheno.tsv"),
        str(d / "covar.tsv"),
    )


def test_alignment_uses_sorted_intersection(inputs):
    views, maps, pheno, covar = paths(inputs)
    b = load_bundle(views, maps, pheno, covar, RunConfig())
    assert b.sample_ids == ("s1", "s2", "s3", "s4", "s5", "s6")
    assert np.array_equal(b.y, np.arange(1.0, 7.0))
    assert b.covariate_names == ("intercept", "age", "weight")
    assert b.x.shape == (6, 3)
    assert np.all(b.x[:, 0] == 1.0)
    assert np.array_equal(b.x[:, 1], 40 + np.arange(1.0, 7.0))
    # rows are samples in sorted order, columns the view's features
    assert b.views[0].values.shape == (6, 4)
    # geno.tsv keeps s1 in column four: its dosages are f1=0, f2=2, f3=1, f4=0
    assert b.views[0].values[0].tolist() == [0.0, 2.0, 1.0, 0.0]
    # stray sample s9 in meth.tsv and s7 in pheno are silently dropped
    assert b.views[2].values.shape == (6, 2)
    assert b.views[2].values[:, 0].tolist() == [0.1, 0.2, 0.3, 0.4, 0.5, 0.6]


def test_gene_groups_point_at_columns(inputs):
    views, maps, pheno, covar = paths(inputs)
    b = load_bundle(views, maps, pheno, covar, RunConfig())
    assert b.gene_lists == (("gA", "gB"), ("gX", "gY"), ("gM", "gN"))
    g = b.gene_features[0]
    assert g["gA"].tolist() == [0, 1]
    assert g["gB"].tolist() == [2, 3]
    assert b.gene_features[1]["gY"].tolist() == [2]
    assert b.dropped_features == ((), (), ())
    assert b.dropped_genes == ((), (), ())


def test_no_covariates_gives_intercept_only(inputs):
    views, maps, pheno, _ = paths(inputs)
    b = load_bundle(views, maps, pheno, None, RunConfig())
    assert b.covariate_names == ("intercept",)
    assert b.x.shape == (6, 1)


def test_missing_file_and_duplicates(inputs):
    views, maps, pheno, covar = paths(inputs)
    with pytest.raises(BundleError, match="not found"):
        load_bundle(views, maps, str(inputs / "nope.tsv"), covar, RunConfig())
    write_tsv(inputs / "pheno.tsv", ["sample", "value"],
              [["s1", 1.0], ["s1", 2.0], ["s2", 3.0], ["s3", 1.0], ["s4", 1.0]])
    with pytest.raises(BundleError, match="duplicate ids"):
        load_bundle(views, maps, pheno, covar, RunConfig())


def test_phenotype_shape_and_values(inputs):
    views, maps, pheno, covar = paths(inputs)
    write_tsv(inputs / "pheno.tsv", ["sample", "value", "extra"],
              [[f"s{i}", i, i] for i in range(1, 7)])
    with pytest.raises(BundleError, match="exactly two columns"):
        load_bundle(views, maps, pheno, covar, RunConfig())
    write_tsv(inputs / "pheno.tsv", ["sample", "value"],
              [["s1", "tall"]] + [[f"s{i}", i] for i in range(2, 7)])
    with pytest.raises(BundleError, match="non-numeric"):
        load_bundle(views, maps, pheno, covar, RunConfig())
    write_tsv(inputs / "pheno.tsv", ["sample", "value"],
              [["s1", "NA"]] + [[f"s{i}", i] for i in range(2, 7)])
    with pytest.raises(BundleError, match="phenotype contains missing"):
        load_bundle(views, maps, pheno, covar, RunConfig())


def test_covariate_missing_values(inputs):
    views, maps, pheno, covar = paths(inputs)
    write_tsv(inputs / "covar.tsv", ["sample", "age"],
              [["s1", "nan"]] + [[f"s{i}", 40 + i] for i in range(2, 7)])
    with pytest.raises(BundleError, match="covariates contain missing"):
        load_bundle(views, maps, pheno, covar, RunConfig())


def test_too_few_shared_samples(inputs):
    views, maps, pheno, covar = paths(inputs)
    write_tsv(inputs / "pheno.tsv", ["sample", "value"], [["s1", 1.0], ["s2", 2.0]])
    with pytest.raises(BundleError, match="shared across inputs"):
        load_bundle(views, maps, pheno, covar, RunConfig())


def test_na_policy_fail(inputs):
    views, maps, pheno, covar = paths(inputs)
    write_tsv(
        inputs / "expr.tsv",
        ["feature", "s1", "s2", "s3", "s4", "s5", "s6"],
        [["e1", 0.5, "NA", -0.25, 2.0, 0.0, 1.0],
         ["e2", 1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
         ["e3", -1.0, 0.0, 1.0, 2.0, 0.5, 0.25]],
    )
    with pytest.raises(BundleError, match="na_policy=fail"):
        load_bundle(views, maps, pheno, covar, RunConfig())


def test_na_policy_drop_feature_tracks_losses(inputs):
    views, maps, pheno, covar = paths(inputs)
    write_tsv(
        inputs / "expr.tsv",
        ["feature", "s1", "s2", "s3", "s4", "s5", "s6"],
        [["e1", 0.5, "NA", -0.25, 2.0, 0.0, 1.0],
         ["e2", 1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
         ["e3", "", 0.0, 1.0, 2.0, 0.5, 0.25]],  # empty cell is missing too
    )
    cfg = replace(RunConfig(), na_policy="drop_feature")
    b = load_bundle(views, maps, pheno, covar, cfg)
    assert b.dropped_features[1] == ("e1", "e3")
    assert b.dropped_genes[1] == ("gY",)  # e3 was its only feature
    assert b.gene_lists[1] == ("gX",)
    assert b.gene_features[1]["gX"].tolist() == [0]  # e2 is the only column left
    assert b.views[1].values.shape == (6, 1)


def test_na_policy_drop_feature_can_empty_a_view(inputs):
    views, maps, pheno, covar = paths(inputs)
    write_tsv(
        inputs / "meth.tsv",
        ["feature", "s1", "s2", "s3", "s4", "s5", "s6"],
        [["t1", "NA", 0.2, 0.3, 0.4, 0.5, 0.6],
         ["t2", 0.9, "NA", 0.7, 0.6, 0.5, 0.4]],
    )
    cfg = replace(RunConfig(), na_policy="drop_feature")
    with pytest.raises(BundleError, match="no features left"):
        load_bundle(views, maps, pheno, covar, cfg)


def test_na_policy_mean_impute(inputs):
    views, maps, pheno, covar = paths(inputs)
    write_tsv(
        inputs / "expr.tsv",
        ["feature", "s1", "s2", "s3", "s4", "s5", "s6"],
        [["e1", 0.5, "NA", -0.25, 2.0, 0.0, 1.0],
         ["e2", 1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
         ["e3", -1.0, 0.0, 1.0, 2.0, 0.5, 0.25]],
    )
    cfg = replace(RunConfig(), na_policy="mean_impute")
    b = load_bundle(views, maps, pheno, covar, cfg)
    filled = b.views[1].values[1, 0]  # sample s2, feature e1
    assert filled == pytest.approx(np.mean([0.5, -0.25, 2.0, 0.0, 1.0]))
    assert b.dropped_features[1] == ()


def test_mean_impute_refuses_genotypes_and_all_missing(inputs):
    views, maps, pheno, covar = paths(inputs)
    write_tsv(
        inputs / "geno.tsv",
        ["feature", "s1", "s2", "s3", "s4", "s5", "s6"],
        [["f1", 0, 1, 2, 0, 1, "NA"],
         ["f2", 1, 1, 0, 2, 0, 1],
         ["f3", 2, 0, 1, 1, 2, 0],
         ["f4", 0, 0, 1, 0, 1, 1]],
    )
    cfg = replace(RunConfig(), na_policy="mean_impute")
    with pytest.raises(BundleError, match="not valid for genotype"):
        load_bundle(views, maps, pheno, covar, cfg)

    write_tsv(
        inputs / "geno.tsv",
        ["feature", "s1", "s2", "s3", "s4", "s5", "s6"],
        [["f1", 0, 1, 2, 0, 1, 2],
         ["f2", 1, 1, 0, 2, 0, 1],
         ["f3", 2, 0, 1, 1, 2, 0],
         ["f4", 0, 0, 1, 0, 1, 1]],
    )
    write_tsv(
        inputs / "expr.tsv",
        ["feature", "s1", "s2", "s3", "s4", "s5", "s6"],
        [["e1", "NA", "NA", "NA", "NA", "NA", "NA"],
         ["e2", 1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
         ["e3", -1.0, 0.0, 1.0, 2.0, 0.5, 0.25]],
    )
    with pytest.raises(BundleError, match="entirely missing"):
        load_bundle(views, maps, pheno, covar, cfg)


def test_genotype_values_outside_dosage_rejected(inputs):
    views, maps, pheno, covar = paths(inputs)
    write_tsv(
        inputs / "geno.tsv",
        ["feature", "s1", "s2", "s3", "s4", "s5", "s6"],
        [["f1", 0, 1, 3, 0, 1, 2],
         ["f2", 1, 1, 0, 2, 0, 1],
         ["f3", 2, 0, 1, 1, 2, 0],
         ["f4", 0, 0, 1, 0, 1, 1]],
    )
    with pytest.raises(BundleError, match="outside"):
        load_bundle(views, maps, pheno, covar, RunConfig())


def assert_bundles_equal(a, b):
    assert a.sample_ids == b.sample_ids
    assert np.array_equal(a.y, b.y)
    assert np.array_equal(a.x, b.x)
    assert a.covariate_names == b.covariate_names
    for va, vb in zip(a.views, b.views):
        assert va.kind is vb.kind
        assert va.feature_ids == vb.feature_ids
        assert np.array_equal(va.values, vb.values)
    for ga, gb in zip(a.gene_features, b.gene_features):
        assert sorted(ga) == sorted(gb)
        for gene in ga:
            assert ga[gene].tolist() == gb[gene].tolist()


def test_sample_order_in_files_is_irrelevant(inputs, tmp_path):
    views, maps, pheno, covar = paths(inputs)
    ref = load_bundle(views, maps, pheno, covar, RunConfig())

    # re-emit every file with its samples in a different order
    import pandas as pd

    perm_dir = tmp_path / "perm"
    perm_dir.mkdir()
    sample_perm = ["s3", "s6", "s1", "s5", "s2", "s4"]
    new_views = []
    for p in views:
        df = pd.read_csv(p, sep="\t", index_col=0, dtype=str)
        cols = [c for c in sample_perm if c in df.columns]
        cols += [c for c in df.columns if c not in cols]
        q = perm_dir / Path(p).name
        df[cols].to_csv(q, sep="\t")
        new_views.append(str(q))
    pheno_df = pd.read_csv(pheno, sep="\t", index_col=0, dtype=str)
    pheno_df = pheno_df.loc[reversed(pheno_df.index)]
    pheno_df.to_csv(perm_dir / "pheno.tsv", sep="\t")
    covar_df = pd.read_csv(covar, sep="\t", index_col=0, dtype=str)
    covar_df = covar_df.loc[sorted(covar_df.index, reverse=True)]
    covar_df.to_csv(perm_dir / "covar.tsv", sep="\t")

    got = load_bundle(
        tuple(new_views), maps, str(perm_dir / "pheno.tsv"), str(perm_dir / "covar.tsv"), RunConfig()
    )
    assert_bundles_equal(ref, got)


def test_save_load_round_trip_is_byte_stable(tmp_path):
    rng = np.random.default_rng(12)
    n = 12
    samples = [f"id{i:02d}" for i in range(n)]
    write_tsv(
        tmp_path / "g.tsv",
        ["feature"] + samples,
        [[f"g{j}"] + list(rng.integers(0, 3, size=n)) for j in range(6)],
    )
    write_tsv(
        tmp_path / "e.tsv",
        ["feature"] + samples,
        [[f"e{j}"] + [round(v, 4) for v in rng.normal(size=n)] for j in range(6)],
    )
    write_tsv(
        tmp_path / "t.tsv",
        ["feature"] + samples,
        [[f"t{j}"] + [round(v, 4) for v in rng.uniform(size=n)] for j in range(6)],
    )
    for stem, fids in (("g", "g"), ("e", "e"), ("t", "t")):
        write_tsv(
            tmp_path / f"{stem}.map",
            ["feature", "gene"],
            [[f"{fids}{j}", f"{stem.upper()}gene{j // 2}"] for j in range(6)],  # 3 genes/view
        )
    write_tsv(tmp_path / "y.tsv", ["sample", "value"],
              [[s, round(v, 4)] for s, v in zip(samples, rng.normal(size=n))])
    write_tsv(tmp_path / "c.tsv", ["sample", "age"],
              [[s, 40 + i] for i, s in enumerate(samples)])

    cfg = RunConfig()
    b1 = load_bundle(
        (str(tmp_path / "g.tsv"), str(tmp_path / "e.tsv"), str(tmp_path / "t.tsv")),
        (str(tmp_path / "g.map"), str(tmp_path / "e.map"), str(tmp_path / "t.map")),
        str(tmp_path / "y.tsv"),
        str(tmp_path / "c.tsv"),
        cfg,
    )
    assert b1.gene_lists[0] == ("Ggene0", "Ggene1", "Ggene2")

    args1 = save_bundle(b1, tmp_path / "saved1")
    b2 = load_bundle(*args1, cfg)
    assert_bundles_equal(b1, b2)
    save_bundle(b2, tmp_path / "saved2")
    for f1 in sorted((tmp_path / "saved1").iterdir()):
        f2 = tmp_path / "saved2" / f1.name
        assert f2.read_bytes() == f1.read_bytes()


def test_gene_map_errors(inputs):
    views, maps, pheno, covar = paths(inputs)
    write_tsv(inputs / "expr.map", ["feature", "gene", "chrom"],
              [["e1", "gX", 1], ["e2", "gX", 1], ["e3", "gY", 2]])
    with pytest.raises(BundleError, match="exactly two columns"):
        load_bundle(views, maps, pheno, covar, RunConfig())
    write_tsv(inputs / "expr.map", ["feature", "gene"], [["e1", "gX"], ["e2", "gX"]])
    with pytest.raises(BundleError, match="without gene assignment"):
        load_bundle(views, maps, pheno, covar, RunConfig())
