import json

import numpy as np
import pytest

from propenc.cli import main
from propenc.fixtures import (
    GKB_ROWS,
    STRAWBERRY_MSCG_ROWS,
    diagonal_property_fold,
    planted_dataset,
    positives_only,
)
from propenc.modelio import load_model
from propenc.retrieval import EmbeddingMatrix, write_embeddings
from propenc.splits import LabelledDataset, SplitPlan
from propenc.trainer import holdout_validation


@pytest.fixture
def workdir(tmp_path):
    (tmp_path / "gkb.tsv").write_text("\n".join(GKB_ROWS) + "\n")
    (tmp_path / "strawberry.tsv").write_text("\n".join(STRAWBERRY_MSCG_ROWS) + "\n")
    return tmp_path


def run(*argv):
    return main([str(a) for a in argv])


# --- derive -------------------------------------------------------------------

def test_derive_gkb_writes_pairs_and_report(workdir):
    out = workdir / "gkb_pairs.tsv"
    report = workdir / "report.json"
    code = run("derive", "gkb", "--input", workdir / "gkb.tsv", "--output", out,
               "--max-len", "10", "--report", report)
    assert code == 0
    content = out.read_text()
    assert "banana\timportant food staple in the tropics\tGKB" in content
    payload = json.loads(report.read_text())
    assert payload["counters"]["emitted"] > 0
    assert "config_hash" in payload and "inputs" in payload


def test_derive_prefix_chain(workdir):
    mscg_pairs = workdir / "mscg_pairs.tsv"
    assert run("derive", "mscg", "--input", workdir / "strawberry.tsv",
               "--output", mscg_pairs) == 0
    prefix_pairs = workdir / "prefix_pairs.tsv"
    assert run("derive", "prefix", "--input", mscg_pairs, "--output", prefix_pairs) == 0
    lines = prefix_pairs.read_text().splitlines()
    keys = {tuple(line.split("\t")[:2]) for line in lines}
    assert keys == {("strawberry", "vitamin c rich"), ("strawberry", "low-sugar")}


def test_derive_unknown_source_usage_error(workdir):
    with pytest.raises(SystemExit) as exc:
        run("derive", "wordnet", "--input", workdir / "gkb.tsv", "--output", workdir / "x")
    assert exc.value.code == 2


def test_missing_input_exits_2(workdir):
    assert run("derive", "gkb", "--input", workdir / "nope.tsv",
               "--output", workdir / "out.tsv") == 2


# --- split ---------------------------------------------------------------------

def grid_file(tmp_path, n_c=12, n_p=10):
    rng = np.random.default_rng(0)
    ds = LabelledDataset()
    for i in range(n_c):
        for j in range(n_p):
            ds.add(f"c{i:02d}", f"p{j:02d}", bool(rng.integers(2)))
    path = tmp_path / "grid.tsv"
    ds.write(path)
    return path, ds


def test_split_prop_twice_byte_identical(workdir):
    data, _ = grid_file(workdir)
    p1, p2 = workdir / "plan1.jsonl", workdir / "plan2.jsonl"
    assert run("split", "prop", "--data", data, "--output", p1, "--seed", "7") == 0
    assert run("split", "prop", "--data", data, "--output", p2, "--seed", "7") == 0
    assert p1.read_bytes() == p2.read_bytes()


def test_split_conprop_needs_three_concepts(workdir):
    ds = LabelledDataset()
    for c in ("a", "b"):
        for p in ("x", "y", "z"):
            ds.add(c, p, True)
    path = workdir / "small.tsv"
    ds.write(path)
    assert run("split", "conprop", "--data", path, "--output", workdir / "plan.jsonl") == 2


def test_split_con_fixed_file(workdir):
    data, ds = grid_file(workdir)
    fixed = workdir / "fixed.tsv"
    concepts = ds.concepts()
    fixed.write_text(
        "\n".join(f"train\t{c}" for c in concepts[:-2])
        + "\n" + "\n".join(f"test\t{c}" for c in concepts[-2:]) + "\n"
    )
    plan_path = workdir / "plan.jsonl"
    assert run("split", "con", "--data", data, "--output", plan_path, "--fixed", fixed) == 0
    plan = SplitPlan.read(plan_path)
    assert plan.folds[0].test_concepts == concepts[-2:]


# --- train / eval / neighbors -----------------------------------------------------

@pytest.fixture
def trained(workdir):
    planted = planted_dataset(classes=2, concepts_per_class=6, props_per_class=4, noise=0.0)
    pairs = positives_only(planted.noisy)
    tr, va = holdout_validation(pairs, 0.15, seed=0)
    train_path, val_path = workdir / "train.tsv", workdir / "val.tsv"
    tr.write(train_path)
    va.write(val_path)
    model_path = workdir / "model.bin"
    log_path = workdir / "train_log.jsonl"
    code = run(
        "train", "--train", train_path, "--val", val_path, "--output", model_path,
        "--log", log_path, "--seed", "3", "--dim", "16", "--ffn-dim", "32",
        "--max-epochs", "30", "--patience", "10", "--batch-concepts", "4",
    )
    assert code == 0
    return workdir, planted, model_path


def test_train_writes_model_and_log(trained):
    workdir, planted, model_path = trained
    model = load_model(model_path)
    assert model.config.dim == 16
    records = [json.loads(l) for l in (workdir / "train_log.jsonl").read_text().splitlines()]
    assert all({"epoch", "train_loss", "val_loss", "best"} <= set(r) for r in records)
    assert any(r["best"] for r in records)


def test_eval_model_direct_and_baseline(trained):
    workdir, planted, model_path = trained
    grid_path = workdir / "labelled.tsv"
    planted.noisy.write(grid_path)
    plan_path = workdir / "plan.jsonl"
    assert run("split", "con", "--data", grid_path, "--output", plan_path, "--seed", "1") == 0
    report_path = workdir / "eval.json"
    assert run("eval", "--plan", plan_path, "--data", grid_path, "--model", model_path,
               "--output", report_path) == 0
    payload = json.loads(report_path.read_text())
    assert payload["scorer"] == "model:direct"
    assert 0.0 <= payload["results"]["macro_f1"] <= 1.0

    baseline_path = workdir / "baseline.json"
    assert run("eval", "--plan", plan_path, "--data", grid_path,
               "--baseline", "always-true", "--output", baseline_path) == 0
    base = json.loads(baseline_path.read_text())
    # always-true F1 = 2r/(1+r) with r the test positive rate
    plan = SplitPlan.read(plan_path)
    test_pairs = plan.folds[0].test_pairs(planted.noisy, plan.regime)
    rate = sum(x.label for x in test_pairs) / len(test_pairs)
    assert base["results"]["macro_f1"] == pytest.approx(2 * rate / (1 + rate), abs=1e-9)


def test_eval_reports_are_byte_identical(trained):
    workdir, planted, model_path = trained
    grid_path = workdir / "labelled.tsv"
    planted.noisy.write(grid_path)
    plan_path = workdir / "plan.jsonl"
    run("split", "con", "--data", grid_path, "--output", plan_path, "--seed", "1")
    r1, r2 = workdir / "r1.json", workdir / "r2.json"
    for r in (r1, r2):
        assert run("eval", "--plan", plan_path, "--data", grid_path,
                   "--baseline", "random", "--seed", "5", "--output", r) == 0
    assert r1.read_bytes() == r2.read_bytes()


def test_eval_requires_a_scorer(trained):
    workdir, planted, model_path = trained
    grid_path = workdir / "labelled.tsv"
    planted.noisy.write(grid_path)
    plan_path = workdir / "plan.jsonl"
    run("split", "con", "--data", grid_path, "--output", plan_path)
    assert run("eval", "--plan", plan_path, "--data", grid_path) == 2


def test_eval_knn_with_embeddings(trained):
    workdir, planted, model_path = trained
    grid_path = workdir / "labelled.tsv"
    planted.noisy.write(grid_path)
    plan_path = workdir / "plan.jsonl"
    run("split", "con", "--data", grid_path, "--output", plan_path, "--seed", "2")
    # orthogonal-ish embeddings keyed by class token make neighbours informative
    names = planted.noisy.concepts() + planted.noisy.properties()
    rng = np.random.default_rng(0)
    rows = []
    for name in names:
        k = int(name.split("kind")[-1]) if "kind" in name else int(name.split("trait")[-1][0])
        base = np.zeros(8, dtype=np.float32)
        base[k] = 1.0
        rows.append(base + rng.normal(0, 0.01, size=8).astype(np.float32))
    emb_path = workdir / "emb.bin"
    write_embeddings(emb_path, EmbeddingMatrix(names, np.stack(rows)))
    out = workdir / "knn.json"
    assert run("eval", "--plan", plan_path, "--data", grid_path,
               "--embeddings", emb_path, "--knn", "1", "--output", out) == 0
    payload = json.loads(out.read_text())
    assert payload["scorer"] == "knn:k=1"
    assert payload["results"]["macro_f1"] > 0.8  # class-aligned vectors classify well


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_divergence_exit_code_3(workdir):
    planted = planted_dataset(classes=2, concepts_per_class=5, props_per_class=3, noise=0.0)
    pairs = positives_only(planted.noisy)
    tr, va = holdout_validation(pairs, 0.2, seed=0)
    tr.write(workdir / "t.tsv")
    va.write(workdir / "v.tsv")
    code = run("train", "--train", workdir / "t.tsv", "--val", workdir / "v.tsv",
               "--output", workdir / "m.bin", "--dim", "16", "--ffn-dim", "32",
               "--lr", "1e12", "--max-epochs", "5", "--patience", "5")
    assert code == 3


def test_neighbors_k7_outputs_exactly_7_lines(trained, capsys):
    workdir, planted, model_path = trained
    pairs_path = workdir / "pairs_all.tsv"
    positives_only(planted.noisy).write(pairs_path)
    code = run("neighbors", "--model", model_path, "--pairs", pairs_path,
               "--concept", "mod0 kind0", "--k", "7", "--min-count", "1")
    assert code == 0
    lines = [l for l in capsys.readouterr().out.splitlines() if "\t" in l]
    assert len(lines) == 7


def test_discover_with_model_and_gold(trained, capsys):
    workdir, planted, model_path = trained
    targets = workdir / "targets.txt"
    targets.write_text("mod0 kind0\nmod1 kind1\n")
    candidates = workdir / "candidates.txt"
    candidates.write_text("\n".join(planted.noisy.properties()) + "\n")
    gold = workdir / "gold.tsv"
    gold.write_text("mod0 kind0\ttrait0 form0\nmod1 kind1\ttrait1 form0\n")
    out = workdir / "discovered.tsv"
    report = workdir / "discover.json"
    code = run("discover", "--targets", targets, "--model", model_path,
               "--candidates", candidates, "--k", "3", "--no-filter",
               "--gold", gold, "--output", out, "--report", report)
    assert code == 0
    rows = [l.split("\t") for l in out.read_text().splitlines()]
    assert {r[0] for r in rows} == {"mod0 kind0", "mod1 kind1"}
    payload = json.loads(report.read_text())
    assert set(payload["metrics"]) >= {"MAP", "MRR", "P@5"}


def test_discover_with_external_embedding_files(workdir):
    # binary store for candidates (labels contain spaces), text format for targets
    cand_path = workdir / "cands.bin"
    write_embeddings(cand_path, EmbeddingMatrix(
        ["animal", "broiler chicken", "bird"],
        np.array([[1, 0], [0.99, 0], [0.5, 0]], dtype=np.float32),
    ))
    targ_path = workdir / "targs.txt"
    targ_path.write_text("chicken 1 0\n")
    targets = workdir / "targets.txt"
    targets.write_text("chicken\n")
    out = workdir / "out.tsv"
    code = run("discover", "--targets", targets,
               "--target-embeddings", targ_path, "--candidate-embeddings", cand_path,
               "--k", "2", "--output", out)
    assert code == 0
    labels = [l.split("\t")[2] for l in out.read_text().splitlines()]
    assert "broiler chicken" not in labels  # self-mention filtered
    assert labels[0] == "animal"


def test_discover_requires_embedding_pair(workdir):
    targets = workdir / "targets.txt"
    targets.write_text("x\n")
    assert run("discover", "--targets", targets, "--output", workdir / "o.tsv") == 2


def test_fixtures_command(workdir):
    out = workdir / "fx"
    assert run("fixtures", "--output", out) == 0
    assert (out / "gkb.tsv").exists()
    assert (out / "planted_grid.tsv").exists()


def test_data_dir_environment_variable(workdir, monkeypatch):
    monkeypatch.setenv("PROPENC_DATA_DIR", str(workdir))
    # relative paths resolve under the data directory
    assert run("derive", "gkb", "--input", "gkb.tsv", "--output", "out_pairs.tsv",
               "--max-len", "10") == 0
    assert (workdir / "out_pairs.tsv").exists()


def test_full_pipeline_finetune_reproduces_planted_structure(workdir):
    import time

    start = time.perf_counter()
    planted = planted_dataset(classes=2, concepts_per_class=8, props_per_class=4, noise=0.0)
    grid_path = workdir / "grid.tsv"
    planted.noisy.write(grid_path)
    plan_path = workdir / "plan.jsonl"
    assert run("split", "con", "--data", grid_path, "--output", plan_path, "--seed", "2") == 0
    # train a throwaway model just to have a container for --finetune to restart from
    pairs = positives_only(planted.noisy)
    tr, va = holdout_validation(pairs, 0.15, seed=0)
    tr.write(workdir / "tr.tsv")
    va.write(workdir / "va.tsv")
    model_path = workdir / "seed_model.bin"
    assert run("train", "--train", workdir / "tr.tsv", "--val", workdir / "va.tsv",
               "--output", model_path, "--seed", "0", "--max-epochs", "1",
               "--patience", "1", "--batch-concepts", "4") == 0
    report_path = workdir / "finetune.json"
    assert run("eval", "--plan", plan_path, "--data", grid_path, "--model", model_path,
               "--finetune", "--seed", "0", "--batch-concepts", "8",
               "--output", report_path) == 0
    payload = json.loads(report_path.read_text())
    assert payload["scorer"] == "model:finetune"
    assert payload["results"]["macro_f1"] >= 0.9
    assert time.perf_counter() - start < 120


def test_config_file_overridden_by_flags(workdir, trained):
    _, planted, _ = trained
    pairs = positives_only(planted.noisy)
    tr, va = holdout_validation(pairs, 0.15, seed=0)
    tr.write(workdir / "t2.tsv")
    va.write(workdir / "v2.tsv")
    cfg = workdir / "cfg.yaml"
    cfg.write_text(
        "encoder:\n  dim: 16\n  ffn_dim: 32\ntrain:\n  max_epochs: 4\n  patience: 4\n"
        "  concepts_per_batch: 4\n"
    )
    model_path = workdir / "m2.bin"
    assert run("train", "--train", workdir / "t2.tsv", "--val", workdir / "v2.tsv",
               "--output", model_path, "--config", cfg, "--seed", "0",
               "--max-epochs", "2", "--patience", "2") == 0
    log = load_model(model_path)
    assert log.config.dim == 16  # from the config file
