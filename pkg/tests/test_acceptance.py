"""End-to-end acceptance checks, one test per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the terminal summary lists
one PASS/FAIL line per criterion.
"""
import time

import numpy as np
import pytest

from comparator.cli import main as cli_main
from comparator.data import CohortConfig, generate_cohort
from comparator.losses import (
    comparator_batch_loss,
    contrastive_batch_loss,
    cross_entropy_loss,
    nrrank_loss,
)
from comparator.metrics import (
    auc,
    f1_at_threshold,
    oracle_threshold_accuracy,
    spearman,
)
from comparator.model import ScoringModel, backward
from comparator.report import evaluate_scores
from comparator.training import Scorer, TrainConfig, Trainer

import oracles

ACCEPT_BATCHES = 20_000
KINK_GAP = 1e-4


def rel_err(analytic, numeric, floor=1e-8):
    """Worst elementwise relative error; entries that are both ~0 count as exact."""
    a = np.ravel(np.asarray(analytic, dtype=float))
    n = np.ravel(np.asarray(numeric, dtype=float))
    scale = np.maximum(np.abs(a), np.abs(n))
    keep = scale > floor
    if not keep.any():
        return float(np.max(np.abs(a - n)))
    return float(np.max(np.abs(a[keep] - n[keep]) / scale[keep]))


def run_system(cohort, run_dir, **overrides):
    ds, latent = cohort
    cfg = TrainConfig(total_batches=ACCEPT_BATCHES, **overrides)
    manifest = Trainer(cfg, ds, run_dir).run()
    scorer = Scorer.from_checkpoint(run_dir / manifest["best"]["path"])
    test = ds.subset("test")
    idx = ds.split_indices("test")
    return evaluate_scores(scorer.scores(test.features), test, latent[idx], system=cfg.name)


@pytest.fixture(scope="module")
def default_cohort():
    return generate_cohort(CohortConfig())


@pytest.fixture(scope="module")
def proposed(default_cohort, tmp_path_factory):
    return run_system(default_cohort, tmp_path_factory.mktemp("proposed"), name="proposed")


@pytest.fixture(scope="module")
def cross_entropy(default_cohort, tmp_path_factory):
    return run_system(default_cohort, tmp_path_factory.mktemp("ce"), name="cross_entropy",
                      loss="cross_entropy", channels=["diagnosis"])


# -- 1 ----------------------------------------------------------------------

@pytest.mark.criterion(1, "comparator batch loss equals brute-force all-pairs oracle")
def test_loss_oracle_equivalence(record_property):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst_loss = 0.0
    grad_mismatch = 0
    for _ in range(1000):
        n = int(rng.integers(1, 13))
        s = rng.normal(0, 2, n)
        labels = [None if rng.random() < 0.2 else int(v) for v in rng.integers(0, 4, n)]
        eps = float(rng.uniform(0.1, 2.0))
        loss, grad = oracles.comparator_brute(list(s), labels, eps)
        bl = comparator_batch_loss(s, labels, eps)
        worst_loss = max(worst_loss, abs(bl.loss - loss))
        grad_mismatch += int(np.max(np.abs(bl.grad - grad), initial=0.0) > 1e-12)
    elapsed = time.perf_counter() - start
    record_property("detail", f"max |dL|={worst_loss:.1e}, grad mismatches={grad_mismatch}, "
                              f"{elapsed:.2f}s")
    assert worst_loss <= 1e-12
    assert grad_mismatch == 0
    assert elapsed < 10.0


# -- 2 ----------------------------------------------------------------------

def _comparator_instance(rng):
    while True:
        n = int(rng.integers(2, 9))
        s = rng.normal(0, 1.5, n)
        lab = [int(v) for v in rng.integers(0, 3, n)]
        eps = 1.0
        hinges = [s[i] - s[j] + eps for i in range(n) for j in range(n) if lab[j] > lab[i]]
        if all(abs(h) >= KINK_GAP for h in hinges):
            return s, lab, eps


def _contrastive_instance(rng):
    while True:
        n = int(rng.integers(2, 9))
        s = rng.normal(0, 1.0, n)
        c = [int(v) for v in rng.integers(0, 2, n)]
        d = np.abs(s[:, None] - s[None, :])[np.triu_indices(n, 1)]
        if np.all(d >= KINK_GAP) and np.all(np.abs(d - 1.0) >= KINK_GAP):
            return s, c


@pytest.mark.criterion(2, "analytic gradients of the four losses and the network match FD")
def test_gradient_suite(record_property):
    rng = np.random.default_rng(77)
    h = 1e-6
    worst = {}
    start = time.perf_counter()
    for _ in range(200):
        s, lab, eps = _comparator_instance(rng)
        fd = oracles.central_fd(lambda v: comparator_batch_loss(v, lab, eps).loss, s, h)
        worst["comparator"] = max(worst.get("comparator", 0.0),
                                  rel_err(comparator_batch_loss(s, lab, eps).grad, fd))

        z = rng.uniform(-8, 8, 6)
        y = rng.integers(0, 2, 6)
        fd = oracles.central_fd(lambda v: cross_entropy_loss(v, y)[0].sum(), z, 1e-5)
        worst["cross_entropy"] = max(worst.get("cross_entropy", 0.0),
                                     rel_err(cross_entropy_loss(z, y)[1], fd))

        s, c = _contrastive_instance(rng)
        fd = oracles.central_fd(lambda v: contrastive_batch_loss(v, c, 1.0).loss, s, h)
        worst["contrastive"] = max(worst.get("contrastive", 0.0),
                                   rel_err(contrastive_batch_loss(s, c, 1.0).grad, fd))

        k = int(rng.integers(2, 6))
        cls = int(rng.integers(0, k))
        p = rng.uniform(-3, 3, k)
        for mode in ("mse", "relative_entropy"):
            fd = oracles.central_fd(lambda v: nrrank_loss(v, cls, k, mode)[0], p, 1e-5)
            key = f"nrrank_{mode}"
            worst[key] = max(worst.get(key, 0.0), rel_err(nrrank_loss(p, cls, k, mode)[1], fd))

        dims = [int(rng.integers(1, 6)), int(rng.integers(1, 9)), 1]
        model = ScoringModel.initialize(dims, seed=int(rng.integers(2**31)))
        x = rng.normal(0, 1, dims[0])
        up = rng.normal()
        fd = oracles.mlp_param_fd(model.weights, model.biases, x, [up])
        tape = backward(model, x, up)
        worst["network"] = max(worst.get("network", 0.0),
                               max(rel_err(g, n) for g, n in zip(tape.grads, fd)))
    elapsed = time.perf_counter() - start
    record_property("detail", ", ".join(f"{k}={v:.1e}" for k, v in worst.items())
                    + f", {elapsed:.1f}s")
    for key, value in worst.items():
        assert value < 1e-6, key
    assert elapsed < 30.0


# -- 3, 4, 6 ----------------------------------------------------------------

@pytest.mark.criterion(3, "synthetic recovery: acc >= 0.90, AUC >= 0.95, rho_latent >= 0.85")
def test_synthetic_recovery(proposed, record_property):
    rho = proposed.correlations["latent"]["rho"]
    record_property("detail", f"acc={proposed.accuracy:.3f}, auc={proposed.auc:.3f}, "
                              f"rho_latent={rho:.3f}")
    assert proposed.accuracy >= 0.90
    assert proposed.auc >= 0.95
    assert rho >= 0.85


@pytest.mark.criterion(4, "rho against raw (uninverted) subscores is negative")
def test_ordering_direction(proposed, record_property):
    c = proposed.correlations["speech"]
    record_property("detail", f"rho_speech={c['rho']:.3f}, p={c['p_value']:.1e}")
    assert c["rho"] < 0


@pytest.mark.criterion(6, "comparator accuracy >= cross-entropy accuracy - 0.02")
def test_baseline_ordering(proposed, cross_entropy, record_property):
    record_property("detail", f"proposed={proposed.accuracy:.3f}, "
                              f"cross_entropy={cross_entropy.accuracy:.3f}")
    assert proposed.accuracy >= cross_entropy.accuracy - 0.02


# -- 5 ----------------------------------------------------------------------

@pytest.mark.criterion(5, "low-noise progression: median MND slope > HC 90th percentile")
def test_progression_recovery(tmp_path, record_property):
    cohort = generate_cohort(CohortConfig(sigma_obs=0.1, sigma_lab=0.25, seed=11))
    rep = run_system(cohort, tmp_path, name="low_noise")
    summ = rep.progression["summary"]
    record_property("detail", f"MND median={summ['MND']['median']:.2e}/day (n={summ['MND']['n']}), "
                              f"HC p90={summ['HC']['p90']:.2e}/day (n={summ['HC']['n']})")
    assert summ["MND"]["n"] >= 3 and summ["HC"]["n"] >= 3
    assert summ["MND"]["median"] > 0
    assert summ["MND"]["median"] > summ["HC"]["p90"]


# -- 7 ----------------------------------------------------------------------

@pytest.mark.criterion(7, "Spearman, AUC, oracle threshold and F1 match brute-force oracles")
def test_metric_oracles(record_property):
    rng = np.random.default_rng(7)
    worst = dict(spearman=0.0, auc=0.0, accuracy=0.0, threshold=0.0, f1=0.0)
    count = 0
    while count < 150:
        n = int(rng.integers(3, 51))
        # coarse rounding forces ties in both scores and labels
        s = np.round(rng.normal(0, 1, n), int(rng.integers(0, 3)))
        y = rng.integers(0, 2, n)
        ordinal = rng.integers(0, 5, n).astype(float)
        if y.min() == y.max() or np.ptp(s) == 0 or np.ptp(ordinal) == 0:
            continue
        count += 1
        worst["spearman"] = max(worst["spearman"], abs(
            spearman(s, ordinal)[0] - oracles.spearman_rank_then_pearson(s, ordinal)))
        worst["auc"] = max(worst["auc"], abs(auc(s, y) - oracles.auc_pairs(list(s), list(y))))
        acc, t = oracles.threshold_search(list(s), list(y))
        r = oracle_threshold_accuracy(s, y)
        worst["accuracy"] = max(worst["accuracy"], abs(r.accuracy - acc))
        gap = 0.0 if r.threshold == t else abs(r.threshold - t)
        worst["threshold"] = max(worst["threshold"], gap)
        worst["f1"] = max(worst["f1"], abs(f1_at_threshold(s, y, t)
                                           - oracles.f1_loops(list(s), list(y), t)))
    record_property("detail", f"{count} instances, " +
                    ", ".join(f"{k}={v:.1e}" for k, v in worst.items()))
    for key, value in worst.items():
        assert value <= 1e-12, key


# -- 8 ----------------------------------------------------------------------

def _tree(root):
    return {str(p.relative_to(root)): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.mark.criterion(8, "identical config and seed give identical manifests and checkpoints")
def test_determinism(tmp_path, record_property, capsys):
    data = tmp_path / "cohort.jsonl"
    assert cli_main(["generate", "--out", str(data), "--seed", "3"]) == 0
    trees = []
    for name in ("a", "b"):
        run = tmp_path / name
        assert cli_main(["train", "--data", str(data), "--run-dir", str(run), "--quiet",
                         "--batches", "3000", "--eval-interval", "250", "--seed", "5"]) == 0
        trees.append(_tree(run))
    capsys.readouterr()
    a, b = trees
    n_ckpt = sum(k.endswith(".ckpt") for k in a)
    record_property("detail", f"{len(a)} files compared, {n_ckpt} checkpoints")
    assert "manifest.json" in a and n_ckpt >= 2
    assert a.keys() == b.keys()
    for key in a:
        assert a[key] == b[key], key
