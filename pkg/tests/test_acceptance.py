"""Acceptance suite: one test per release criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
lines; the expensive full training run and the ablation grid are shared
through session fixtures, so the whole suite stays inside its runtime
budgets (gradcheck < 60 s, full run < 5 min, grid < 15 min).
"""

import json
import math
import time

import numpy as np
import pytest

from mmsent import fusion as fz
from mmsent import image as im
from mmsent import losses as ls
from mmsent.cli import main as cli_main
from mmsent.config import ExperimentConfig
from mmsent.data import generate_synthetic, nearest_centroid_accuracy, report_json_bytes
from mmsent.experiment import run, run_ablation_grid
from mmsent.losses import ContrastiveBatch, DegenerateBatchError
from mmsent.metrics import ConfusionMatrix, accuracy, macro_f1
from mmsent.model import ModelParams
from mmsent.tensor import Tensor
from mmsent.train import STREAM_MODEL_INIT, AdamW, derive_rng, split_dataset, train_epoch, SplitSpec
from mmsent.verify import run_gradcheck


def passed(criterion: str) -> None:
    print(f"\nACCEPTANCE {criterion}: PASS")


@pytest.fixture(scope="session")
def acceptance_dataset(tmp_path_factory):
    """The standard synthetic set: 3 classes, 30 per class, default noise, seed 42."""
    root = tmp_path_factory.mktemp("acceptance-data")
    manifest, records = generate_synthetic(root, classes=3, per_class=30, seed=42)
    return root, manifest, records


@pytest.fixture(scope="session")
def full_training(acceptance_dataset):
    """Default full-flag config trained for the standard 50 epochs."""
    root, _, _ = acceptance_dataset
    config = ExperimentConfig(dataset_dir=str(root), seed=42, epochs=50).validate()
    start = time.time()
    result = run(config)
    elapsed = time.time() - start
    return result, config, elapsed


class TestCriterion1GradientIntegrity:
    def test_every_differentiable_op_matches_central_differences(self):
        start = time.time()
        rows = run_gradcheck()
        elapsed = time.time() - start
        names = {row.name for row in rows}
        required = {
            "matmul", "add", "sub", "mul", "scale", "sigmoid", "tanh", "gelu", "exp", "log",
            "softmax", "conv1d", "reduce_mean", "reduce_max", "layer_norm", "lstm_cell",
            "transformer_block", "cbam", "attention_pool", "supcon_loss",
            "classification_loss", "combined_loss", "full_model",
        }
        assert required <= names
        for row in rows:
            assert row.report.max_rel_err < 1e-4, f"{row.name}: {row.report}"
            assert row.report.probed_count >= 20 or row.name in ("combined_loss", "full_model")
        assert elapsed < 60.0, f"gradient checks took {elapsed:.1f}s"
        passed("1 gradient-integrity")


class TestCriterion2SupconOracle:
    @staticmethod
    def brute_force(z, labels, tau):
        n = len(labels)
        total = 0.0
        for i in range(n):
            positives = [p for p in range(n) if p != i and labels[p] == labels[i]]
            if not positives:
                continue
            denom = sum(math.exp(float(z[i] @ z[a]) / tau) for a in range(n) if a != i)
            for p in positives:
                total += (-1.0 / len(positives)) * math.log(math.exp(float(z[i] @ z[p]) / tau) / denom)
        return total

    def test_fifty_batches_plus_edge_cases(self):
        rng = np.random.default_rng(42)
        checked = 0
        while checked < 50:
            n = int(rng.integers(2, 9))
            k = int(rng.integers(1, 4))
            labels = [int(v) for v in rng.integers(0, k, size=n)]
            if all(labels.count(l) == 1 for l in labels):
                continue  # degenerate batches are covered separately
            z = rng.normal(size=(n, 6))
            z /= np.linalg.norm(z, axis=1, keepdims=True)
            tau = float(rng.uniform(0.05, 0.4))
            got = ls.supcon_loss(ContrastiveBatch(Tensor(z), labels, temperature=tau)).item()
            assert abs(got - self.brute_force(z, labels, tau)) < 1e-10
            checked += 1

        pair = rng.normal(size=(2, 5))
        pair /= np.linalg.norm(pair, axis=1, keepdims=True)
        assert ls.supcon_loss(ContrastiveBatch(Tensor(pair), [1, 1])).item() == 0.0

        uniq = rng.normal(size=(4, 5))
        uniq /= np.linalg.norm(uniq, axis=1, keepdims=True)
        with pytest.raises(DegenerateBatchError):
            ls.supcon_loss(ContrastiveBatch(Tensor(uniq), [0, 1, 2, 3], temperature=0.07))
        passed("2 supcon-oracle-equivalence")


class TestCriterion3ObjectiveDegeneracy:
    def test_lambda_zero_trajectory_matches_cross_entropy_only(self, acceptance_dataset):
        root, _, records = acceptance_dataset

        def three_epoch_snapshots(config):
            train_set, _, _ = split_dataset(records, SplitSpec(seed=config.seed))
            params = ModelParams.init(config, derive_rng(config.seed, STREAM_MODEL_INIT))
            optimizer = AdamW(params.named_parameters(), config)
            snaps = []
            for epoch in (1, 2, 3):
                train_epoch(params, train_set, config, optimizer, epoch)
                snaps.append({k: v.data.copy() for k, v in params.named_parameters().items()})
            return snaps

        base = dict(dataset_dir=str(root), seed=42, epochs=3)
        a = three_epoch_snapshots(ExperimentConfig(**base, lambda_supcon=0.0).validate())
        b = three_epoch_snapshots(ExperimentConfig(**base, use_supcon=False).validate())
        for epoch_idx, (sa, sb) in enumerate(zip(a, b), start=1):
            for name in sa:
                assert np.array_equal(sa[name], sb[name]), f"epoch {epoch_idx}, {name}"
        passed("3 objective-degeneracy")


class TestCriterion4CbamAndAttention:
    def test_contraction_and_stochasticity_on_100_random_sequences(self):
        rng = np.random.default_rng(7)
        for i in range(100):
            d = int(rng.choice([8, 16, 32]))
            length = int(rng.integers(2, 30))
            x = rng.normal(scale=rng.uniform(0.3, 3.0), size=(length, d))

            cbam_params = fz.CbamParams.init(rng, d, 4)
            out = fz.cbam(Tensor(x), cbam_params).data
            assert np.all(np.abs(out) <= np.abs(x)), f"sequence {i}: contraction violated"

            block = im.EncoderBlockParams.init(rng, d, 2)
            _, attns = im.multi_head_attention(Tensor(x), block)
            for a in attns:
                assert np.max(np.abs(a.data.sum(axis=1) - 1.0)) <= 1e-12
                assert np.all(a.data > 0.0) and np.all(a.data < 1.0)

            pool = fz.AttentionPoolParams.init(rng, d, d)
            _, alpha = fz.attention_pool_with_weights(fz.FusedSequence(Tensor(x)), pool)
            assert abs(alpha.data.sum() - 1.0) <= 1e-12
        passed("4 cbam-contraction-and-attention-stochasticity")


class TestCriterion5Learnability:
    def test_full_model_learns_standard_synthetic(self, acceptance_dataset, full_training):
        _, manifest, records = acceptance_dataset
        result, config, elapsed = full_training

        # the >= 90% bar sits below what raw features alone support
        oracle = nearest_centroid_accuracy(records, manifest.classes)
        assert oracle >= 0.9

        assert len(result.report.epochs) == 50
        assert result.report.epochs[-1]["train_acc"] == 1.0
        assert result.report.final["test_acc"] >= 0.9
        assert elapsed < 300.0, f"training took {elapsed:.0f}s"

        # the loss trends down over the first ten epochs
        assert result.report.epochs[9]["loss_total"] < result.report.epochs[0]["loss_total"]
        passed("5 learnability")


class TestCriterion6RepresentationSeparation:
    def test_intra_class_cosine_exceeds_inter_class(self, full_training):
        result, config, _ = full_training
        assert config.use_supcon
        pooled = result.test_eval.pooled
        labels = np.asarray(result.test_eval.labels)
        z = pooled / np.linalg.norm(pooled, axis=1, keepdims=True)
        sim = z @ z.T
        same = (labels[:, None] == labels[None, :]) & ~np.eye(len(labels), dtype=bool)
        diff = labels[:, None] != labels[None, :]
        assert same.any() and diff.any()
        intra = sim[same].mean()
        inter = sim[diff].mean()
        assert intra > inter, f"intra {intra:.4f} <= inter {inter:.4f}"
        passed("6 representation-separation")


class TestCriterion7AblationGrid:
    def test_sixteen_rows_and_all_on_byte_match(self, acceptance_dataset):
        root, _, _ = acceptance_dataset
        config = ExperimentConfig(dataset_dir=str(root), seed=42, epochs=10).validate()
        start = time.time()
        grid = run_ablation_grid(config)
        elapsed = time.time() - start

        assert len(grid["rows"]) == 16
        seen = {tuple(sorted(row["flags"].items())) for row in grid["rows"]}
        assert len(seen) == 16
        for row in grid["rows"]:
            assert len(row["report"]["epochs"]) == 10

        standalone = run(config)
        all_on = next(row for row in grid["rows"] if all(row["flags"].values()))
        assert report_json_bytes(all_on["report"]) == report_json_bytes(standalone.report.to_dict())
        assert elapsed < 900.0, f"ablation grid took {elapsed:.0f}s"
        passed("7 ablation-harness-fidelity")


class TestCriterion8Determinism:
    def test_repeated_train_invocation_byte_identical(self, acceptance_dataset, tmp_path):
        root, _, _ = acceptance_dataset
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps({"dataset_dir": str(root), "epochs": 5, "seed": 42}))
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert cli_main(["train", "--config", str(config_path), "--out", str(a)]) == 0
        assert cli_main(["train", "--config", str(config_path), "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()
        passed("8 determinism")


class TestCriterion9MetricsOracle:
    def test_fixed_confusion_matrix_values(self):
        cm = ConfusionMatrix(np.array([[3, 1], [2, 4]]))
        assert abs(accuracy(cm) - 0.7) <= 1e-12
        assert abs(macro_f1(cm) - 23 / 33) <= 1e-12
        passed("9 metrics-oracle")
