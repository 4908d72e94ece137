"""Finite-difference verification suites for every differentiable operation.

Each suite builds several random instances of one operation, wraps it in
a random scalar read-out, and compares autodiff gradients against
central differences (eps = 1e-5) via ``grad_check``. The composite
suites (LSTM cell, transformer block, CBAM, pooling, losses, full
model) exercise whole subgraphs, so a wrong rule anywhere surfaces as a
relative-error spike in the table.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from mmsent import fusion as fz
from mmsent import image as im
from mmsent import losses as ls
from mmsent import tensor as tz
from mmsent import text as tx
from mmsent.config import ExperimentConfig
from mmsent.model import ModelParams, forward_sample
from mmsent.tensor import GradReport, Tensor, grad_check

EPS = 1e-5
REL_TOL = 1e-4
INSTANCES = 5


@dataclass
class VerifyRow:
    name: str
    report: GradReport
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.report.max_rel_err < self.tolerance


def _merge(reports: list[GradReport]) -> GradReport:
    return GradReport(
        max_abs_err=max(r.max_abs_err for r in reports),
        max_rel_err=max(r.max_rel_err for r in reports),
        probed_count=sum(r.probed_count for r in reports),
    )


def _readout(shape, rng) -> Tensor:
    """Random constant weights so the scalar objective touches every output."""
    return Tensor(rng.normal(size=shape))


def _leaf(rng, shape, low=None, high=None) -> Tensor:
    if low is not None:
        return Tensor(rng.uniform(low, high, shape), requires_grad=True)
    return Tensor(rng.normal(size=shape), requires_grad=True)


def _run_instances(build: Callable[[np.random.Generator], GradReport], seed: int) -> GradReport:
    reports = []
    for i in range(INSTANCES):
        reports.append(build(np.random.default_rng([seed, i])))
    return _merge(reports)


# --- per-op suites ----------------------------------------------------------


def _suite_matmul(rng):
    a, b = _leaf(rng, (3, 4)), _leaf(rng, (4, 2))
    w = _readout((3, 2), rng)
    return grad_check(lambda a, b: tz.sum_all(tz.mul(tz.matmul(a, b), w)), [a, b], eps=EPS)


def _binary_suite(op):
    def build(rng):
        a, b = _leaf(rng, (4, 3)), _leaf(rng, (4, 3))
        w = _readout((4, 3), rng)
        return grad_check(lambda a, b: tz.sum_all(tz.mul(op(a, b), w)), [a, b], eps=EPS)

    return build


def _unary_suite(op, low=None, high=None):
    def build(rng):
        x = _leaf(rng, (3, 5), low=low, high=high)
        w = _readout((3, 5), rng)
        return grad_check(lambda x: tz.sum_all(tz.mul(op(x), w)), [x], eps=EPS)

    return build


def _suite_scale(rng):
    x = _leaf(rng, (3, 5))
    w = _readout((3, 5), rng)
    return grad_check(lambda x: tz.sum_all(tz.mul(tz.scale(x, 1.7), w)), [x], eps=EPS)


def _suite_softmax(rng):
    x = _leaf(rng, (4, 6))
    w = _readout((4, 6), rng)
    return grad_check(lambda x: tz.sum_all(tz.mul(tz.softmax(x, axis=1), w)), [x], eps=EPS)


def _suite_conv1d(rng):
    x = _leaf(rng, (7, 3))
    k = _leaf(rng, (3, 3, 2))
    b = _leaf(rng, (2,))
    w = _readout((7, 2), rng)
    return grad_check(lambda x, k, b: tz.sum_all(tz.mul(tz.conv1d(x, k, b), w)), [x, k, b], eps=EPS)


def _reduce_suite(kind):
    def build(rng):
        x = _leaf(rng, (5, 4))
        w = _readout((4,), rng)
        return grad_check(lambda x: tz.sum_all(tz.mul(tz.reduce(x, 0, kind), w)), [x], eps=EPS)

    return build


def _suite_layer_norm(rng):
    x, g, b = _leaf(rng, (4, 6)), _leaf(rng, (6,)), _leaf(rng, (6,))
    w = _readout((4, 6), rng)
    return grad_check(lambda x, g, b: tz.sum_all(tz.mul(tz.layer_norm(x, g, b), w)), [x, g, b], eps=EPS)


def _suite_lstm_cell(rng):
    p = tx.LstmParams.init(rng, 4, 4)
    x, h, c = _leaf(rng, (4,)), _leaf(rng, (4,)), _leaf(rng, (4,))
    w1, w2 = _readout((4,), rng), _readout((4,), rng)

    def f(x, h, c, w_x, w_h, b):
        h2, c2 = tx.lstm_cell(x, h, c, p)
        return tz.add(tz.sum_all(tz.mul(h2, w1)), tz.sum_all(tz.mul(c2, w2)))

    return grad_check(f, [x, h, c, p.w_x, p.w_h, p.b], eps=EPS, max_probes=100,
                      rng=np.random.default_rng(7))


def _suite_transformer_block(rng):
    p = im.EncoderBlockParams.init(rng, 8, 2)
    x = _leaf(rng, (5, 8))
    w = _readout((5, 8), rng)
    leaves = [x] + list(p.tensors().values())
    return grad_check(lambda *ts: tz.sum_all(tz.mul(im.transformer_block(x, p), w)),
                      leaves, eps=EPS, max_probes=120, rng=np.random.default_rng(7))


def _suite_cbam(rng):
    p = fz.CbamParams.init(rng, 8, 4)
    x = _leaf(rng, (6, 8))
    w = _readout((6, 8), rng)
    leaves = [x] + list(p.tensors().values())
    return grad_check(lambda *ts: tz.sum_all(tz.mul(fz.cbam(x, p), w)),
                      leaves, eps=EPS, max_probes=120, rng=np.random.default_rng(7))


def _suite_attention_pool(rng):
    p = fz.AttentionPoolParams.init(rng, 8, 6)
    x = _leaf(rng, (5, 8))
    w = _readout((8,), rng)
    leaves = [x] + list(p.tensors().values())

    def f(*ts):
        pooled = fz.attention_pool(fz.FusedSequence(x), p)
        return tz.sum_all(tz.mul(pooled.vector, w))

    return grad_check(f, leaves, eps=EPS, max_probes=120, rng=np.random.default_rng(7))


def _suite_supcon(rng):
    z = _leaf(rng, (6, 5))
    labels = [0, 0, 1, 1, 2, 2]

    def f(z):
        batch = ls.ContrastiveBatch(ls.normalize_rows(z), labels, temperature=0.1)
        return ls.supcon_loss(batch)

    return grad_check(f, [z], eps=EPS)


def _suite_classification(rng):
    r, w, b = _leaf(rng, (6,)), _leaf(rng, (6, 3)), _leaf(rng, (3,))

    def f(r, w, b):
        return ls.cross_entropy(ls.classification_logits(r, w, b), label=1)

    return grad_check(f, [r, w, b], eps=EPS)


def _suite_combined(rng):
    x = _leaf(rng, (4,))
    weights = ls.LossWeights(sc=0.7, supcon=1.3)

    def f(x):
        return ls.combined_loss(tz.sum_all(tz.sigmoid(x)), tz.sum_all(tz.tanh(x)), weights)

    return grad_check(f, [x], eps=EPS)


def _tiny_config() -> ExperimentConfig:
    return ExperimentConfig(d_t=8, heads=2, channels=3, height=2, width=2,
                            image_blocks=1, fusion_blocks=1, cbam_reduction=4,
                            d_attn=8, vocab_size=16, classes=2, n_t_max=8).validate()


def full_model_gradcheck(probes: int = 20, seed: int = 11) -> GradReport:
    """Check the combined training loss against FD on sampled parameters."""
    config = _tiny_config()
    rng = np.random.default_rng(seed)
    params = ModelParams.init(config, rng)
    samples = []
    for label in (0, 0, 1, 1):
        tokens = [tx.CLS_ID] + [int(t) for t in rng.integers(2, config.vocab_size, size=5)]
        image = rng.normal(size=(config.channels, config.height, config.width))
        samples.append((tokens, image, label))

    named = params.named_parameters()
    leaves = list(named.values())

    def f(*ts):
        ce_terms, pooled, labels = [], [], []
        for tokens, image, label in samples:
            out = forward_sample(params, tokens, image, config)
            ce_terms.append(ls.cross_entropy(out.logits, label))
            pooled.append(out.pooled.vector)
            labels.append(label)
        ce = ce_terms[0]
        for t in ce_terms[1:]:
            ce = tz.add(ce, t)
        ce = tz.scale(ce, 1.0 / len(ce_terms))
        z = ls.normalize_rows(tz.stack_rows(pooled))
        supcon = ls.supcon_loss(ls.ContrastiveBatch(z, labels, config.temperature))
        return ls.combined_loss(ce, supcon, ls.LossWeights(1.0, 1.0))

    return grad_check(f, leaves, eps=EPS, max_probes=probes, rng=np.random.default_rng(seed + 1))


SUITES: list[tuple[str, Callable[[], GradReport]]] = [
    ("matmul", lambda: _run_instances(_suite_matmul, 100)),
    ("add", lambda: _run_instances(_binary_suite(tz.add), 101)),
    ("sub", lambda: _run_instances(_binary_suite(tz.sub), 102)),
    ("mul", lambda: _run_instances(_binary_suite(tz.mul), 103)),
    ("scale", lambda: _run_instances(_suite_scale, 104)),
    ("sigmoid", lambda: _run_instances(_unary_suite(tz.sigmoid), 105)),
    ("tanh", lambda: _run_instances(_unary_suite(tz.tanh), 106)),
    ("relu", lambda: _run_instances(_unary_suite(tz.relu), 107)),
    ("gelu", lambda: _run_instances(_unary_suite(tz.gelu), 108)),
    ("exp", lambda: _run_instances(_unary_suite(tz.exp), 109)),
    ("log", lambda: _run_instances(_unary_suite(tz.log, low=0.5, high=2.0), 110)),
    ("softmax", lambda: _run_instances(_suite_softmax, 111)),
    ("conv1d", lambda: _run_instances(_suite_conv1d, 112)),
    ("reduce_mean", lambda: _run_instances(_reduce_suite("mean"), 113)),
    ("reduce_max", lambda: _run_instances(_reduce_suite("max"), 114)),
    ("layer_norm", lambda: _run_instances(_suite_layer_norm, 115)),
    ("lstm_cell", lambda: _run_instances(_suite_lstm_cell, 116)),
    ("transformer_block", lambda: _run_instances(_suite_transformer_block, 117)),
    ("cbam", lambda: _run_instances(_suite_cbam, 118)),
    ("attention_pool", lambda: _run_instances(_suite_attention_pool, 119)),
    ("supcon_loss", lambda: _run_instances(_suite_supcon, 120)),
    ("classification_loss", lambda: _run_instances(_suite_classification, 121)),
    ("combined_loss", lambda: _run_instances(_suite_combined, 122)),
    ("full_model", lambda: full_model_gradcheck()),
]


def run_gradcheck() -> list[VerifyRow]:
    return [VerifyRow(name=name, report=build(), tolerance=REL_TOL) for name, build in SUITES]


def format_table(rows: list[VerifyRow]) -> str:
    lines = [f"{'operation':<22}{'max_rel_err':>14}{'max_abs_err':>14}{'probes':>8}  status"]
    for row in rows:
        status = "PASS" if row.passed else "FAIL"
        lines.append(
            f"{row.name:<22}{row.report.max_rel_err:>14.3e}{row.report.max_abs_err:>14.3e}"
            f"{row.report.probed_count:>8}  {status}"
        )
    return "\n".join(lines)
