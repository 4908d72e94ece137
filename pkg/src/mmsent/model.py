"""Wires the text branch, image branch, fusion stage and classifier head together.

A model instance is just a named, ordered bag of parameter tensors plus
the forward composition; the trainer owns mutation, everything here is
functional. Ablation switches rewire the forward pass: without the
BiLSTM the raw embeddings feed fusion, without the CNN or CBAM those
stages drop out of the pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mmsent import fusion as fz
from mmsent import image as im
from mmsent import losses as ls
from mmsent import text as tx
from mmsent.config import ExperimentConfig
from mmsent.tensor import Tensor


@dataclass
class ModelParams:
    embedding: Tensor
    bilstm1: tx.BiLstmLayerParams
    bilstm2: tx.BiLstmLayerParams
    w_m: Tensor
    b_m: Tensor
    image_blocks: list[im.EncoderBlockParams]
    fusion: fz.FusionParams
    pool: fz.AttentionPoolParams
    w_sc: Tensor
    b_sc: Tensor

    @classmethod
    def init(cls, config: ExperimentConfig, rng: np.random.Generator) -> "ModelParams":
        d = config.d_t
        half = d // 2

        def mat(rows, cols):
            bound = np.sqrt(6.0 / (rows + cols))
            return Tensor(rng.uniform(-bound, bound, (rows, cols)), requires_grad=True)

        return cls(
            embedding=Tensor(rng.normal(0.0, 0.1, (config.vocab_size, d)), requires_grad=True),
            bilstm1=tx.BiLstmLayerParams.init(rng, d, half),
            bilstm2=tx.BiLstmLayerParams.init(rng, d, half),
            w_m=mat(config.channels, d),
            b_m=Tensor(np.zeros(d), requires_grad=True),
            image_blocks=[im.EncoderBlockParams.init(rng, d, config.heads) for _ in range(config.image_blocks)],
            fusion=fz.FusionParams.init(rng, d, config.heads, config.fusion_blocks, config.cbam_reduction),
            pool=fz.AttentionPoolParams.init(rng, d, config.d_attn),
            w_sc=mat(d, config.classes),
            b_sc=Tensor(np.zeros(config.classes), requires_grad=True),
        )

    def named_parameters(self) -> dict[str, Tensor]:
        """Stable name -> tensor map; iteration order fixes optimizer state order."""
        out: dict[str, Tensor] = {"embedding": self.embedding}
        for tag, layer in (("bilstm1", self.bilstm1), ("bilstm2", self.bilstm2)):
            for name, t in layer.tensors().items():
                out[f"{tag}.{name}"] = t
        out["w_m"] = self.w_m
        out["b_m"] = self.b_m
        for i, block in enumerate(self.image_blocks):
            for name, t in block.tensors().items():
                out[f"image_block{i}.{name}"] = t
        for name, t in self.fusion.cnn.tensors().items():
            out[f"fusion_cnn.{name}"] = t
        for name, t in self.fusion.cbam.tensors().items():
            out[f"cbam.{name}"] = t
        for i, block in enumerate(self.fusion.blocks):
            for name, t in block.tensors().items():
                out[f"fusion_block{i}.{name}"] = t
        for name, t in self.pool.tensors().items():
            out[f"pool.{name}"] = t
        out["w_sc"] = self.w_sc
        out["b_sc"] = self.b_sc
        return out

    def save(self, path) -> None:
        np.savez(path, **{k: v.data for k, v in self.named_parameters().items()})

    def load(self, path) -> None:
        with np.load(path) as bundle:
            params = self.named_parameters()
            missing = set(params) - set(bundle.files)
            if missing:
                raise ValueError(f"parameter file is missing {sorted(missing)}")
            for name, t in params.items():
                arr = bundle[name]
                if arr.shape != t.shape:
                    raise ValueError(f"parameter {name} has shape {arr.shape}, expected {t.shape}")
                t.data = np.ascontiguousarray(arr, dtype=np.float64)


@dataclass
class SampleForward:
    pooled: fz.PooledRepresentation
    logits: Tensor


def forward_sample(params: ModelParams, token_ids: list[int], image_values: np.ndarray,
                   config: ExperimentConfig) -> SampleForward:
    """Run one multimodal sample through the full pipeline."""
    seq = tx.TokenSequence(ids=list(token_ids), vocab_size=config.vocab_size)
    t = tx.embed_tokens(seq, params.embedding)
    if config.use_bilstm:
        t = tx.double_bilstm(t, params.bilstm1, params.bilstm2)

    feature_map = im.ingest_feature_map(image_values, config.channels, config.height, config.width)
    m1 = im.project_flatten(feature_map, params.w_m, params.b_m)
    m = im.encode_image(m1, params.image_blocks)

    fused = fz.fuse(t, m, params.fusion, use_cnn=config.use_cnn, use_cbam=config.use_cbam)
    pooled = fz.attention_pool(fused, params.pool)
    logits = ls.classification_logits(pooled.vector, params.w_sc, params.b_sc,
                                      activation=config.head_activation)
    return SampleForward(pooled=pooled, logits=logits)
