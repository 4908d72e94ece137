"""Multimodal sentiment fusion at desk scale.

A trainable library built on a from-scratch float64 autodiff core:
token embeddings + double-layer BiLSTM for text, a transformer encoder
over projected image feature maps, concat -> CNN -> CBAM -> transformer
fusion with attention pooling, and a combined supervised-contrastive +
cross-entropy objective optimized with AdamW.
"""

from mmsent.tensor import GradReport, Tensor, grad_check, no_grad

__all__ = ["GradReport", "Tensor", "grad_check", "no_grad"]
__version__ = "0.1.0"
