#!/usr/bin/env python3
"""The two unimodal branches: token BiLSTM and image-token transformer.

Text: a token-id sequence (position 0 reserved for the class token)
passes through a trainable embedding table and two width-preserving
bidirectional LSTM layers. Image: a (channels, h, w) feature map is
projected per spatial position to the text width, tagged with
sinusoidal positions, and contextualized by a small transformer stack.
"""

import numpy as np

from mmsent import image as im
from mmsent import text as tx
from mmsent.tensor import Tensor

rng = np.random.default_rng(1)
D = 32

# --- text branch -------------------------------------------------------------
table = Tensor(rng.normal(0, 0.1, size=(256, D)), requires_grad=True)
seq = tx.TokenSequence(ids=[tx.CLS_ID, 17, 42, 42, 99, 5], vocab_size=256)
embedded = tx.embed_tokens(seq, table)
print("embedded tokens:", embedded.shape)

layer1 = tx.BiLstmLayerParams.init(rng, D, D // 2)
layer2 = tx.BiLstmLayerParams.init(rng, D, D // 2)
text_features = tx.double_bilstm(embedded, layer1, layer2)
print("text features:", text_features.shape, "(width preserved by h = d/2 per direction)")

# hidden states stay bounded: every coordinate passed through o * tanh(c)
print("max |h|:", float(np.max(np.abs(text_features.data))))

# --- image branch -------------------------------------------------------------
fmap = im.ingest_feature_map(rng.normal(size=(8, 4, 4)), 8, 4, 4)
w_m = Tensor(rng.normal(0, 0.2, size=(8, D)), requires_grad=True)
b_m = Tensor(np.zeros(D), requires_grad=True)
tokens = im.project_flatten(fmap, w_m, b_m)
print("\nimage tokens:", tokens.shape, "(one per spatial position, row-major)")

blocks = [im.EncoderBlockParams.init(rng, D, heads=4) for _ in range(2)]
encoded = im.encode_image(tokens, blocks)
print("encoded image tokens:", encoded.shape)

# attention rows are probability vectors
_, attns = im.multi_head_attention(tokens, blocks[0])
sums = attns[0].data.sum(axis=1)
print("first-head attention row sums:", sums.min(), "...", sums.max())

# without positional encodings the encoder is permutation-equivariant
perm = rng.permutation(16)
plain = im.encode_image(tokens, blocks, positional=False).data
shuffled = im.encode_image(Tensor(tokens.data[perm]), blocks, positional=False).data
print("permutation equivariance gap (no positions):", float(np.max(np.abs(shuffled - plain[perm]))))
