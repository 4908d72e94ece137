#!/usr/bin/env python3
"""Geometry of the combined objective: what the contrastive term optimizes.

The contrastive loss pulls same-label embeddings together on the unit
sphere and pushes different labels apart, with the temperature setting
how sharply. The classification branch is a GELU-activated linear head
under cross-entropy; the training loss is their weighted sum.
"""

import numpy as np

from mmsent import losses as ls
from mmsent import tensor as tz
from mmsent.losses import ContrastiveBatch, LossWeights
from mmsent.tensor import Tensor

rng = np.random.default_rng(3)

# --- clustered vs scattered batches ------------------------------------------
def batch_loss(z, labels, tau=0.07):
    z = z / np.linalg.norm(z, axis=1, keepdims=True)
    return ls.supcon_loss(ContrastiveBatch(Tensor(z), labels, temperature=tau)).item()

labels = [0, 0, 0, 1, 1, 1]
centers = np.array([[4.0, 0.0], [-4.0, 0.0]])
clustered = centers[labels] + 0.1 * rng.normal(size=(6, 2))
scattered = rng.normal(size=(6, 2))
print("loss on well-separated clusters:", round(batch_loss(clustered, labels), 4))
print("loss on random scatter:        ", round(batch_loss(scattered, labels), 4))

# --- temperature sharpens gradients ------------------------------------------
for tau in (0.5, 0.07, 0.05):
    t = Tensor(scattered.copy(), requires_grad=True)
    ls.supcon_loss(ContrastiveBatch(ls.normalize_rows(t), labels, temperature=tau)).backward()
    print(f"grad norm at tau={tau}: {np.linalg.norm(t.grad):.3f}")

# --- a few gradient steps actually tighten the clusters -----------------------
z = Tensor(scattered.copy(), requires_grad=True)
for step in range(200):
    z.zero_grad()
    loss = ls.supcon_loss(ContrastiveBatch(ls.normalize_rows(z), labels, temperature=0.1))
    loss.backward()
    z.data -= 0.05 * z.grad
zn = z.data / np.linalg.norm(z.data, axis=1, keepdims=True)
sim = zn @ zn.T
lab = np.asarray(labels)
same = (lab[:, None] == lab[None, :]) & ~np.eye(6, dtype=bool)
print("\nafter 200 plain gradient steps on the contrastive term:")
print("mean intra-class cosine:", round(sim[same].mean(), 4))
print("mean inter-class cosine:", round(sim[lab[:, None] != lab[None, :]].mean(), 4))

# --- the combined objective ----------------------------------------------------
r = Tensor(rng.normal(size=8))
w_head = Tensor(rng.normal(0, 0.3, size=(8, 3)), requires_grad=True)
b_head = Tensor(np.zeros(3), requires_grad=True)
logits = ls.classification_logits(r, w_head, b_head)
ce = ls.cross_entropy(logits, label=2)
supcon = ls.supcon_loss(ContrastiveBatch(ls.normalize_rows(Tensor(clustered)), labels))
total = ls.combined_loss(ce, supcon, LossWeights(sc=1.0, supcon=1.0))
print("\nclassification term:", round(ce.item(), 4))
print("contrastive term:   ", round(supcon.item(), 4))
print("combined objective: ", round(total.item(), 4))
