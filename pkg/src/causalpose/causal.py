"""Dynamic cross-sample feature queue and the front-door attention block.

The queue holds one row of detached features per (category, slot); sampled
rows stand in for the cross-sample term of the adjustment, and the block
combines self-attention over keypoint features with cross-attention over the
sampled rows: out = LN(SA(F_kpt) + CA(F_kpt, F_samp)), optionally fused back
into F_kpt through a per-keypoint sigmoid gate.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn

from .errors import InsufficientFeatures, QueueNotReady, UnknownCategory
from .ops import LayerNorm, MultiHeadAttention

STRATEGIES = ("queue_fifo", "queue_similarity", "queue_none",
              "membank_similarity", "membank_none")


class ConfounderQueue:
    """N_c x N_q x C feature store with per-category write cursors.

    Stored rows are plain data (never part of any autograd graph); updates
    overwrite single rows according to the configured strategy.
    """

    def __init__(self, storage: torch.Tensor, strategy: str = "queue_fifo"):
        if strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy '{strategy}'")
        if storage.dim() != 3:
            raise ValueError("storage must be N_c x N_q x C")
        self.storage = storage.detach().clone()
        self.strategy = strategy
        self.n_categories, self.queue_len, self.dim = storage.shape
        self.cursor = np.zeros(self.n_categories, dtype=np.int64)
        self.fill_count = np.full(self.n_categories, self.queue_len, dtype=np.int64)

    def state_dict(self) -> dict:
        return {
            "storage": self.storage.numpy().copy(),
            "cursor": self.cursor.copy(),
            "fill_count": self.fill_count.copy(),
            "strategy": self.strategy,
        }

    @classmethod
    def from_state_dict(cls, state: dict) -> "ConfounderQueue":
        q = cls(torch.from_numpy(np.ascontiguousarray(state["storage"])),
                strategy=state["strategy"])
        q.cursor = np.asarray(state["cursor"], dtype=np.int64).copy()
        q.fill_count = np.asarray(state["fill_count"], dtype=np.int64).copy()
        return q


def queue_init(n_categories: int, queue_len: int, dim: int,
               mode: str = "teacher", features=None, seed: int = 0,
               strategy: str = "queue_fifo",
               dtype: torch.dtype = torch.float32) -> ConfounderQueue:
    """Build a filled queue, either from per-category teacher features or randomly.

    Teacher mode needs >= queue_len feature rows per category; when more are
    supplied, a seeded subset without replacement is stored.
    """
    rng = np.random.default_rng(seed)
    if mode == "teacher":
        if features is None or len(features) != n_categories:
            raise InsufficientFeatures("teacher mode needs features for every category")
        rows = []
        for c, feats in enumerate(features):
            feats = np.asarray(feats, dtype=np.float64)
            if feats.ndim != 2 or feats.shape[1] != dim:
                raise InsufficientFeatures(f"category {c}: features must be M x {dim}")
            if feats.shape[0] < queue_len:
                raise InsufficientFeatures(
                    f"category {c}: {feats.shape[0]} features < queue length {queue_len}")
            if feats.shape[0] > queue_len:
                idx = rng.choice(feats.shape[0], size=queue_len, replace=False)
                feats = feats[idx]
            rows.append(feats)
        storage = np.stack(rows)
    elif mode == "random":
        storage = rng.standard_normal((n_categories, queue_len, dim))
    else:
        raise ValueError(f"unknown init mode '{mode}'")
    return ConfounderQueue(torch.from_numpy(storage).to(dtype), strategy=strategy)


def queue_sample(q: ConfounderQueue, n_samples: int,
                 selector: str = "random", seed: int = 0) -> torch.Tensor:
    """Draw n_samples stored rows (all categories pooled), detached.

    random: uniform without replacement over all filled slots.
    kmeans: 20 Lloyd iterations with seeded init; returns the stored row
    nearest each centroid.
    """
    if np.any(q.fill_count < q.queue_len):
        raise QueueNotReady("queue has unfilled slots")
    total = q.n_categories * q.queue_len
    if not (1 <= n_samples <= total):
        raise ValueError("n_samples must be in [1, N_c * N_q]")
    flat = q.storage.reshape(total, q.dim)
    rng = np.random.default_rng(seed)

    if selector == "random":
        idx = rng.choice(total, size=n_samples, replace=False)
        return flat[torch.from_numpy(idx)].clone()
    if selector != "kmeans":
        raise ValueError(f"unknown selector '{selector}'")

    pts = flat.numpy().astype(np.float64)
    centroids = pts[rng.choice(total, size=n_samples, replace=False)].copy()
    for _ in range(20):
        d2 = ((pts[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        assign = d2.argmin(axis=1)
        for j in range(n_samples):
            members = pts[assign == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
    d2 = ((pts[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    picked = d2.argmin(axis=0)
    return flat[torch.from_numpy(picked)].clone()


def queue_update(q: ConfounderQueue, batch) -> None:
    """Write a batch of (category, feature-vector) pairs into the store.

    queue_fifo overwrites the cursor slot (ring buffer); *_similarity
    overwrites the stored row with the highest cosine similarity to the
    incoming vector within its category; *_none leaves the store untouched.
    """
    if q.strategy in ("queue_none", "membank_none"):
        return
    for cat, vec in batch:
        if not (0 <= int(cat) < q.n_categories):
            raise UnknownCategory(f"category {cat} outside [0, {q.n_categories})")
        cat = int(cat)
        if torch.is_tensor(vec):
            vec = vec.detach().to(q.storage.dtype)
        else:
            vec = torch.as_tensor(np.asarray(vec), dtype=q.storage.dtype)
        if vec.shape != (q.dim,):
            raise ValueError(f"feature vector must have shape ({q.dim},)")
        if q.strategy == "queue_fifo":
            slot = int(q.cursor[cat])
            q.storage[cat, slot] = vec
            q.cursor[cat] = (slot + 1) % q.queue_len
        else:  # queue_similarity / membank_similarity
            rows = q.storage[cat].to(torch.float64)
            v = vec.to(torch.float64)
            sims = (rows @ v) / (rows.norm(dim=1) * v.norm() + 1e-12)
            q.storage[cat, int(sims.argmax())] = vec


def expectation_query(g: torch.Tensor, bank: torch.Tensor) -> torch.Tensor:
    """Softmax-weighted sum of bank rows, queried by g.

    Estimates the expectation over the bank: softmax(g @ bank^T) @ bank.
    Accepts a single query (C,) or a stack of queries (..., C).
    """
    if bank.dim() != 2 or g.shape[-1] != bank.shape[1]:
        raise ValueError("bank must be M x C with C matching the query")
    scores = g @ bank.T
    return torch.softmax(scores, dim=-1) @ bank


def adaptive_fuse(F_f: torch.Tensor, F_kpt: torch.Tensor,
                  W_f: torch.Tensor, W_k: torch.Tensor,
                  bypass: bool = False) -> torch.Tensor:
    """Per-row sigmoid gate between enhanced and original keypoint features.

    w = sigmoid(F_f @ W_f + F_kpt @ W_k), broadcast over channels;
    out = w * F_f + (1 - w) * F_kpt.  With bypass=True returns F_f unchanged
    (the no-fusion ablation).
    """
    if bypass:
        return F_f
    if F_f.shape != F_kpt.shape:
        raise ValueError("F_f and F_kpt must have equal shapes")
    w = torch.sigmoid(F_f @ W_f + F_kpt @ W_k)
    return w * F_f + (1.0 - w) * F_kpt


class FrontDoorBlock(nn.Module):
    """Self-attention over keypoints plus cross-attention over sampled rows.

    The two query generators are folded into the attention query projections;
    sampled confounder rows enter only as keys/values and are expected to be
    detached by the caller.
    """

    def __init__(self, dim: int, heads: int = 4):
        super().__init__()
        self.self_attn = MultiHeadAttention(dim, heads)
        self.cross_attn = MultiHeadAttention(dim, heads)
        self.norm = LayerNorm(dim)

    def forward(self, F_kpt: torch.Tensor, F_samp: torch.Tensor) -> torch.Tensor:
        if F_samp.dim() == 2 and F_kpt.dim() == 3:
            F_samp = F_samp.unsqueeze(0).expand(F_kpt.shape[0], -1, -1)
        sa = self.self_attn(F_kpt, F_kpt, F_kpt)
        ca = self.cross_attn(F_kpt, F_samp, F_samp)
        return self.norm(sa + ca)


class AdaptiveFusion(nn.Module):
    """Learnable gate weights for adaptive_fuse (one C x 1 map per stream)."""

    def __init__(self, dim: int):
        super().__init__()
        self.W_f = nn.Parameter(torch.zeros(dim, 1))
        self.W_k = nn.Parameter(torch.zeros(dim, 1))

    def forward(self, F_f, F_kpt, bypass: bool = False):
        return adaptive_fuse(F_f, F_kpt, self.W_f, self.W_k, bypass=bypass)
