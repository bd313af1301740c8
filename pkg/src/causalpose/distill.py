"""Frozen teacher embeddings and the residual distillation head.

The teacher is a deterministic, pose-invariant shape descriptor behind a
small frozen random projection; it stands in for a pretrained point-cloud
encoder and can be swapped for one without touching the head or the loss.
"""

from __future__ import annotations

import hashlib

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ShapeMismatch, TooFewPoints

RADIAL_BINS = 16
HEIGHT_BINS = 8
DESCRIPTOR_DIM = 3 + 1 + RADIAL_BINS + HEIGHT_BINS + 1


def _soft_histogram(values: np.ndarray, bins: int) -> np.ndarray:
    """Hat-kernel histogram of values in [0, 1], normalized to sum 1."""
    pos = np.clip(values, 0.0, 1.0) * (bins - 1)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, bins - 1)
    w = pos - lo
    hist = np.zeros(bins)
    np.add.at(hist, lo, 1.0 - w)
    np.add.at(hist, hi, w)
    return hist / max(len(values), 1)


class MockTeacher:
    """Deterministic pose-invariant encoder mapping clouds to C3-dim embeddings.

    Descriptor: sorted covariance eigenvalues (shape ratios + log size), a
    radial-distance histogram about the centroid, an absolute-height
    histogram along the best-separated covariance eigenvector, and the
    magnitude of the height skewness; all pieces are invariant to rigid
    rotation + translation in exact arithmetic.
    """

    def __init__(self, embed_dim: int = 64, seed: int = 7001):
        self.embed_dim = embed_dim
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.projection = rng.standard_normal((embed_dim, DESCRIPTOR_DIM))
        self.projection /= np.sqrt(DESCRIPTOR_DIM)

    def checksum(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.projection).tobytes()).hexdigest()

    def descriptor(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise TooFewPoints("points must be N x 3")
        n = pts.shape[0]
        if n < 16:
            raise TooFewPoints(f"need at least 16 points, got {n}")
        centered = pts - pts.mean(axis=0)
        cov = centered.T @ centered / n
        evals, evecs = np.linalg.eigh(cov)      # ascending
        order = np.argsort(evals)[::-1]
        evals = np.maximum(evals[order], 0.0)
        evecs = evecs[:, order]
        total = evals.sum() + 1e-12
        shape_ratios = evals / total
        log_size = np.log(total)

        # height axis: the eigenvector whose eigenvalue is best separated,
        # so rotational near-degeneracy (solids of revolution) stays stable
        gaps = [min(abs(evals[i] - evals[j]) for j in range(3) if j != i)
                for i in range(3)]
        axis = evecs[:, int(np.argmax(gaps))]

        radii = np.linalg.norm(centered, axis=1)
        rad_hist = _soft_histogram(radii / (radii.max() + 1e-12), RADIAL_BINS)
        heights = centered @ axis
        abs_h = np.abs(heights)
        h_hist = _soft_histogram(abs_h / (abs_h.max() + 1e-12), HEIGHT_BINS)
        m2 = (heights ** 2).mean()
        m3 = (heights ** 3).mean()
        skew = abs(m3) / (m2 ** 1.5 + 1e-12)

        return np.concatenate([
            shape_ratios, [log_size],
            rad_hist - 1.0 / RADIAL_BINS,
            h_hist - 1.0 / HEIGHT_BINS,
            [skew],
        ])

    def encode(self, points: np.ndarray, category: int = -1) -> np.ndarray:
        """Embed a cloud; the category id is accepted for interface parity
        with pretrained encoders but unused by the mock."""
        return self.projection @ self.descriptor(points)

    def encode_batch(self, clouds) -> np.ndarray:
        return np.stack([self.encode(c) for c in clouds])


def teacher_to_queue_projection(embed_dim: int, queue_dim: int, seed: int) -> np.ndarray:
    """Frozen seeded linear map from teacher embeddings to queue feature width."""
    rng = np.random.default_rng(seed)
    return rng.standard_normal((queue_dim, embed_dim)) / np.sqrt(embed_dim)


def pool_point_features(F_P: torch.Tensor) -> torch.Tensor:
    """Arithmetic mean over the point axis (second-to-last dim)."""
    return F_P.mean(dim=-2)


class ResidualHead(nn.Module):
    """Residual adapter: x + mu * K2(gelu(K1(x))), with K2 zero-initialized.

    At initialization the head is bit-exactly the identity, so distillation
    pressure ramps in from zero instead of perturbing fresh features.
    """

    def __init__(self, dim: int, mu: float = 0.1):
        super().__init__()
        self.mu = mu
        self.K1 = nn.Linear(dim, dim)
        self.K2 = nn.Linear(dim, dim)
        self.zero_init_K2()

    def zero_init_K2(self):
        with torch.no_grad():
            self.K2.weight.zero_()
            self.K2.bias.zero_()

    def forward(self, x):
        return x + self.mu * self.K2(F.gelu(self.K1(x)))


class KDHead(nn.Module):
    """Residual adapter plus the learnable embedding layer to teacher width."""

    def __init__(self, dim: int, teacher_dim: int, mu: float = 0.1):
        super().__init__()
        self.residual = ResidualHead(dim, mu=mu)
        self.psi = nn.Linear(dim, teacher_dim)

    def forward(self, pooled):
        return self.psi(self.residual(pooled))


def kd_loss(head_out: torch.Tensor, teacher: torch.Tensor,
            psi: nn.Module, squared: bool = False) -> torch.Tensor:
    """Batch-mean L2 distance between teacher embeddings and projected features.

    head_out: B x C1 adapter outputs; teacher: B x C3 targets; psi maps
    C1 -> C3.  squared=True uses the squared norm (sensitivity variant).
    """
    if head_out.shape[0] != teacher.shape[0]:
        raise ShapeMismatch("batch sizes differ")
    diff = teacher - psi(head_out)
    if diff.dim() != 2:
        raise ShapeMismatch("expected B x C tensors")
    sq = (diff ** 2).sum(dim=1)
    per_sample = sq if squared else torch.sqrt(sq + 1e-24)
    return per_sample.mean()
