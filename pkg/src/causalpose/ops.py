"""Differentiable building blocks and the finite-difference gradient checker.

Torch supplies reverse-mode autodiff; every module here is contract-checked
against central finite differences at 64-bit precision (see grad_check), so
the analytic and numeric routes stay independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import InvalidHeads, NonFiniteGradient, ShapeMismatch

_ACTIVATIONS = {
    "gelu": F.gelu,
    "relu": F.relu,
    "none": lambda x: x,
}


def seeded_uniform_init_(module: nn.Module, seed: int) -> None:
    """Fan-in-scaled uniform weights, zero biases, drawn from a local generator.

    Parameters are visited in name order so the draw is independent of any
    other module's construction.
    """
    gen = torch.Generator().manual_seed(seed)
    for name, p in sorted(module.named_parameters(), key=lambda kv: kv[0]):
        with torch.no_grad():
            if p.dim() >= 2:
                bound = 1.0 / (p.shape[-1] ** 0.5)
                p.uniform_(-bound, bound, generator=gen)
            elif name.endswith("bias"):
                p.zero_()
            else:
                p.uniform_(-1.0, 1.0, generator=gen)


class Mlp(nn.Module):
    """Affine chain with the chosen activation between layers."""

    def __init__(self, sizes, activation: str = "gelu"):
        super().__init__()
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation '{activation}'")
        self.activation = activation
        self.layers = nn.ModuleList(
            nn.Linear(a, b) for a, b in zip(sizes[:-1], sizes[1:]))

    @property
    def d_in(self):
        return self.layers[0].in_features

    def forward(self, x):
        if x.shape[-1] != self.d_in:
            raise ShapeMismatch(
                f"expected trailing dim {self.d_in}, got {x.shape[-1]}")
        act = _ACTIVATIONS[self.activation]
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i + 1 < len(self.layers):
                x = act(x)
        return x


class MultiHeadAttention(nn.Module):
    """Scaled dot-product attention with per-head softmax and output projection."""

    def __init__(self, dim: int, heads: int = 4):
        super().__init__()
        if heads < 1 or dim % heads != 0:
            raise InvalidHeads(f"dim {dim} not divisible by heads {heads}")
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.scale = self.head_dim ** -0.5
        self.q_proj = nn.Linear(dim, dim)
        self.k_proj = nn.Linear(dim, dim)
        self.v_proj = nn.Linear(dim, dim)
        self.out_proj = nn.Linear(dim, dim)

    def forward(self, q, k, v, return_weights: bool = False):
        if q.shape[-1] != self.dim or k.shape[-1] != self.dim or v.shape[-1] != self.dim:
            raise ShapeMismatch("channel dim mismatch")
        if k.shape[:-1] != v.shape[:-1]:
            raise ShapeMismatch("k and v must agree on all but the channel dim")
        squeeze = q.dim() == 2
        if squeeze:
            q, k, v = q.unsqueeze(0), k.unsqueeze(0), v.unsqueeze(0)

        B, Nq, _ = q.shape
        Nk = k.shape[1]
        qh = self.q_proj(q).view(B, Nq, self.heads, self.head_dim).transpose(1, 2)
        kh = self.k_proj(k).view(B, Nk, self.heads, self.head_dim).transpose(1, 2)
        vh = self.v_proj(v).view(B, Nk, self.heads, self.head_dim).transpose(1, 2)

        attn = torch.softmax(qh @ kh.transpose(-2, -1) * self.scale, dim=-1)
        out = (attn @ vh).transpose(1, 2).reshape(B, Nq, self.dim)
        out = self.out_proj(out)
        if squeeze:
            out = out.squeeze(0)
            attn = attn.squeeze(0)
        return (out, attn) if return_weights else out


class LayerNorm(nn.LayerNorm):
    """Per-row normalization with the variance floored at 1e-12."""

    def __init__(self, dim: int, eps: float = 1e-12):
        super().__init__(dim, eps=eps)


@dataclass
class InputGradReport:
    shape: tuple
    rel_error: float


@dataclass
class GradCheckReport:
    max_rel_error: float
    passed: bool
    eps: float
    tol: float
    inputs: list

    def __str__(self):
        status = "pass" if self.passed else "FAIL"
        return (f"grad_check {status}: max rel err {self.max_rel_error:.3e} "
                f"(tol {self.tol:.1e}, eps {self.eps:.1e}, "
                f"{len(self.inputs)} tensors)")


def make_scalar_reduction(seed: int):
    """A fixed random linear functional for collapsing op outputs to a scalar.

    The weight is drawn lazily from the output's shape on first use and then
    frozen, so the same functional is applied at every perturbed evaluation.
    """
    cache = {}

    def reduce(y: torch.Tensor) -> torch.Tensor:
        key = (tuple(y.shape), y.dtype)
        if key not in cache:
            gen = torch.Generator().manual_seed(seed)
            cache[key] = torch.randn(y.shape, generator=gen, dtype=y.dtype)
        return (y * cache[key]).sum()

    return reduce


def grad_check(op, inputs, eps: float = 1e-6, tol: float = 1e-4) -> GradCheckReport:
    """Compare autodiff gradients of a scalar-valued op to central differences.

    Only input tensors with requires_grad=True are perturbed and compared;
    all checked tensors must be float64 and contiguous.
    """
    if not (1e-7 <= eps <= 1e-3):
        raise ValueError("eps must lie in [1e-7, 1e-3]")
    inputs = [x for x in inputs]
    checked = [x for x in inputs if torch.is_tensor(x) and x.requires_grad]
    if not checked:
        raise ValueError("no tensor with requires_grad=True to check")
    for x in checked:
        if x.dtype != torch.float64:
            raise ValueError("gradient checks require float64 tensors")

    out = op(*inputs)
    if not torch.is_tensor(out) or out.dim() != 0:
        raise ValueError("op must be scalar-valued (reduce with a linear functional)")
    analytic = torch.autograd.grad(out, checked)
    for g in analytic:
        if not torch.isfinite(g).all():
            raise NonFiniteGradient("analytic gradient contains NaN/Inf")

    details = []
    max_rel = 0.0
    with torch.no_grad():
        for x, g in zip(checked, analytic):
            flat = x.view(-1)
            num = torch.zeros_like(flat)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + eps
                f_plus = float(op(*inputs))
                flat[i] = orig - eps
                f_minus = float(op(*inputs))
                flat[i] = orig
                num[i] = (f_plus - f_minus) / (2.0 * eps)
            if not torch.isfinite(num).all():
                raise NonFiniteGradient("numeric gradient contains NaN/Inf")
            a = g.reshape(-1)
            scale = max(a.abs().max().item(), num.abs().max().item(), 1e-12)
            rel = (a - num).abs().max().item() / scale
            details.append(InputGradReport(shape=tuple(x.shape), rel_error=rel))
            max_rel = max(max_rel, rel)

    return GradCheckReport(max_rel_error=max_rel, passed=max_rel <= tol,
                           eps=eps, tol=tol, inputs=details)
