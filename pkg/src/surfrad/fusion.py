"""View fusion: self-attention encoder over per-view tokens, cross-attention
decoder from the query direction, and the average-pooling ablation path.

The attention is written out explicitly (no library transformer blocks) so
the scaled-dot-product core is directly testable and the permutation
properties follow from the math rather than library internals.
"""

from __future__ import annotations

import torch
from torch import nn

from .encoding import encoding_dim, sinusoidal_encoding
from .features import softplus_activation

__all__ = [
    "scaled_dot_product_attention",
    "MultiHeadAttention",
    "ViewFusionEncoder",
    "AveragePoolFusion",
    "ViewQueryDecoder",
]


def scaled_dot_product_attention(
    q: torch.Tensor, k: torch.Tensor, v: torch.Tensor, n_heads: int
) -> tuple[torch.Tensor, torch.Tensor]:
    """Multi-head attention core on pre-projected Q (B, Lq, D), K (B, Lk, D),
    V (B, Lk, Dv).  Returns (output (B, Lq, Dv), weights (B, heads, Lq, Lk)).
    """
    b, lq, d = q.shape
    lk = k.shape[1]
    dv = v.shape[2]
    if lk == 0:
        raise ValueError("attention needs at least one key")
    if d % n_heads or dv % n_heads:
        raise ValueError("head count must divide both key and value dims")
    hd = d // n_heads
    hv = dv // n_heads
    qh = q.reshape(b, lq, n_heads, hd).transpose(1, 2)
    kh = k.reshape(b, lk, n_heads, hd).transpose(1, 2)
    vh = v.reshape(b, lk, n_heads, hv).transpose(1, 2)
    scores = qh @ kh.transpose(-1, -2) / (hd**0.5)
    weights = torch.softmax(scores, dim=-1)
    out = (weights @ vh).transpose(1, 2).reshape(b, lq, dv)
    return out, weights


class MultiHeadAttention(nn.Module):
    """Projections + attention core + output projection."""

    def __init__(self, q_dim: int, k_dim: int, v_dim: int, model_dim: int, n_heads: int):
        super().__init__()
        if model_dim % n_heads:
            raise ValueError("model_dim must be divisible by n_heads")
        self.w_q = nn.Linear(q_dim, model_dim)
        self.w_k = nn.Linear(k_dim, model_dim)
        self.w_v = nn.Linear(v_dim, model_dim)
        self.w_o = nn.Linear(model_dim, model_dim)
        self.n_heads = n_heads

    def forward(self, q, k, v):
        out, weights = scaled_dot_product_attention(
            self.w_q(q), self.w_k(k), self.w_v(v), self.n_heads
        )
        return self.w_o(out), weights


def _feed_forward(dim: int, hidden: int) -> nn.Sequential:
    return nn.Sequential(nn.Linear(dim, hidden), softplus_activation(), nn.Linear(hidden, dim))


class ViewFusionEncoder(nn.Module):
    """Fuses per-view tokens concat(feature, direction) into one vector.

    One self-attention block with residuals and layer norm, then a mean-pool
    over the view axis.  Everything is per-token or symmetric, so the output
    is invariant to view order.
    """

    def __init__(self, feature_dim: int, model_dim: int = 256, n_heads: int = 4,
                 ff_dim: int = 512):
        super().__init__()
        self.token_proj = nn.Linear(feature_dim + 3, model_dim)
        self.attn = MultiHeadAttention(model_dim, model_dim, model_dim, model_dim, n_heads)
        self.norm1 = nn.LayerNorm(model_dim)
        self.norm2 = nn.LayerNorm(model_dim)
        self.ff = _feed_forward(model_dim, ff_dim)
        self.model_dim = model_dim

    def forward(self, features: torch.Tensor, directions: torch.Tensor) -> torch.Tensor:
        """features (B, n, C), directions (B, n, 3) -> fused (B, model_dim)."""
        if features.shape[1] == 0:
            raise ValueError("need at least one view")
        x = self.token_proj(torch.cat([features, directions], dim=-1))
        attn_out, _ = self.attn(x, x, x)
        x = self.norm1(x + attn_out)
        x = self.norm2(x + self.ff(x))
        return x.mean(dim=1)


class AveragePoolFusion(nn.Module):
    """Ablation path: mean of the raw per-view tokens, then one linear layer."""

    def __init__(self, feature_dim: int, model_dim: int = 256):
        super().__init__()
        self.proj = nn.Linear(feature_dim + 3, model_dim)
        self.model_dim = model_dim

    def forward(self, features: torch.Tensor, directions: torch.Tensor) -> torch.Tensor:
        if features.shape[1] == 0:
            raise ValueError("need at least one view")
        tokens = torch.cat([features, directions], dim=-1)
        return self.proj(tokens.mean(dim=1))


class ViewQueryDecoder(nn.Module):
    """Cross-attention from the query direction to the input views.

    Q comes from the encoded query direction, K from encoded per-view
    directions, V from [embedding, encoded-or-raw pixel] rows.  There is no
    residual from Q, so when all value rows agree the output is independent
    of the query direction.
    """

    def __init__(self, value_dim: int, model_dim: int = 128, n_heads: int = 4,
                 ff_dim: int = 512, dir_bands: int = 4):
        super().__init__()
        dir_dim = encoding_dim(dir_bands, 3)
        self.attn = MultiHeadAttention(dir_dim, dir_dim, value_dim, model_dim, n_heads)
        self.norm1 = nn.LayerNorm(model_dim)
        self.norm2 = nn.LayerNorm(model_dim)
        self.ff = _feed_forward(model_dim, ff_dim)
        self.dir_bands = dir_bands
        self.model_dim = model_dim

    def forward(self, d_q: torch.Tensor, view_dirs: torch.Tensor,
                values: torch.Tensor) -> torch.Tensor:
        """d_q (B, 3), view_dirs (B, n, 3), values (B, n, V) -> e_c (B, model_dim)."""
        if view_dirs.shape[1] == 0:
            raise ValueError("need at least one view")
        q = sinusoidal_encoding(d_q, self.dir_bands).unsqueeze(1)
        k = sinusoidal_encoding(view_dirs, self.dir_bands)
        attn_out, _ = self.attn(q, k, values)
        x = self.norm1(attn_out)
        x = self.norm2(x + self.ff(x))
        return x.squeeze(1)
