"""Sinusoidal positional encodings for coordinates, colors and directions."""

from __future__ import annotations

import torch

__all__ = ["sinusoidal_encoding", "colored_encoding", "encoding_dim", "normalize_points"]


def encoding_dim(n_bands: int, n_components: int) -> int:
    """Output width of ``sinusoidal_encoding`` (no passthrough term)."""
    return 2 * n_bands * n_components


def sinusoidal_encoding(x: torch.Tensor, n_bands: int) -> torch.Tensor:
    """Encode each component of ``x`` with ``n_bands`` octave frequencies.

    Layout is component-major: for component i and band k the pair
    ``sin(2^k pi x_i), cos(2^k pi x_i)`` appears at offset ``(i * n_bands + k) * 2``.
    Output shape is (..., 2 * n_bands * D) for input (..., D); the raw input is
    not appended.
    """
    if n_bands < 1:
        raise ValueError("n_bands must be >= 1")
    freqs = (2.0 ** torch.arange(n_bands, dtype=x.dtype, device=x.device)) * torch.pi
    # (..., D, L)
    phase = x[..., :, None] * freqs
    enc = torch.stack([torch.sin(phase), torch.cos(phase)], dim=-1)
    return enc.reshape(*x.shape[:-1], 2 * n_bands * x.shape[-1])


def colored_encoding(p: torch.Tensor, n_bands: int) -> torch.Tensor:
    """Sinusoidal encoding of RGB values; components must lie in [0, 1]."""
    if p.numel() and (p.min() < 0.0 or p.max() > 1.0):
        raise ValueError("color components must lie in [0, 1]")
    return sinusoidal_encoding(p, n_bands)


def normalize_points(points: torch.Tensor, bounds: torch.Tensor) -> torch.Tensor:
    """Map world points into [-1, 1]^3 using the scene's axis-aligned bounds."""
    lo = bounds[0]
    hi = bounds[1]
    return (points - lo) / (hi - lo) * 2.0 - 1.0
