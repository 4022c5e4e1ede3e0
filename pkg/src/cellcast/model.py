"""BERT-mini-shaped encoder with a pooled regression head producing one scalar.

The encoder is 4 post-norm transformer layers (hidden 256, 4 heads, GELU
feed-forward) over learned token + position embeddings.  The regression
head average-pools the final (sequence x hidden) grid with a 3x3 kernel
at stride 3, flattens, and maps 2720 -> 512 -> 64 -> 1.

Pad positions are excluded from attention with a -inf score bias and
zeroed before pooling, so predictions are exactly invariant to pad
content.  Because of that, the forward pass only computes the encoder on
the leading non-pad columns of a batch and zero-fills the rest, which is
bit-identical to the full computation (covered by tests).

Everything runs in float64 by default; initialization is driven by an
integer seed through a dedicated generator, so identical seeds give
bit-identical weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from cellcast.losses import LossSpec, batch_loss
from cellcast.prompting import DEFAULT_SEQ_LEN, TokenSequence

INIT_STD = 0.02
LAYER_NORM_EPS = 1e-12


class GradientError(RuntimeError):
    """Loss or gradients went non-finite."""


@dataclass(frozen=True)
class ModelConfig:
    """Architecture shape; defaults follow the BERT-mini convention."""

    vocab_size: int
    layers: int = 4
    hidden: int = 256
    heads: int = 4
    ffn_dim: int = 1024
    max_len: int = DEFAULT_SEQ_LEN
    pool_kernel: int = 3
    pool_stride: int = 3
    head_dims: tuple[int, ...] = (512, 64, 1)

    def __post_init__(self) -> None:
        if self.hidden % self.heads != 0:
            raise ValueError("hidden must divide evenly across heads")
        if self.head_dims[-1] != 1:
            raise ValueError("head_dims must end in 1")
        if min(self.vocab_size, self.layers, self.hidden, self.heads, self.ffn_dim) < 1:
            raise ValueError("all dimensions must be positive")

    @property
    def pooled_rows(self) -> int:
        return (self.max_len - self.pool_kernel) // self.pool_stride + 1

    @property
    def pooled_cols(self) -> int:
        return (self.hidden - self.pool_kernel) // self.pool_stride + 1

    @property
    def pooled_flat(self) -> int:
        return self.pooled_rows * self.pooled_cols


def scaled_dot_attention(
    q: torch.Tensor,
    k: torch.Tensor,
    v: torch.Tensor,
    key_mask: torch.Tensor | None = None,
    scale: float | None = None,
) -> tuple[torch.Tensor, torch.Tensor]:
    """softmax(q k^T / scale + bias) v over the last two dims.

    ``key_mask`` marks real keys (broadcast over leading dims); masked keys
    get a -inf score bias, which requires at least one real key per row.
    Returns (output, attention weights).
    """
    if scale is None:
        scale = math.sqrt(q.shape[-1])
    scores = q @ k.transpose(-2, -1) / scale
    if key_mask is not None:
        scores = scores.masked_fill(~key_mask.bool().unsqueeze(-2), float("-inf"))
    weights = torch.softmax(scores, dim=-1)
    return weights @ v, weights


class MultiHeadSelfAttention(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.heads = cfg.heads
        self.head_dim = cfg.hidden // cfg.heads
        self.query = nn.Linear(cfg.hidden, cfg.hidden)
        self.key = nn.Linear(cfg.hidden, cfg.hidden)
        self.value = nn.Linear(cfg.hidden, cfg.hidden)
        self.output = nn.Linear(cfg.hidden, cfg.hidden)

    def _split(self, x: torch.Tensor) -> torch.Tensor:
        b, t, _ = x.shape
        return x.view(b, t, self.heads, self.head_dim).transpose(1, 2)

    def forward(self, x: torch.Tensor, key_mask: torch.Tensor) -> torch.Tensor:
        b, t, hidden = x.shape
        q, k, v = self._split(self.query(x)), self._split(self.key(x)), self._split(self.value(x))
        ctx, _ = scaled_dot_attention(q, k, v, key_mask=key_mask.unsqueeze(1))
        ctx = ctx.transpose(1, 2).reshape(b, t, hidden)
        return self.output(ctx)


class EncoderLayer(nn.Module):
    """Post-norm block: LN(x + attention(x)) then LN(h + ffn(h))."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.attention = MultiHeadSelfAttention(cfg)
        self.attention_norm = nn.LayerNorm(cfg.hidden, eps=LAYER_NORM_EPS)
        self.ffn_in = nn.Linear(cfg.hidden, cfg.ffn_dim)
        self.ffn_out = nn.Linear(cfg.ffn_dim, cfg.hidden)
        self.ffn_norm = nn.LayerNorm(cfg.hidden, eps=LAYER_NORM_EPS)
        self.activation = nn.GELU()

    def forward(self, x: torch.Tensor, key_mask: torch.Tensor) -> torch.Tensor:
        x = self.attention_norm(x + self.attention(x, key_mask))
        return self.ffn_norm(x + self.ffn_out(self.activation(self.ffn_in(x))))


class PooledRegressionHead(nn.Module):
    """2D average pool over the sequence x hidden grid, then linear stack to 1."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.kernel = cfg.pool_kernel
        self.stride = cfg.pool_stride
        dims = (cfg.pooled_flat,) + tuple(cfg.head_dims)
        self.linears = nn.ModuleList(
            nn.Linear(dims[i], dims[i + 1]) for i in range(len(dims) - 1)
        )
        self.activation = nn.GELU()

    def pool(self, hidden: torch.Tensor) -> torch.Tensor:
        return F.avg_pool2d(hidden.unsqueeze(1), self.kernel, self.stride).squeeze(1)

    def forward(self, hidden: torch.Tensor) -> torch.Tensor:
        x = self.pool(hidden).flatten(start_dim=1)
        for linear in self.linears[:-1]:
            x = self.activation(linear(x))
        return self.linears[-1](x).squeeze(-1)


class LoadForecaster(nn.Module):
    """Encoder + regression head; ``forward`` maps token batches to load scalars."""

    def __init__(self, cfg: ModelConfig, dtype: torch.dtype = torch.float64):
        super().__init__()
        self.cfg = cfg
        self.token_embedding = nn.Embedding(cfg.vocab_size, cfg.hidden)
        self.position_embedding = nn.Embedding(cfg.max_len, cfg.hidden)
        self.layers = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.layers))
        self.head = PooledRegressionHead(cfg)
        # Output calibration: set from training-split target stats so the head
        # works near unit scale; stored with the weights, applied at predict.
        self.register_buffer("out_shift", torch.tensor(0.0))
        self.register_buffer("out_scale", torch.tensor(1.0))
        self.to(dtype)

    @property
    def dtype(self) -> torch.dtype:
        return self.token_embedding.weight.dtype

    def set_output_calibration(self, shift: float, scale: float) -> None:
        if not scale > 0:
            raise ValueError("calibration scale must be > 0")
        self.out_shift.fill_(shift)
        self.out_scale.fill_(scale)

    def _check_ids(self, ids: torch.Tensor) -> None:
        if int(ids.max()) >= self.cfg.vocab_size or int(ids.min()) < 0:
            raise ValueError("token id out of vocabulary range")

    def _encode_cols(self, ids: torch.Tensor, attention_mask: torch.Tensor) -> torch.Tensor:
        x = self.token_embedding(ids) + self.position_embedding.weight[: ids.shape[1]]
        for layer in self.layers:
            x = layer(x, attention_mask)
        return x

    def encode(self, ids: torch.Tensor, attention_mask: torch.Tensor) -> torch.Tensor:
        """Final hidden states for all positions, pad rows included."""
        self._check_ids(ids)
        if ids.shape[1] != self.cfg.max_len:
            raise ValueError(f"expected sequences of length {self.cfg.max_len}")
        return self._encode_cols(ids, attention_mask)

    def forward(self, ids: torch.Tensor, attention_mask: torch.Tensor) -> torch.Tensor:
        self._check_ids(ids)
        b, t = ids.shape
        if t != self.cfg.max_len:
            raise ValueError(f"expected sequences of length {self.cfg.max_len}")
        # All-pad trailing columns contribute exact zeros to the pooled grid,
        # so the encoder only needs to run on the leading real columns.
        length = int(attention_mask.sum(dim=1).max())
        x = self._encode_cols(ids[:, :length], attention_mask[:, :length])
        x = x * attention_mask[:, :length, None].to(x.dtype)
        if length < t:
            x = F.pad(x, (0, 0, 0, t - length))
        z = self.head(x)
        return self.out_shift + self.out_scale * z


def init_model(
    cfg: ModelConfig, seed: int, dtype: torch.dtype = torch.float64
) -> LoadForecaster:
    """Deterministic initialization: N(0, 0.02) weights, zero biases, unit LN gains."""
    model = LoadForecaster(cfg, dtype=dtype)
    generator = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for module in model.modules():
            if isinstance(module, (nn.Linear, nn.Embedding)):
                module.weight.normal_(0.0, INIT_STD, generator=generator)
                if getattr(module, "bias", None) is not None:
                    module.bias.zero_()
            elif isinstance(module, nn.LayerNorm):
                module.weight.fill_(1.0)
                module.bias.zero_()
    return model


def stack_sequences(
    sequences: Sequence[TokenSequence], dtype: torch.dtype = torch.float64
) -> tuple[torch.Tensor, torch.Tensor]:
    """Batch TokenSequences into (ids, attention_mask) tensors."""
    ids = torch.from_numpy(np.stack([s.ids for s in sequences]))
    mask = torch.from_numpy(np.stack([s.attention_mask for s in sequences]))
    return ids, mask


def predict(model: LoadForecaster, sequences: Sequence[TokenSequence]) -> np.ndarray:
    """Deterministic scalar predictions for a batch of token sequences."""
    ids, mask = stack_sequences(sequences)
    with torch.no_grad():
        out = model(ids, mask)
    return out.numpy()


def gradients(
    model: LoadForecaster,
    sequences: Sequence[TokenSequence],
    targets: Sequence[float],
    spec: LossSpec,
) -> dict[str, torch.Tensor]:
    """Exact reverse-mode gradients of the mean batch loss for every parameter."""
    ids, mask = stack_sequences(sequences)
    target = torch.as_tensor(list(targets), dtype=model.dtype)
    pred = model(ids, mask)
    loss = batch_loss(pred, target, spec)
    if not torch.isfinite(loss):
        raise GradientError(f"non-finite loss {loss.item()!r} over batch of {len(sequences)}")
    names, params = zip(*[(n, p) for n, p in model.named_parameters()])
    grads = torch.autograd.grad(loss, params)
    for name, grad in zip(names, grads):
        if not torch.all(torch.isfinite(grad)):
            raise GradientError(f"non-finite gradient in {name}")
    return dict(zip(names, grads))
