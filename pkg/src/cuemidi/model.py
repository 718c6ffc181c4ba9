"""Decoder-only transformer over the token alphabet, with conditioning.

Architecture: pre-norm blocks with relative self-attention (learned relative
position embeddings folded into the attention logits via the skewing trick),
ReLU feed-forward, and a linear output head.

Conditioning enters in two independent ways:

* Emotion (valence/arousal), one of four variants:
  - vanilla: ignored entirely;
  - discrete_token: each axis is quantized to 5 bins and prepended to the
    sequence as a learned control embedding;
  - continuous_token: each axis is projected by its own linear layer and
    prepended as a condition vector;
  - continuous_concat: both axes pass through one linear layer and the
    resulting vector is concatenated feature-wise with every token embedding.
  A missing axis uses a learned NO_VALENCE / NO_AROUSAL embedding; at the
  tensor level "missing" is spelled NaN.

* Boundary offsets: a small feed-forward net encodes each token's
  offset-to-next-boundary (normalized by max_offset_s) into half the feature
  width; the other half is the learned positional encoding.  Without boundary
  conditioning the positional encoding is repeated to fill the full width.
"""

from __future__ import annotations

import copy
import json
import math
import random
import struct
from dataclasses import asdict, dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .errors import (CheckpointError, NonFiniteActivation, NonFiniteGradient,
                     ShapeMismatch)
from .tokenizer import VOCAB

VARIANTS = ("vanilla", "discrete_token", "continuous_token", "continuous_concat")

_NO_CONDITION_BIN = 5  # bins 0..4 are the quantized values, 5 means absent


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters; defaults are the toy scale used throughout the tests.

    Paper-scale reference: 11 layers, 8 heads, d_model 512, context 1216.
    """

    vocab_size: int = VOCAB.size
    layers: int = 2
    heads: int = 2
    d_model: int = 32
    ffn_dim: int = 64
    max_seq_len: int = 1216
    variant: str = "vanilla"
    boundary_conditioning: bool = False
    condition_dim: int = 0  # continuous_concat only; 0 means d_model // 4
    chord_loss_weight: float = 10.0
    dropout_rate: float = 0.0
    max_offset_s: float = 8.0
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.d_model % self.heads:
            raise ValueError("d_model must be divisible by heads")
        if self.d_model % 2:
            raise ValueError("d_model must be even (positional split)")
        if self.variant == "continuous_concat":
            cdim = self.condition_dim or self.d_model // 4
            if not 0 < cdim < self.d_model:
                raise ValueError("condition_dim must be in (0, d_model)")
            object.__setattr__(self, "condition_dim", cdim)
        else:
            object.__setattr__(self, "condition_dim", 0)
        if self.max_offset_s <= 0:
            raise ValueError("max_offset_s must be positive")

    @property
    def token_dim(self) -> int:
        return self.d_model - self.condition_dim

    @property
    def n_prepended(self) -> int:
        return 2 if self.variant in ("discrete_token", "continuous_token") else 0

    @property
    def max_tokens(self) -> int:
        return self.max_seq_len - self.n_prepended

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)

    @classmethod
    def toy(cls, **overrides) -> "ModelConfig":
        return cls(**overrides)

    @classmethod
    def paper_scale(cls, **overrides) -> "ModelConfig":
        base = dict(layers=11, heads=8, d_model=512, ffn_dim=2048, max_seq_len=1216)
        base.update(overrides)
        return cls(**base)


class RelativeSelfAttention(nn.Module):
    """Multi-head self-attention with learned relative position embeddings.

    The relative contribution q_i . E[distance i-j] is computed for all pairs
    with one matmul against the last S rows of E and rearranged with the
    skewing trick; E covers distances 0 .. max_len-1 (past only).
    """

    def __init__(self, d_model: int, heads: int, max_len: int, dropout: float):
        super().__init__()
        self.heads = heads
        self.head_dim = d_model // heads
        self.q_proj = nn.Linear(d_model, d_model)
        self.k_proj = nn.Linear(d_model, d_model)
        self.v_proj = nn.Linear(d_model, d_model)
        self.out_proj = nn.Linear(d_model, d_model)
        self.rel_embedding = nn.Parameter(torch.zeros(max_len, self.head_dim))
        self.dropout = nn.Dropout(dropout)

    @staticmethod
    def _skew(rel: torch.Tensor) -> torch.Tensor:
        # (B,H,S,S) where rel[..., i, m] = q_i . E_window[m]  ->  aligned so
        # that out[..., i, j] = q_i . E[max_len-1-(i-j)] for j <= i.
        b, h, s, _ = rel.shape
        rel = F.pad(rel, (1, 0))
        rel = rel.reshape(b, h, s + 1, s)
        return rel[:, :, 1:, :]

    def forward(self, x: torch.Tensor, mask: torch.Tensor):
        b, s, d = x.shape
        q = self.q_proj(x).view(b, s, self.heads, self.head_dim).transpose(1, 2)
        k = self.k_proj(x).view(b, s, self.heads, self.head_dim).transpose(1, 2)
        v = self.v_proj(x).view(b, s, self.heads, self.head_dim).transpose(1, 2)

        content = torch.matmul(q, k.transpose(-2, -1))
        window = self.rel_embedding[self.rel_embedding.shape[0] - s:]
        rel = self._skew(torch.einsum("bhid,md->bhim", q, window))
        scores = (content + rel) / math.sqrt(self.head_dim) + mask
        weights = torch.softmax(scores, dim=-1)
        out = torch.matmul(self.dropout(weights), v)
        out = out.transpose(1, 2).reshape(b, s, d)
        return self.out_proj(out), weights


class Block(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.attn_norm = nn.LayerNorm(cfg.d_model)
        self.attn = RelativeSelfAttention(cfg.d_model, cfg.heads, cfg.max_seq_len,
                                          cfg.dropout_rate)
        self.ffn_norm = nn.LayerNorm(cfg.d_model)
        self.ffn = nn.Sequential(
            nn.Linear(cfg.d_model, cfg.ffn_dim),
            nn.ReLU(),
            nn.Linear(cfg.ffn_dim, cfg.d_model),
        )
        self.dropout = nn.Dropout(cfg.dropout_rate)

    def forward(self, x: torch.Tensor, mask: torch.Tensor, collect: list | None = None):
        attn_out, weights = self.attn(self.attn_norm(x), mask)
        if collect is not None:
            collect.append(weights)
        x = x + self.dropout(attn_out)
        x = x + self.dropout(self.ffn(self.ffn_norm(x)))
        return x


def _as_condition_tensor(value, batch: int, dtype, device) -> torch.Tensor:
    """None / float / tensor -> (B,) tensor where NaN means absent."""
    if value is None:
        return torch.full((batch,), math.nan, dtype=dtype, device=device)
    if isinstance(value, (int, float)):
        return torch.full((batch,), float(value), dtype=dtype, device=device)
    t = value.to(dtype=dtype, device=device)
    if t.dim() == 0:
        t = t.expand(batch).clone()
    if t.shape != (batch,):
        raise ShapeMismatch(f"condition shape {tuple(t.shape)} != ({batch},)")
    return t


def _bin_ids(values: torch.Tensor) -> torch.Tensor:
    """Vectorized 5-bin quantization; NaN maps to the "absent" embedding id."""
    absent = torch.isnan(values)
    safe = torch.where(absent, torch.zeros_like(values), values)
    idx = ((safe > -0.6).long() + (safe > -0.2).long()
           + (safe > 0.2).long() + (safe > 0.6).long())
    return torch.where(absent, torch.full_like(idx, _NO_CONDITION_BIN), idx)


class ConditionalMusicTransformer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.token_embedding = nn.Embedding(cfg.vocab_size, cfg.token_dim)
        # Learned positional encodings over half the feature width; the other
        # half is boundary-offset features, or a repeat when they are off.
        self.positional = nn.Parameter(torch.zeros(cfg.max_seq_len, cfg.d_model // 2))
        if cfg.boundary_conditioning:
            half = cfg.d_model // 2
            self.boundary_ffn = nn.Sequential(
                nn.Linear(1, half), nn.Tanh(), nn.Linear(half, half))
        if cfg.variant == "discrete_token":
            self.valence_bins = nn.Embedding(_NO_CONDITION_BIN + 1, cfg.d_model)
            self.arousal_bins = nn.Embedding(_NO_CONDITION_BIN + 1, cfg.d_model)
        elif cfg.variant == "continuous_token":
            self.valence_proj = nn.Linear(1, cfg.d_model)
            self.arousal_proj = nn.Linear(1, cfg.d_model)
            self.no_valence = nn.Parameter(torch.zeros(cfg.d_model))
            self.no_arousal = nn.Parameter(torch.zeros(cfg.d_model))
        elif cfg.variant == "continuous_concat":
            self.condition_proj = nn.Linear(2, cfg.condition_dim)
            self.no_valence = nn.Parameter(torch.zeros(cfg.condition_dim))
            self.no_arousal = nn.Parameter(torch.zeros(cfg.condition_dim))
        self.input_dropout = nn.Dropout(cfg.dropout_rate)
        self.blocks = nn.ModuleList(Block(cfg) for _ in range(cfg.layers))
        self.final_norm = nn.LayerNorm(cfg.d_model)
        self.head = nn.Linear(cfg.d_model, cfg.vocab_size)
        self._init_parameters(cfg.seed)

    def _init_parameters(self, seed: int):
        g = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for name, p in self.named_parameters():
                if "norm" in name:
                    p.fill_(1.0 if name.endswith("weight") else 0.0)
                elif name.endswith("bias"):
                    p.zero_()
                else:
                    p.normal_(0.0, 0.02, generator=g)

    def _condition_vectors(self, valence, arousal, batch, dtype, device):
        """Per-variant condition vectors; (B, 2, d) to prepend or (B, cdim)."""
        cfg = self.cfg
        v = _as_condition_tensor(valence, batch, dtype, device)
        a = _as_condition_tensor(arousal, batch, dtype, device)
        if cfg.variant == "discrete_token":
            return torch.stack([self.valence_bins(_bin_ids(v)),
                                self.arousal_bins(_bin_ids(a))], dim=1)
        if cfg.variant == "continuous_token":
            absent_v, absent_a = torch.isnan(v), torch.isnan(a)
            v_safe = torch.where(absent_v, torch.zeros_like(v), v)
            a_safe = torch.where(absent_a, torch.zeros_like(a), a)
            v_vec = torch.where(absent_v[:, None], self.no_valence.expand(batch, -1),
                                self.valence_proj(v_safe[:, None]))
            a_vec = torch.where(absent_a[:, None], self.no_arousal.expand(batch, -1),
                                self.arousal_proj(a_safe[:, None]))
            return torch.stack([v_vec, a_vec], dim=1)
        if cfg.variant == "continuous_concat":
            absent_v, absent_a = torch.isnan(v), torch.isnan(a)
            v_safe = torch.where(absent_v, torch.zeros_like(v), v)
            a_safe = torch.where(absent_a, torch.zeros_like(a), a)
            weight = self.condition_proj.weight  # (cdim, 2)
            term_v = torch.where(absent_v[:, None], self.no_valence.expand(batch, -1),
                                 v_safe[:, None] * weight[:, 0])
            term_a = torch.where(absent_a[:, None], self.no_arousal.expand(batch, -1),
                                 a_safe[:, None] * weight[:, 1])
            return term_v + term_a + self.condition_proj.bias
        return None

    def forward(self, tokens, offsets=None, valence=None, arousal=None,
                collect_attention: list | None = None) -> torch.Tensor:
        """Logits over the vocabulary for each input position.

        tokens: (S,) or (B, S) long; offsets: matching float tensor, required
        exactly when boundary conditioning is configured.  For the two
        prepend-style variants the output has 2 extra leading positions.
        """
        cfg = self.cfg
        squeeze = tokens.dim() == 1
        if squeeze:
            tokens = tokens.unsqueeze(0)
            if offsets is not None and offsets.dim() == 1:
                offsets = offsets.unsqueeze(0)
        if tokens.dim() != 2:
            raise ShapeMismatch(f"tokens must be 1-D or 2-D, got {tokens.dim()}-D")
        b, s = tokens.shape
        if s == 0 or s > cfg.max_tokens:
            raise ShapeMismatch(f"sequence length {s} outside 1..{cfg.max_tokens}")
        if cfg.boundary_conditioning:
            if offsets is None:
                raise ShapeMismatch("boundary conditioning requires offsets")
            if tuple(offsets.shape) != (b, s):
                raise ShapeMismatch(f"offsets shape {tuple(offsets.shape)} != {(b, s)}")
        elif offsets is not None:
            raise ShapeMismatch("offsets passed but boundary conditioning is off")

        dtype = self.token_embedding.weight.dtype
        device = tokens.device
        x = self.token_embedding(tokens)

        cond = self._condition_vectors(valence, arousal, b, dtype, device)
        if cfg.variant in ("discrete_token", "continuous_token"):
            x = torch.cat([cond, x], dim=1)
        elif cfg.variant == "continuous_concat":
            x = torch.cat([x, cond[:, None, :].expand(b, s, cfg.condition_dim)], dim=-1)

        total = x.shape[1]
        pos = self.positional[:total]
        if cfg.boundary_conditioning:
            norm = (offsets / cfg.max_offset_s).to(dtype)
            if cfg.n_prepended:
                # condition rows sit outside musical time: treat as maximally
                # far from any boundary
                norm = torch.cat([torch.ones(b, cfg.n_prepended, dtype=dtype,
                                             device=device), norm], dim=1)
            bfeat = self.boundary_ffn(norm.unsqueeze(-1))
            pos_input = torch.cat([bfeat, pos.unsqueeze(0).expand(b, -1, -1)], dim=-1)
        else:
            pos_input = torch.cat([pos, pos], dim=-1).unsqueeze(0)

        x = self.input_dropout(x + pos_input)
        mask = torch.full((total, total), float("-inf"), dtype=dtype, device=device).triu(1)
        for block in self.blocks:
            x = block(x, mask, collect_attention)
        logits = self.head(self.final_norm(x))
        if not torch.isfinite(logits).all():
            raise NonFiniteActivation("non-finite logits")
        return logits.squeeze(0) if squeeze else logits


# ---------------------------------------------------------------------------
# loss, metrics, optimization


def sequence_loss(logits, targets, chord_weight: float = 10.0,
                  chord_id: int = VOCAB.chord, pad_id: int | None = None) -> torch.Tensor:
    """Weighted-mean cross-entropy; positions whose target is CHORD weigh
    chord_weight, optional pad targets weigh zero."""
    if logits.shape[:-1] != targets.shape:
        raise ShapeMismatch(f"logits {tuple(logits.shape)} vs targets {tuple(targets.shape)}")
    flat_logits = logits.reshape(-1, logits.shape[-1])
    flat_targets = targets.reshape(-1)
    ce = F.cross_entropy(flat_logits, flat_targets, reduction="none")
    weights = torch.ones_like(ce)
    weights[flat_targets == chord_id] = chord_weight
    if pad_id is not None:
        weights[flat_targets == pad_id] = 0.0
    return (weights * ce).sum() / weights.sum()


def sequence_metrics(logits, targets) -> tuple[float, float, float]:
    """(nll, top1, top5): unweighted mean cross-entropy and top-k accuracy."""
    if logits.shape[:-1] != targets.shape:
        raise ShapeMismatch(f"logits {tuple(logits.shape)} vs targets {tuple(targets.shape)}")
    flat_logits = logits.reshape(-1, logits.shape[-1])
    flat_targets = targets.reshape(-1)
    nll = F.cross_entropy(flat_logits, flat_targets).item()
    k = min(5, flat_logits.shape[-1])
    topk = flat_logits.topk(k, dim=-1).indices
    hits = topk == flat_targets[:, None]
    top1 = hits[:, 0].float().mean().item()
    top5 = hits.any(dim=-1).float().mean().item()
    return nll, top1, top5


@dataclass
class TrainBatch:
    tokens: torch.Tensor                 # (B, S) long
    targets: torch.Tensor                # (B, S) long
    offsets: torch.Tensor | None = None  # (B, S) float, iff boundary conditioning
    valence: torch.Tensor | None = None  # (B,) float, NaN = absent
    arousal: torch.Tensor | None = None


def music_logits(logits: torch.Tensor, cfg: ModelConfig) -> torch.Tensor:
    """Drop the prepended condition rows so row i predicts target i."""
    return logits[..., cfg.n_prepended:, :]


def train_step(model: ConditionalMusicTransformer, optimizer, batch: TrainBatch,
               clip_norm: float = 1.0) -> float:
    """One optimizer update with global gradient-norm clipping."""
    model.train()
    logits = model(batch.tokens, batch.offsets, batch.valence, batch.arousal)
    loss = sequence_loss(music_logits(logits, model.cfg), batch.targets,
                         model.cfg.chord_loss_weight)
    optimizer.zero_grad()
    loss.backward()
    for p in model.parameters():
        if p.grad is not None and not torch.isfinite(p.grad).all():
            raise NonFiniteGradient("non-finite gradient")
    torch.nn.utils.clip_grad_norm_(model.parameters(), clip_norm)
    optimizer.step()
    model.eval()
    return float(loss.detach())


def _parameter_family(name: str) -> str:
    if "token_embedding" in name:
        return "token_embedding"
    if name == "positional":
        return "positional"
    if "boundary_ffn" in name:
        return "boundary_ffn"
    if any(k in name for k in ("valence_proj", "arousal_proj", "condition_proj")):
        return "condition_proj"
    if any(k in name for k in ("no_valence", "no_arousal", "valence_bins", "arousal_bins")):
        return "condition_embedding"
    if "rel_embedding" in name:
        return "relative_embedding"
    if ".attn." in name:
        return "attention"
    if "norm" in name:
        return "layer_norm"
    if ".ffn." in name:
        return "feed_forward"
    if "head" in name:
        return "output_head"
    return "other"


def gradient_check(model: ConditionalMusicTransformer, batch: TrainBatch,
                   epsilon: float = 1e-6, min_samples: int = 200,
                   seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients.

    Runs on a double-precision copy in eval mode.  Samples are spread over
    every parameter family, always including each family's largest-gradient
    entry.  The default epsilon of 1e-6 keeps ReLU kink crossings negligible;
    at that epsilon the finite-difference noise floor is ~2e-9 absolute, so
    the relative error uses max(|analytic|, |numeric|, 1e-4) as denominator:
    gradients below 1e-4 are effectively verified in absolute terms.
    """
    model = copy.deepcopy(model).double()
    model.eval()
    batch = TrainBatch(
        tokens=batch.tokens.clone(),
        targets=batch.targets.clone(),
        offsets=None if batch.offsets is None else batch.offsets.double(),
        valence=None if batch.valence is None else batch.valence.double(),
        arousal=None if batch.arousal is None else batch.arousal.double(),
    )

    def compute_loss():
        logits = model(batch.tokens, batch.offsets, batch.valence, batch.arousal)
        return sequence_loss(music_logits(logits, model.cfg), batch.targets,
                             model.cfg.chord_loss_weight)

    loss = compute_loss()
    model.zero_grad()
    loss.backward()

    families: dict[str, list] = {}
    for name, p in model.named_parameters():
        if p.requires_grad and p.grad is not None:
            families.setdefault(_parameter_family(name), []).append((name, p))

    rng = random.Random(seed)
    per_family = max(2, math.ceil(min_samples / len(families)))
    picks = []
    for _family_name, plist in sorted(families.items()):
        best = max(
            ((p, int(torch.argmax(torch.abs(p.grad)).item())) for _n, p in plist),
            key=lambda t: abs(t[0].grad.reshape(-1)[t[1]].item()),
        )
        picks.append(best)
        for _ in range(per_family - 1):
            _n, p = plist[rng.randrange(len(plist))]
            picks.append((p, rng.randrange(p.numel())))

    max_rel = 0.0
    with torch.no_grad():
        for p, idx in picks:
            flat = p.reshape(-1)
            original = flat[idx].item()
            analytic = p.grad.reshape(-1)[idx].item()
            flat[idx] = original + epsilon
            loss_plus = compute_loss().item()
            flat[idx] = original - epsilon
            loss_minus = compute_loss().item()
            flat[idx] = original
            numeric = (loss_plus - loss_minus) / (2.0 * epsilon)
            rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-4)
            max_rel = max(max_rel, rel)
    return max_rel


# ---------------------------------------------------------------------------
# checkpoint container: magic, versioned config header, named float32 tensors

_MAGIC = b"CMCKPT01"


def save_checkpoint(path, model: ConditionalMusicTransformer) -> None:
    cfg_blob = json.dumps(model.cfg.to_dict(), sort_keys=True).encode()
    state = model.state_dict()
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(cfg_blob)))
        f.write(cfg_blob)
        f.write(struct.pack("<I", len(state)))
        for name, tensor in state.items():
            raw = tensor.detach().cpu().to(torch.float32).numpy().astype("<f4").tobytes()
            encoded = name.encode()
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            shape = tuple(tensor.shape)
            f.write(struct.pack("<B", len(shape)))
            for dim in shape:
                f.write(struct.pack("<I", dim))
            f.write(struct.pack("<Q", len(raw)))
            f.write(raw)


def load_checkpoint(path, expected_config: ModelConfig | None = None) -> ConditionalMusicTransformer:
    """Rebuild a model from a checkpoint; reject config or shape mismatches."""
    import numpy as np

    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint: {exc}") from exc
    if blob[:8] != _MAGIC:
        raise CheckpointError("bad checkpoint magic/version")
    pos = 8
    try:
        (cfg_len,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        cfg = ModelConfig.from_dict(json.loads(blob[pos:pos + cfg_len].decode()))
        pos += cfg_len
        (n_tensors,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        tensors = {}
        for _ in range(n_tensors):
            (name_len,) = struct.unpack_from("<H", blob, pos)
            pos += 2
            name = blob[pos:pos + name_len].decode()
            pos += name_len
            (ndim,) = struct.unpack_from("<B", blob, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", blob, pos) if ndim else ()
            pos += 4 * ndim
            (nbytes,) = struct.unpack_from("<Q", blob, pos)
            pos += 8
            data = np.frombuffer(blob[pos:pos + nbytes], dtype="<f4").reshape(shape)
            pos += nbytes
            tensors[name] = torch.from_numpy(data.copy())
    except (struct.error, ValueError, UnicodeDecodeError, json.JSONDecodeError, TypeError) as exc:
        raise CheckpointError(f"corrupt checkpoint: {exc}") from exc
    if expected_config is not None and cfg != expected_config:
        raise CheckpointError("checkpoint config does not match the expected config")
    model = ConditionalMusicTransformer(cfg)
    reference = model.state_dict()
    if set(reference) != set(tensors):
        raise CheckpointError("checkpoint tensor names do not match the model")
    for name, tensor in tensors.items():
        if tuple(tensor.shape) != tuple(reference[name].shape):
            raise CheckpointError(f"shape mismatch for {name}")
    model.load_state_dict(tensors)
    model.eval()
    return model
