"""Return-conditioned transformer over scheduling token sequences.

Per step t the sequence carries (return-to-go, state, action); the state
embedding comes from a small convolutional encoder over the fused
(machine view, view mask, position mask) stack.  One meta token with the
system-wide off-core summary joins the final step's context, right
before the last action, so the full sequence is 3T+1 tokens.  A learned
per-slice embedding is added to every token of its step.  The backbone
is a GPT-style stack of causally masked self-attention blocks; action
logits are read at each state position (the meta position for the final
step) and masked to eligible worker cores.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass
class DtConfig:
    t_steps: int
    n_cores: int
    n_counters: int
    grid: tuple[int, int]
    meta_dim: int = 8
    n_layers: int = 6
    n_heads: int = 8
    n_embed: int = 128
    dropout: float = 0.0

    def to_json(self) -> dict:
        d = asdict(self)
        d["grid"] = list(self.grid)
        return d

    @classmethod
    def from_json(cls, raw: dict) -> "DtConfig":
        raw = dict(raw)
        raw["grid"] = tuple(raw["grid"])
        return cls(**raw)


class CausalSelfAttention(nn.Module):
    def __init__(self, cfg: DtConfig, max_len: int):
        super().__init__()
        assert cfg.n_embed % cfg.n_heads == 0
        self.n_heads = cfg.n_heads
        self.qkv = nn.Linear(cfg.n_embed, 3 * cfg.n_embed)
        self.proj = nn.Linear(cfg.n_embed, cfg.n_embed)
        self.drop = nn.Dropout(cfg.dropout)
        mask = torch.tril(torch.ones(max_len, max_len)).view(1, 1, max_len, max_len)
        self.register_buffer("mask", mask, persistent=False)

    def forward(self, x):
        b, l, e = x.shape
        q, k, v = self.qkv(x).split(e, dim=2)
        hs = e // self.n_heads
        q = q.view(b, l, self.n_heads, hs).transpose(1, 2)
        k = k.view(b, l, self.n_heads, hs).transpose(1, 2)
        v = v.view(b, l, self.n_heads, hs).transpose(1, 2)
        att = (q @ k.transpose(-2, -1)) * (1.0 / hs ** 0.5)
        att = att.masked_fill(self.mask[:, :, :l, :l] == 0, float("-inf"))
        att = F.softmax(att, dim=-1)
        y = att @ v
        y = y.transpose(1, 2).contiguous().view(b, l, e)
        return self.drop(self.proj(y))


class Block(nn.Module):
    def __init__(self, cfg: DtConfig, max_len: int):
        super().__init__()
        self.ln1 = nn.LayerNorm(cfg.n_embed)
        self.attn = CausalSelfAttention(cfg, max_len)
        self.ln2 = nn.LayerNorm(cfg.n_embed)
        self.mlp = nn.Sequential(
            nn.Linear(cfg.n_embed, 4 * cfg.n_embed),
            nn.GELU(),
            nn.Linear(4 * cfg.n_embed, cfg.n_embed),
            nn.Dropout(cfg.dropout),
        )

    def forward(self, x):
        x = x + self.attn(self.ln1(x))
        x = x + self.mlp(self.ln2(x))
        return x


class RtgEmbed(nn.Module):
    """Embedding layer for the scalar return-to-go.

    Log-spaced sine/cosine features give the head enough resolution to
    separate hundreds of nearby return targets; a plain linear map of the
    raw scalar trains far too slowly to condition on.
    """

    def __init__(self, n_embed: int, n_freq: int = 10):
        super().__init__()
        freqs = 2.0 ** torch.arange(n_freq)
        self.register_buffer("freqs", freqs, persistent=False)
        self.fc = nn.Linear(2 * n_freq + 1, n_embed)

    def forward(self, x):
        # returns are normalized to (0, 1]; targets above the observed best
        # saturate instead of wrapping through the periodic features
        xc = x.clamp(0.0, 1.0)
        ang = 2.0 * torch.pi * xc * self.freqs
        feat = torch.cat([x, torch.sin(ang), torch.cos(ang)], dim=-1)
        return self.fc(feat)


class StateEncoder(nn.Module):
    """Three conv layers and one fully connected layer over the fused
    (machine view, view mask, position mask) channel stack."""

    def __init__(self, in_channels: int, n_embed: int):
        super().__init__()
        self.conv = nn.Sequential(
            nn.Conv2d(in_channels, 32, 3, padding=1), nn.ReLU(),
            nn.Conv2d(32, 64, 3, padding=1), nn.ReLU(),
            nn.Conv2d(64, 64, 3, padding=1), nn.ReLU(),
            nn.AdaptiveAvgPool2d((4, 4)),
        )
        self.fc = nn.Linear(64 * 16, n_embed)

    def forward(self, x):
        return self.fc(self.conv(x).flatten(1))


class DtModel(nn.Module):
    def __init__(self, cfg: DtConfig):
        super().__init__()
        self.cfg = cfg
        t = cfg.t_steps
        max_len = 3 * t + 1
        e = cfg.n_embed
        self.state_enc = StateEncoder(cfg.n_counters + 2, e)
        self.rtg_emb = RtgEmbed(e)
        self.act_emb = nn.Embedding(cfg.n_cores, e)
        self.meta_emb = nn.Linear(cfg.meta_dim, e)
        self.slice_emb = nn.Embedding(t, e)
        self.modality_emb = nn.Embedding(4, e)     # rtg / state / action / meta
        self.blocks = nn.ModuleList(Block(cfg, max_len) for _ in range(cfg.n_layers))
        self.ln_f = nn.LayerNorm(e)
        self.head = nn.Linear(e, cfg.n_cores)

        rtg_pos = 3 * torch.arange(t)
        state_pos = rtg_pos + 1
        act_pos = rtg_pos + 2
        act_pos[-1] = 3 * t                       # meta slots in before the last action
        pred_pos = state_pos.clone()
        pred_pos[-1] = 3 * t - 1
        self.register_buffer("rtg_pos", rtg_pos, persistent=False)
        self.register_buffer("state_pos", state_pos, persistent=False)
        self.register_buffer("act_pos", act_pos, persistent=False)
        self.register_buffer("pred_pos", pred_pos, persistent=False)

    def forward(self, rtg, states, actions, meta):
        """rtg (B,T); states (B,T,C,mi,mj); actions (B,T) long; meta (B,meta_dim).

        Returns action logits (B, T, n_cores): the prediction for step t
        conditions only on tokens up to that step's state (the meta token
        for the final step), by the causal mask.
        """
        b, t = rtg.shape
        e = self.cfg.n_embed
        sl = self.slice_emb(torch.arange(t, device=rtg.device))
        rtg_tok = self.rtg_emb(rtg.unsqueeze(-1)) + sl + self.modality_emb.weight[0]
        st_tok = self.state_enc(states.flatten(0, 1)).view(b, t, e) + sl \
            + self.modality_emb.weight[1]
        act_tok = self.act_emb(actions) + sl + self.modality_emb.weight[2]
        meta_tok = self.meta_emb(meta) + sl[-1] + self.modality_emb.weight[3]

        seq = torch.zeros(b, 3 * t + 1, e, device=rtg.device, dtype=rtg_tok.dtype)
        seq[:, self.rtg_pos] = rtg_tok
        seq[:, self.state_pos] = st_tok
        seq[:, self.act_pos] = act_tok
        seq[:, 3 * t - 1] = meta_tok
        for block in self.blocks:
            seq = block(seq)
        seq = self.ln_f(seq)
        return self.head(seq[:, self.pred_pos])


def masked_logits(logits: torch.Tensor, core_is_worker: torch.Tensor) -> torch.Tensor:
    """Push non-worker cores to -inf so they never win softmax or argmax."""
    mask = core_is_worker.to(dtype=torch.bool, device=logits.device)
    return logits.masked_fill(~mask, float("-inf"))


# ----------------------------------------------------------------- checkpoint

CONFIG_FILE = "config.json"
WEIGHTS_FILE = "weights.pt"


def save_checkpoint(out_dir: str | Path, model: DtModel, extras: dict) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = {"model": model.cfg.to_json(), **extras}
    (out / CONFIG_FILE).write_text(json.dumps(payload, sort_keys=True, indent=1))
    torch.save(model.state_dict(), out / WEIGHTS_FILE)


def load_checkpoint(ckpt_dir: str | Path) -> tuple[DtModel, dict]:
    ckpt = Path(ckpt_dir)
    payload = json.loads((ckpt / CONFIG_FILE).read_text())
    cfg = DtConfig.from_json(payload["model"])
    model = DtModel(cfg)
    state = torch.load(ckpt / WEIGHTS_FILE, map_location="cpu", weights_only=True)
    model.load_state_dict(state)
    model.eval()
    return model, payload
