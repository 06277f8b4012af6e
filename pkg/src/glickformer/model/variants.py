"""The three end-to-end architectures.

All take ``boards [B, n_max, 16, 8, 8]`` and ``mask [B, n_max]`` and return
one standardized difficulty per puzzle, read from board 1.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from ..kvtext import ConfigError, read_kv, write_kv
from ..nn import (
    Parameter, RngState, ShapeError, init_parameter, load_parameters, save_parameters,
    unique_parameters,
)
from .blocks import (
    FactorizedSelfAttentionLayer, Head, SpatialBlock, TemporalLayer, TokenTransform,
    shared_smolgen_weight, tokenize_backward, tokenize_board,
)
from .config import ModelConfig

CHANNELS = 16


def _check_inputs(boards, mask, n_max):
    boards = np.asarray(boards)
    mask = np.asarray(mask, dtype=bool)
    if boards.ndim != 5 or boards.shape[1:] != (n_max, CHANNELS, 8, 8):
        raise ShapeError(f"boards {boards.shape} != [B, {n_max}, 16, 8, 8]")
    if mask.shape != boards.shape[:2]:
        raise ShapeError(f"mask {mask.shape} does not match boards {boards.shape[:2]}")
    if not mask[:, 0].all():
        raise ValueError("empty sequence: every puzzle needs board 1 unmasked")
    return boards, mask


class GlickFormerBase:
    cfg: ModelConfig

    def _parameter_sources(self):
        raise NotImplementedError

    def parameters(self) -> list:
        return unique_parameters(self._parameter_sources())

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> dict:
        return {p.name: p.value.copy() for p in self.parameters()}

    def load_state_dict(self, state: dict):
        params = {p.name: p for p in self.parameters()}
        missing = params.keys() - state.keys()
        extra = state.keys() - params.keys()
        if missing or extra:
            raise ValueError(f"checkpoint mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for name, p in params.items():
            if state[name].shape != p.value.shape:
                raise ShapeError(f"{name}: checkpoint {state[name].shape} vs model {p.value.shape}")
            p.value[...] = state[name]

    def forward(self, boards, mask):
        raise NotImplementedError

    def backward(self, dy, cache):
        raise NotImplementedError

    def predict(self, boards, mask, batch_size: int = 128) -> np.ndarray:
        out = []
        for i in range(0, len(boards), batch_size):
            y, _ = self.forward(boards[i:i + batch_size], mask[i:i + batch_size])
            out.append(y)
        return np.concatenate(out) if out else np.zeros(0)


class FactorizedEncoder(GlickFormerBase):
    """Each board through the spatial stack, then a temporal transformer over
    the board embeddings (late fusion)."""

    def __init__(self, cfg: ModelConfig, rng):
        self.cfg = cfg
        self.embed = init_parameter("embed", (CHANNELS, cfg.d), "uniform-glorot", rng)
        wb = shared_smolgen_weight(cfg, rng)
        self.blocks = [SpatialBlock(f"spatial{i}", cfg, wb, rng) for i in range(cfg.L)]
        self.token = TokenTransform("token", cfg, rng)
        self.temporal_pos = init_parameter("temporal_pos", (cfg.n_max, cfg.d_e), "zeros")
        self.temporal = [
            TemporalLayer(f"temporal{i}", cfg.d_e, cfg.h, cfg.d_e // cfg.h, cfg.ffn_mult, rng)
            for i in range(cfg.L_t)
        ]
        self.head = Head("head", cfg.d_e, rng)

    def _parameter_sources(self):
        yield self.embed
        for b in self.blocks:
            yield from b.parameters()
        yield from self.token.parameters()
        yield self.temporal_pos
        for t in self.temporal:
            yield from t.parameters()
        yield from self.head.parameters()

    def forward(self, boards, mask):
        boards, mask = _check_inputs(boards, mask, self.cfg.n_max)
        B, N = mask.shape
        H, cols = tokenize_board(boards[mask], self.embed.value)
        block_caches = []
        for blk in self.blocks:
            H, c = blk.forward(H)
            block_caches.append(c)
        s, tc = self.token.forward(H)
        S = np.zeros((B, N, self.cfg.d_e))
        S[mask] = s
        S = S + self.temporal_pos.value
        temporal_caches = []
        for layer in self.temporal:
            S, c = layer.forward(S, mask)
            temporal_caches.append(c)
        y, hc = self.head.forward(S[:, 0])
        return y, (mask, cols, block_caches, tc, temporal_caches, hc)

    def backward(self, dy, cache):
        mask, cols, block_caches, tc, temporal_caches, hc = cache
        B, N = mask.shape
        dS = np.zeros((B, N, self.cfg.d_e))
        dS[:, 0] = self.head.backward(dy, hc)
        for layer, c in zip(reversed(self.temporal), reversed(temporal_caches)):
            dS = layer.backward(dS, c)
        self.temporal_pos.grad += dS.sum(axis=0)
        dH = self.token.backward(dS[mask], tc)
        for blk, c in zip(reversed(self.blocks), reversed(block_caches)):
            dH = blk.backward(dH, c)
        tokenize_backward(dH, cols, self.embed)


class FactorizedSelfAttention(GlickFormerBase):
    """Spatial and temporal attention interleaved inside every layer."""

    def __init__(self, cfg: ModelConfig, rng):
        self.cfg = cfg
        self.embed = init_parameter("embed", (CHANNELS, cfg.d), "uniform-glorot", rng)
        self.temporal_pos = init_parameter("temporal_pos", (cfg.n_max, cfg.d), "zeros")
        wb = shared_smolgen_weight(cfg, rng)
        self.layers = [FactorizedSelfAttentionLayer(f"layer{i}", cfg, wb, rng) for i in range(cfg.L)]
        self.token = TokenTransform("token", cfg, rng)
        self.head = Head("head", cfg.d_e, rng)

    def _parameter_sources(self):
        yield self.embed
        yield self.temporal_pos
        for layer in self.layers:
            yield from layer.parameters()
        yield from self.token.parameters()
        yield from self.head.parameters()

    def forward(self, boards, mask):
        boards, mask = _check_inputs(boards, mask, self.cfg.n_max)
        B, N = mask.shape
        clean = boards * mask[:, :, None, None, None]
        H, cols = tokenize_board(clean.reshape(B * N, CHANNELS, 8, 8), self.embed.value)
        X = H.reshape(B, N, 64, self.cfg.d) + self.temporal_pos.value[None, :, None, :]
        caches = []
        for layer in self.layers:
            X, c = layer.forward(X, mask)
            caches.append(c)
        s, tc = self.token.forward(X[:, 0])
        y, hc = self.head.forward(s)
        return y, (X.shape, cols, caches, tc, hc)

    def backward(self, dy, cache):
        shape, cols, caches, tc, hc = cache
        B, N, S, d = shape
        dX = np.zeros(shape)
        dX[:, 0] = self.token.backward(self.head.backward(dy, hc), tc)
        for layer, c in zip(reversed(self.layers), reversed(caches)):
            dX = layer.backward(dX, c)
        self.temporal_pos.grad += dX.sum(axis=(0, 2))
        tokenize_backward(dX.reshape(B * N, S, d), cols, self.embed)


class StackedBaseline(GlickFormerBase):
    """All boards stacked on the channel axis and processed as one board."""

    def __init__(self, cfg: ModelConfig, rng):
        self.cfg = cfg
        self.embed = init_parameter("embed", (CHANNELS * cfg.n_max, cfg.d), "uniform-glorot", rng)
        wb = shared_smolgen_weight(cfg, rng)
        self.blocks = [SpatialBlock(f"spatial{i}", cfg, wb, rng) for i in range(cfg.L)]
        self.token = TokenTransform("token", cfg, rng)
        self.head = Head("head", cfg.d_e, rng)

    def _parameter_sources(self):
        yield self.embed
        for b in self.blocks:
            yield from b.parameters()
        yield from self.token.parameters()
        yield from self.head.parameters()

    @staticmethod
    def stack(boards, mask):
        """``[B, n_max, 16, 8, 8]`` -> ``[B, 16 * n_max, 8, 8]`` with padding zeroed."""
        B, N = mask.shape
        clean = boards * mask[:, :, None, None, None]
        return clean.reshape(B, N * CHANNELS, 8, 8)

    def forward(self, boards, mask):
        boards, mask = _check_inputs(boards, mask, self.cfg.n_max)
        H, cols = tokenize_board(self.stack(boards, mask), self.embed.value)
        caches = []
        for blk in self.blocks:
            H, c = blk.forward(H)
            caches.append(c)
        s, tc = self.token.forward(H)
        y, hc = self.head.forward(s)
        return y, (cols, caches, tc, hc)

    def backward(self, dy, cache):
        cols, caches, tc, hc = cache
        dH = self.token.backward(self.head.backward(dy, hc), tc)
        for blk, c in zip(reversed(self.blocks), reversed(caches)):
            dH = blk.backward(dH, c)
        tokenize_backward(dH, cols, self.embed)


_CLASSES = {
    "factorized_encoder": FactorizedEncoder,
    "factorized_self_attention": FactorizedSelfAttention,
    "baseline_stacked": StackedBaseline,
}


def build_model(cfg: ModelConfig, rng=None) -> GlickFormerBase:
    """Instantiate ``cfg.variant``; ``rng`` is a Generator or an int seed."""
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = RngState(0 if rng is None else int(rng)).stream("init")
    return _CLASSES[cfg.variant](cfg, rng)


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".cfg")


def save_model(path, model: GlickFormerBase) -> None:
    save_parameters(path, model.parameters())
    write_kv(sidecar_path(path), model.cfg.to_dict())


def load_model(path) -> GlickFormerBase:
    side = sidecar_path(path)
    if not side.exists():
        raise ConfigError(f"missing config sidecar {side}")
    cfg = ModelConfig.from_dict(read_kv(side))
    model = build_model(cfg)
    model.load_state_dict(load_parameters(path))
    return model


def count_parameters(model: GlickFormerBase) -> int:
    return sum(p.value.size for p in model.parameters())


__all__ = [
    "FactorizedEncoder", "FactorizedSelfAttention", "StackedBaseline", "GlickFormerBase",
    "build_model", "save_model", "load_model", "sidecar_path", "count_parameters", "Parameter",
]
