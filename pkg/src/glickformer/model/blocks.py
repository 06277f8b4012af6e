"""Building blocks shared by the three model variants.

Shapes use R for "number of boards in the flattened batch" and 64 for the
square tokens of one board.
"""
from __future__ import annotations

import numpy as np

from ..nn import (
    FeedForward, LayerNorm, Linear, MultiHeadAttention, Parameter, ShapeError,
    init_parameter, mish, mish_backward,
)
from .config import ModelConfig

SQUARES = 64


def tokenize_board(boards, embed):
    """``[R, C, 8, 8]`` channel planes -> ``[R, 64, d]`` square tokens.

    Token i is the channel column of square i times ``embed``.
    """
    boards = np.asarray(boards, dtype=np.float64)
    R, C = boards.shape[0], boards.shape[1]
    if embed.shape[0] != C:
        raise ShapeError(f"tokenize: {C} channels vs embedding {embed.shape}")
    cols = boards.reshape(R, C, SQUARES).transpose(0, 2, 1)
    return cols @ embed, cols


def tokenize_backward(dtokens, cols, embed: Parameter):
    embed.grad += cols.reshape(-1, cols.shape[-1]).T @ dtokens.reshape(-1, dtokens.shape[-1])


class Smolgen:
    """Per-head 64x64 attention bias generated from the board's tokens.

    compress each token (W_c), concatenate, dense -> Mish -> LayerNorm
    (W_h), dense -> Mish -> LayerNorm (W_g), split per head and project with
    the shared W_b.
    """

    def __init__(self, name, cfg: ModelConfig, shared_wb: Parameter, rng):
        self.cfg = cfg
        self.compress = Linear(f"{name}.Wc", cfg.d, cfg.d_c, rng, bias=False)
        self.hidden = Linear(f"{name}.Wh", SQUARES * cfg.d_c, cfg.h_s, rng, bias=False)
        self.ln_hidden = LayerNorm(f"{name}.ln_h", cfg.h_s)
        self.gen = Linear(f"{name}.Wg", cfg.h_s, cfg.h * cfg.h_s, rng, bias=False)
        self.ln_gen = LayerNorm(f"{name}.ln_g", cfg.h * cfg.h_s)
        self.Wb = shared_wb
        if shared_wb.shape != (cfg.h_s, SQUARES * SQUARES):
            raise ShapeError(f"shared W_b {shared_wb.shape} != {(cfg.h_s, SQUARES * SQUARES)}")

    def parameters(self):
        yield from self.compress.parameters()
        yield from self.hidden.parameters()
        yield from self.ln_hidden.parameters()
        yield from self.gen.parameters()
        yield from self.ln_gen.parameters()
        yield self.Wb

    def forward(self, H):
        cfg = self.cfg
        R = H.shape[0]
        c, cc = self.compress.forward(H)
        flat = c.reshape(R, SQUARES * cfg.d_c)
        a1, c1 = self.hidden.forward(flat)
        hid, l1 = self.ln_hidden.forward(mish(a1))
        a2, c2 = self.gen.forward(hid)
        g, l2 = self.ln_gen.forward(mish(a2))
        G = g.reshape(R, cfg.h, cfg.h_s)
        bias = (G @ self.Wb.value).reshape(R, cfg.h, SQUARES, SQUARES)
        return bias, (cc, c1, a1, l1, c2, a2, l2, G)

    def backward(self, dbias, cache):
        cfg = self.cfg
        cc, c1, a1, l1, c2, a2, l2, G = cache
        R = G.shape[0]
        db = dbias.reshape(R, cfg.h, SQUARES * SQUARES)
        self.Wb.grad += G.reshape(-1, cfg.h_s).T @ db.reshape(-1, SQUARES * SQUARES)
        dG = db @ self.Wb.value.T
        dm2 = self.ln_gen.backward(dG.reshape(R, cfg.h * cfg.h_s), l2)
        dhid = self.gen.backward(mish_backward(a2, dm2), c2)
        dm1 = self.ln_hidden.backward(dhid, l1)
        dflat = self.hidden.backward(mish_backward(a1, dm1), c1)
        return self.compress.backward(dflat.reshape(R, SQUARES, cfg.d_c), cc)


class SpatialBlock:
    """Post-norm encoder block over one board's 64 tokens with Smolgen bias."""

    def __init__(self, name, cfg: ModelConfig, shared_wb: Parameter, rng):
        self.attn = MultiHeadAttention(f"{name}.attn", cfg.d, cfg.h, cfg.d_k, rng)
        self.smolgen = Smolgen(f"{name}.smolgen", cfg, shared_wb, rng)
        self.ln1 = LayerNorm(f"{name}.ln1", cfg.d)
        self.ffn = FeedForward(f"{name}.ffn", cfg.d, cfg.ffn_mult, rng)
        self.ln2 = LayerNorm(f"{name}.ln2", cfg.d)

    def parameters(self):
        yield from self.attn.parameters()
        yield from self.smolgen.parameters()
        yield from self.ln1.parameters()
        yield from self.ffn.parameters()
        yield from self.ln2.parameters()

    def forward(self, H):
        bias, sc = self.smolgen.forward(H)
        A, ac = self.attn.forward(H, bias=bias)
        X1, l1 = self.ln1.forward(H + A)
        F, fc = self.ffn.forward(X1)
        X2, l2 = self.ln2.forward(X1 + F)
        return X2, (sc, ac, l1, fc, l2)

    def backward(self, dX2, cache):
        sc, ac, l1, fc, l2 = cache
        dZ2 = self.ln2.backward(dX2, l2)
        dX1 = dZ2 + self.ffn.backward(dZ2, fc)
        dZ1 = self.ln1.backward(dX1, l1)
        dH, _, _, dbias = self.attn.backward(dZ1, ac)
        return dZ1 + dH + self.smolgen.backward(dbias, sc)


class TemporalLayer:
    """Standard post-norm transformer layer over a masked sequence."""

    def __init__(self, name, d_model, heads, head_dim, ffn_mult, rng):
        self.attn = MultiHeadAttention(f"{name}.attn", d_model, heads, head_dim, rng)
        self.ln1 = LayerNorm(f"{name}.ln1", d_model)
        self.ffn = FeedForward(f"{name}.ffn", d_model, ffn_mult, rng)
        self.ln2 = LayerNorm(f"{name}.ln2", d_model)

    def parameters(self):
        yield from self.attn.parameters()
        yield from self.ln1.parameters()
        yield from self.ffn.parameters()
        yield from self.ln2.parameters()

    def forward(self, X, key_mask):
        A, ac = self.attn.forward(X, key_mask=key_mask)
        X1, l1 = self.ln1.forward(X + A)
        F, fc = self.ffn.forward(X1)
        X2, l2 = self.ln2.forward(X1 + F)
        return X2, (ac, l1, fc, l2)

    def backward(self, dX2, cache):
        ac, l1, fc, l2 = cache
        dZ2 = self.ln2.backward(dX2, l2)
        dX1 = dZ2 + self.ffn.backward(dZ2, fc)
        dZ1 = self.ln1.backward(dX1, l1)
        dX, _, _, _ = self.attn.backward(dZ1, ac)
        return dZ1 + dX


class FactorizedSelfAttentionLayer:
    """Spatial attention (Smolgen) -> per-square temporal attention -> FFN,
    each followed by residual + LayerNorm."""

    def __init__(self, name, cfg: ModelConfig, shared_wb: Parameter, rng):
        self.cfg = cfg
        self.spatial = MultiHeadAttention(f"{name}.spatial", cfg.d, cfg.h, cfg.d_k, rng)
        self.smolgen = Smolgen(f"{name}.smolgen", cfg, shared_wb, rng)
        self.ln_s = LayerNorm(f"{name}.ln_s", cfg.d)
        self.temporal = MultiHeadAttention(f"{name}.temporal", cfg.d, cfg.h, cfg.temporal_head_dim, rng)
        self.ln_t = LayerNorm(f"{name}.ln_t", cfg.d)
        self.ffn = FeedForward(f"{name}.ffn", cfg.d, cfg.ffn_mult, rng)
        self.ln_f = LayerNorm(f"{name}.ln_f", cfg.d)

    def parameters(self):
        yield from self.spatial.parameters()
        yield from self.smolgen.parameters()
        yield from self.ln_s.parameters()
        yield from self.temporal.parameters()
        yield from self.ln_t.parameters()
        yield from self.ffn.parameters()
        yield from self.ln_f.parameters()

    def forward(self, X, mask):
        B, N, S, d = X.shape
        Xs = X.reshape(B * N, S, d)
        bias, sc = self.smolgen.forward(Xs)
        A, ac = self.spatial.forward(Xs, bias=bias)
        Y1, l1 = self.ln_s.forward(Xs + A)

        Yt = Y1.reshape(B, N, S, d).transpose(0, 2, 1, 3).reshape(B * S, N, d)
        km = np.broadcast_to(mask[:, None, :], (B, S, N)).reshape(B * S, N)
        T, tc = self.temporal.forward(Yt, key_mask=km)
        Y2, l2 = self.ln_t.forward(Yt + T)

        Y2b = Y2.reshape(B, S, N, d).transpose(0, 2, 1, 3)
        F, fc = self.ffn.forward(Y2b)
        Y3, l3 = self.ln_f.forward(Y2b + F)
        return Y3, (X.shape, sc, ac, l1, tc, l2, fc, l3)

    def backward(self, dY3, cache):
        (B, N, S, d), sc, ac, l1, tc, l2, fc, l3 = cache
        dZ3 = self.ln_f.backward(dY3, l3)
        dY2b = dZ3 + self.ffn.backward(dZ3, fc)
        dY2 = dY2b.transpose(0, 2, 1, 3).reshape(B * S, N, d)
        dZ2 = self.ln_t.backward(dY2, l2)
        dq, _, _, _ = self.temporal.backward(dZ2, tc)
        dYt = dZ2 + dq
        dY1 = dYt.reshape(B, S, N, d).transpose(0, 2, 1, 3).reshape(B * N, S, d)
        dZ1 = self.ln_s.backward(dY1, l1)
        dXs, _, _, dbias = self.spatial.backward(dZ1, ac)
        dX = dZ1 + dXs + self.smolgen.backward(dbias, sc)
        return dX.reshape(B, N, S, d)


class TokenTransform:
    """Per-token projection to d_z, concatenation, projection to d_e."""

    def __init__(self, name, cfg: ModelConfig, rng):
        self.cfg = cfg
        self.W1 = Linear(f"{name}.W1", cfg.d, cfg.d_z, rng)
        self.W2 = Linear(f"{name}.W2", SQUARES * cfg.d_z, cfg.d_e, rng)

    def parameters(self):
        yield from self.W1.parameters()
        yield from self.W2.parameters()

    def forward(self, H):
        R = H.shape[0]
        z, c1 = self.W1.forward(H)
        s, c2 = self.W2.forward(z.reshape(R, SQUARES * self.cfg.d_z))
        return s, (c1, c2)

    def backward(self, ds, cache):
        c1, c2 = cache
        dz = self.W2.backward(ds, c2)
        return self.W1.backward(dz.reshape(-1, SQUARES, self.cfg.d_z), c1)


class Head:
    """MLP ``d_e -> d_e (Mish) -> 1``."""

    def __init__(self, name, d_e, rng):
        self.fc1 = Linear(f"{name}.fc1", d_e, d_e, rng)
        self.fc2 = Linear(f"{name}.fc2", d_e, 1, rng)

    def parameters(self):
        yield from self.fc1.parameters()
        yield from self.fc2.parameters()

    def forward(self, s):
        a, c1 = self.fc1.forward(s)
        y, c2 = self.fc2.forward(mish(a))
        return y[:, 0], (c1, a, c2)

    def backward(self, dy, cache):
        c1, a, c2 = cache
        dh = self.fc2.backward(dy[:, None], c2)
        return self.fc1.backward(mish_backward(a, dh), c1)


def shared_smolgen_weight(cfg: ModelConfig, rng) -> Parameter:
    return init_parameter("smolgen.Wb", (cfg.h_s, SQUARES * SQUARES), "uniform-glorot", rng)
