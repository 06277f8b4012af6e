"""Finite-difference suites for every layer, block and full model.

Each case builds a component at a small size, feeds it random input (the
input is wrapped as a Parameter so its gradient is checked too) and uses
``sum(output * R)`` with a fixed random ``R`` as the scalar loss.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from .model import (
    FactorizedSelfAttentionLayer, Head, ModelConfig, Smolgen, SpatialBlock, TemporalLayer,
    TokenTransform, build_model, shared_smolgen_weight,
)
from .nn import (
    GradCheckReport, LayerNorm, Linear, MultiHeadAttention, Parameter, RngState, grad_check,
    mish, mish_backward,
)
from .training import mse_loss

LAYER_TOL = 1e-4
MODEL_TOL = 1e-3

REDUCED = dict(d=32, h=2, d_z=4, L=2, L_t=2, n_max=3)


def _check(run: Callable, params, tol, max_entries, seed):
    """``run(dout_fn)`` does forward, sets grads and returns (loss)."""
    return grad_check(run, params, tolerance=tol, max_entries=max_entries,
                      rng=np.random.default_rng(seed))


def _weighted(forward, backward, params, x: Parameter, rng, tol, max_entries, seed):
    out_shape = forward(x.value)[0].shape
    R = rng.normal(size=out_shape)

    def run():
        for p in params:
            p.zero_grad()
        out, cache = forward(x.value)
        dx = backward(R, cache)
        if dx is not None:
            x.grad += dx
        return float(np.sum(out * R))

    return _check(run, params, tol, max_entries, seed)


def check_linear(seed=0, tol=LAYER_TOL, max_entries=None):
    rng = RngState(seed).stream("gradcheck.linear")
    lin = Linear("linear", 5, 4, rng)
    lin.b.value[...] = rng.normal(size=4)
    x = Parameter("input", rng.normal(size=(3, 2, 5)))
    params = [x, *lin.parameters()]
    return _weighted(lin.forward, lin.backward, params, x, rng, tol, max_entries, seed)


def check_layer_norm(seed=0, tol=LAYER_TOL, max_entries=None):
    rng = RngState(seed).stream("gradcheck.layer_norm")
    ln = LayerNorm("ln", 6)
    ln.gain.value[...] = rng.normal(size=6)
    ln.bias.value[...] = rng.normal(size=6)
    x = Parameter("input", rng.normal(size=(4, 6)) * 2.0)
    params = [x, *ln.parameters()]
    return _weighted(ln.forward, ln.backward, params, x, rng, tol, max_entries, seed)


def check_mish(seed=0, tol=LAYER_TOL, max_entries=None):
    rng = RngState(seed).stream("gradcheck.mish")
    x = Parameter("input", rng.normal(size=(5, 7)) * 3.0)
    return _weighted(lambda v: (mish(v), v), lambda dy, v: mish_backward(v, dy), [x], x, rng,
                     tol, max_entries, seed)


def check_attention(seed=0, tol=LAYER_TOL, max_entries=None, masked=True):
    rng = RngState(seed).stream("gradcheck.attention")
    heads, n, d = 2, 5, 8
    mha = MultiHeadAttention("attn", d, heads, 4, rng)
    for p in mha.parameters():
        if p.name.endswith(".b"):
            p.value[...] = rng.normal(size=p.shape) * 0.1
    x = Parameter("input", rng.normal(size=(3, n, d)))
    bias = Parameter("bias", rng.normal(size=(3, heads, n, n)))
    mask = np.ones((3, n), dtype=bool)
    if masked:
        mask[1, 3:] = False
        mask[2, 1:] = False

    def forward(v):
        return mha.forward(v, bias=bias.value, key_mask=mask)

    def backward(dout, cache):
        dx, _, _, db = mha.backward(dout, cache)
        bias.grad += db
        return dx

    params = [x, bias, *mha.parameters()]
    return _weighted(forward, backward, params, x, rng, tol, max_entries, seed)


def _reduced(**kw):
    cfg = dict(REDUCED)
    cfg.update(kw)
    return ModelConfig(**cfg)


def check_smolgen(seed=0, tol=LAYER_TOL, max_entries=12):
    cfg = _reduced()
    rng = RngState(seed).stream("gradcheck.smolgen")
    sm = Smolgen("smolgen", cfg, shared_smolgen_weight(cfg, rng), rng)
    x = Parameter("input", rng.normal(size=(2, 64, cfg.d)))
    params = [x, *sm.parameters()]
    return _weighted(sm.forward, sm.backward, params, x, rng, tol, max_entries, seed)


def check_spatial(seed=0, tol=LAYER_TOL, max_entries=12, d=32, h=2):
    cfg = _reduced(d=d, h=h)
    rng = RngState(seed).stream("gradcheck.spatial")
    blk = SpatialBlock("spatial", cfg, shared_smolgen_weight(cfg, rng), rng)
    x = Parameter("input", rng.normal(size=(2, 64, cfg.d)))
    params = [x, *blk.parameters()]
    return _weighted(blk.forward, blk.backward, params, x, rng, tol, max_entries, seed)


def check_temporal(seed=0, tol=LAYER_TOL, max_entries=12):
    cfg = _reduced()
    rng = RngState(seed).stream("gradcheck.temporal")
    layer = TemporalLayer("temporal", cfg.d_e, cfg.h, cfg.d_e // cfg.h, cfg.ffn_mult, rng)
    x = Parameter("input", rng.normal(size=(3, cfg.n_max, cfg.d_e)))
    mask = np.array([[1, 1, 1], [1, 1, 0], [1, 0, 0]], dtype=bool)
    params = [x, *layer.parameters()]
    return _weighted(lambda v: layer.forward(v, mask), layer.backward, params, x, rng,
                     tol, max_entries, seed)


def check_fsa_layer(seed=0, tol=LAYER_TOL, max_entries=12):
    cfg = _reduced()
    rng = RngState(seed).stream("gradcheck.fsa_layer")
    layer = FactorizedSelfAttentionLayer("fsa", cfg, shared_smolgen_weight(cfg, rng), rng)
    x = Parameter("input", rng.normal(size=(2, cfg.n_max, 64, cfg.d)))
    mask = np.array([[1, 1, 0], [1, 1, 1]], dtype=bool)
    params = [x, *layer.parameters()]
    return _weighted(lambda v: layer.forward(v, mask), layer.backward, params, x, rng,
                     tol, max_entries, seed)


def check_token_transform(seed=0, tol=LAYER_TOL, max_entries=12):
    cfg = _reduced()
    rng = RngState(seed).stream("gradcheck.token")
    tt = TokenTransform("token", cfg, rng)
    for p in tt.parameters():
        if p.name.endswith(".b"):
            p.value[...] = rng.normal(size=p.shape) * 0.1
    x = Parameter("input", rng.normal(size=(3, 64, cfg.d)))
    params = [x, *tt.parameters()]
    return _weighted(tt.forward, tt.backward, params, x, rng, tol, max_entries, seed)


def check_head(seed=0, tol=LAYER_TOL, max_entries=12):
    cfg = _reduced()
    rng = RngState(seed).stream("gradcheck.head")
    head = Head("head", cfg.d_e, rng)
    x = Parameter("input", rng.normal(size=(4, cfg.d_e)))
    params = [x, *head.parameters()]
    return _weighted(head.forward, head.backward, params, x, rng, tol, max_entries, seed)


def random_batch(rng, batch, n_max, density=0.08):
    """Random binary boards with a mix of sequence lengths (board 1 always real)."""
    boards = (rng.random((batch, n_max, 16, 8, 8)) < density).astype(np.uint8)
    lengths = rng.integers(1, n_max + 1, size=batch)
    lengths[0] = n_max
    mask = np.arange(n_max)[None, :] < lengths[:, None]
    return boards, mask


def check_model(variant, seed=0, tol=MODEL_TOL, max_entries=6, batch=3):
    cfg = _reduced(variant=variant)
    rng = RngState(seed).stream(f"gradcheck.model.{variant}")
    model = build_model(cfg, rng)
    # exercise the zero-initialised parameters too
    for p in model.parameters():
        if p.name == "temporal_pos" or p.name.endswith(".b") or p.name.endswith(".bias"):
            p.value[...] = rng.normal(size=p.shape) * 0.1
    boards, mask = random_batch(rng, batch, cfg.n_max)
    targets = rng.normal(size=batch)

    def run():
        model.zero_grad()
        y, cache = model.forward(boards, mask)
        loss, dy = mse_loss(y, targets)
        model.backward(dy, cache)
        return loss

    return _check(run, model.parameters(), tol, max_entries, seed)


LAYER_CASES = {
    "linear": check_linear,
    "layer_norm": check_layer_norm,
    "mish": check_mish,
    "attention": check_attention,
}
BLOCK_CASES = {
    "smolgen": check_smolgen,
    "spatial": check_spatial,
    "temporal": check_temporal,
    "fsa_layer": check_fsa_layer,
    "token_transform": check_token_transform,
    "head": check_head,
}
MODEL_CASES = {
    "factorized_encoder": lambda seed=0: check_model("factorized_encoder", seed),
    "factorized_self_attention": lambda seed=0: check_model("factorized_self_attention", seed),
    "baseline_stacked": lambda seed=0: check_model("baseline_stacked", seed),
}

MODULE_GROUPS = {
    "smolgen": ["smolgen"],
    "spatial": ["attention", "spatial"],
    "temporal": ["temporal", "fsa_layer"],
    "head": ["token_transform", "head", "mish"],
    "all": [*LAYER_CASES, *BLOCK_CASES, *MODEL_CASES],
}


def run_suite(group: str = "all", seed: int = 0) -> dict:
    """Return ``{case: GradCheckReport}`` for the named group."""
    cases = {**LAYER_CASES, **BLOCK_CASES, **MODEL_CASES}
    return {name: cases[name](seed=seed) for name in MODULE_GROUPS[group]}


__all__ = ["GradCheckReport", "run_suite", "MODULE_GROUPS", "LAYER_TOL", "MODEL_TOL"]
