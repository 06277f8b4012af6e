"""Layers with hand-written backward passes.

Every layer follows the same protocol: ``forward(...)`` returns
``(output, cache)`` and ``backward(d_output, cache)`` returns the input
gradient(s) while *accumulating* into its Parameters' ``grad``.  Caches are
plain values, so a layer can be run several times before backward.
"""
from __future__ import annotations

import numpy as np

from .. import kernels
from .params import Parameter, ShapeError, init_parameter

LN_EPS = 1e-5


# -- functional ops --------------------------------------------------------------

def linear(x, W, b=None):
    W = W.value if isinstance(W, Parameter) else W
    if x.shape[-1] != W.shape[0]:
        raise ShapeError(f"linear: input {x.shape} incompatible with weight {W.shape}")
    y = x @ W
    if b is not None:
        y = y + (b.value if isinstance(b, Parameter) else b)
    return y


def linear_backward(dy, x, W):
    """Return ``(dx, dW, db)`` for ``y = x W + b``."""
    W = W.value if isinstance(W, Parameter) else W
    x2 = x.reshape(-1, x.shape[-1])
    dy2 = dy.reshape(-1, dy.shape[-1])
    return dy @ W.T, x2.T @ dy2, dy2.sum(axis=0)


def _rows(x):
    return x.reshape(-1, x.shape[-1])


def mish(x):
    """x * tanh(softplus(x))"""
    return kernels.mish_forward(_rows(x)).reshape(x.shape)


def mish_backward(x, dy):
    return kernels.mish_backward(_rows(x), _rows(dy)).reshape(x.shape)


def softmax(x):
    """Softmax over the last axis; ``-inf`` entries get zero weight and a
    row that is entirely ``-inf`` comes back as zeros."""
    return kernels.softmax_forward(_rows(x)).reshape(x.shape)


def softmax_backward(y, dy):
    return kernels.softmax_backward(_rows(y), _rows(dy)).reshape(y.shape)


def layer_norm(x, gain, bias, eps=LN_EPS):
    y, xhat, inv = kernels.layer_norm_forward(_rows(x), gain, bias, eps)
    return y.reshape(x.shape), (xhat, inv, x.shape)


def layer_norm_backward(dy, cache, gain):
    xhat, inv, shape = cache
    dx, dg, db = kernels.layer_norm_backward(_rows(dy), xhat, inv, gain)
    return dx.reshape(shape), dg, db


# -- layer objects ---------------------------------------------------------------

class Linear:
    def __init__(self, name, n_in, n_out, rng, bias=True):
        self.W = init_parameter(f"{name}.W", (n_in, n_out), "uniform-glorot", rng)
        self.b = init_parameter(f"{name}.b", (n_out,), "zeros") if bias else None

    def parameters(self):
        yield self.W
        if self.b is not None:
            yield self.b

    def forward(self, x):
        return linear(x, self.W, self.b), x

    def backward(self, dy, x):
        dx, dW, db = linear_backward(dy, x, self.W)
        self.W.grad += dW
        if self.b is not None:
            self.b.grad += db
        return dx


class LayerNorm:
    def __init__(self, name, d):
        self.gain = init_parameter(f"{name}.gain", (d,), "ones")
        self.bias = init_parameter(f"{name}.bias", (d,), "zeros")

    def parameters(self):
        yield self.gain
        yield self.bias

    def forward(self, x):
        return layer_norm(x, self.gain.value, self.bias.value)

    def backward(self, dy, cache):
        dx, dg, db = layer_norm_backward(dy, cache, self.gain.value)
        self.gain.grad += dg
        self.bias.grad += db
        return dx


class FeedForward:
    """Position-wise Linear -> Mish -> Linear."""

    def __init__(self, name, d, mult, rng):
        self.fc1 = Linear(f"{name}.fc1", d, mult * d, rng)
        self.fc2 = Linear(f"{name}.fc2", mult * d, d, rng)

    def parameters(self):
        yield from self.fc1.parameters()
        yield from self.fc2.parameters()

    def forward(self, x):
        a, c1 = self.fc1.forward(x)
        h = mish(a)
        y, c2 = self.fc2.forward(h)
        return y, (c1, a, c2)

    def backward(self, dy, cache):
        c1, a, c2 = cache
        dh = self.fc2.backward(dy, c2)
        return self.fc1.backward(mish_backward(a, dh), c1)


class MultiHeadAttention:
    """Scaled dot-product attention with optional additive bias and key mask.

    Projections map ``d_model -> heads * head_dim``; scores are scaled by
    ``sqrt(head_dim)``.  ``bias`` has shape ``[..., heads, n, n]`` and is added
    before the softmax; ``key_mask`` (True = real) has shape ``[..., n]``.
    """

    def __init__(self, name, d_model, heads, head_dim, rng):
        inner = heads * head_dim
        self.heads, self.head_dim, self.d_model = heads, head_dim, d_model
        self.q = Linear(f"{name}.q", d_model, inner, rng)
        # no key bias: it shifts each score row by a constant and cancels in softmax
        self.k = Linear(f"{name}.k", d_model, inner, rng, bias=False)
        self.v = Linear(f"{name}.v", d_model, inner, rng)
        self.o = Linear(f"{name}.o", inner, d_model, rng)

    def parameters(self):
        for lin in (self.q, self.k, self.v, self.o):
            yield from lin.parameters()

    def _split(self, x, B, n):
        return x.reshape(B, n, self.heads, self.head_dim).transpose(0, 2, 1, 3)

    def _merge(self, x, B, n):
        return x.transpose(0, 2, 1, 3).reshape(B, n, self.heads * self.head_dim)

    def forward(self, q_in, k_in=None, v_in=None, bias=None, key_mask=None):
        k_in = q_in if k_in is None else k_in
        v_in = k_in if v_in is None else v_in
        lead = q_in.shape[:-2]
        n = q_in.shape[-2]
        if k_in.shape[-2] != v_in.shape[-2]:
            raise ShapeError(f"attention: key {k_in.shape} and value {v_in.shape} lengths differ")
        m = k_in.shape[-2]
        B = int(np.prod(lead)) if lead else 1
        qx = q_in.reshape(B, n, -1)
        kx = k_in.reshape(B, m, -1)
        vx = v_in.reshape(B, m, -1)

        qp, cq = self.q.forward(qx)
        kp, ck = self.k.forward(kx)
        vp, cv = self.v.forward(vx)
        Q, K, V = self._split(qp, B, n), self._split(kp, B, m), self._split(vp, B, m)

        scale = 1.0 / np.sqrt(self.head_dim)
        scores = (Q @ K.transpose(0, 1, 3, 2)) * scale
        if bias is not None:
            want = (self.heads, n, m)
            if bias.shape[-3:] != want:
                raise ShapeError(f"attention: bias {bias.shape} does not end in {want}")
            scores = scores + bias.reshape(-1, *want)
        if key_mask is not None:
            km = np.asarray(key_mask, dtype=bool).reshape(B, m)
            scores = np.where(km[:, None, None, :], scores, -np.inf)
        weights = softmax(scores)
        ctx = self._merge(weights @ V, B, n)
        out, co = self.o.forward(ctx)
        cache = (lead, B, n, m, cq, ck, cv, co, Q, K, V, weights,
                 None if bias is None else bias.shape, q_in is k_in, k_in is v_in)
        return out.reshape(*lead, n, self.d_model), cache

    @staticmethod
    def attention_weights(cache):
        """Softmax weights ``[B, heads, n, m]`` from a forward cache."""
        return cache[11]

    def backward(self, dout, cache):
        """Return ``(dq_in, dk_in, dv_in, dbias)``; aliased inputs get the
        summed gradient on the first alias and ``None`` on the others."""
        (lead, B, n, m, cq, ck, cv, co, Q, K, V, weights,
         bias_shape, qk_same, kv_same) = cache
        dctx = self.o.backward(dout.reshape(B, n, self.d_model), co)
        dctx = self._split(dctx, B, n)
        dW = dctx @ V.transpose(0, 1, 3, 2)
        dV = weights.transpose(0, 1, 3, 2) @ dctx
        dscores = softmax_backward(weights, dW)
        scale = 1.0 / np.sqrt(self.head_dim)
        dQ = (dscores @ K) * scale
        dK = (dscores.transpose(0, 1, 3, 2) @ Q) * scale

        dq = self.q.backward(self._merge(dQ, B, n), cq)
        dk = self.k.backward(self._merge(dK, B, m), ck)
        dv = self.v.backward(self._merge(dV, B, m), cv)
        if kv_same:
            dk, dv = dk + dv, None
        if qk_same:
            dq, dk = dq + dk, None
        dbias = None
        if bias_shape is not None:
            if np.prod(bias_shape) == dscores.size:
                dbias = dscores.reshape(bias_shape)
            else:  # one bias broadcast over the batch
                dbias = dscores.sum(axis=0).reshape(bias_shape)

        def unflatten(t, length):
            return None if t is None else t.reshape(*lead, length, -1)

        return unflatten(dq, n), unflatten(dk, m), unflatten(dv, m), dbias


def multi_head_attention(layer: MultiHeadAttention, q_in, k_in, v_in, bias=None, mask=None):
    out, _ = layer.forward(q_in, k_in, v_in, bias=bias, key_mask=mask)
    return out
