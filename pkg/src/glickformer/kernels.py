"""Element-wise and row-reduction kernels used by the layers.

Each kernel exists twice: a numba ``@njit`` loop version and a vectorised
numpy version.  ``GLKF_NUMBA=0`` in the environment (read at import time)
selects numpy; so does a missing numba install.  Matrix products stay in
numpy/BLAS in both modes.

All kernels take 2-D float64 arrays (rows x features); callers reshape.
"""
from __future__ import annotations

import math
import os

import numpy as np

try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kw):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


USE_NUMBA = HAVE_NUMBA and os.environ.get("GLKF_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")


# -- numpy reference path ---------------------------------------------------

def _softplus_np(x):
    return np.logaddexp(0.0, x)


def mish_forward_np(x):
    return x * np.tanh(_softplus_np(x))


def mish_backward_np(x, dy):
    t = np.tanh(_softplus_np(x))
    sig = np.exp(-np.logaddexp(0.0, -x))  # stable for large negative x
    return dy * (t + x * (1.0 - t * t) * sig)


def layer_norm_forward_np(x, gain, bias, eps):
    mean = x.mean(axis=1, keepdims=True)
    xc = x - mean
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    return xhat * gain + bias, xhat, inv[:, 0]


def layer_norm_backward_np(dy, xhat, inv, gain):
    d = xhat.shape[1]
    dgain = (dy * xhat).sum(axis=0)
    dbias = dy.sum(axis=0)
    g = dy * gain
    dx = (inv[:, None] / d) * (
        d * g - g.sum(axis=1, keepdims=True) - xhat * (g * xhat).sum(axis=1, keepdims=True)
    )
    return dx, dgain, dbias


def softmax_forward_np(x):
    m = x.max(axis=1, keepdims=True)
    dead = ~np.isfinite(m[:, 0])
    m[dead] = 0.0
    e = np.exp(x - m)
    s = e.sum(axis=1, keepdims=True)
    s[dead] = 1.0
    return e / s


def softmax_backward_np(y, dy):
    return y * (dy - (dy * y).sum(axis=1, keepdims=True))


# -- numba path ---------------------------------------------------------------

@njit(cache=True, inline="always")
def _tanh_softplus(v):
    # tanh(log(1 + e^v)) = n / (n + 2) with n = e^v (e^v + 2)
    if v > 20.0:
        return 1.0
    e = math.exp(v)
    n = e * (e + 2.0)
    return n / (n + 2.0)


@njit(cache=True)
def _mish_forward_nb(x):
    out = np.empty_like(x)
    n, m = x.shape
    for i in range(n):
        for j in range(m):
            v = x[i, j]
            out[i, j] = v * _tanh_softplus(v)
    return out


@njit(cache=True)
def _mish_backward_nb(x, dy):
    out = np.empty_like(x)
    n, m = x.shape
    for i in range(n):
        for j in range(m):
            v = x[i, j]
            if v > 20.0:
                out[i, j] = dy[i, j]
                continue
            e = math.exp(v)
            nn = e * (e + 2.0)
            t = nn / (nn + 2.0)
            sig = e / (1.0 + e)
            out[i, j] = dy[i, j] * (t + v * (1.0 - t * t) * sig)
    return out


@njit(cache=True)
def _layer_norm_forward_nb(x, gain, bias, eps):
    n, d = x.shape
    y = np.empty_like(x)
    xhat = np.empty_like(x)
    inv = np.empty(n)
    for i in range(n):
        mean = 0.0
        for j in range(d):
            mean += x[i, j]
        mean /= d
        corr = 0.0  # second pass removes the summation error (exact on constant rows)
        for j in range(d):
            corr += x[i, j] - mean
        mean += corr / d
        var = 0.0
        for j in range(d):
            c = x[i, j] - mean
            var += c * c
        var /= d
        r = 1.0 / math.sqrt(var + eps)
        inv[i] = r
        for j in range(d):
            h = (x[i, j] - mean) * r
            xhat[i, j] = h
            y[i, j] = h * gain[j] + bias[j]
    return y, xhat, inv


@njit(cache=True)
def _layer_norm_backward_nb(dy, xhat, inv, gain):
    n, d = dy.shape
    dx = np.empty_like(dy)
    dgain = np.zeros(d)
    dbias = np.zeros(d)
    for i in range(n):
        sg = 0.0
        sgx = 0.0
        for j in range(d):
            g = dy[i, j] * gain[j]
            sg += g
            sgx += g * xhat[i, j]
            dgain[j] += dy[i, j] * xhat[i, j]
            dbias[j] += dy[i, j]
        k = inv[i] / d
        for j in range(d):
            dx[i, j] = k * (d * dy[i, j] * gain[j] - sg - xhat[i, j] * sgx)
    return dx, dgain, dbias


@njit(cache=True)
def _softmax_forward_nb(x):
    n, m = x.shape
    out = np.zeros_like(x)
    for i in range(n):
        mx = -np.inf
        for j in range(m):
            if x[i, j] > mx:
                mx = x[i, j]
        if mx == -np.inf:
            continue  # fully masked row stays zero
        s = 0.0
        for j in range(m):
            e = math.exp(x[i, j] - mx)
            out[i, j] = e
            s += e
        for j in range(m):
            out[i, j] /= s
    return out


@njit(cache=True)
def _softmax_backward_nb(y, dy):
    n, m = y.shape
    out = np.empty_like(y)
    for i in range(n):
        dot = 0.0
        for j in range(m):
            dot += dy[i, j] * y[i, j]
        for j in range(m):
            out[i, j] = y[i, j] * (dy[i, j] - dot)
    return out


# -- dispatch -----------------------------------------------------------------

def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


if USE_NUMBA:
    def mish_forward(x):
        return _mish_forward_nb(_c(x))

    def mish_backward(x, dy):
        return _mish_backward_nb(_c(x), _c(dy))

    def layer_norm_forward(x, gain, bias, eps):
        return _layer_norm_forward_nb(_c(x), _c(gain), _c(bias), eps)

    def layer_norm_backward(dy, xhat, inv, gain):
        return _layer_norm_backward_nb(_c(dy), _c(xhat), _c(inv), _c(gain))

    def softmax_forward(x):
        return _softmax_forward_nb(_c(x))

    def softmax_backward(y, dy):
        return _softmax_backward_nb(_c(y), _c(dy))
else:
    mish_forward = mish_forward_np
    mish_backward = mish_backward_np
    layer_norm_forward = layer_norm_forward_np
    layer_norm_backward = layer_norm_backward_np
    softmax_forward = softmax_forward_np
    softmax_backward = softmax_backward_np


NUMBA_KERNELS = {
    "mish_forward": _mish_forward_nb,
    "mish_backward": _mish_backward_nb,
    "layer_norm_forward": _layer_norm_forward_nb,
    "layer_norm_backward": _layer_norm_backward_nb,
    "softmax_forward": _softmax_forward_nb,
    "softmax_backward": _softmax_backward_nb,
}
NUMPY_KERNELS = {
    "mish_forward": mish_forward_np,
    "mish_backward": mish_backward_np,
    "layer_norm_forward": layer_norm_forward_np,
    "layer_norm_backward": layer_norm_backward_np,
    "softmax_forward": softmax_forward_np,
    "softmax_backward": softmax_backward_np,
}


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
