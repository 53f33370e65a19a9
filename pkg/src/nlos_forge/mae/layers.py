"""Transformer building blocks with explicit forward/backward passes.

Every forward returns (output, cache); the matching backward consumes the
cache and returns input gradients plus parameter gradients accumulated into
a dict keyed by parameter name.  Pre-norm blocks: x + Attn(LN(x)) followed
by x + MLP(LN(x)), GELU activation, 4x hidden MLP.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

# Python-float constants: NumPy scalars would silently upcast f32 activations.
LN_EPS = 1e-6
_SQRT2 = float(np.sqrt(2.0))
_INV_SQRT_2PI = float(1.0 / np.sqrt(2.0 * np.pi))


# ---------------------------------------------------------------------------
# Primitive layers
# ---------------------------------------------------------------------------

def linear_fwd(x, w, b):
    return x @ w + b, (x, w)


def linear_bwd(dy, cache, grads, w_name, b_name):
    x, w = cache
    grads[w_name] += x.T @ dy
    grads[b_name] += dy.sum(axis=0)
    return dy @ w.T


def layernorm_fwd(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mu) * inv
    return g * xhat + b, (xhat, inv, g)


def layernorm_bwd(dy, cache, grads, prefix):
    xhat, inv, g = cache
    grads[prefix + ".g"] += (dy * xhat).sum(axis=0)
    grads[prefix + ".b"] += dy.sum(axis=0)
    dxhat = dy * g
    mean_dxhat = dxhat.mean(axis=-1, keepdims=True)
    mean_dxhat_xhat = (dxhat * xhat).mean(axis=-1, keepdims=True)
    return inv * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat)


def gelu_fwd(x):
    cdf = 0.5 * (1.0 + erf(x / _SQRT2))
    return x * cdf, (x, cdf)


def gelu_bwd(dy, cache):
    x, cdf = cache
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return dy * (cdf + x * pdf)


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_bwd(dy, probs):
    return probs * (dy - (dy * probs).sum(axis=-1, keepdims=True))


# ---------------------------------------------------------------------------
# Multi-head self-attention
# ---------------------------------------------------------------------------

def attention_fwd(x, params, prefix, n_heads):
    """x: (S, D) -> (S, D).  Caches per-head tensors for the backward pass."""
    p = lambda k: params[f"{prefix}.{k}"]
    s, d = x.shape
    dh = d // n_heads
    scale = 1.0 / float(np.sqrt(dh))

    def split(t):  # (S, D) -> (H, S, Dh)
        return t.reshape(s, n_heads, dh).transpose(1, 0, 2)

    q = split(x @ p("wq") + p("bq"))
    k = split(x @ p("wk") + p("bk"))
    v = split(x @ p("wv") + p("bv"))
    probs = softmax((q @ k.transpose(0, 2, 1)) * scale)
    ctx = (probs @ v).transpose(1, 0, 2).reshape(s, d)
    out = ctx @ p("wo") + p("bo")
    return out, (x, q, k, v, probs, ctx, scale)


def attention_bwd(dy, cache, params, grads, prefix, n_heads):
    x, q, k, v, probs, ctx, scale = cache
    s, d = x.shape
    dh = d // n_heads
    p = lambda key: params[f"{prefix}.{key}"]

    grads[f"{prefix}.wo"] += ctx.T @ dy
    grads[f"{prefix}.bo"] += dy.sum(axis=0)
    dctx = (dy @ p("wo").T).reshape(s, n_heads, dh).transpose(1, 0, 2)

    dprobs = dctx @ v.transpose(0, 2, 1)
    dv = probs.transpose(0, 2, 1) @ dctx
    dscores = softmax_bwd(dprobs, probs) * scale
    dq = dscores @ k
    dk = dscores.transpose(0, 2, 1) @ q

    def merge(t):  # (H, S, Dh) -> (S, D)
        return t.transpose(1, 0, 2).reshape(s, d)

    dx = np.zeros_like(x)
    for name, dt in (("q", dq), ("k", dk), ("v", dv)):
        flat = merge(dt)
        grads[f"{prefix}.w{name}"] += x.T @ flat
        grads[f"{prefix}.b{name}"] += flat.sum(axis=0)
        dx += flat @ p(f"w{name}").T
    return dx


# ---------------------------------------------------------------------------
# Transformer block (pre-norm)
# ---------------------------------------------------------------------------

def block_fwd(x, params, prefix, n_heads):
    h1, ln1_cache = layernorm_fwd(x, params[f"{prefix}.ln1.g"], params[f"{prefix}.ln1.b"])
    attn_out, attn_cache = attention_fwd(h1, params, f"{prefix}.attn", n_heads)
    x2 = x + attn_out
    h2, ln2_cache = layernorm_fwd(x2, params[f"{prefix}.ln2.g"], params[f"{prefix}.ln2.b"])
    m1, fc1_cache = linear_fwd(h2, params[f"{prefix}.mlp.w1"], params[f"{prefix}.mlp.b1"])
    a1, gelu_cache = gelu_fwd(m1)
    m2, fc2_cache = linear_fwd(a1, params[f"{prefix}.mlp.w2"], params[f"{prefix}.mlp.b2"])
    return x2 + m2, (ln1_cache, attn_cache, ln2_cache, fc1_cache, gelu_cache, fc2_cache)


def block_bwd(dy, cache, params, grads, prefix, n_heads):
    ln1_cache, attn_cache, ln2_cache, fc1_cache, gelu_cache, fc2_cache = cache
    da1 = linear_bwd(dy, fc2_cache, grads, f"{prefix}.mlp.w2", f"{prefix}.mlp.b2")
    dm1 = gelu_bwd(da1, gelu_cache)
    dh2 = linear_bwd(dm1, fc1_cache, grads, f"{prefix}.mlp.w1", f"{prefix}.mlp.b1")
    dx2 = dy + layernorm_bwd(dh2, ln2_cache, grads, f"{prefix}.ln2")
    dh1 = attention_bwd(dx2, attn_cache, params, grads, f"{prefix}.attn", n_heads)
    return dx2 + layernorm_bwd(dh1, ln1_cache, grads, f"{prefix}.ln1")


# ---------------------------------------------------------------------------
# Fixed 2D sin-cos positional embeddings
# ---------------------------------------------------------------------------

def sincos_position_embedding(ny: int, nx: int, width: int) -> np.ndarray:
    """(ny*nx, width) embedding, row-major over the grid; not learned.

    Half the channels encode the row coordinate and half the column, each
    split into sine and cosine banks with geometric frequencies.
    """
    if width % 4:
        raise ValueError("sin-cos embedding width must be divisible by 4")

    def encode_1d(pos, dim):
        omega = 1.0 / 10000.0 ** (np.arange(dim // 2) / (dim / 2.0))
        angles = np.outer(pos, omega)
        return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)

    iy, ix = np.mgrid[0:ny, 0:nx]
    emb_y = encode_1d(iy.reshape(-1), width // 2)
    emb_x = encode_1d(ix.reshape(-1), width // 2)
    return np.concatenate([emb_y, emb_x], axis=1)
