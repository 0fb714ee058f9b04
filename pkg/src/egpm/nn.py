"""Layers and the Adam optimizer on top of the tensor engine.

Parameter discovery walks module attributes in insertion order, so the
name -> array mapping is deterministic and checkpoints round-trip exactly.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor
from .errors import NumericError


class Module:
    """Minimal container: any Tensor attribute with requires_grad is a param."""

    def named_params(self, prefix=""):
        out = {}
        for name, val in vars(self).items():
            key = f"{prefix}{name}"
            if isinstance(val, Tensor) and val.requires_grad:
                out[key] = val
            elif isinstance(val, Module):
                out.update(val.named_params(key + "."))
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        out.update(item.named_params(f"{key}.{i}."))
                    elif isinstance(item, Tensor) and item.requires_grad:
                        out[f"{key}.{i}"] = item
        return out

    def params(self):
        return list(self.named_params().values())

    def zero_grad(self):
        for p in self.params():
            p.zero_grad()

    def freeze(self):
        for p in self.params():
            p.requires_grad = False
        return self

    def state_arrays(self):
        return {k: np.array(v.data, copy=True) for k, v in self._all_tensors().items()}

    def _all_tensors(self, prefix=""):
        """All Tensor attributes, trainable or frozen, for checkpointing."""
        out = {}
        for name, val in vars(self).items():
            key = f"{prefix}{name}"
            if isinstance(val, Tensor):
                out[key] = val
            elif isinstance(val, Module):
                out.update(val._all_tensors(key + "."))
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        out.update(item._all_tensors(f"{key}.{i}."))
                    elif isinstance(item, Tensor):
                        out[f"{key}.{i}"] = item
        return out

    def load_state_arrays(self, arrays, prefix=""):
        for key, t in self._all_tensors(prefix).items():
            if key not in arrays:
                raise KeyError(f"missing parameter {key}")
            arr = np.asarray(arrays[key], dtype=t.data.dtype).reshape(t.data.shape)
            t.data = arr
        return self


def _param(rng, shape, scale):
    return Tensor(rng.standard_normal(shape).astype(np.float32) * scale, requires_grad=True)


class Linear(Module):
    def __init__(self, d_in, d_out, rng, bias=True, scale=None):
        if scale is None:
            scale = 1.0 / np.sqrt(d_in)
        self.weight = _param(rng, (d_in, d_out), scale)
        self.bias = Tensor(np.zeros(d_out, dtype=np.float32), requires_grad=True) if bias else None

    def __call__(self, x):
        y = T.matmul(x, self.weight)
        return T.add(y, self.bias) if self.bias is not None else y


class LayerNorm(Module):
    def __init__(self, dim, eps=1e-5):
        self.gain = Tensor(np.ones(dim, dtype=np.float32), requires_grad=True)
        self.bias = Tensor(np.zeros(dim, dtype=np.float32), requires_grad=True)
        self.eps = eps

    def __call__(self, x):
        return T.layer_norm(x, self.gain, self.bias, self.eps)


class MLP(Module):
    """Stack of Linear layers with an activation between them."""

    def __init__(self, dims, rng, act=T.silu, final_act=None):
        self.layers = [Linear(dims[i], dims[i + 1], rng) for i in range(len(dims) - 1)]
        self.act = act
        self.final_act = final_act

    def __call__(self, x):
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = self.act(x)
            elif self.final_act is not None:
                x = self.final_act(x)
        return x


class SelfAttention(Module):
    """Multi-head self-attention over [B, S, d] with an optional bool mask.

    mask[i, j] True means position i may attend to j. Masked weights are
    exactly zero (see tensor.masked_softmax), which is what makes the
    bit-level causality tests possible.
    """

    def __init__(self, d_model, n_heads, rng):
        assert d_model % n_heads == 0
        self.d_model = d_model
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.wq = Linear(d_model, d_model, rng)
        self.wk = Linear(d_model, d_model, rng)
        self.wv = Linear(d_model, d_model, rng)
        self.wo = Linear(d_model, d_model, rng)

    def __call__(self, x, mask=None):
        b, s, d = x.shape
        def split(t):
            return T.transpose(T.reshape(t, (b, s, self.n_heads, self.d_head)), (0, 2, 1, 3))
        q, k, v = split(self.wq(x)), split(self.wk(x)), split(self.wv(x))
        scores = T.mul(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(self.d_head))
        if mask is not None:
            attn = T.masked_softmax(scores, mask[None, None, :, :], axis=-1)
        else:
            attn = T.softmax(scores, axis=-1)
        ctx = T.matmul(attn, v)
        ctx = T.reshape(T.transpose(ctx, (0, 2, 1, 3)), (b, s, d))
        return self.wo(ctx)


class TransformerBlock(Module):
    """Pre-LN block: x + attn(ln(x)), then x + mlp(ln(x))."""

    def __init__(self, d_model, n_heads, rng, ff_mult=4):
        self.ln1 = LayerNorm(d_model)
        self.attn = SelfAttention(d_model, n_heads, rng)
        self.ln2 = LayerNorm(d_model)
        self.ff1 = Linear(d_model, ff_mult * d_model, rng)
        self.ff2 = Linear(ff_mult * d_model, d_model, rng)

    def __call__(self, x, mask=None):
        x = T.add(x, self.attn(self.ln1(x), mask))
        h = self.ff2(T.silu(self.ff1(self.ln2(x))))
        return T.add(x, h)


class CrossAttention(Module):
    """Single-layer cross-attention: queries from one stream, KV from another.

    Returns (output, weights). weights is the post-softmax matrix so tests
    and the fusion code can inspect exact zeros.
    """

    def __init__(self, d_q_in, d_kv_in, d_model, rng, n_heads=1):
        assert d_model % n_heads == 0
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.d_model = d_model
        self.wq = Linear(d_q_in, d_model, rng)
        self.wk = Linear(d_kv_in, d_model, rng)
        self.wv = Linear(d_kv_in, d_model, rng)
        self.wo = Linear(d_model, d_model, rng)

    def __call__(self, q_in, kv_in, mask=None):
        # q_in: [B, Q, dq], kv_in: [B, K, dkv], mask: bool [Q, K] or [B, Q, K]
        b, nq, _ = q_in.shape
        nk = kv_in.shape[1]
        def split(t, n):
            return T.transpose(T.reshape(t, (b, n, self.n_heads, self.d_head)), (0, 2, 1, 3))
        q = split(self.wq(q_in), nq)
        k = split(self.wk(kv_in), nk)
        v = split(self.wv(kv_in), nk)
        scores = T.mul(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(self.d_head))
        if mask is not None:
            m = np.asarray(mask, dtype=bool)
            if m.ndim == 2:
                m = m[None, None]
            else:
                m = m[:, None]
            attn = T.masked_softmax(scores, m, axis=-1)
        else:
            attn = T.softmax(scores, axis=-1)
        ctx = T.matmul(attn, v)
        ctx = T.reshape(T.transpose(ctx, (0, 2, 1, 3)), (b, nq, self.d_model))
        return self.wo(ctx), attn


class Conv2d(Module):
    def __init__(self, c_in, c_out, k, rng, stride=1, padding=0, bias=True, scale=None):
        if scale is None:
            scale = 1.0 / np.sqrt(c_in * k * k)
        self.weight = _param(rng, (c_out, c_in, k, k), scale)
        self.bias = Tensor(np.zeros(c_out, dtype=np.float32), requires_grad=True) if bias else None
        self.stride = stride
        self.padding = padding

    def __call__(self, x):
        return T.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class GroupNorm(Module):
    """Channel-group normalization for NCHW feature maps."""

    def __init__(self, groups, channels, eps=1e-5):
        assert channels % groups == 0
        self.groups = groups
        self.channels = channels
        self.eps = eps
        self.gain = Tensor(np.ones((1, channels, 1, 1), dtype=np.float32), requires_grad=True)
        self.bias = Tensor(np.zeros((1, channels, 1, 1), dtype=np.float32), requires_grad=True)

    def __call__(self, x):
        n, c, h, w = x.shape
        g = self.groups
        xg = T.reshape(x, (n, g, (c // g) * h * w))
        mu = T.tmean(xg, axis=-1, keepdims=True)
        xc = T.sub(xg, mu)
        var = T.tmean(T.mul(xc, xc), axis=-1, keepdims=True)
        y = T.div(xc, T.tsqrt(T.add(var, self.eps)))
        y = T.reshape(y, (n, c, h, w))
        return T.add(T.mul(y, self.gain), self.bias)


class Adam:
    """Adam with bias correction; state round-trips through checkpoints."""

    def __init__(self, named_params, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.named = dict(named_params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.named.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.named.items()}

    def zero_grad(self):
        for p in self.named.values():
            p.zero_grad()

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k, p in self.named.items():
            g = p.grad
            if g is None:
                continue
            if not np.isfinite(g).all():
                raise NumericError(f"non-finite gradient in {k}")
            m = self.m[k]
            v = self.v[k]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            p.data -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.data.dtype)

    def state_arrays(self, prefix="adam."):
        out = {f"{prefix}m.{k}": np.array(v, copy=True) for k, v in self.m.items()}
        out.update({f"{prefix}v.{k}": np.array(v, copy=True) for k, v in self.v.items()})
        return out

    def load_state_arrays(self, arrays, prefix="adam."):
        for k in self.m:
            self.m[k] = np.asarray(arrays[f"{prefix}m.{k}"], dtype=np.float32).reshape(self.m[k].shape)
            self.v[k] = np.asarray(arrays[f"{prefix}v.{k}"], dtype=np.float32).reshape(self.v[k].shape)
