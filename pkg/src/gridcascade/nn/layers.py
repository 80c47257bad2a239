"""Layers of the dual encoder: masked multi-head attention, pre-norm encoder block, masked loss."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError, ValidationError
from .tensor import Tensor, add, gelu, layer_norm, matmul, mul, reshape, softmax, transpose

MASK_MODES = ("multiplicative", "additive")


@dataclass
class AttentionOutput:
    context: Tensor  # (..., N, d)
    weights: Tensor  # (..., h, N, N), masked
    pre_mask: np.ndarray | None = None  # softmax over all keys, before the key mask


def _split_heads(x: Tensor, heads: int) -> Tensor:
    *lead, n, d = x.shape
    x = reshape(x, (*lead, n, heads, d // heads))
    nd = x.data.ndim
    return transpose(x, (*range(nd - 3), nd - 2, nd - 3, nd - 1))


def _merge_heads(x: Tensor) -> Tensor:
    *lead, h, n, dk = x.shape
    nd = x.data.ndim
    x = transpose(x, (*range(nd - 3), nd - 2, nd - 3, nd - 1))
    return reshape(x, (*lead, n, h * dk))


def masked_attention(Q: Tensor, K: Tensor, V: Tensor, inpM, heads: int, mode: str = "multiplicative") -> AttentionOutput:
    """Scaled dot-product attention restricted to failed keys.

    In the default ``multiplicative`` mode the softmax runs over every key and
    the resulting weights are multiplied by ``inpM`` along the key axis, so alive
    keys still take denominator mass but receive exactly zero weight. The
    ``additive`` mode is the conventional ``-inf`` pre-softmax mask.
    """
    if not (Q.shape == K.shape == V.shape):
        raise ShapeError(f"Q, K, V shapes differ: {Q.shape}, {K.shape}, {V.shape}")
    *lead, n, d = Q.shape
    if d % heads:
        raise ShapeError(f"model width {d} not divisible by {heads} heads")
    mask = np.asarray(inpM)
    if mask.shape != (*lead, n):
        raise ShapeError(f"mask shape {mask.shape} does not match {(*lead, n)}")
    if mode not in MASK_MODES:
        raise ValidationError(f"unknown mask mode {mode!r}")
    dk = d // heads
    q, k, v = (_split_heads(t, heads) for t in (Q, K, V))
    scores = mul(matmul(q, transpose(k, (*range(k.data.ndim - 2), k.data.ndim - 1, k.data.ndim - 2))), 1.0 / math.sqrt(dk))
    key_mask = mask[..., None, None, :].astype(Q.dtype)
    if mode == "multiplicative":
        probs = softmax(scores, axis=-1)
    else:
        probs = softmax(add(scores, (key_mask - 1.0) * 1e9), axis=-1)
    weights = mul(probs, key_mask)
    return AttentionOutput(_merge_heads(matmul(weights, v)), weights, probs.data)


def init_encoder_layer(rng: np.random.Generator, d_model: int, d_ff: int, dtype=np.float64) -> dict[str, Tensor]:
    def glorot(fan_in, fan_out):
        lim = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-lim, lim, size=(fan_in, fan_out))

    raw = {
        "ln1_g": np.ones(d_model),
        "ln1_b": np.zeros(d_model),
        "wq": glorot(d_model, d_model),
        "bq": np.zeros(d_model),
        "wk": glorot(d_model, d_model),
        "bk": np.zeros(d_model),
        "wv": glorot(d_model, d_model),
        "bv": np.zeros(d_model),
        "wo": glorot(d_model, d_model),
        "bo": np.zeros(d_model),
        "ln2_g": np.ones(d_model),
        "ln2_b": np.zeros(d_model),
        "w1": glorot(d_model, d_ff),
        "b1": np.zeros(d_ff),
        "w2": glorot(d_ff, d_model),
        "b2": np.zeros(d_model),
    }
    return {k: Tensor(v.astype(dtype), requires_grad=True) for k, v in raw.items()}


def pre_ln_encoder_layer(x: Tensor, inpM, p: dict[str, Tensor], heads: int, mode: str = "multiplicative"):
    """``x + MHA(LN(x))`` followed by ``+ FF(LN(.))``; returns the output and the attention."""
    h = layer_norm(x, p["ln1_g"], p["ln1_b"])
    att = masked_attention(
        add(matmul(h, p["wq"]), p["bq"]),
        add(matmul(h, p["wk"]), p["bk"]),
        add(matmul(h, p["wv"]), p["bv"]),
        inpM,
        heads,
        mode,
    )
    x = add(x, add(matmul(att.context, p["wo"]), p["bo"]))
    h = layer_norm(x, p["ln2_g"], p["ln2_b"])
    ff = add(matmul(gelu(add(matmul(h, p["w1"]), p["b1"])), p["w2"]), p["b2"])
    return add(x, ff), att


def one_hot(labels, n_classes: int, dtype=np.float64) -> np.ndarray:
    labels = np.asarray(labels)
    out = np.zeros((*labels.shape, n_classes), dtype=dtype)
    np.put_along_axis(out, labels[..., None], 1.0, axis=-1)
    return out


def masked_cross_entropy(P: Tensor, Y, tarM, row_tol: float = 1e-6) -> Tensor:
    """``-sum_i tarM_i sum_g Y_ig log P_ig``; rows with ``tarM_i = 0`` get exactly zero gradient."""
    Y = np.asarray(Y)
    m = np.asarray(tarM)
    if Y.shape != P.shape or m.shape != P.shape[:-1]:
        raise ShapeError(f"P {P.shape}, Y {Y.shape}, tarM {m.shape} are not aligned")
    dev = np.abs(P.data.sum(axis=-1) - 1.0)
    if dev.size and dev.max() > row_tol:
        raise ValidationError(f"probability rows not normalised (max deviation {dev.max():.3g})")
    weight = (Y * m[..., None]).astype(P.dtype)
    active = weight != 0
    tiny = np.finfo(P.dtype).tiny
    safe = np.maximum(P.data, tiny)
    loss = -(weight[active] * np.log(safe[active])).sum(dtype=P.dtype)

    def backward(g):
        grad = np.zeros_like(P.data)
        grad[active] = -weight[active] / safe[active]
        return (g * grad,)

    out = Tensor(np.asarray(loss, dtype=P.dtype))
    if P.requires_grad:
        out.requires_grad = True
        out._parents = (P,)
        out._backward = backward
    return out

