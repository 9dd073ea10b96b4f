"""A small post-LayerNorm transformer encoder with two classification heads.

Everything is float64 numpy with hand-written backward passes, so the
whole model can be checked against finite differences.

Parameters live in a flat ``dict[str, ndarray]``::

    tok_emb, pos_emb, emb_ln_g, emb_ln_b
    layers.{i}.{wq,bq,wk,bk,wv,bv,wo,bo,ln1_g,ln1_b,w1,b1,w2,b2,ln2_g,ln2_b}
    pool_w, pool_b                 (standard_pooled head only)
    cls_w, cls_b

Hidden states are indexed ``0..num_layers``; state 0 is the embedding output.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from .errors import ConfigError, ContractError, InputError

STANDARD_POOLED = "standard_pooled"
MEAN_LAST_TWO = "mean_last_two"
HEAD_VARIANTS = (STANDARD_POOLED, MEAN_LAST_TWO)

LN_EPS = 1e-12
INIT_SCALE = 0.02

TRAIN = "train"
EVAL = "eval"


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    num_layers: int = 2
    hidden_dim: int = 32
    num_heads: int = 2
    ff_dim: int = 0  # 0 means 4 * hidden_dim
    max_seq_len: int = 64
    dropout_p: float = 0.1
    head_variant: str = MEAN_LAST_TWO
    head_dropout_p: float | None = None  # None: share dropout_p

    def __post_init__(self):
        if self.ff_dim == 0:
            object.__setattr__(self, "ff_dim", 4 * self.hidden_dim)
        self.validate()

    def validate(self):
        for name in ("vocab_size", "num_layers", "hidden_dim", "num_heads", "ff_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.hidden_dim % self.num_heads:
            raise ConfigError(
                f"hidden_dim {self.hidden_dim} is not divisible by num_heads {self.num_heads}"
            )
        if self.max_seq_len < 2:
            raise ConfigError("max_seq_len must be at least 2")
        if self.head_variant not in HEAD_VARIANTS:
            raise ConfigError(f"unknown head_variant {self.head_variant!r}")
        if self.head_variant == MEAN_LAST_TWO and self.num_layers < 2:
            raise ConfigError("mean_last_two head needs num_layers >= 2")
        for p in (self.dropout_p, self.head_p):
            if not 0.0 <= p < 1.0:
                raise ConfigError(f"dropout probability must be in [0, 1), got {p}")

    @property
    def head_p(self):
        return self.dropout_p if self.head_dropout_p is None else self.head_dropout_p

    @property
    def head_dim(self):
        return self.hidden_dim // self.num_heads


def param_shapes(config: EncoderConfig) -> dict:
    H, F = config.hidden_dim, config.ff_dim
    shapes = {
        "tok_emb": (config.vocab_size, H),
        "pos_emb": (config.max_seq_len, H),
        "emb_ln_g": (H,),
        "emb_ln_b": (H,),
    }
    for i in range(config.num_layers):
        p = f"layers.{i}."
        shapes.update({
            p + "wq": (H, H), p + "bq": (H,),
            p + "wk": (H, H), p + "bk": (H,),
            p + "wv": (H, H), p + "bv": (H,),
            p + "wo": (H, H), p + "bo": (H,),
            p + "ln1_g": (H,), p + "ln1_b": (H,),
            p + "w1": (H, F), p + "b1": (F,),
            p + "w2": (F, H), p + "b2": (H,),
            p + "ln2_g": (H,), p + "ln2_b": (H,),
        })
    if config.head_variant == STANDARD_POOLED:
        shapes["pool_w"] = (H, H)
        shapes["pool_b"] = (H,)
    shapes["cls_w"] = (H, 2)
    shapes["cls_b"] = (2,)
    return shapes


def init_weights(config: EncoderConfig, seed: int) -> dict:
    """N(0, 0.02) matrices, zero biases, unit LayerNorm scales."""
    config.validate()
    rng = np.random.default_rng(seed)
    weights = {}
    for name, shape in param_shapes(config).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf.endswith("_g"):
            weights[name] = np.ones(shape)
        elif len(shape) == 1:
            weights[name] = np.zeros(shape)
        else:
            weights[name] = rng.normal(0.0, INIT_SCALE, size=shape)
    return weights


def check_weights(weights: dict, config: EncoderConfig):
    shapes = param_shapes(config)
    missing = sorted(set(shapes) - set(weights))
    extra = sorted(set(weights) - set(shapes))
    if missing or extra:
        raise ConfigError(f"weights do not match config (missing {missing}, unexpected {extra})")
    for name, shape in shapes.items():
        if weights[name].shape != shape:
            raise ConfigError(f"{name}: shape {weights[name].shape}, config expects {shape}")


# --- primitives --------------------------------------------------------------

def softmax(x, axis=-1):
    m = np.max(x, axis=axis, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=axis, keepdims=True)


def gelu(x):
    return x * ndtr(x)


def gelu_grad(x):
    return ndtr(x) + x * np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def layer_norm(x, g, b):
    mu = x.mean(-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(-1, keepdims=True) + LN_EPS)
    xhat = xc * inv
    return xhat * g + b, (xhat, inv)


def _layer_norm_backward(dy, g, cache):
    xhat, inv = cache
    axes = tuple(range(dy.ndim - 1))
    dg = (dy * xhat).sum(axis=axes)
    db = dy.sum(axis=axes)
    dxhat = dy * g
    dx = inv * (dxhat - dxhat.mean(-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(-1, keepdims=True))
    return dx, dg, db


def _dropout_mask(shape, p, mode, rng):
    if mode != TRAIN or p == 0.0:
        return None
    if rng is None:
        raise ContractError("train-mode dropout needs a random generator")
    return (rng.random(shape) >= p) / (1.0 - p)


def apply_dropout(v, p, mode=TRAIN, rng=None):
    """Inverted dropout: identity in eval mode, zero with prob ``p`` and rescale otherwise."""
    if not 0.0 <= p < 1.0:
        raise InputError(f"dropout probability must be in [0, 1), got {p}")
    mask = _dropout_mask(np.shape(v), p, mode, rng)
    return np.array(v, dtype=float) if mask is None else v * mask


# --- heads ---------------------------------------------------------------------

def pool_standard(states, weights):
    """tanh(W h + b) on the last layer's first-position vector.

    ``states`` is ``(num_layers + 1, seq_len, hidden)``.
    """
    states = np.asarray(states)
    if states.shape[1] == 0:
        raise ContractError("cannot pool an empty sequence")
    return np.tanh(states[-1, 0] @ weights["pool_w"] + weights["pool_b"])


def pool_mean_last_two(states, mask=None):
    """Mean over (unpadded) positions of the average of the last two layers."""
    states = np.asarray(states)
    if states.shape[0] < 3:
        raise ConfigError("mean_last_two pooling needs at least two encoder layers")
    if states.shape[1] == 0:
        raise ContractError("cannot pool an empty sequence")
    m = 0.5 * (states[-1] + states[-2])
    if mask is None:
        return m.mean(axis=0)
    mask = np.asarray(mask, dtype=float)
    return (m * mask[:, None]).sum(axis=0) / mask.sum()


def classify(pooled, weights):
    pooled = np.asarray(pooled)
    if pooled.shape[-1] != weights["cls_w"].shape[0]:
        raise ContractError(
            f"pooled vector has {pooled.shape[-1]} dims, classifier expects {weights['cls_w'].shape[0]}"
        )
    return pooled @ weights["cls_w"] + weights["cls_b"]


# --- batched forward / backward ----------------------------------------------

def _split_heads(x, nh):
    B, T, H = x.shape
    return x.reshape(B, T, nh, H // nh).transpose(0, 2, 1, 3)


def _merge_heads(x):
    B, nh, T, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(B, T, nh * dh)


def forward_batch(ids, mask, weights, config: EncoderConfig, mode=EVAL, rng=None):
    """Run the encoder and head on a padded batch.

    ``ids`` and ``mask`` are ``(batch, seq)``; mask is 1 for real tokens.
    Returns ``(hidden_states, logits, cache)`` where hidden_states is a list of
    ``num_layers + 1`` arrays of shape ``(batch, seq, hidden)``.
    """
    ids = np.asarray(ids, dtype=np.int64)
    mask = np.asarray(mask, dtype=float)
    B, T = ids.shape
    if T > config.max_seq_len:
        raise InputError(f"sequence length {T} exceeds max_seq_len {config.max_seq_len}")
    if T == 0:
        raise ContractError("empty sequence")
    if ids.min() < 0 or ids.max() >= config.vocab_size:
        raise InputError("token id outside the vocabulary")
    p = config.dropout_p
    nh = config.num_heads
    scale = 1.0 / math.sqrt(config.head_dim)
    attn_bias = np.where(mask > 0, 0.0, -np.inf)[:, None, None, :]

    emb = weights["tok_emb"][ids] + weights["pos_emb"][:T]
    h, ln0 = layer_norm(emb, weights["emb_ln_g"], weights["emb_ln_b"])
    d0 = _dropout_mask(h.shape, p, mode, rng)
    if d0 is not None:
        h = h * d0
    states = [h]
    cache = {"ids": ids, "mask": mask, "ln0": ln0, "d0": d0, "layers": []}

    for i in range(config.num_layers):
        w = _layer_params(weights, i)
        x = states[-1]
        q = _split_heads(x @ w["wq"] + w["bq"], nh)
        k = _split_heads(x @ w["wk"] + w["bk"], nh)
        v = _split_heads(x @ w["wv"] + w["bv"], nh)
        probs = softmax(q @ k.transpose(0, 1, 3, 2) * scale + attn_bias)
        ctx = _merge_heads(probs @ v)
        a = ctx @ w["wo"] + w["bo"]
        da_mask = _dropout_mask(a.shape, p, mode, rng)
        if da_mask is not None:
            a = a * da_mask
        y, ln1 = layer_norm(x + a, w["ln1_g"], w["ln1_b"])
        pre = y @ w["w1"] + w["b1"]
        act = gelu(pre)
        f = act @ w["w2"] + w["b2"]
        df_mask = _dropout_mask(f.shape, p, mode, rng)
        if df_mask is not None:
            f = f * df_mask
        z, ln2 = layer_norm(y + f, w["ln2_g"], w["ln2_b"])
        states.append(z)
        cache["layers"].append({
            "x": x, "q": q, "k": k, "v": v, "probs": probs, "ctx": ctx, "da": da_mask,
            "ln1": ln1, "y": y, "pre": pre, "act": act, "df": df_mask, "ln2": ln2,
        })

    if config.head_variant == STANDARD_POOLED:
        first = states[-1][:, 0, :]
        pooled = np.tanh(first @ weights["pool_w"] + weights["pool_b"])
        cache["first"] = first
    else:
        counts = mask.sum(axis=1, keepdims=True)
        avg = 0.5 * (states[-1] + states[-2])
        pooled = (avg * mask[:, :, None]).sum(axis=1) / counts
        cache["counts"] = counts
    cache["pooled"] = pooled
    dh_mask = _dropout_mask(pooled.shape, config.head_p, mode, rng)
    dropped = pooled if dh_mask is None else pooled * dh_mask
    cache["dh"] = dh_mask
    cache["dropped"] = dropped
    logits = dropped @ weights["cls_w"] + weights["cls_b"]
    return states, logits, cache


def _layer_params(weights, i):
    p = f"layers.{i}."
    return {k[len(p):]: v for k, v in weights.items() if k.startswith(p)}


def backward_batch(dlogits, weights, config: EncoderConfig, cache) -> dict:
    """Gradients of a scalar loss w.r.t. every parameter, given dL/dlogits."""
    grads = {name: np.zeros_like(val) for name, val in weights.items()}
    nh = config.num_heads
    scale = 1.0 / math.sqrt(config.head_dim)
    mask = cache["mask"]
    L = config.num_layers

    grads["cls_w"] = cache["dropped"].T @ dlogits
    grads["cls_b"] = dlogits.sum(axis=0)
    dpooled = dlogits @ weights["cls_w"].T
    if cache["dh"] is not None:
        dpooled = dpooled * cache["dh"]

    dstates = [None] * (L + 1)
    B, T = mask.shape
    H = config.hidden_dim
    if config.head_variant == STANDARD_POOLED:
        pooled = cache["pooled"]
        dpre = dpooled * (1.0 - pooled * pooled)
        grads["pool_w"] = cache["first"].T @ dpre
        grads["pool_b"] = dpre.sum(axis=0)
        dlast = np.zeros((B, T, H))
        dlast[:, 0, :] = dpre @ weights["pool_w"].T
        dstates[L] = dlast
    else:
        davg = dpooled[:, None, :] * (mask / cache["counts"])[:, :, None]
        dstates[L] = 0.5 * davg
        dstates[L - 1] = 0.5 * davg

    for i in range(L - 1, -1, -1):
        c = cache["layers"][i]
        p = f"layers.{i}."
        dz = dstates[i + 1]
        dsum2, grads[p + "ln2_g"], grads[p + "ln2_b"] = _layer_norm_backward(
            dz, weights[p + "ln2_g"], c["ln2"])
        dy = dsum2
        df = dsum2 if c["df"] is None else dsum2 * c["df"]
        grads[p + "w2"] = np.einsum("btf,bth->fh", c["act"], df)
        grads[p + "b2"] = df.sum(axis=(0, 1))
        dact = df @ weights[p + "w2"].T
        dpre = dact * gelu_grad(c["pre"])
        grads[p + "w1"] = np.einsum("bth,btf->hf", c["y"], dpre)
        grads[p + "b1"] = dpre.sum(axis=(0, 1))
        dy = dy + dpre @ weights[p + "w1"].T

        dsum1, grads[p + "ln1_g"], grads[p + "ln1_b"] = _layer_norm_backward(
            dy, weights[p + "ln1_g"], c["ln1"])
        dx = dsum1
        da = dsum1 if c["da"] is None else dsum1 * c["da"]
        grads[p + "wo"] = np.einsum("bth,btk->hk", c["ctx"], da)
        grads[p + "bo"] = da.sum(axis=(0, 1))
        dctx = _split_heads(da @ weights[p + "wo"].T, nh)
        probs = c["probs"]
        dprobs = dctx @ c["v"].transpose(0, 1, 3, 2)
        dv = probs.transpose(0, 1, 3, 2) @ dctx
        dscores = probs * (dprobs - (dprobs * probs).sum(-1, keepdims=True)) * scale
        dq = dscores @ c["k"]
        dk = dscores.transpose(0, 1, 3, 2) @ c["q"]
        x = c["x"]
        for name, dproj in (("q", dq), ("k", dk), ("v", dv)):
            dm = _merge_heads(dproj)
            grads[p + "w" + name] = np.einsum("bth,btk->hk", x, dm)
            grads[p + "b" + name] = dm.sum(axis=(0, 1))
            dx = dx + dm @ weights[p + "w" + name].T
        dstates[i] = dx if dstates[i] is None else dstates[i] + dx

    dh0 = dstates[0]
    if cache["d0"] is not None:
        dh0 = dh0 * cache["d0"]
    demb, grads["emb_ln_g"], grads["emb_ln_b"] = _layer_norm_backward(
        dh0, weights["emb_ln_g"], cache["ln0"])
    grads["pos_emb"][:T] = demb.sum(axis=0)
    np.add.at(grads["tok_emb"], cache["ids"], demb)
    return grads


def forward(ids, weights, config: EncoderConfig, mode=EVAL, rng=None):
    """Single-sequence convenience wrapper.

    Returns ``(hidden_states, logits)`` with hidden_states shaped
    ``(num_layers + 1, seq_len, hidden)`` and logits ``(negative, positive)``.
    """
    ids = np.asarray(ids, dtype=np.int64)[None, :]
    states, logits, _ = forward_batch(ids, np.ones(ids.shape), weights, config, mode, rng)
    return np.stack([s[0] for s in states]), logits[0]


def pad_batch(sequences, pad_id):
    T = max(len(s) for s in sequences)
    ids = np.full((len(sequences), T), pad_id, dtype=np.int64)
    mask = np.zeros((len(sequences), T))
    for i, s in enumerate(sequences):
        ids[i, :len(s)] = s
        mask[i, :len(s)] = 1.0
    return ids, mask


def predict_logits(sequences, weights, config: EncoderConfig, pad_id: int, batch_size: int = 64):
    """Eval-mode logits for a list of id sequences."""
    out = np.zeros((len(sequences), 2))
    for start in range(0, len(sequences), batch_size):
        chunk = sequences[start:start + batch_size]
        ids, mask = pad_batch(chunk, pad_id)
        _, logits, _ = forward_batch(ids, mask, weights, config, EVAL)
        out[start:start + len(chunk)] = logits
    return out


# --- checkpoint ------------------------------------------------------------------

MAGIC = b"CWCKPT01"


def save_checkpoint(path, weights: dict, config: EncoderConfig):
    """Config JSON, then (name, shape, little-endian float64 data) per tensor."""
    check_weights(weights, config)
    blob = json.dumps(asdict(config), sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", len(blob)), blob, struct.pack("<I", len(weights))]
    for name in param_shapes(config):
        arr = np.ascontiguousarray(weights[name], dtype="<f8")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path):
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise InputError(f"{path}: not a checkpoint file")
    pos = len(MAGIC)

    def take(fmt):
        nonlocal pos
        if pos + struct.calcsize(fmt) > len(data):
            raise InputError(f"{path}: checkpoint is truncated")
        vals = struct.unpack_from(fmt, data, pos)
        pos += struct.calcsize(fmt)
        return vals

    (n,) = take("<I")
    config = EncoderConfig(**json.loads(data[pos:pos + n].decode("utf-8")))
    pos += n
    (count,) = take("<I")
    expected = param_shapes(config)
    weights = {}
    for _ in range(count):
        (ln,) = take("<H")
        name = data[pos:pos + ln].decode("utf-8")
        pos += ln
        (ndim,) = take("<B")
        shape = take(f"<{ndim}I")
        if name not in expected:
            raise InputError(f"{path}: unexpected tensor {name!r}")
        if tuple(shape) != expected[name]:
            raise InputError(f"{path}: {name} has shape {shape}, config expects {expected[name]}")
        size = int(np.prod(shape)) * 8
        if pos + size > len(data):
            raise InputError(f"{path}: checkpoint is truncated")
        weights[name] = np.frombuffer(data[pos:pos + size], dtype="<f8").reshape(shape).astype(float)
        pos += size
    if pos != len(data):
        raise InputError(f"{path}: trailing bytes after last tensor")
    check_weights(weights, config)
    return config, weights
