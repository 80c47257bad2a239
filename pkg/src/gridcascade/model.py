"""Encoder-only dual model: embeddings, pre-norm encoder stack, per-line generation classifier."""
from __future__ import annotations

import hashlib
import json
import logging
import struct
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .dual import TrainingPair
from .errors import CheckpointError, ShapeError, ValidationError
from .nn.layers import init_encoder_layer, masked_cross_entropy, one_hot, pre_ln_encoder_layer
from .nn.optim import AdamHyper, AdamState, optimizer_step
from .nn.tensor import Tensor, add, concat, layer_norm, matmul, mul, softmax, take_rows

log = logging.getLogger(__name__)

PRECISIONS = {"f32": np.float32, "f64": np.float64}


@dataclass(frozen=True)
class ModelConfig:
    n_lines: int
    g_max: int = 20
    layers: int = 2
    heads: int = 4
    d_model: int = 64
    d_ff: int = 128
    batch_size: int = 32
    learning_rate: float = 1e-3
    epochs: int = 20
    seed: int = 0
    value_precision: str = "f32"
    mask_mode: str = "multiplicative"

    def __post_init__(self):
        problems = []
        if self.n_lines < 1:
            problems.append("n_lines must be >= 1")
        if self.d_model % 2:
            problems.append(f"d_model {self.d_model} must be even")
        if self.d_model % self.heads:
            problems.append(f"d_model {self.d_model} not divisible by heads {self.heads}")
        if self.g_max < 1:
            problems.append("g_max must be >= 1")
        if self.value_precision not in PRECISIONS:
            problems.append(f"value_precision must be one of {sorted(PRECISIONS)}")
        if self.batch_size < 1 or self.layers < 1 or self.epochs < 0:
            problems.append("batch_size, layers must be >= 1 and epochs >= 0")
        if problems:
            raise ValidationError("; ".join(problems))

    @property
    def dtype(self):
        return PRECISIONS[self.value_precision]

    @property
    def n_classes(self) -> int:
        return self.g_max + 1

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValidationError(f"unknown config keys {sorted(unknown)}")
        return cls(**doc)


PROFILES = {
    "desk": dict(layers=2, heads=4, d_model=64, d_ff=128, batch_size=32, learning_rate=1e-3, epochs=20),
    "full": dict(layers=6, heads=8, d_model=256, d_ff=1024, batch_size=32, learning_rate=1e-3, epochs=20),
}


def profile(name: str, n_lines: int, **overrides) -> ModelConfig:
    return ModelConfig(n_lines=n_lines, **{**PROFILES[name], **overrides})


def layer_prefix(i: int) -> str:
    return f"layer{i}."


def init_params(config: ModelConfig) -> dict[str, np.ndarray]:
    rng = np.random.default_rng([config.seed, 0])
    half = config.d_model // 2
    dt = config.dtype
    params = {
        "pos_emb": rng.normal(0.0, 0.02, size=(config.n_lines, half)).astype(dt),
        "gen_emb": rng.normal(0.0, 0.02, size=(config.n_classes, half)).astype(dt),
    }
    for i in range(config.layers):
        for k, t in init_encoder_layer(rng, config.d_model, config.d_ff, dt).items():
            params[layer_prefix(i) + k] = t.data
    lim = np.sqrt(6.0 / (config.d_model + config.n_classes))
    params["lnf_g"] = np.ones(config.d_model, dtype=dt)
    params["lnf_b"] = np.zeros(config.d_model, dtype=dt)
    params["w_out"] = rng.uniform(-lim, lim, size=(config.d_model, config.n_classes)).astype(dt)
    params["b_out"] = np.zeros(config.n_classes, dtype=dt)
    return params


@dataclass
class ForwardResult:
    P: np.ndarray  # (..., N, g_max + 1)
    last_layer_attention: np.ndarray  # (..., h, N, N)
    attention: list[np.ndarray] = field(default_factory=list)
    pre_mask: list[np.ndarray] = field(default_factory=list)  # per layer, softmax before the key mask


def _check_labels(config: ModelConfig, labels: np.ndarray):
    if labels.shape[-1] != config.n_lines:
        raise ShapeError(f"model expects {config.n_lines} lines, input has {labels.shape[-1]}")
    if labels.size and (labels.min() < 0 or labels.max() > config.g_max):
        raise ValidationError(f"labels must lie in 0..{config.g_max}")


def _graph(params: dict[str, Tensor], config: ModelConfig, labels: np.ndarray, inpM: np.ndarray):
    n = config.n_lines
    pos = take_rows(params["pos_emb"], np.broadcast_to(np.arange(n), labels.shape))
    gen = take_rows(params["gen_emb"], labels)
    x = concat([pos, gen], axis=-1)
    atts = []
    for i in range(config.layers):
        pre = layer_prefix(i)
        lp = {k[len(pre):]: v for k, v in params.items() if k.startswith(pre)}
        x, att = pre_ln_encoder_layer(x, inpM, lp, config.heads, config.mask_mode)
        atts.append(att)
    x = layer_norm(x, params["lnf_g"], params["lnf_b"])
    P = softmax(add(matmul(x, params["w_out"]), params["b_out"]), axis=-1)
    return P, atts


def forward(params: dict[str, np.ndarray], config: ModelConfig, labels, inpM=None) -> ForwardResult:
    """Per-line generation distribution and attention for one or a batch of label vectors."""
    labels = np.asarray(labels, dtype=np.int64)
    _check_labels(config, labels)
    if inpM is None:
        inpM = (labels > 0).astype(np.int8)
    tp = {k: Tensor(v) for k, v in params.items()}
    P, atts = _graph(tp, config, labels, np.asarray(inpM))
    weights = [a.weights.data for a in atts]
    return ForwardResult(P.data, weights[-1], weights, [a.pre_mask for a in atts])


def _batch(pairs: list[TrainingPair]):
    inp = np.stack([p.inp for p in pairs])
    tar = np.stack([p.tar for p in pairs])
    t = np.array([p.t for p in pairs])
    return inp, tar, (inp > 0).astype(np.int8), (tar == (t + 1)[:, None]).astype(np.int8)


def batch_loss(params: dict[str, np.ndarray], config: ModelConfig, pairs: list[TrainingPair], grad: bool = False):
    """Mean over pairs of the target-masked cross entropy; with ``grad`` also returns d(loss)/d(params)."""
    inp, tar, inpM, tarM = _batch(pairs)
    _check_labels(config, inp)
    _check_labels(config, tar)
    tp = {k: Tensor(v, requires_grad=grad) for k, v in params.items()}
    P, _ = _graph(tp, config, inp, inpM)
    loss = mul(masked_cross_entropy(P, one_hot(tar, config.n_classes, config.dtype), tarM), 1.0 / len(pairs))
    if not grad:
        return float(loss.data), None
    loss.backward()
    grads = {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in tp.items()}
    return float(loss.data), grads


def mean_loss(params, config: ModelConfig, pairs: list[TrainingPair]) -> float:
    if not pairs:
        return float("nan")
    tot = 0.0
    bs = config.batch_size
    for i in range(0, len(pairs), bs):
        chunk = pairs[i : i + bs]
        tot += batch_loss(params, config, chunk)[0] * len(chunk)
    return tot / len(pairs)


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    train_loss: list[float]  # index 0 = before any update
    val_loss: list[float]


def train(config: ModelConfig, train_pairs: list[TrainingPair], val_pairs: list[TrainingPair] = (),
          params: dict[str, np.ndarray] | None = None, progress=None) -> TrainResult:
    """Adam over seeded-shuffled mini-batches; deterministic for a fixed config."""
    if not train_pairs:
        raise ValidationError("empty training set")
    val_pairs = list(val_pairs)
    params = init_params(config) if params is None else params
    hyper = AdamHyper(lr=config.learning_rate)
    state = AdamState()
    shuffle = np.random.default_rng([config.seed, 1])
    history = [mean_loss(params, config, train_pairs)]
    val_history = [mean_loss(params, config, val_pairs)] if val_pairs else []
    bs = config.batch_size
    for epoch in range(1, config.epochs + 1):
        order = shuffle.permutation(len(train_pairs))
        tot = 0.0
        for i in range(0, len(order), bs):
            chunk = [train_pairs[j] for j in order[i : i + bs]]
            loss, grads = batch_loss(params, config, chunk, grad=True)
            params, state = optimizer_step(params, grads, state, hyper)
            tot += loss * len(chunk)
        history.append(tot / len(train_pairs))
        if val_pairs:
            val_history.append(mean_loss(params, config, val_pairs))
        log.info("epoch %d train %.4f val %s", epoch, history[-1], val_history[-1] if val_pairs else "-")
        if progress is not None:
            progress(epoch, history[-1], val_history[-1] if val_pairs else None)
    return TrainResult(params, history, val_history)


def predict_generation(P) -> np.ndarray:
    """Most likely generation per line; ``argmax`` already returns the smallest index on ties."""
    return np.argmax(np.asarray(P), axis=-1)


def predict_pairs(params, config: ModelConfig, pairs: list[TrainingPair]) -> np.ndarray:
    out = []
    for i in range(0, len(pairs), config.batch_size):
        inp, _, inpM, _ = _batch(pairs[i : i + config.batch_size])
        out.append(predict_generation(forward(params, config, inp, inpM).P))
    return np.concatenate(out) if out else np.zeros((0, config.n_lines), dtype=np.int64)


def f1_score(targets, predictions) -> dict:
    """Counts over lines where target or prediction is non-zero.

    TP: equal and non-zero. FN: target non-zero, prediction zero. FP: any other
    disagreement with a non-zero prediction.
    """
    g = np.asarray(targets)
    p = np.asarray(predictions)
    if g.shape != p.shape:
        raise ShapeError(f"targets {g.shape} and predictions {p.shape} differ")
    tp = int(np.sum((g == p) & (g != 0)))
    fn = int(np.sum((g != 0) & (p == 0)))
    fp = int(np.sum((p != 0) & (g != p)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"tp": tp, "fp": fp, "fn": fn, "precision": precision, "recall": recall, "f1": f1}



def evaluate_model(params, config: ModelConfig, pairs: list[TrainingPair]) -> dict:
    """F1 of predicted against target labels over ``pairs``.

    ``f1`` scores every line. Two restricted views are reported alongside as
    diagnostics: lines the loss is trained on (tarM = 1) and lines already
    failed or failing in the target (g' != 0).
    """
    if not pairs:
        raise ValidationError("empty evaluation set")
    pred = predict_pairs(params, config, pairs)
    tar = np.stack([p.tar for p in pairs])
    tarM = np.stack([p.tarM for p in pairs]).astype(bool)
    failed = tar != 0
    return {
        "pairs": len(pairs),
        "f1": f1_score(tar, pred),
        "target_rows": f1_score(tar[tarM], pred[tarM]),
        "failed_lines": f1_score(tar[failed], pred[failed]),
    }

# checkpoint: MAGIC, u32 header length, JSON header, raw little-endian payload
MAGIC = b"GCCKPT\x00\x01"
CHECKPOINT_VERSION = 1


def save_checkpoint(params: dict[str, np.ndarray], config: ModelConfig, path, extra: dict | None = None) -> None:
    dtype = np.dtype(config.dtype).newbyteorder("<")
    manifest, chunks, offset = [], [], 0
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype=dtype)
        raw = arr.tobytes()
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)
    header = {
        "format_version": CHECKPOINT_VERSION,
        "dtype": dtype.str,
        "config": config.to_dict(),
        "tensors": manifest,
        "payload_bytes": len(payload),
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
        "extra": extra or {},
    }
    hb = json.dumps(header, sort_keys=True).encode()
    Path(path).write_bytes(MAGIC + struct.pack("<I", len(hb)) + hb + payload)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], ModelConfig, dict]:
    try:
        blob = Path(path).read_bytes()
    except FileNotFoundError as exc:
        raise CheckpointError(f"{path}: no such file") from exc
    if len(blob) < len(MAGIC) + 4 or not blob.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    (hlen,) = struct.unpack_from("<I", blob, len(MAGIC))
    start = len(MAGIC) + 4
    try:
        header = json.loads(blob[start : start + hlen])
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header") from exc
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: format version {header.get('format_version')} != {CHECKPOINT_VERSION}")
    payload = blob[start + hlen :]
    if len(payload) != header["payload_bytes"] or hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise CheckpointError(f"{path}: corrupt payload")
    config = ModelConfig.from_dict(header["config"])
    dtype = np.dtype(header["dtype"])
    params = {}
    for t in header["tensors"]:
        arr = np.frombuffer(payload, dtype=dtype, count=t["nbytes"] // dtype.itemsize, offset=t["offset"])
        params[t["name"]] = arr.reshape(t["shape"]).astype(config.dtype)
    expected = init_params(replace(config, seed=0))
    for name, arr in expected.items():
        if name not in params or params[name].shape != arr.shape:
            raise CheckpointError(f"{path}: tensor {name} missing or misshapen")
    return params, config, header.get("extra", {})
