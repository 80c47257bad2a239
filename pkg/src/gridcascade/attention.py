"""Correlation matrices from last-layer attention, and the Initiative/Passive rankings."""
from __future__ import annotations

import json
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dual import TrainingPair
from .errors import ParseError, ShapeError, ValidationError


@dataclass
class CorrelationMatrices:
    ICM: np.ndarray
    PCM: np.ndarray
    samples_used: int


@dataclass(frozen=True)
class RankResult:
    initiatives: list[int]
    passives: list[int]
    greedy_cutoff: int

    def to_json(self) -> dict:
        return {"initiatives": self.initiatives, "passives": self.passives, "greedy_cutoff": self.greedy_cutoff}


def reduce_heads(aw) -> np.ndarray:
    """L2 norm over the head axis: (h, N, N) -> (N, N)."""
    aw = np.asarray(aw, dtype=np.float64)
    return np.sqrt(np.sum(aw * aw, axis=0))


def pair_contribution(inp, tar, aw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """ICM and PCM increments of one pair given its head-reduced attention ``aw``."""
    inp = np.asarray(inp)
    tar = np.asarray(tar)
    n = len(inp)
    if aw.shape != (n, n):
        raise ShapeError(f"attention {aw.shape} does not match {n} lines")
    last = tar.max()
    hit = tar == last
    scale = inp / inp.max()
    d_pcm = np.zeros((n, n))
    d_pcm[hit] = aw[hit] * scale
    cols = inp == 1
    d_icm = np.zeros((n, n))
    d_icm[:, cols] = aw[:, cols] * hit[:, None]
    return d_icm, d_pcm


def _pair_key(p: TrainingPair) -> tuple:
    return (p.t, p.inp.tobytes(), p.tar.tobytes())


def accumulate(pairs: list[TrainingPair], attention: list[np.ndarray]) -> CorrelationMatrices:
    """Sum per-pair contributions in a canonical pair order.

    Summing in an order fixed by the pair contents (not by input position or
    worker) makes the float result bitwise independent of both.
    """
    if not pairs:
        raise ValidationError("accumulate needs at least one pair; use zeros for an empty set")
    n = len(pairs[0].inp)
    icm = np.zeros((n, n))
    pcm = np.zeros((n, n))
    order = sorted(range(len(pairs)), key=lambda i: (_pair_key(pairs[i]), attention[i].tobytes()))
    for i in order:
        p = pairs[i]
        if p.tar.max() != p.t + 1:
            raise ValidationError(f"pair target max {p.tar.max()} != t+1 = {p.t + 1}")
        d_icm, d_pcm = pair_contribution(p.inp, p.tar, attention[i])
        icm += d_icm
        pcm += d_pcm
    return CorrelationMatrices(icm, pcm, len(pairs))


def _attention_chunk(args):
    from .model import forward

    params, config, pairs = args
    # one pair per forward: batched BLAS calls may round differently by batch size
    return [reduce_heads(forward(params, config, p.inp, p.inpM).last_layer_attention) for p in pairs]


def extract_attention(params, config, pairs: list[TrainingPair], workers: int = 1) -> CorrelationMatrices:
    """Accumulate ICM and PCM over ``pairs`` from the model's last encoder layer."""
    n = config.n_lines
    if not pairs:
        return CorrelationMatrices(np.zeros((n, n)), np.zeros((n, n)), 0)
    for p in pairs:
        if len(p.inp) != n:
            raise ShapeError(f"pair has {len(p.inp)} lines, model expects {n}")
    if workers <= 1:
        aws = _attention_chunk((params, config, pairs))
    else:
        size = -(-len(pairs) // workers)
        parts = [pairs[i : i + size] for i in range(0, len(pairs), size)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            aws = [a for part in pool.map(_attention_chunk, [(params, config, c) for c in parts]) for a in part]
    return accumulate(pairs, aws)


def expectation_p(pcm, i: int) -> float:
    return float(np.sum(np.asarray(pcm)[i, :]))


def expectation_i(icm, j: int) -> float:
    return float(np.sum(np.asarray(icm)[:, j]))


def _check_square(m, name):
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeError(f"{name} must be square (got {m.shape})")
    if np.any(m < 0):
        raise ValidationError(f"{name} has negative entries")
    return m


def _desc(scores: np.ndarray) -> list[int]:
    # stable sort on negated scores: ties keep ascending id order
    return np.argsort(-scores, kind="stable").tolist()


def greedy_initiatives(icm: np.ndarray, trace: list | None = None) -> tuple[list[int], int]:
    """Greedy max-coverage over ICM columns, then column-sum fallback.

    Returns the full ordering and the count chosen by the greedy loop. If
    ``trace`` is a list, the buffer after each pick is appended to it.
    """
    icm = _check_square(icm, "ICM")
    n = icm.shape[0]
    rank = _desc(icm.sum(axis=0))
    if n == 0:
        return [], 0
    chosen = [rank[0]]
    taken = np.zeros(n, dtype=bool)
    taken[rank[0]] = True
    buffer = icm[:, rank[0]].copy()
    if trace is not None:
        trace.append(buffer.copy())
    while len(chosen) < n:
        # coverage gain over the buffer; summing only the positive increments
        # makes "no gain" exactly zero instead of a rounding difference of two sums
        gain = np.maximum(icm - buffer[:, None], 0.0).sum(axis=0)
        gain[taken] = -np.inf
        best = int(np.argmax(gain))
        if not gain[best] > 0.0:
            break
        chosen.append(best)
        taken[best] = True
        buffer = np.maximum(buffer, icm[:, best])
        if trace is not None:
            trace.append(buffer.copy())
    cutoff = len(chosen)
    chosen.extend(j for j in rank if not taken[j])
    return chosen, cutoff


def rank_attention(icm, pcm) -> RankResult:
    pcm = _check_square(pcm, "PCM")
    initiatives, cutoff = greedy_initiatives(icm)
    return RankResult(initiatives, _desc(pcm.sum(axis=1)), cutoff)


# matrix file: MAGIC, u32 header length, JSON header, row-major little-endian float32
MATRIX_MAGIC = b"GCMAT\x00\x01\x00"


def write_matrix(m: np.ndarray, kind: str, samples: int, path) -> None:
    if kind not in ("ICM", "PCM"):
        raise ValidationError(f"matrix kind must be ICM or PCM (got {kind!r})")
    hb = json.dumps({"n": int(m.shape[0]), "kind": kind, "samples": int(samples)}, sort_keys=True).encode()
    payload = np.ascontiguousarray(m, dtype="<f4").tobytes()
    Path(path).write_bytes(MATRIX_MAGIC + struct.pack("<I", len(hb)) + hb + payload)


def read_matrix(path) -> tuple[np.ndarray, dict]:
    try:
        blob = Path(path).read_bytes()
    except FileNotFoundError as exc:
        raise ParseError(f"{path}: no such file") from exc
    if not blob.startswith(MATRIX_MAGIC):
        raise ParseError(f"{path}: not a matrix file")
    (hlen,) = struct.unpack_from("<I", blob, len(MATRIX_MAGIC))
    start = len(MATRIX_MAGIC) + 4
    try:
        header = json.loads(blob[start : start + hlen])
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ParseError(f"{path}: corrupt header") from exc
    n = header["n"]
    payload = blob[start + hlen :]
    if len(payload) != 4 * n * n:
        raise ParseError(f"{path}: payload has {len(payload)} bytes, expected {4 * n * n}")
    return np.frombuffer(payload, dtype="<f4").reshape(n, n).astype(np.float64), header
