"""Comparison rankers: edge betweenness, current-flow betweenness, LODF."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .grid import GridNetwork, _components

BRIDGE_TOL = 1e-9


@dataclass(frozen=True)
class BaselineRank:
    algorithm: str
    scores: np.ndarray
    order: list[int]
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"scores": [float(s) for s in self.scores], "order": self.order}


def ranked(algorithm: str, scores, **meta) -> BaselineRank:
    scores = np.asarray(scores, dtype=np.float64)
    return BaselineRank(algorithm, scores, np.argsort(-scores, kind="stable").tolist(), meta)


def _require_connected(network: GridNetwork):
    src, dst = network.endpoints()
    comps = _components(network.n_buses, zip(src.tolist(), dst.tolist()))
    if len(comps) > 1:
        raise ValidationError(f"network is disconnected: components {comps}")


def edge_betweenness_scores(n_buses: int, edges) -> np.ndarray:
    """Unweighted edge betweenness by single-source accumulation, one count per unordered pair.

    ``edges`` is a sequence of (u, v); parallel edges are distinct edges.
    """
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n_buses)]
    for k, (u, v) in enumerate(edges):
        adj[u].append((v, k))
        adj[v].append((u, k))
    score = np.zeros(len(edges))
    for s in range(n_buses):
        sigma = np.zeros(n_buses)
        dist = np.full(n_buses, -1)
        preds: list[list[tuple[int, int]]] = [[] for _ in range(n_buses)]
        sigma[s], dist[s] = 1.0, 0
        order = []
        queue = deque([s])
        while queue:
            v = queue.popleft()
            order.append(v)
            for w, k in adj[v]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    queue.append(w)
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    preds[w].append((v, k))
        delta = np.zeros(n_buses)
        for w in reversed(order):
            for v, k in preds[w]:
                c = sigma[v] / sigma[w] * (1.0 + delta[w])
                score[k] += c
                delta[v] += c
    return score / 2.0


def edge_betweenness(network: GridNetwork) -> BaselineRank:
    _require_connected(network)
    src, dst = network.endpoints()
    return ranked("BC", edge_betweenness_scores(network.n_buses, list(zip(src.tolist(), dst.tolist()))))


def laplacian(network: GridNetwork, weights=None) -> np.ndarray:
    src, dst = network.endpoints()
    w = network.susceptances() if weights is None else np.asarray(weights, dtype=np.float64)
    n = network.n_buses
    lap = np.zeros((n, n))
    np.add.at(lap, (src, src), w)
    np.add.at(lap, (dst, dst), w)
    np.add.at(lap, (src, dst), -w)
    np.add.at(lap, (dst, src), -w)
    return lap


def _reduced_inverse(lap: np.ndarray) -> np.ndarray:
    """Inverse of the Laplacian grounded at bus 0, padded back to full size."""
    n = lap.shape[0]
    x = np.zeros((n, n))
    if n > 1:
        x[1:, 1:] = np.linalg.inv(lap[1:, 1:])
    return x


def current_flow_betweenness(network: GridNetwork) -> BaselineRank:
    """Mean over bus pairs of |current| on each line for a unit s-t injection."""
    _require_connected(network)
    src, dst = network.endpoints()
    b = network.susceptances()
    x = _reduced_inverse(laplacian(network))
    n = network.n_buses
    # r[l, s] = potential difference across line l per unit injected at s
    r = x[src, :] - x[dst, :]
    iu = np.triu_indices(n, k=1)
    n_pairs = len(iu[0])
    scores = np.empty(network.n_lines)
    for li in range(network.n_lines):
        diff = r[li][:, None] - r[li][None, :]
        scores[li] = b[li] * np.abs(diff[iu]).sum() / n_pairs
    return ranked("CFBC", scores)


def ptdf_matrix(network: GridNetwork) -> np.ndarray:
    """PTDF[l, k]: flow on line l per unit transferred from k's from-bus to its to-bus."""
    src, dst = network.endpoints()
    b = network.susceptances()
    x = _reduced_inverse(laplacian(network))
    inj = x[:, src] - x[:, dst]  # bus angle response to each line's transfer
    return b[:, None] * (inj[src, :] - inj[dst, :])


@dataclass(frozen=True)
class LodfResult:
    matrix: np.ndarray  # NaN in undefined (bridge) columns
    undefined: list[int]


def lodf_matrix(network: GridNetwork) -> LodfResult:
    """LODF[l, k] = PTDF[l, k] / (1 - PTDF[k, k]); diagonal -1; bridge columns undefined."""
    _require_connected(network)
    ptdf = ptdf_matrix(network)
    denom = 1.0 - np.diag(ptdf)
    bridge = np.abs(denom) < BRIDGE_TOL
    safe = np.where(bridge, 1.0, denom)
    lodf = ptdf / safe[None, :]
    np.fill_diagonal(lodf, -1.0)
    lodf[:, bridge] = np.nan
    return LodfResult(lodf, np.flatnonzero(bridge).tolist())


def lodf_rank(lodf: LodfResult) -> BaselineRank:
    """Score of line A: sum of |LODF[A, B]| over defined outages B != A."""
    m = np.abs(lodf.matrix.copy())
    np.fill_diagonal(m, 0.0)
    m[np.isnan(m)] = 0.0
    return ranked("LODF", m.sum(axis=1), undefined_columns=list(lodf.undefined))


def all_baselines(network: GridNetwork) -> dict[str, BaselineRank]:
    lodf = lodf_matrix(network)
    return {
        "BC": edge_betweenness(network),
        "CFBC": current_flow_betweenness(network),
        "LODF": lodf_rank(lodf),
    }


def baselines_json(ranks: dict[str, BaselineRank]) -> dict:
    doc = {name: r.to_json() for name, r in ranks.items()}
    doc["lodf_undefined_columns"] = ranks["LODF"].meta.get("undefined_columns", [])
    return doc
