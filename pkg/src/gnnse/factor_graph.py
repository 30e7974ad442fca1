"""Heterogeneous (augmented) factor graphs fed to the GNN.

Variable node ``i`` holds state component ``i`` (``[Re V | Im V]`` layout).
Factor nodes ``2p`` and ``2p + 1`` hold the real and imaginary part of phasor
``p``; their features are ``[value, variance, onehot(V, IF, IT)]``.
"""
from collections import deque
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

import numpy as np

from .measurements import measurement_rows

N_FACTOR_FEATURES = 5
_EMPTY_EDGES = np.zeros((0, 2), dtype=np.int64)


class VariableNode(NamedTuple):
    index: int
    bus: int
    part: str
    feature: np.ndarray


class FactorNode(NamedTuple):
    index: int
    phasor: int
    part: str
    feature: np.ndarray


@dataclass(frozen=True, eq=False)
class FactorGraph:
    """Array-backed graph.

    ``var_ids`` are the one-hot positions of the variable nodes (``0..2n-1``);
    they differ from ``arange`` only for subgraphs. ``fv_edges`` rows are
    ``(factor, variable)``; ``vv_edges`` rows are undirected pairs ``(a, b)``
    with ``a < b``.
    """
    n_state: int
    var_ids: np.ndarray
    factor_features: np.ndarray
    factor_phasor: np.ndarray
    factor_part: np.ndarray
    fv_edges: np.ndarray
    vv_edges: np.ndarray = _EMPTY_EDGES
    labels: Optional[np.ndarray] = None

    @property
    def n_var(self):
        return len(self.var_ids)

    @property
    def n_factor(self):
        return len(self.factor_features)

    @property
    def augmented(self):
        return len(self.vv_edges) > 0

    def variable_nodes(self):
        n_bus = self.n_state // 2
        for i, vid in enumerate(self.var_ids):
            feat = np.zeros(self.n_state)
            feat[vid] = 1.0
            yield VariableNode(i, int(vid) % n_bus, "Re" if vid < n_bus else "Im", feat)

    def factor_nodes(self):
        for f in range(self.n_factor):
            part = "Re" if self.factor_part[f] == 0 else "Im"
            yield FactorNode(f, int(self.factor_phasor[f]), part, self.factor_features[f])

    def adjacency(self):
        """Neighbour lists over all nodes: variables first, then factors."""
        nv = self.n_var
        adj = [[] for _ in range(nv + self.n_factor)]
        for f, v in self.fv_edges:
            adj[nv + f].append(v)
            adj[v].append(nv + f)
        for a, b in self.vv_edges:
            adj[a].append(b)
            adj[b].append(a)
        return adj

    def is_connected(self):
        adj = self.adjacency()
        if not adj:
            return True
        seen = {0}
        queue = deque([0])
        while queue:
            u = queue.popleft()
            for w in adj[u]:
                if w not in seen:
                    seen.add(w)
                    queue.append(w)
        return len(seen) == len(adj)

    def with_labels(self, labels):
        return replace(self, labels=None if labels is None else np.asarray(labels, dtype=float))


def build_factor_graph(network, mset, labels=None):
    """Bipartite factor graph whose edges follow the Jacobian sparsity."""
    if mset.network is not network and mset.network.fingerprint() != network.fingerprint():
        raise ValueError("measurement set belongs to a different network")
    n_state = 2 * network.n_bus
    feats, owner, edges = [], [], []
    for p, m in enumerate(mset.phasors):
        onehot = [0.0, 0.0, 0.0]
        onehot[m.kind.kind.code] = 1.0
        rows = measurement_rows(m.kind, network)
        for part, (value, var) in enumerate(((m.value_re, m.var_re), (m.value_im, m.var_im))):
            f = 2 * p + part
            feats.append([value, var] + onehot)
            owner.append(p)
            edges.extend((f, col) for col in rows[part])
    return FactorGraph(
        n_state=n_state,
        var_ids=np.arange(n_state),
        factor_features=np.array(feats, dtype=float).reshape(-1, N_FACTOR_FEATURES),
        factor_phasor=np.array(owner, dtype=np.int64),
        factor_part=np.tile([0, 1], len(mset)).astype(np.int64),
        fv_edges=np.array(edges, dtype=np.int64).reshape(-1, 2),
        labels=None if labels is None else np.asarray(labels, dtype=float),
    )


def physical_vv_edges(network):
    """Variable-variable pairs implied by buses and branches."""
    n = network.n_bus
    pairs = {(i, n + i) for i in range(n)}
    for br in network.branches:
        for a in (br.from_bus, n + br.from_bus):
            for b in (br.to_bus, n + br.to_bus):
                pairs.add((min(a, b), max(a, b)))
    return np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)


def augment(graph, network):
    """Add variable-variable edges from physical connectivity (idempotent)."""
    if graph.n_state != 2 * network.n_bus or graph.n_var != graph.n_state:
        raise ValueError("graph was not built from this network")
    return replace(graph, vv_edges=physical_vv_edges(network))


def khop_subgraph(graph, variable_index, K):
    """Induced subgraph on nodes within ``K`` edges of a variable node.

    Kept nodes retain their relative order, so edge order is a subsequence
    of the parent's.
    """
    if K < 0:
        raise ValueError("K must be non-negative")
    if not 0 <= variable_index < graph.n_var:
        raise ValueError(f"unknown variable node {variable_index}")
    adj = graph.adjacency()
    dist = {variable_index: 0}
    queue = deque([variable_index])
    while queue:
        u = queue.popleft()
        if dist[u] == K:
            continue
        for w in adj[u]:
            if w not in dist:
                dist[w] = dist[u] + 1
                queue.append(w)
    nv = graph.n_var
    keep_v = np.array(sorted(u for u in dist if u < nv), dtype=np.int64)
    keep_f = np.array(sorted(u - nv for u in dist if u >= nv), dtype=np.int64)
    new_v = -np.ones(nv, dtype=np.int64)
    new_v[keep_v] = np.arange(len(keep_v))
    new_f = -np.ones(graph.n_factor, dtype=np.int64)
    new_f[keep_f] = np.arange(len(keep_f))

    fv = graph.fv_edges
    fv_mask = (new_f[fv[:, 0]] >= 0) & (new_v[fv[:, 1]] >= 0) if len(fv) else np.zeros(0, bool)
    vv = graph.vv_edges
    vv_mask = (new_v[vv[:, 0]] >= 0) & (new_v[vv[:, 1]] >= 0) if len(vv) else np.zeros(0, bool)
    return FactorGraph(
        n_state=graph.n_state,
        var_ids=graph.var_ids[keep_v],
        factor_features=graph.factor_features[keep_f],
        factor_phasor=graph.factor_phasor[keep_f],
        factor_part=graph.factor_part[keep_f],
        fv_edges=np.stack([new_f[fv[fv_mask, 0]], new_v[fv[fv_mask, 1]]], axis=1).reshape(-1, 2),
        vv_edges=np.stack([new_v[vv[vv_mask, 0]], new_v[vv[vv_mask, 1]]], axis=1).reshape(-1, 2),
        labels=None if graph.labels is None else graph.labels[keep_v],
    )


def remove_factors(graph, phasor_positions):
    """Drop the factor pairs of the given phasor positions (measurement loss)."""
    drop = np.isin(graph.factor_phasor, np.asarray(list(phasor_positions), dtype=np.int64))
    keep_f = np.flatnonzero(~drop)
    new_f = -np.ones(graph.n_factor, dtype=np.int64)
    new_f[keep_f] = np.arange(len(keep_f))
    fv = graph.fv_edges
    mask = new_f[fv[:, 0]] >= 0
    return replace(graph,
                   factor_features=graph.factor_features[keep_f],
                   factor_phasor=graph.factor_phasor[keep_f],
                   factor_part=graph.factor_part[keep_f],
                   fv_edges=np.stack([new_f[fv[mask, 0]], fv[mask, 1]], axis=1).reshape(-1, 2))
