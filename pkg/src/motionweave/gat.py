"""Relational graph attention over semantic graphs.

Single head, single layer. Node pairs are projected with one shared matrix,
edge logits combine a shared transform with a per-edge-type relation
embedding (both through LeakyReLU, slope 0.2), coefficients are softmaxed
over each node's incoming neighbors, and node updates apply an ELU
aggregation with a skip connection. The motion node's coefficients over its
action neighbors, scaled by the guidance strength, become the per-action
guiding weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import tensor as T
from .nn.blocks import Module
from .semgraph import EDGE_TYPE_INDEX, N_EDGE_TYPES, SemanticGraph

LEAKY_SLOPE = 0.2


@dataclass(frozen=True)
class GraphEdges:
    """Index form of a graph: edges j->i give node i its neighbor j."""
    src: np.ndarray          # (E,) neighbor indices j
    dst: np.ndarray          # (E,) node indices i
    type_index: np.ndarray   # (E,) edge-type index into the relation matrix

    def __len__(self):
        return len(self.src)


def graph_edges(graph: SemanticGraph) -> GraphEdges:
    order = {n.id: k for k, n in enumerate(graph.nodes)}
    src = np.array([order[e.src] for e in graph.edges], dtype=np.int64)
    dst = np.array([order[e.dst] for e in graph.edges], dtype=np.int64)
    types = np.array([EDGE_TYPE_INDEX[e.type] for e in graph.edges],
                     dtype=np.int64)
    return GraphEdges(src, dst, types)


class GraphAttention(Module):
    def __init__(self, dim: int, rng, dtype=np.float64):
        self.dim = dim
        scale = float(np.sqrt(6.0 / (2 * dim)))
        self.W = T.Tensor(rng.uniform(-scale, scale, (dim, dim)).astype(dtype),
                          requires_grad=True)
        pair_scale = float(np.sqrt(6.0 / (2 * dim + 1)))
        self.M = T.Tensor(
            rng.uniform(-pair_scale, pair_scale, (2 * dim, 1)).astype(dtype),
            requires_grad=True)
        self.M_r = T.Tensor(
            rng.uniform(-pair_scale, pair_scale,
                        (2 * dim, N_EDGE_TYPES)).astype(dtype),
            requires_grad=True)

    # Tensor-level forward used both standalone and inside diffusion training
    def pair_features(self, v: T.Tensor, edges: GraphEdges) -> T.Tensor:
        h = T.matmul(v, self.W)
        return T.concat([T.take_rows(h, edges.dst), T.take_rows(h, edges.src)],
                        axis=1)

    def edge_logits(self, pairs: T.Tensor, type_index: np.ndarray) -> T.Tensor:
        base = T.leaky_relu(T.matmul(pairs, self.M), LEAKY_SLOPE)
        rel_all = T.matmul(pairs, self.M_r)
        onehot = np.zeros((len(type_index), N_EDGE_TYPES),
                          dtype=pairs.data.dtype)
        onehot[np.arange(len(type_index)), type_index] = 1.0
        rel = T.leaky_relu(T.sum_(T.mul(rel_all, T.Tensor(onehot)), axis=1,
                                  keepdims=True), LEAKY_SLOPE)
        return T.add(base, rel)

    def coefficients(self, v: T.Tensor, edges: GraphEdges):
        """Per-edge normalized coefficients as a (E, 1) Tensor."""
        pairs = self.pair_features(v, edges)
        logits = self.edge_logits(pairs, edges.type_index)
        parts = {}
        for i in np.unique(edges.dst):
            rows = np.flatnonzero(edges.dst == i)
            seg = T.softmax(T.reshape(T.take_rows(logits, rows), (1, len(rows))))
            parts[int(i)] = (rows, T.reshape(seg, (len(rows), 1)))
        return parts

    def forward(self, v: T.Tensor, edges: GraphEdges):
        """Returns (per-edge coefficients (E,1) Tensor, updated nodes (n,D))."""
        n = v.shape[0]
        h = T.matmul(v, self.W)
        parts = self.coefficients(v, edges)
        coeff_rows = [None] * len(edges)
        updated = []
        for i in range(n):
            if i in parts:
                rows, seg = parts[i]
                neigh = T.take_rows(h, edges.src[rows])
                agg = T.sum_(T.mul(seg, neigh), axis=0, keepdims=True)
                updated.append(T.add(T.elu(agg), v[i:i + 1]))
                for r, row in enumerate(rows):
                    coeff_rows[row] = T.getitem(seg, (slice(r, r + 1),))
            else:
                updated.append(v[i:i + 1])
        coeffs = T.concat(coeff_rows, axis=0) if len(edges) else None
        return coeffs, T.concat(updated, axis=0)


@dataclass
class AttentionResult:
    coefficients: dict            # (dst_index, src_index) -> float
    updated_nodes: np.ndarray     # (n, D)


def project_pairs(gat: GraphAttention, v: np.ndarray,
                  edges: GraphEdges) -> np.ndarray:
    """Per-edge concatenated projections [W v_i, W v_j], shape (E, 2D)."""
    v = np.asarray(v)
    if v.ndim != 2 or v.shape[1] != gat.dim:
        raise ValueError(f"node features must be (n, {gat.dim})")
    return gat.pair_features(T.Tensor(v), edges).data


def attention_coefficients(gat: GraphAttention, v: np.ndarray,
                           edges: GraphEdges,
                           require_nodes=None) -> AttentionResult:
    """Normalized attention coefficients over incoming neighborhoods.

    require_nodes lists node indices that must have a non-empty
    neighborhood; a node there with no incoming edge is an error.
    """
    v = np.asarray(v)
    if require_nodes is not None:
        present = set(edges.dst.tolist())
        for i in require_nodes:
            if int(i) not in present:
                raise ValueError(f"isolated node {i} in neighborhood softmax")
    coeffs, updated = gat.forward(T.Tensor(v), edges)
    table = {}
    if coeffs is not None:
        flat = coeffs.data[:, 0]
        for k in range(len(edges)):
            table[(int(edges.dst[k]), int(edges.src[k]))] = float(flat[k])
    return AttentionResult(table, updated.data)


def update_nodes(gat: GraphAttention, v: np.ndarray,
                 edges: GraphEdges) -> np.ndarray:
    """Updated node embeddings ELU(sum of weighted neighbors) + skip."""
    _, updated = gat.forward(T.Tensor(np.asarray(v)), edges)
    return updated.data


def guiding_weights(result: AttentionResult, graph: SemanticGraph,
                    rho: float, multipliers=None) -> np.ndarray:
    """Per-action guiding weights: rho times the motion node's coefficients.

    multipliers, when given, scale each action's weight after the rho
    product (user overrides; not renormalized).
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    order = {n.id: k for k, n in enumerate(graph.nodes)}
    m = order[graph.motion_node.id]
    lam = np.array([result.coefficients[(m, order[a.id])]
                    for a in graph.action_nodes])
    lam = rho * lam
    if multipliers is not None:
        multipliers = np.asarray(multipliers, dtype=np.float64)
        if multipliers.shape != lam.shape:
            raise ValueError("one multiplier per action required")
        if np.any(multipliers < 0):
            raise ValueError("multipliers must be non-negative")
        lam = lam * multipliers
    return lam
