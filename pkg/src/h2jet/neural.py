"""Chain graphs over centerline positions and the graph / dense network backbones.

Both backbones emit, per node, the four centerline fields (u, b, rho, theta) and
their derivatives with respect to the node's own coordinate input.  Derivatives
are propagated as forward tangents inside the autodiff graph, so the physics
loss built on them stays differentiable with respect to the weights.  Nodes
outside each other's receptive field share a tangent seed (graph colouring),
which keeps the cost at ``depth * k_neighbors + 1`` tangent channels for a chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from h2jet import autodiff as ad

HEADS = ("u", "b", "rho", "theta")
# keeps positive heads strictly positive where softplus underflows to 0.0
HEAD_FLOOR = 1e-12
BACKBONES = ("graph", "dense")
AGGREGATIONS = ("sum", "mean")


@dataclass(frozen=True)
class Graph:
    positions: np.ndarray
    adjacency: np.ndarray
    sensor_mask: np.ndarray
    k_neighbors: int = 1

    @property
    def n(self) -> int:
        return len(self.positions)

    @property
    def k(self) -> int:
        return int(np.sum(self.sensor_mask))

    @property
    def sensor_indices(self) -> np.ndarray:
        return np.flatnonzero(self.sensor_mask)

    @property
    def edges(self) -> list[tuple[int, int]]:
        i, j = np.nonzero(np.triu(self.adjacency))
        return list(zip(i.tolist(), j.tolist()))

    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1).astype(int)


def build_chain_graph(positions, k_neighbors: int = 1, sensor_mask=None) -> Graph:
    pos = np.asarray(positions, dtype=float)
    if pos.ndim != 1 or len(pos) < 2:
        raise ValueError("need at least two node positions")
    if np.any(np.diff(pos) == 0):
        raise ValueError("duplicate node positions")
    if np.any(np.diff(pos) < 0):
        raise ValueError("node positions must be sorted")
    if k_neighbors < 1:
        raise ValueError("k_neighbors must be at least 1")
    n = len(pos)
    idx = np.arange(n)
    gap = np.abs(idx[:, None] - idx[None, :])
    adj = ((gap >= 1) & (gap <= k_neighbors)).astype(float)
    mask = np.zeros(n, bool) if sensor_mask is None else np.asarray(sensor_mask, bool)
    if mask.shape != (n,):
        raise ValueError("sensor mask must have one entry per node")
    return Graph(positions=pos, adjacency=adj, sensor_mask=mask, k_neighbors=k_neighbors)


@dataclass(frozen=True)
class NodeFeatures:
    """Per-node inputs; column 0 of :attr:`matrix` is always the coordinate."""

    s_hat: np.ndarray
    rho_hat: np.ndarray
    sensor: np.ndarray
    coordinate_only: bool = False
    sensor_flag: bool = True

    @property
    def matrix(self) -> np.ndarray:
        if self.coordinate_only:
            return self.s_hat[:, None].copy()
        cols = [self.s_hat, self.rho_hat]
        if self.sensor_flag:
            cols.append(self.sensor.astype(float))
        return np.column_stack(cols)

    @property
    def n_features(self) -> int:
        if self.coordinate_only:
            return 1
        return 3 if self.sensor_flag else 2

    def coordinate(self) -> "NodeFeatures":
        return NodeFeatures(self.s_hat, self.rho_hat, self.sensor, coordinate_only=True)


@dataclass
class ModelParams:
    """Layer weights keyed by name (``w_e``, ``b_e``, ``w_g{l}``, ``b_g{l}``, ``w_o``, ``b_o``)."""

    arrays: dict
    kind: str = "graph"
    width: int = 30
    depth: int = 3
    seed: int = 0
    n_features: int = 3
    two_matrix: bool = False
    aggregation: str = "sum"

    def __post_init__(self):
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"unknown aggregation {self.aggregation!r}")

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.copy() for k, v in self.arrays.items()}, self.kind, self.width,
                           self.depth, self.seed, self.n_features, self.two_matrix,
                           self.aggregation)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.arrays[k].ravel() for k in sorted(self.arrays)])

    def count(self) -> int:
        return int(sum(v.size for v in self.arrays.values()))

    def check_finite(self) -> None:
        for k, v in self.arrays.items():
            if not np.all(np.isfinite(v)):
                raise ValueError(f"non-finite weights in {k}")


def layer_shapes(kind: str, width: int, depth: int, n_features: int, two_matrix: bool = False):
    shapes = {"w_e": (n_features, width), "b_e": (width,)}
    for layer in range(depth):
        shapes[f"w_g{layer}"] = (width, width)
        if two_matrix and kind == "graph":
            shapes[f"w_n{layer}"] = (width, width)
        shapes[f"b_g{layer}"] = (width,)
    shapes["w_o"] = (width, len(HEADS))
    shapes["b_o"] = (len(HEADS),)
    return shapes


def init_params(
    seed: int,
    width: int = 30,
    depth: int = 3,
    kind: str = "graph",
    n_features: Optional[int] = None,
    two_matrix: bool = False,
    aggregation: str = "sum",
) -> ModelParams:
    """Glorot-uniform weights and zero biases from a seeded generator."""
    if width < 1 or depth < 1:
        raise ValueError("width and depth must be at least 1")
    if kind not in BACKBONES:
        raise ValueError(f"unknown backbone {kind!r}")
    if n_features is None:
        n_features = 3 if kind == "graph" else 1
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, shape in layer_shapes(kind, width, depth, n_features, two_matrix).items():
        if name.startswith("b_"):
            arrays[name] = np.zeros(shape)
        else:
            limit = math.sqrt(6.0 / (shape[0] + shape[1]))
            arrays[name] = rng.uniform(-limit, limit, size=shape)
    return ModelParams(arrays, kind, width, depth, seed, n_features, two_matrix and kind == "graph",
                       aggregation)


def tangent_colours(adjacency: np.ndarray, depth: int) -> np.ndarray:
    """Greedy colouring so no two same-coloured nodes lie within ``depth`` hops."""
    n = adjacency.shape[0]
    hop = (adjacency + np.eye(n)) > 0
    reach = np.eye(n, dtype=bool)
    for _ in range(depth):
        reach = (reach.astype(float) @ hop.astype(float)) > 0
    colours = np.full(n, -1)
    for i in range(n):
        taken = set(colours[reach[i]].tolist())
        c = 0
        while c in taken:
            c += 1
        colours[i] = c
    return colours


@dataclass(frozen=True)
class HeadScales:
    """Output scales: ``value = scale * softplus(raw)`` for u, b, rho."""

    u: float = 1.0
    b: float = 1.0
    rho: float = 1.0
    vertical: bool = True

    def vector(self) -> np.ndarray:
        return np.array([self.u, self.b, self.rho, 0.0])


@dataclass
class ModelGraph:
    """Symbolic network outputs: ``values`` and ``derivs`` are (n, 4) nodes."""

    values: ad.Node
    derivs: ad.Node
    param_names: list
    colours: np.ndarray = field(repr=False)


def build_model(
    params: ModelParams,
    adjacency: Optional[np.ndarray],
    features: np.ndarray,
    heads: HeadScales,
    prefix: str = "",
) -> ModelGraph:
    """Wire the network over fixed node inputs; weights stay symbolic.

    ``adjacency=None`` (or the dense backbone) drops all neighbour terms.
    """
    x = np.asarray(features, dtype=float)
    n, n_feat = x.shape
    if n_feat != params.n_features:
        raise ValueError(f"model expects {params.n_features} features, got {n_feat}")
    coupled = params.kind == "graph" and adjacency is not None and np.any(adjacency)
    if adjacency is not None and np.shape(adjacency) != (n, n):
        raise ValueError("adjacency shape does not match node count")
    if coupled:
        colours = tangent_colours(np.asarray(adjacency), params.depth)
    else:
        colours = np.zeros(n, dtype=int)
    n_colours = int(colours.max()) + 1

    seed = np.zeros((n_colours, n, n_feat))
    seed[colours, np.arange(n), 0] = 1.0

    w = {k: ad.variable(prefix + k) for k in params.arrays}
    mix = nbr = None
    if coupled:
        adj = np.asarray(adjacency, dtype=float)
        # "mean" divides each node's self + neighbour sum by its term count
        norm = 1.0 / (1.0 + adj.sum(axis=1, keepdims=True)) if params.aggregation == "mean" else 1.0
        mix = ad.constant((adj + np.eye(n)) * norm)
        nbr = ad.constant(adj * norm)

    pre = ad.constant(x) @ w["w_e"] + w["b_e"]
    t_pre = ad.constant(seed) @ w["w_e"]
    h, t_h = ad.softplus(pre), ad.sigmoid(pre) * t_pre

    for layer in range(params.depth):
        wg, bg = w[f"w_g{layer}"], w[f"b_g{layer}"]
        if coupled and params.two_matrix:
            wn = w[f"w_n{layer}"]
            pre = h @ wg + (nbr @ h) @ wn + bg
            t_pre = t_h @ wg + (nbr @ t_h) @ wn
        elif coupled:
            pre = (mix @ h) @ wg + bg
            t_pre = (mix @ t_h) @ wg
        else:
            pre = h @ wg + bg
            t_pre = t_h @ wg
        h, t_h = ad.softplus(pre), ad.sigmoid(pre) * t_pre

    raw = h @ w["w_o"] + w["b_o"]
    t_raw = t_h @ w["w_o"]
    scale = heads.vector()
    theta_mask = np.array([0.0, 0.0, 0.0, 0.0 if heads.vertical else 1.0])
    values = (ad.softplus(raw) + HEAD_FLOOR) * scale + raw * theta_mask
    if heads.vertical:
        values = values + np.array([0.0, 0.0, 0.0, math.pi / 2])
    t_vals = (ad.sigmoid(raw) * scale + theta_mask) * t_raw
    derivs = ad.take(t_vals, (colours, np.arange(n)))
    return ModelGraph(values, derivs, [prefix + k for k in params.arrays], colours)


@dataclass
class FieldPrediction:
    """Nondimensional per-node fields and their derivatives in the network coordinate."""

    u: np.ndarray
    b: np.ndarray
    rho: np.ndarray
    theta: np.ndarray
    d_u: np.ndarray
    d_b: np.ndarray
    d_rho: np.ndarray
    d_theta: np.ndarray

    @classmethod
    def from_arrays(cls, values: np.ndarray, derivs: np.ndarray) -> "FieldPrediction":
        return cls(*values.T.copy(), *derivs.T.copy())

    def physical(self, u_ref: float, L_ref: float, rho_ref: float) -> dict:
        return {"u": self.u * u_ref, "b": self.b * L_ref, "rho": self.rho * rho_ref,
                "theta": self.theta}


def _evaluate(model: ModelGraph, params: ModelParams, prefix: str = "") -> FieldPrediction:
    bindings = {prefix + k: v for k, v in params.arrays.items()}
    ad.forward(model.values, bindings)
    ad.forward(model.derivs, bindings)
    return FieldPrediction.from_arrays(np.asarray(model.values.value), np.asarray(model.derivs.value))


def forward_gnn(
    params: ModelParams, graph: Graph, feats: NodeFeatures, heads: HeadScales = HeadScales()
) -> FieldPrediction:
    if params.kind != "graph":
        raise ValueError("forward_gnn needs graph-backbone parameters")
    return _evaluate(build_model(params, graph.adjacency, feats.matrix, heads), params)


def forward_dense(
    params: ModelParams, feats: NodeFeatures, heads: HeadScales = HeadScales()
) -> FieldPrediction:
    if params.kind != "dense":
        raise ValueError("forward_dense needs dense-backbone parameters")
    x = feats.coordinate().matrix if params.n_features == 1 else feats.matrix
    return _evaluate(build_model(params, None, x, heads), params)


def save_checkpoint(params: ModelParams, path) -> None:
    """Flat key-value checkpoint: one array per layer plus metadata."""
    meta = {"__kind": params.kind, "__width": params.width, "__depth": params.depth,
            "__seed": params.seed, "__n_features": params.n_features,
            "__two_matrix": int(params.two_matrix), "__aggregation": params.aggregation}
    with open(path, "wb") as fh:
        np.savez(fh, **params.arrays, **{k: np.asarray(v) for k, v in meta.items()})


def load_checkpoint(path) -> ModelParams:
    with np.load(path, allow_pickle=False) as data:
        arrays = {k: data[k].copy() for k in data.files if not k.startswith("__")}
        return ModelParams(
            arrays,
            kind=str(data["__kind"]),
            width=int(data["__width"]),
            depth=int(data["__depth"]),
            seed=int(data["__seed"]),
            n_features=int(data["__n_features"]),
            two_matrix=bool(int(data["__two_matrix"])),
            aggregation=str(data["__aggregation"]),
        )
