"""Hardcore and Ising models, thresholds, tilting and tree recursions.

Configurations are 0/1 arrays where 1 means "occupied" (hardcore) or spin +1
(Ising). Ising functions also accept +-1 arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping, Union

import numpy as np

from .errors import EmptySupportError, NumericError, ParameterError
from .graphs import Graph, induced_subgraph

Pinning = Mapping[int, int]
"""Vertex -> spin. Hardcore: 1 occupied, 0 or -1 unoccupied. Ising: +1 / -1."""


@dataclass(frozen=True, eq=False)
class Hardcore:
    graph: Graph
    fugacity: np.ndarray

    def __post_init__(self):
        lam = np.broadcast_to(np.asarray(self.fugacity, dtype=float), (self.graph.n_vertices,)).copy()
        if np.any(~(lam > 0)):
            raise ParameterError("fugacities must be strictly positive")
        lam.setflags(write=False)
        object.__setattr__(self, "fugacity", lam)

    @property
    def n(self) -> int:
        return self.graph.n_vertices


@dataclass(frozen=True, eq=False)
class IsingGraph:
    graph: Graph
    beta: float
    fields: np.ndarray

    def __post_init__(self):
        h = np.broadcast_to(np.asarray(self.fields, dtype=float), (self.graph.n_vertices,)).copy()
        h.setflags(write=False)
        object.__setattr__(self, "fields", h)
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def n(self) -> int:
        return self.graph.n_vertices


@dataclass(frozen=True, eq=False)
class IsingMatrix:
    J: np.ndarray
    fields: np.ndarray

    def __post_init__(self):
        J = np.array(self.J, dtype=float)
        if J.ndim != 2 or J.shape[0] != J.shape[1]:
            raise ParameterError("J must be square")
        if not np.allclose(J, J.T, atol=1e-12):
            raise ParameterError("J must be symmetric")
        J = (J + J.T) / 2
        tol = 1e-9 * max(1.0, float(np.abs(J).max(initial=0.0)))
        if J.shape[0] and np.linalg.eigvalsh(J)[0] < -tol:
            raise ParameterError("J must be positive semidefinite")
        h = np.broadcast_to(np.asarray(self.fields, dtype=float), (J.shape[0],)).copy()
        J.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "fields", h)

    @property
    def n(self) -> int:
        return self.J.shape[0]


SpinModel = Union[Hardcore, IsingGraph, IsingMatrix]


def hardcore(graph: Graph, lam) -> Hardcore:
    return Hardcore(graph, lam)


def ising(graph: Graph, beta: float, h=0.0) -> IsingGraph:
    return IsingGraph(graph, beta, h)


def ising_matrix(J, h=0.0) -> IsingMatrix:
    return IsingMatrix(J, h)


def is_ising(model: SpinModel) -> bool:
    return isinstance(model, (IsingGraph, IsingMatrix))


# ---------------------------------------------------------------------------
# thresholds and tree recursion


def lambda_c(delta: int) -> float:
    """Hardcore uniqueness threshold on the Delta-regular tree."""
    if delta < 3:
        raise ParameterError("lambda_c needs delta >= 3")
    d = delta - 1
    return d**d / (d - 1) ** delta


def beta_c(delta: int) -> float:
    """Ising uniqueness threshold, (Delta-1) tanh(beta_c) = 1."""
    if delta < 3:
        raise ParameterError("beta_c needs delta >= 3")
    return math.atanh(1.0 / (delta - 1))


def tree_fixed_point(lam: float, d: int, tol: float = 1e-13, max_iter: int = 200) -> float:
    """Unique positive solution of x = lam / (1+x)^d.

    Newton on g(x) = x (1+x)^d - lam, safeguarded by bisection on [0, lam].
    """
    if not lam > 0:
        raise ParameterError("lambda must be positive")
    lo, hi = 0.0, float(lam)
    x = min(lam, 1.0 / max(d - 1, 1))
    for _ in range(max_iter):
        g = x * (1 + x) ** d - lam
        if g > 0:
            hi = x
        else:
            lo = x
        dg = (1 + x) ** (d - 1) * (1 + x + d * x)
        step = x - g / dg
        x = step if lo < step < hi else 0.5 * (lo + hi)
        if abs(x - lam / (1 + x) ** d) < tol * max(1.0, x) or hi - lo < 1e-300:
            return x
    if abs(x - lam / (1 + x) ** d) < 1e-12:
        return x
    raise NumericError("tree fixed point did not converge")


def uniqueness_slack(lam: float, delta: int) -> float:
    """delta* = 1 - d x/(1+x) with d = Delta-1 and x the tree fixed point."""
    if delta < 3:
        raise ParameterError("uniqueness slack needs delta >= 3")
    d = delta - 1
    x = tree_fixed_point(lam, d)
    return 1.0 - d * x / (1 + x)


# ---------------------------------------------------------------------------
# weights


def as_bits(config) -> np.ndarray:
    """0/1 view of a configuration given as 0/1 or +-1 values."""
    c = np.asarray(config)
    return (c > 0).astype(np.int8)


def interaction(model: SpinModel) -> tuple[np.ndarray, np.ndarray]:
    """(J, h) such that the Ising weight is exp(x'Jx/2 + h'x) on +-1 spins."""
    if isinstance(model, IsingMatrix):
        return np.array(model.J), np.array(model.fields)
    if isinstance(model, IsingGraph):
        return model.beta * model.graph.adjacency, np.array(model.fields)
    raise ParameterError("interaction() needs an Ising model")


def log_weight(model: SpinModel, config) -> float:
    """Unnormalised log weight of a full configuration (-inf if infeasible)."""
    b = as_bits(config)
    if b.shape != (model.n,):
        raise ParameterError("configuration length does not match the model")
    if isinstance(model, Hardcore):
        for u, v in model.graph.edges:
            if b[u] and b[v]:
                return -math.inf
        return float(np.log(model.fugacity)[b == 1].sum())
    J, h = interaction(model)
    x = 2.0 * b - 1.0
    return float(0.5 * x @ J @ x + h @ x)


def log_weights_bits(model: SpinModel, bits: np.ndarray) -> np.ndarray:
    """Vectorised log weights for a (k, n) array of 0/1 rows."""
    bits = np.asarray(bits)
    if isinstance(model, Hardcore):
        out = bits @ np.log(model.fugacity)
        if model.graph.edges:
            e = np.array(model.graph.edges)
            bad = np.any(bits[:, e[:, 0]] & bits[:, e[:, 1]], axis=1)
            out = np.where(bad, -np.inf, out)
        return out
    J, h = interaction(model)
    x = 2.0 * bits - 1.0
    return 0.5 * np.einsum("ki,ij,kj->k", x, J, x) + x @ h


# ---------------------------------------------------------------------------
# transformations


def tilt(model: SpinModel, theta: float) -> SpinModel:
    """Reweight each occupied / +1 coordinate by (1 - theta)."""
    if not 0 <= theta < 1:
        raise ParameterError("tilt needs theta in [0, 1)")
    if isinstance(model, Hardcore):
        return Hardcore(model.graph, model.fugacity * (1 - theta))
    shift = 0.5 * math.log1p(-theta)
    return replace(model, fields=model.fields + shift)


def with_fugacity(model: Hardcore, lam) -> Hardcore:
    return Hardcore(model.graph, lam)


def factor_interaction(model: SpinModel, tol: float = 1e-10) -> np.ndarray:
    """L (r x n) with L'L = J for a PSD interaction representing ``model``.

    Graph models use J = beta (Delta I + A) for beta > 0 and
    J = beta A - lambda_min(beta A) I otherwise; diagonal shifts change the
    weight only by a constant because x'x = n.
    """
    if isinstance(model, IsingGraph):
        A = model.graph.adjacency
        if model.beta > 0:
            J = model.beta * (model.graph.max_degree * np.eye(model.n) + A)
        elif model.beta < 0:
            B = model.beta * A
            J = B - np.linalg.eigvalsh(B)[0] * np.eye(model.n)
        else:
            J = np.zeros((model.n, model.n))
    elif isinstance(model, IsingMatrix):
        J = np.array(model.J)
    else:
        raise ParameterError("factor_interaction needs an Ising model")
    return factor_psd(J, tol)


def psd_interaction(model: SpinModel) -> np.ndarray:
    """The PSD matrix that :func:`factor_interaction` factors."""
    L = factor_interaction(model)
    return L.T @ L


def factor_psd(J: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    J = (np.asarray(J, dtype=float) + np.asarray(J, dtype=float).T) / 2
    if J.size == 0:
        return np.zeros((0, J.shape[0]))
    scale = max(1.0, float(np.abs(J).max()))
    w, U = np.linalg.eigh(J)
    if w[0] < -tol * scale:
        raise ParameterError(f"interaction matrix is not PSD (min eigenvalue {w[0]:.3g})")
    keep = w > tol * scale
    return np.sqrt(w[keep])[:, None] * U[:, keep].T


def apply_pinning(model: SpinModel, pinning: Pinning | None) -> tuple[SpinModel, list[int]]:
    """Conditional model on the free vertices and the list of those vertices.

    Hardcore: neighbours of occupied pinned vertices are forced out and dropped.
    Ising: pinned spins become extra fields on their neighbours.
    """
    pinning = dict(pinning or {})
    n = model.n
    for v in pinning:
        if not 0 <= v < n:
            raise ParameterError(f"pinned vertex {v} outside the model")
    if isinstance(model, Hardcore):
        occ = {v for v, s in pinning.items() if s > 0}
        g = model.graph
        for v in occ:
            if g.neighbor_sets[v] & occ:
                raise EmptySupportError("pinned occupied vertices are adjacent")
        blocked = set(pinning)
        for v in occ:
            blocked |= g.neighbor_sets[v]
        free = [v for v in range(n) if v not in blocked]
        sub, _ = induced_subgraph(g, free)
        return Hardcore(sub, model.fugacity[free]), free
    free = [v for v in range(n) if v not in pinning]
    if isinstance(model, IsingGraph):
        h = np.array(model.fields, dtype=float)
        for u, v in model.graph.edges:
            if u in pinning and v not in pinning:
                h[v] += model.beta * np.sign(pinning[u])
            elif v in pinning and u not in pinning:
                h[u] += model.beta * np.sign(pinning[v])
        sub, _ = induced_subgraph(model.graph, free)
        return IsingGraph(sub, model.beta, h[free]), free
    J = model.J
    pinned = sorted(pinning)
    xs = np.array([np.sign(pinning[v]) for v in pinned], dtype=float)
    h = model.fields[free] + (J[np.ix_(free, pinned)] @ xs if pinned else 0.0)
    Jf = J[np.ix_(free, free)]
    return IsingMatrix(Jf, h), free


def to_dict(model: SpinModel, graph_ref: str | None = None) -> dict:
    """JSON-ready description of a model."""
    if isinstance(model, Hardcore):
        lam = model.fugacity
        return {"type": "hardcore", "graph": graph_ref,
                "lambda": float(lam[0]) if np.all(lam == lam[0]) else lam.tolist()}
    if isinstance(model, IsingGraph):
        return {"type": "ising", "graph": graph_ref, "beta": model.beta,
                "fields": model.fields.tolist()}
    return {"type": "ising-matrix", "J": model.J.tolist(), "fields": model.fields.tolist()}
