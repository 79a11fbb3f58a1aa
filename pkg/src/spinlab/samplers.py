"""Monte-Carlo versions of the three chains with counter-based seeding.

Configurations are int8 arrays of 0/1 bits (1 = occupied / +1 spin).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.special import expit, ndtri

from .errors import ParameterError
from .exact import exact_distribution
from .graphs import induced_subgraph
from .models import (
    Hardcore,
    IsingGraph,
    IsingMatrix,
    SpinModel,
    apply_pinning,
    factor_interaction,
    interaction,
    is_ising,
    tilt,
)
from .rng import make_rng

CHUNK = 1 << 18
EXACT_COMPONENT = 20
INNER_FACTOR = 50


@dataclass
class ChainState:
    config: np.ndarray
    step: int
    rng: np.random.Generator

    def copy_config(self) -> np.ndarray:
        return self.config.copy()


def chain_rng(seed: int, chain_index: int = 0, purpose: str = "chain") -> np.random.Generator:
    return make_rng(seed, purpose, chain_index)


def gaussians(rng: np.random.Generator, size) -> np.ndarray:
    """Standard normals by inverse CDF of uniforms on (0, 1)."""
    u = (rng.integers(0, 2**53, size=size) + 0.5) / 2.0**53
    return ndtri(u)


def is_independent(g, bits) -> bool:
    if not g.edges:
        return True
    e = np.array(g.edges)
    return not np.any((bits[e[:, 0]] == 1) & (bits[e[:, 1]] == 1))


def _sparse_interaction(model: SpinModel):
    """CSR (indptr, indices, weights) of the off-diagonal couplings."""
    if isinstance(model, IsingGraph):
        indptr, indices = model.graph.csr
        return indptr, indices, np.full(len(indices), float(model.beta))
    J, _ = interaction(model)
    J = J.copy()
    np.fill_diagonal(J, 0.0)
    rows, cols = np.nonzero(J)
    indptr = np.zeros(model.n + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    return np.cumsum(indptr), cols.astype(np.int64), J[rows, cols]


# ---------------------------------------------------------------------------
# Glauber


def conditional_plus(model: SpinModel, bits: np.ndarray, v: int) -> float:
    """Pr[bit v = 1 | the other coordinates of ``bits``]."""
    if isinstance(model, Hardcore):
        if any(bits[u] for u in model.graph.neighbor_sets[v]):
            return 0.0
        lam = model.fugacity[v]
        return float(lam / (1 + lam))
    J, h = interaction(model)
    x = 2.0 * bits - 1.0
    f = h[v] + J[v] @ x - J[v, v] * x[v]
    return float(expit(2 * f))


@numba.njit(cache=True)
def _hardcore_sweep(x, indptr, indices, p_occ, verts, us, thin, offset, out):
    k = 0
    for t in range(verts.shape[0]):
        v = verts[t]
        if us[t] < p_occ[v]:
            free = True
            for j in range(indptr[v], indptr[v + 1]):
                if x[indices[j]] == 1:
                    free = False
                    break
            if free:
                x[v] = 1
        else:
            x[v] = 0
        if thin > 0 and (offset + t + 1) % thin == 0:
            out[k, :] = x
            k += 1
    return k


@numba.njit(cache=True)
def _ising_sweep(x, indptr, indices, weights, h, verts, us, thin, offset, out):
    # x holds +-1 spins
    k = 0
    for t in range(verts.shape[0]):
        v = verts[t]
        f = h[v]
        for j in range(indptr[v], indptr[v + 1]):
            f += weights[j] * x[indices[j]]
        p = 1.0 / (1.0 + math.exp(-2.0 * f))
        x[v] = 1 if us[t] < p else -1
        if thin > 0 and (offset + t + 1) % thin == 0:
            out[k, :] = x
            k += 1
    return k


class GlauberRunner:
    """Batched heat-bath updates driven by pre-drawn vertex/uniform streams."""

    def __init__(self, model: SpinModel):
        self.model = model
        self.n = model.n
        if isinstance(model, Hardcore):
            self.indptr, self.indices = model.graph.csr
            self.p_occ = model.fugacity / (1 + model.fugacity)
        else:
            self.indptr, self.indices, self.weights = _sparse_interaction(model)
            self.h = np.asarray(model.fields, dtype=float)

    def advance(self, bits: np.ndarray, steps: int, rng, thin: int = 0, offset: int = 0):
        """Run ``steps`` updates in place; return configs recorded every ``thin`` steps."""
        n = self.n
        recorded = []
        done = 0
        hard = isinstance(self.model, Hardcore)
        x = bits.astype(np.int8) if hard else (2 * bits.astype(np.int8) - 1)
        while done < steps:
            m = min(CHUNK, steps - done)
            verts = rng.integers(0, n, size=m)
            us = rng.random(m)
            rows = ((offset + done + m) // thin - (offset + done) // thin) if thin > 0 else 0
            out = np.empty((rows, n), dtype=np.int8)
            if hard:
                k = _hardcore_sweep(x, self.indptr, self.indices, self.p_occ, verts, us, thin, offset + done, out)
            else:
                k = _ising_sweep(x, self.indptr, self.indices, self.weights, self.h, verts, us, thin, offset + done, out)
            if k:
                recorded.append(out[:k] if hard else ((out[:k] + 1) // 2).astype(np.int8))
            done += m
        bits[:] = x if hard else (x + 1) // 2
        if recorded:
            return np.concatenate(recorded)
        return np.empty((0, n), dtype=np.int8)


def glauber_step(model: SpinModel, state: ChainState) -> ChainState:
    """One heat-bath update at a uniformly random vertex."""
    x = state.copy_config()
    v = int(state.rng.integers(0, model.n))
    u = state.rng.random()
    if isinstance(model, Hardcore):
        lam = model.fugacity[v]
        if u < lam / (1 + lam):
            if not any(x[w] for w in model.graph.neighbor_sets[v]):
                x[v] = 1
        else:
            x[v] = 0
    else:
        x[v] = 1 if u < conditional_plus(model, x, v) else 0
    return ChainState(x, state.step + 1, state.rng)


# ---------------------------------------------------------------------------
# field dynamics


def _components(model: SpinModel) -> list[list[int]]:
    n = model.n
    if isinstance(model, IsingMatrix):
        adj = [set(np.flatnonzero(np.abs(model.J[v]) > 0)) - {v} for v in range(n)]
    else:
        adj = model.graph.neighbor_sets
    seen = np.zeros(n, dtype=bool)
    comps = []
    for s in range(n):
        if seen[s]:
            continue
        seen[s] = True
        stack, comp = [s], []
        while stack:
            v = stack.pop()
            comp.append(v)
            for u in adj[v]:
                if not seen[u]:
                    seen[u] = True
                    stack.append(u)
        comps.append(sorted(comp))
    return comps


def _submodel(model: SpinModel, vs: list[int]) -> SpinModel:
    if isinstance(model, Hardcore):
        g, _ = induced_subgraph(model.graph, vs)
        return Hardcore(g, model.fugacity[vs])
    if isinstance(model, IsingGraph):
        g, _ = induced_subgraph(model.graph, vs)
        return IsingGraph(g, model.beta, model.fields[vs])
    return IsingMatrix(model.J[np.ix_(vs, vs)], model.fields[vs])


@dataclass
class FieldDynamics:
    """Field dynamics with thinning probability ``1 - theta`` per occupied vertex.

    The denoising draw is exact on free components with at most
    ``exact_cap`` vertices and uses Glauber on the tilted pinned component
    (``inner_factor * m * log m`` steps) otherwise.
    """

    model: SpinModel
    theta: float
    exact_cap: int = EXACT_COMPONENT
    inner_factor: float = INNER_FACTOR
    _tables: dict = field(default_factory=dict, repr=False)
    inner_runs: int = 0
    inner_steps: int = 0

    def __post_init__(self):
        if not 0 < self.theta < 1:
            raise ParameterError("field dynamics needs theta in (0, 1)")
        self.tilted = tilt(self.model, self.theta)

    def noise(self, bits: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Keep each occupied vertex when its uniform falls below theta."""
        return (bits.astype(bool) & (u < self.theta)).astype(np.int8)

    def _table(self, sub: SpinModel, free_ids: list[int]):
        key = (tuple(free_ids), None if isinstance(sub, Hardcore) else np.round(sub.fields, 13).tobytes())
        tab = self._tables.get(key)
        if tab is None:
            d = exact_distribution(sub)
            sup = d.support
            cdf = np.cumsum(np.exp(d.log_probs[sup]))
            cdf /= cdf[-1]
            bits = ((sup[:, None] >> np.arange(sub.n)) & 1).astype(np.int8)
            tab = (bits, cdf)
            if len(self._tables) < 100_000:
                self._tables[key] = tab
        return tab

    def _pinned(self, S: np.ndarray):
        pin = {int(v): 1 for v in np.flatnonzero(S)}
        return apply_pinning(self.tilted, pin)

    def denoise(self, S: np.ndarray, rng, start: np.ndarray | None = None, trials: int = 1) -> np.ndarray:
        """Draw ``trials`` configurations from the tilted law conditioned on containing S."""
        sub, free = self._pinned(S)
        out = np.repeat(S.astype(np.int8)[None, :], trials, axis=0)
        free = np.asarray(free, dtype=np.int64)
        for comp in _components(sub) if sub.n else []:
            ids = free[comp]
            csub = _submodel(sub, comp)
            if len(comp) <= self.exact_cap:
                bits, cdf = self._table(csub, list(ids))
                idx = np.minimum(np.searchsorted(cdf, rng.random(trials), side="right"), len(cdf) - 1)
                out[:, ids] = bits[idx]
            else:
                m = len(comp)
                steps = int(math.ceil(self.inner_factor * m * math.log(m)))
                runner = GlauberRunner(csub)
                for t in range(trials):
                    x0 = np.zeros(m, dtype=np.int8) if start is None else start[ids].astype(np.int8)
                    if isinstance(csub, Hardcore) and not is_independent(csub.graph, x0):
                        x0 = np.zeros(m, dtype=np.int8)
                    runner.advance(x0, steps, rng)
                    out[t, ids] = x0
                    self.inner_runs += 1
                    self.inner_steps += steps
        return out

    def step(self, state: ChainState) -> ChainState:
        S = self.noise(state.config, state.rng.random(self.model.n))
        new = self.denoise(S, state.rng, start=state.config)[0]
        return ChainState(new, state.step + 1, state.rng)


def field_dynamics_step(model: SpinModel, state: ChainState, theta: float, inner: FieldDynamics | None = None) -> ChainState:
    fd = inner if inner is not None else FieldDynamics(model, theta)
    return fd.step(state)


# ---------------------------------------------------------------------------
# proximal sampler


def proximal_batch(model: SpinModel, L: np.ndarray, bits: np.ndarray, rng) -> np.ndarray:
    """One proximal round for each row of ``bits`` (k, n)."""
    bits = np.atleast_2d(bits)
    x = 2.0 * bits - 1.0
    h = np.asarray(model.fields, dtype=float)
    g = gaussians(rng, (bits.shape[0], L.shape[0]))
    y = x @ L.T + g
    a = h[None, :] + y @ L
    u = rng.random(bits.shape)
    return (u < expit(2 * a)).astype(np.int8)


def proximal_step(model: SpinModel, state: ChainState, L: np.ndarray | None = None) -> ChainState:
    """y = Lx + g, then z_i = +1 with probability sigmoid(2 (h + L'y)_i)."""
    if not is_ising(model):
        raise ParameterError("the proximal sampler needs an Ising model")
    L = factor_interaction(model) if L is None else L
    z = proximal_batch(model, L, state.config[None, :], state.rng)[0]
    return ChainState(z, state.step + 1, state.rng)


# ---------------------------------------------------------------------------
# drivers


def initial_config(model: SpinModel, init, rng=None) -> np.ndarray:
    n = model.n
    if isinstance(init, str):
        if init in ("empty", "all-minus"):
            return np.zeros(n, dtype=np.int8)
        if init == "all-plus":
            if isinstance(model, Hardcore) and model.graph.edges:
                raise ParameterError("all-plus is not an independent set")
            return np.ones(n, dtype=np.int8)
        if init == "random":
            rng = rng if rng is not None else make_rng(0, "init")
            x = (rng.random(n) < 0.5).astype(np.int8)
            if isinstance(model, Hardcore):
                for u, v in model.graph.edges:
                    if x[u] and x[v]:
                        x[max(u, v)] = 0
            return x
        raise ParameterError(f"unknown init {init!r}")
    x = (np.asarray(init) > 0).astype(np.int8)
    if x.shape != (n,):
        raise ParameterError("initial configuration has the wrong length")
    if isinstance(model, Hardcore) and not is_independent(model.graph, x):
        raise ParameterError("initial configuration is not an independent set")
    return x


def _encode(model: SpinModel, bits: np.ndarray) -> np.ndarray:
    return 2.0 * bits - 1.0 if is_ising(model) else bits.astype(float)


def batch_means(y: np.ndarray, batches: int = 20) -> tuple[float, float]:
    """Mean of ``y`` and its batch-means standard error."""
    y = np.asarray(y, dtype=float)
    if len(y) == 0:
        return math.nan, math.nan
    b = min(batches, len(y))
    parts = np.array_split(y, b)
    means = np.array([p.mean() for p in parts])
    se = float(means.std(ddof=1) / math.sqrt(b)) if b > 1 else math.nan
    return float(y.mean()), se


@dataclass
class ChainRun:
    steps: np.ndarray
    configs: np.ndarray
    summary: dict

    def config_hex(self) -> list[str]:
        out = []
        for row in self.configs:
            val = 0
            for i in np.flatnonzero(row):
                val |= 1 << int(i)
            out.append(format(val, "x"))
        return out


def run_chain(
    model: SpinModel,
    chain: str = "glauber",
    init="empty",
    steps: int = 1000,
    seed: int = 0,
    thin: int = 1,
    burn_in: int = 0,
    theta: float = 0.9,
    pairs: bool = False,
    chain_index: int = 0,
    keep_samples: bool = True,
) -> ChainRun:
    """Run one chain; record every ``thin`` steps after ``burn_in``."""
    if thin < 1 or steps < 0 or burn_in < 0:
        raise ParameterError("steps, thin and burn_in must be non-negative (thin >= 1)")
    rng = chain_rng(seed, chain_index, chain)
    x = initial_config(model, init, make_rng(seed, "init", chain_index))
    n = model.n
    meta: dict = {"chain": chain, "steps": steps, "thin": thin, "burn_in": burn_in, "seed": seed}
    if chain == "glauber":
        runner = GlauberRunner(model)
        runner.advance(x, min(burn_in, steps), rng)
        rec = runner.advance(x, max(0, steps - burn_in), rng, thin=thin, offset=min(burn_in, steps))
        first = (min(burn_in, steps) // thin + 1) * thin
        idx = np.arange(first, first + thin * len(rec), thin)
    elif chain in ("field", "proximal"):
        if chain == "field":
            fd = FieldDynamics(model, theta)
            meta["theta"] = theta
        else:
            L = factor_interaction(model)
            meta["rank"] = int(L.shape[0])
        state = ChainState(x, 0, rng)
        rows, idx_l = [], []
        for t in range(1, steps + 1):
            state = fd.step(state) if chain == "field" else proximal_step(model, state, L)
            if isinstance(model, Hardcore):
                assert is_independent(model.graph, state.config)
            if t > burn_in and t % thin == 0:
                rows.append(state.config.copy())
                idx_l.append(t)
        x = state.config
        rec = np.array(rows, dtype=np.int8).reshape(len(rows), n)
        idx = np.array(idx_l, dtype=np.int64)
        if chain == "field":
            meta["inner_glauber_runs"] = fd.inner_runs
            meta["inner_glauber_steps"] = fd.inner_steps
    else:
        raise ParameterError(f"unknown chain {chain!r}")
    X = _encode(model, rec)
    mag = X.sum(axis=1)
    m_mean, m_se = batch_means(mag)
    summary = dict(meta)
    summary.update(
        n_samples=int(len(rec)),
        mean=X.mean(axis=0).tolist() if len(rec) else [],
        magnetization=m_mean,
        magnetization_stderr=m_se,
        final_config=x.astype(int).tolist(),
    )
    if pairs and len(rec):
        summary["pair_moments"] = (X.T @ X / len(rec)).tolist()
    if not keep_samples:
        rec, idx = rec[:0], idx[:0]
    return ChainRun(idx, rec, summary)


@dataclass(frozen=True)
class CovarianceEstimate:
    value: float
    stderr: float
    n_samples: int


def estimate_covariance_quadratic(
    model: SpinModel,
    s,
    sweeps: int = 20000,
    burn_in_sweeps: int = 1000,
    seed: int = 0,
    batches: int = 20,
    init="all-minus",
    chain_index: int = 0,
) -> CovarianceEstimate:
    """Glauber estimate of Var(s'X) / n with batch-means standard error.

    X is the native encoding (+-1 spins for Ising, 0/1 for hardcore). One
    sample is recorded per sweep of n single-site updates.
    """
    s = np.asarray(s, dtype=float)
    n = model.n
    if s.shape != (n,):
        raise ParameterError("sign vector has the wrong length")
    rng = chain_rng(seed, chain_index, "covariance")
    x = initial_config(model, init, make_rng(seed, "init", chain_index))
    runner = GlauberRunner(model)
    runner.advance(x, burn_in_sweeps * n, rng)
    ys = []
    per = max(1, CHUNK // n)
    left = sweeps
    off = 0
    while left > 0:
        k = min(per, left)
        rec = runner.advance(x, k * n, rng, thin=n, offset=off)
        off += k * n
        ys.append(_encode(model, rec) @ s)
        left -= k
    y = np.concatenate(ys)
    mean = y.mean()
    parts = np.array_split((y - mean) ** 2, batches)
    vals = np.array([p.mean() for p in parts])
    return CovarianceEstimate(float(vals.mean() / n), float(vals.std(ddof=1) / math.sqrt(batches) / n), len(y))


def one_step_samples(
    model: SpinModel, chain: str, start, trials: int, seed: int = 0, theta: float = 0.5
) -> np.ndarray:
    """Bitmask states reached after one step from ``start`` in ``trials`` runs."""
    rng = make_rng(seed, "one-step", chain)
    x0 = initial_config(model, start)
    n = model.n
    weights = 1 << np.arange(n, dtype=np.int64)
    base = int(x0 @ weights)
    if chain == "glauber":
        p = np.array([conditional_plus(model, x0, v) for v in range(n)])
        verts = rng.integers(0, n, size=trials)
        newbit = rng.random(trials) < p[verts]
        bit = np.int64(1) << verts
        return np.where(newbit, base | bit, base & ~bit)
    if chain == "field":
        fd = FieldDynamics(model, theta)
        S = fd.noise(np.repeat(x0[None, :], trials, axis=0), rng.random((trials, n)))
        keys = S @ weights
        out = np.empty(trials, dtype=np.int64)
        for key in np.unique(keys):
            sel = np.flatnonzero(keys == key)
            res = fd.denoise(S[sel[0]], rng, start=x0, trials=len(sel))
            out[sel] = res @ weights
        return out
    if chain == "proximal":
        L = factor_interaction(model)
        res = proximal_batch(model, L, np.repeat(x0[None, :], trials, axis=0), rng)
        return res @ weights
    raise ParameterError(f"unknown chain {chain!r}")
