"""Brute-force oracles over the enumerated state space.

State ``s`` (an integer) has bit ``i`` set when vertex ``i`` is occupied / +1.
"""
from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, xlogy

from .errors import BudgetError, EmptySupportError, ParameterError
from .graphs import induced_subgraph
from .models import (
    Hardcore,
    IsingGraph,
    IsingMatrix,
    Pinning,
    SpinModel,
    apply_pinning,
    factor_interaction,
    is_ising,
    log_weights_bits,
)

DIST_STATE_CAP = 2**24
KERNEL_STATE_CAP = 2**20
_CHUNK = 2**16


def state_cap() -> int:
    """State cap for distributions; ``SPINLAB_BUDGET_STATES`` overrides it."""
    env = os.environ.get("SPINLAB_BUDGET_STATES")
    return int(env) if env else DIST_STATE_CAP


def bits_table(n: int, states=None) -> np.ndarray:
    """(k, n) int8 array of the bits of ``states`` (default: all 2^n states)."""
    s = np.arange(2**n, dtype=np.int64) if states is None else np.asarray(states, dtype=np.int64)
    return ((s[:, None] >> np.arange(n, dtype=np.int64)) & 1).astype(np.int8)


def popcount(states) -> np.ndarray:
    s = np.asarray(states, dtype=np.int64)
    return bits_table(64, s).sum(axis=1) if s.size else np.zeros(0, dtype=np.int64)


def _popcount(states: np.ndarray, n: int) -> np.ndarray:
    return bits_table(n, states).sum(axis=1).astype(np.int64)


@dataclass(frozen=True, eq=False)
class ExactDistribution:
    n: int
    log_probs: np.ndarray
    log_z: float = 0.0

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(np.isfinite(self.log_probs))

    def marginals(self) -> np.ndarray:
        """Pr[bit i = 1] for every vertex."""
        sup = self.support
        p = np.exp(self.log_probs[sup])
        return p @ bits_table(self.n, sup)


def unnormalized_log_weights(model: SpinModel) -> np.ndarray:
    n = model.n
    if 2**n > state_cap():
        raise BudgetError(f"2^{n} states exceed the state cap {state_cap()}")
    out = np.empty(2**n)
    for start in range(0, 2**n, _CHUNK):
        stop = min(2**n, start + _CHUNK)
        out[start:stop] = log_weights_bits(model, bits_table(n, np.arange(start, stop)))
    return out


def exact_distribution(model: SpinModel) -> ExactDistribution:
    """Normalised Gibbs distribution by enumeration."""
    lw = unnormalized_log_weights(model)
    lz = float(logsumexp(lw))
    return ExactDistribution(model.n, lw - lz, lz)


def log_partition(model: SpinModel, pinning: Pinning | None = None) -> float:
    """log Z of the (pinned) model; -inf when the pinning has empty support.

    The pinned value is the sum of the original weights over completions of
    the pinning.
    """
    if not pinning:
        return float(logsumexp(unnormalized_log_weights(model)))
    try:
        apply_pinning(model, pinning)
    except EmptySupportError:
        return -math.inf
    lw = unnormalized_log_weights(model)
    s = np.arange(2**model.n, dtype=np.int64)
    keep = np.ones(s.shape, dtype=bool)
    for v, x in pinning.items():
        keep &= ((s >> v) & 1) == (1 if x > 0 else 0)
    return float(logsumexp(lw[keep]))


# ---------------------------------------------------------------------------
# covariance and influence


def _moments(dist: ExactDistribution) -> tuple[np.ndarray, np.ndarray]:
    sup = dist.support
    p = np.exp(dist.log_probs[sup])
    B = bits_table(dist.n, sup).astype(float)
    return p @ B, B.T @ (p[:, None] * B)


def _native_scale(model: SpinModel | None) -> float:
    return 4.0 if model is not None and is_ising(model) else 1.0


def covariance_matrix(model: SpinModel, encoding: str = "native", dist: ExactDistribution | None = None) -> np.ndarray:
    """Covariance of the coordinates.

    ``encoding``: "01" (occupation bits), "pm" (+-1 spins) or "native"
    (0/1 for hardcore, +-1 for Ising). Cov_pm = 4 Cov_01.
    """
    dist = dist or exact_distribution(model)
    m1, m2 = _moments(dist)
    c01 = m2 - np.outer(m1, m1)
    c01 = (c01 + c01.T) / 2
    if encoding == "01":
        return c01
    if encoding == "pm":
        return 4.0 * c01
    if encoding == "native":
        return _native_scale(model) * c01
    raise ParameterError(f"unknown encoding {encoding!r}")


def influence_matrix(model: SpinModel, dist: ExactDistribution | None = None, tol: float = 1e-14) -> np.ndarray:
    """Psi(i, j) = Pr[X_j=+ | X_i=+] - Pr[X_j=+ | X_i=-] from conditionals.

    Rows of coordinates that are almost surely fixed are zero; the diagonal
    of every other row is 1.
    """
    dist = dist or exact_distribution(model)
    m1, m2 = _moments(dist)
    n = dist.n
    psi = np.zeros((n, n))
    for i in range(n):
        pi = m1[i]
        if pi <= tol or pi >= 1 - tol:
            continue
        plus = m2[i] / pi
        minus = (m1 - m2[i]) / (1 - pi)
        psi[i] = plus - minus
        psi[i, i] = 1.0
    return psi


def correlation_form(model: SpinModel, dist: ExactDistribution | None = None, tol: float = 1e-14) -> np.ndarray:
    """D^{-1/2} Cov D^{-1/2} with D = diag(Var); degenerate coordinates give 0."""
    c = covariance_matrix(model, "01", dist)
    var = np.diag(c).copy()
    ok = var > tol
    inv = np.zeros_like(var)
    inv[ok] = 1 / np.sqrt(var[ok])
    return inv[:, None] * c * inv[None, :]


def lambda_max(psi: np.ndarray) -> float:
    if psi.size == 0:
        return 0.0
    return float(np.max(np.linalg.eigvals(psi).real))


def _pinning_models(model: SpinModel):
    """Distinct conditional models over all pinnings (with their free sets)."""
    n = model.n
    if isinstance(model, Hardcore):
        # A pinning leaves the hardcore model on an induced subgraph; every
        # vertex subset arises (pin the rest unoccupied), and a disconnected
        # subgraph adds nothing beyond its components.
        g = model.graph
        for mask in range(1, 2**n):
            vs = [v for v in range(n) if mask >> v & 1]
            sub, _ = induced_subgraph(g, vs)
            if len(vs) > 1 and not _connected(sub):
                continue
            yield Hardcore(sub, model.fugacity[vs]), vs
        return
    seen = set()
    for choice in itertools.product((0, 1, -1), repeat=n):
        pin = {v: c for v, c in enumerate(choice) if c}
        if len(pin) == n:
            continue
        sub, free = apply_pinning(model, pin)
        key = (tuple(free), tuple(np.round(sub.fields, 12)))
        if key in seen:
            continue
        seen.add(key)
        yield sub, free


def _connected(g) -> bool:
    n = g.n_vertices
    seen = {0}
    stack = [0]
    while stack:
        v = stack.pop()
        for u in g.neighbors[v]:
            if u not in seen:
                seen.add(u)
                stack.append(u)
    return len(seen) == n


def si_lambda_max(model: SpinModel, over_pinnings: bool = False, pinning_cap: int = 14) -> float:
    """Largest eigenvalue of the influence matrix (max over pinnings if asked)."""
    if not over_pinnings:
        return lambda_max(influence_matrix(model))
    if model.n > pinning_cap:
        raise BudgetError(f"pinning enumeration limited to n <= {pinning_cap}")
    best = lambda_max(influence_matrix(model))
    for sub, _ in _pinning_models(model):
        best = max(best, lambda_max(influence_matrix(sub)))
    return best


def linear_statistic_variance(dist: ExactDistribution, s: np.ndarray, encoding: str = "pm") -> float:
    """Var(s'X) by direct enumeration."""
    sup = dist.support
    p = np.exp(dist.log_probs[sup])
    B = bits_table(dist.n, sup).astype(float)
    X = 2 * B - 1 if encoding == "pm" else B
    y = X @ np.asarray(s, dtype=float)
    m = p @ y
    return float(p @ (y - m) ** 2)


# ---------------------------------------------------------------------------
# kernels


@dataclass(frozen=True, eq=False)
class DenseKernel:
    """Row-stochastic matrix over the listed states (full-space indices)."""

    n: int
    states: np.ndarray
    matrix: np.ndarray
    name: str = ""
    reversible: bool = True
    meta: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.states)


def _check_kernel_size(m: int):
    if m > KERNEL_STATE_CAP or m * m * 8 > 2**31:
        raise BudgetError(f"dense kernel over {m} states exceeds the budget")


def restrict(dist: ExactDistribution, states: np.ndarray) -> np.ndarray:
    """Probabilities of ``dist`` on ``states``."""
    return np.exp(dist.log_probs[states])


def glauber_kernel(model: SpinModel, dist: ExactDistribution | None = None) -> DenseKernel:
    """Single-site heat-bath kernel over the support of the Gibbs measure."""
    dist = dist or exact_distribution(model)
    n = model.n
    states = dist.support
    m = len(states)
    _check_kernel_size(m)
    index = np.full(2**n, -1, dtype=np.int64)
    index[states] = np.arange(m)
    K = np.zeros((m, m))
    lp = dist.log_probs
    rows = np.arange(m)
    for v in range(n):
        bit = np.int64(1) << v
        s0 = states & ~bit
        s1 = states | bit
        a, b = lp[s0], lp[s1]
        p1 = np.exp(b - np.logaddexp(a, b))
        j1, j0 = index[s1], index[s0]
        ok1 = j1 >= 0
        np.add.at(K, (rows[ok1], j1[ok1]), p1[ok1] / n)
        np.add.at(K, (rows, j0), (1 - p1) / n)
    return DenseKernel(n, states, K, "glauber", True)


@dataclass(frozen=True, eq=False)
class FieldDynamicsParts:
    states: np.ndarray
    mu: np.ndarray  # stationary law on states
    P: np.ndarray  # noising, P[T, S]
    Q: np.ndarray  # denoising, Q[S, T]
    mu_theta: np.ndarray  # mu P


def field_dynamics_parts(model: SpinModel, theta: float, dist: ExactDistribution | None = None) -> FieldDynamicsParts:
    """Noising and denoising matrices of the field dynamics.

    P(T, S) = theta^|S| (1-theta)^(|T|-|S|) for S subset of T, and Q(S, .) is
    the (1-theta)-tilted law conditioned on containing S. Ising models use the
    set of +1 vertices.
    """
    if not 0 < theta < 1:
        raise ParameterError("field dynamics needs theta in (0, 1)")
    dist = dist or exact_distribution(model)
    n = model.n
    states = dist.support
    m = len(states)
    _check_kernel_size(m)
    size = _popcount(states, n)
    sub = (states[:, None] & states[None, :]) == states[:, None]  # sub[S, T]: S subset of T
    lt, l1t = math.log(theta), math.log1p(-theta)
    logP = np.where(sub.T, size[None, :] * lt + (size[:, None] - size[None, :]) * l1t, -np.inf)
    P = np.exp(logP)
    lmu = dist.log_probs[states]
    logQ = np.where(sub, (lmu + size * l1t)[None, :], -np.inf)
    logQ -= logsumexp(logQ, axis=1, keepdims=True)
    Q = np.exp(logQ)
    mu = np.exp(lmu)
    return FieldDynamicsParts(states, mu, P, Q, mu @ P)


def field_dynamics_kernel(model: SpinModel, theta: float, dist: ExactDistribution | None = None) -> DenseKernel:
    parts = field_dynamics_parts(model, theta, dist)
    return DenseKernel(model.n, parts.states, parts.P @ parts.Q, "field", True, {"theta": theta})


def proximal_kernel(model: SpinModel, theta: float = 0.5, nodes: int = 64, max_rank: int = 3) -> DenseKernel:
    """Exact proximal-sampler kernel at theta = 1/2 by Gauss-Hermite quadrature.

    K(x, z) = E_g[nu_{Lx+g}(z)], g ~ N(0, I_r), where nu_y is the product
    measure with Pr[z_i = +1] = sigmoid(2 (h + L'y)_i).
    """
    if not is_ising(model):
        raise ParameterError("proximal kernel needs an Ising model")
    if abs(theta - 0.5) > 1e-12:
        raise ParameterError("the exact proximal kernel is implemented for theta = 1/2")
    n = model.n
    if 2**n > KERNEL_STATE_CAP:
        raise BudgetError("state space too large for a dense kernel")
    L = factor_interaction(model)
    r = L.shape[0]
    if r > max_rank:
        raise BudgetError(f"rank {r} exceeds the quadrature limit {max_rank}")
    h = np.asarray(model.fields, dtype=float)
    states = np.arange(2**n, dtype=np.int64)
    X = 2.0 * bits_table(n, states) - 1.0
    if r == 0:
        grid = np.zeros((1, 0))
        w = np.ones(1)
    else:
        t, wt = np.polynomial.hermite_e.hermegauss(nodes)
        wt = wt / math.sqrt(2 * math.pi)
        grid = np.array(list(itertools.product(t, repeat=r)))
        w = np.prod(np.array(list(itertools.product(wt, repeat=r))), axis=1)
    shift = grid @ L  # (Nq, n): L'g for each node
    J = L.T @ L
    K = np.empty((2**n, 2**n))
    for i in range(2**n):
        a = h + J @ X[i] + shift  # (Nq, n)
        lognorm = np.logaddexp(a, -a).sum(axis=1)
        K[i] = w @ np.exp(a @ X.T - lognorm[:, None])
    return DenseKernel(n, states, K, "proximal", True, {"rank": r, "nodes": nodes})


# ---------------------------------------------------------------------------
# diagnostics


@dataclass(frozen=True)
class ChainDiagnostics:
    gap: float
    tensorization_constant: float
    tv_times: tuple[int, ...]
    tv_curve: tuple[float, ...]
    stationarity_error: float
    reversibility_error: float


def stationarity_error(kernel: DenseKernel, pi: np.ndarray) -> float:
    return float(np.abs(pi @ kernel.matrix - pi).max())


def reversibility_error(kernel: DenseKernel, pi: np.ndarray) -> float:
    F = pi[:, None] * kernel.matrix
    return float(np.abs(F - F.T).max())


def _as_pi(kernel: DenseKernel, mu) -> np.ndarray:
    if isinstance(mu, ExactDistribution):
        return restrict(mu, kernel.states)
    pi = np.asarray(mu, dtype=float)
    if pi.shape != (kernel.size,):
        raise ParameterError("stationary vector does not match the kernel states")
    return pi


def spectral_gap(kernel: DenseKernel, pi: np.ndarray) -> float:
    K = kernel.matrix
    if reversibility_error(kernel, pi) < 1e-8 and np.all(pi > 0):
        d = np.sqrt(pi)
        S = d[:, None] * K / d[None, :]
        ev = np.linalg.eigvalsh((S + S.T) / 2)
        lam2 = ev[-2] if len(ev) > 1 else 0.0
    else:
        ev, vec = np.linalg.eig(K)
        res = np.abs(K @ vec - vec * ev[None, :]).max()
        if res > 1e-8:
            raise ParameterError(f"eigen-decomposition residual {res:.2e} too large")
        re = np.sort(ev.real)
        lam2 = re[-2] if len(re) > 1 else 0.0
    return float(1.0 - lam2)


def chain_diagnostics(kernel: DenseKernel, mu, t_grid=None, stationarity_tol: float = 1e-8) -> ChainDiagnostics:
    """Spectral gap, Glauber tensorization constant 1/(n gap) and worst-start TV curve."""
    pi = _as_pi(kernel, mu)
    st = stationarity_error(kernel, pi)
    if st > stationarity_tol:
        raise ParameterError(f"kernel is not stationary for mu (error {st:.2e})")
    gap = spectral_gap(kernel, pi)
    tens = math.inf if gap <= 0 else 1.0 / (kernel.n * gap)
    if t_grid is None:
        t_grid = [2**k for k in range(11)]
    t_grid = sorted(int(t) for t in t_grid)
    curve = []
    Kt = np.eye(kernel.size)
    cur = 0
    for t in t_grid:
        Kt = Kt @ np.linalg.matrix_power(kernel.matrix, t - cur)
        cur = t
        curve.append(float(0.5 * np.abs(Kt - pi[None, :]).sum(axis=1).max()))
    return ChainDiagnostics(gap, tens, tuple(t_grid), tuple(curve), st, reversibility_error(kernel, pi))


def phi_entropy(mu, f, kind: str = "entropy") -> float:
    """E[phi(f)] - phi(E[f]) with phi(x) = x^2 ("variance") or x log x ("entropy")."""
    p = mu.probs if isinstance(mu, ExactDistribution) else np.asarray(mu, dtype=float)
    f = np.asarray(f, dtype=float)
    if kind == "variance":
        m = p @ f
        return float(p @ (f - m) ** 2)
    if kind == "entropy":
        if np.any(f < 0):
            raise ParameterError("entropy needs a non-negative function")
        m = p @ f
        return float(p @ xlogy(f, f) - xlogy(m, m))
    raise ParameterError(f"unknown phi-entropy kind {kind!r}")


def to_csv(matrix, path) -> None:
    """Write a matrix row-major with 17 significant digits."""
    np.savetxt(path, np.atleast_2d(np.asarray(matrix, dtype=float)), fmt="%.17g", delimiter=",")
