"""Percolation bounds for spectral independence.

SAW-tree exploration, the d-ary / Delta-regular branching processes with
Bernoulli(p) edges, their hitting-time pmf and extinction probability, and the
series bound for rank-one interactions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import bisect
from scipy.special import zeta
from scipy.stats import binom

from .errors import ParameterError
from .graphs import Graph, closure_pinning, incident_edges
from .models import IsingGraph
from .rng import make_rng

EXACT_SUBTREE = 20
EXACT_BIRTHDAY = 12


# ---------------------------------------------------------------------------
# SAW exploration


@dataclass(frozen=True)
class SawSample:
    size: int
    infinite: bool
    bound_mode: bool


class _SawWalker:
    """Lazy access to the SAW tree of ``g`` rooted at a vertex."""

    def __init__(self, g: Graph, order=None):
        n = g.n_vertices
        order = tuple(range(n)) if order is None else tuple(order)
        self.rank = [0] * n
        for i, v in enumerate(order):
            self.rank[v] = i
        self.inc = incident_edges(g)

    def children(self, node):
        """Children of a walk: (child node or None, pinning or None)."""
        path, pedges, pos = node
        v = path[-1]
        last = pedges[-1] if pedges else None
        out = []
        for u, k in self.inc[v]:
            if k == last:
                continue
            if u in pos:
                i = pos[u]
                out.append((None, closure_pinning(self.rank, (path[i + 1], pedges[i]), (v, k)), u))
            else:
                p2 = dict(pos)
                p2[u] = len(path)
                out.append(((path + [u], pedges + [k], p2), None, u))
        return out

    def log_ratio(self, node, beta: float, h: np.ndarray, limit: int):
        """log(Z+/Z-) at the subtree root, or None if the subtree has > limit nodes."""
        budget = [limit - 1]

        def rec(nd):
            v = nd[0][-1]
            acc = 2.0 * h[v]
            for child, pin, _ in self.children(nd):
                budget[0] -= 1
                if budget[0] < 0:
                    return None
                if child is None:
                    acc += 2.0 * beta * pin
                    continue
                r = rec(child)
                if r is None:
                    return None
                acc += _edge_message(beta, r)
            return acc

        return rec(node)


def _edge_message(beta: float, log_r: float) -> float:
    """log of (e^b R + e^-b) / (e^-b R + e^b)."""
    return float(np.logaddexp(beta + log_r, -beta) - np.logaddexp(-beta + log_r, beta))


def _influence(beta: float, log_r: float) -> float:
    """|Pr[u=+ | parent=+] - Pr[u=+ | parent=-]| given the child ratio."""
    p_plus = 1.0 / (1.0 + math.exp(-(2 * beta + log_r)))
    p_minus = 1.0 / (1.0 + math.exp(-(-2 * beta + log_r)))
    return abs(p_plus - p_minus)


def explore_saw(
    graph: Graph,
    v: int,
    beta: float,
    seed: int = 0,
    cap: int | None = None,
    fields=None,
    mode: str = "exact",
    order=None,
    rng=None,
    exact_limit: int = EXACT_SUBTREE,
    walker: _SawWalker | None = None,
) -> SawSample:
    """One sample of the number of explored SAW-tree nodes from ``v``.

    Children of an explored node are activated independently with the
    influence of the node on the child inside the subtree; pinned leaves are
    never activated. ``mode="bound"`` (or a subtree above ``exact_limit``
    nodes) uses tanh|beta| instead.
    """
    if mode not in ("exact", "bound"):
        raise ParameterError("mode must be 'exact' or 'bound'")
    n = graph.n_vertices
    cap = 10**6 if cap is None else cap
    h = np.zeros(n) if fields is None else np.broadcast_to(np.asarray(fields, dtype=float), (n,))
    rng = rng if rng is not None else make_rng(seed, "saw", v)
    walker = walker or _SawWalker(graph, order)
    t = math.tanh(abs(beta))
    used_bound = False
    queue = [([v], [], {v: 0})]
    size = 1
    while queue:
        node = queue.pop()
        for child, pin, _ in walker.children(node):
            if child is None:
                continue
            if beta == 0:
                prob = 0.0
            elif mode == "bound":
                prob = t
            else:
                lr = walker.log_ratio(child, beta, h, exact_limit)
                if lr is None:
                    prob = t
                    used_bound = True
                else:
                    prob = _influence(beta, lr)
            if rng.random() < prob:
                size += 1
                if size >= cap:
                    return SawSample(cap, True, used_bound or mode == "bound")
                queue.append(child)
    return SawSample(size, False, used_bound or mode == "bound")


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    trials: int
    bound_mode: bool = False


def coupling_independence_estimate(
    model: IsingGraph, v: int, trials: int = 1000, seed: int = 0, mode: str = "exact", cap: int | None = None
) -> Estimate:
    """Monte-Carlo mean of min(N_SAW, n) at vertex ``v``."""
    if not isinstance(model, IsingGraph):
        raise ParameterError("coupling independence needs a graphical Ising model")
    if trials < 1:
        raise ParameterError("trials must be positive")
    n = model.n
    cap = n if cap is None else cap
    rng = make_rng(seed, "coupling", v)
    vals = np.empty(trials)
    bound = False
    walker = _SawWalker(model.graph)
    for i in range(trials):
        s = explore_saw(model.graph, v, model.beta, cap=cap, fields=model.fields, mode=mode, rng=rng, walker=walker)
        vals[i] = min(s.size, n)
        bound |= s.bound_mode
    se = float(vals.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return Estimate(float(vals.mean()), se, trials, bound)


# ---------------------------------------------------------------------------
# branching processes


def _check(d: int, p: float):
    if d < 1 or not 0 <= p < 1:
        raise ParameterError("need d >= 1 and p in [0, 1)")


def ary_percolation_pmf(d: int, p: float, ell):
    """Pr[N_ary = ell] = Pr[Bin(d ell, p) = ell - 1] / ell."""
    _check(d, p)
    ell = np.asarray(ell)
    if np.any(ell < 1):
        raise ParameterError("ell must be >= 1")
    lf = ell.astype(float)
    with np.errstate(divide="ignore"):
        out = np.exp(binom.logpmf(lf - 1, d * lf, p) - np.log(lf))
    return float(out) if out.ndim == 0 else out


def ary_total_mass(d: int, p: float, L: int = 10**6, fit_from: int | None = None) -> float:
    """Sum of the pmf over all finite ell.

    The partial sum runs to ``L``; at criticality the remaining tail is
    extrapolated from a fit c ell^-3/2 + c' ell^-5/2 summed with the Hurwitz
    zeta function.
    """
    ell = np.arange(1, L + 1)
    pmf = ary_percolation_pmf(d, p, ell)
    total = math.fsum(pmf[::-1])
    if abs(d * p - 1) < 1e-12:
        lo = fit_from or L // 10
        x = ell[lo - 1:].astype(float)
        y = pmf[lo - 1:]
        A = np.stack([x**-1.5, x**-2.5], axis=1)
        c, *_ = np.linalg.lstsq(A, y, rcond=None)
        total += c[0] * zeta(1.5, L + 1) + c[1] * zeta(2.5, L + 1)
    return float(total)


def pmf_tail_exponent(d: int, p: float, lo: int = 100, hi: int = 100_000, points: int = 200) -> float:
    """Least-squares slope of log pmf against log ell on a log grid."""
    ell = np.unique(np.geomspace(lo, hi, points).astype(int))
    y = np.log(ary_percolation_pmf(d, p, ell))
    return float(np.polyfit(np.log(ell), y, 1)[0])


def extinction_probability(d: int, p: float, tol: float = 1e-15) -> float:
    """Smallest root of G(z) = z with G(z) = (1 - p + p z)^d."""
    _check(d, p)
    if d * p <= 1 or d == 1 or p == 0:
        return 1.0

    def G(z):
        return (1 - p + p * z) ** d - z

    # G' = 1 at z_min; the smallest root lies in [0, z_min)
    z_min = ((1.0 / (d * p)) ** (1.0 / (d - 1)) - (1 - p)) / p
    z_min = min(max(z_min, 0.0), 1.0)
    if G(z_min) >= 0:
        return 1.0
    gamma = bisect(G, 0.0, z_min, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500)
    return float(gamma)


def sample_total_progeny(d: int, p: float, size: int, seed: int = 0, cap: int = 10_000, start=1, rng=None) -> np.ndarray:
    """Total progeny of Galton-Watson trees with Bin(d, p) offspring.

    ``start`` ancestors are explored one at a time; runs still alive after
    ``cap`` explorations return -1.
    """
    _check(d, p)
    rng = rng if rng is not None else make_rng(seed, "progeny", d)
    active = np.broadcast_to(np.asarray(start, dtype=np.int64), (size,)).copy()
    out = np.where(active == 0, 0, -1).astype(np.int64)
    alive = np.flatnonzero(active > 0)
    t = 0
    while alive.size and t < cap:
        t += 1
        active[alive] += rng.binomial(d, p, size=alive.size) - 1
        done = active[alive] == 0
        out[alive[done]] = t
        alive = alive[~done]
    return out


def sample_ary(d: int, p: float, size: int, seed: int = 0, cap: int = 10_000, rng=None) -> np.ndarray:
    """Samples of N_ary_d; -1 marks runs longer than ``cap``."""
    return sample_total_progeny(d, p, size, seed, cap, 1, rng)


def sample_regular(delta: int, p: float, size: int, seed: int = 0, cap: int = 10_000, rng=None) -> np.ndarray:
    """Samples of N_reg: the root has Bin(delta, p) children, then (delta-1)-ary."""
    rng = rng if rng is not None else make_rng(seed, "regular", delta)
    k = rng.binomial(delta, p, size=size)
    prog = sample_total_progeny(delta - 1, p, size, cap=cap, start=k, rng=rng)
    return np.where(prog < 0, -1, prog + 1)


# ---------------------------------------------------------------------------
# rank-one bound


def elementary_symmetric(p, kmax: int) -> np.ndarray:
    """e_0..e_kmax of the entries of p."""
    e = np.zeros(kmax + 1)
    e[0] = 1.0
    for x in np.asarray(p, dtype=float):
        e[1:] = e[1:] + x * e[:-1]
    return e


@dataclass(frozen=True)
class BirthdayTail:
    exact: float | None
    bound: float


def birthday_tail(p, ell: int, exact_max: int = EXACT_BIRTHDAY) -> BirthdayTail:
    """Pr[first ell draws from p are distinct] and the bound exp(-ell(ell-1)/2n)."""
    p = np.asarray(p, dtype=float)
    if np.any(p < 0) or abs(p.sum() - 1) > 1e-9:
        raise ParameterError("p must be a probability vector")
    if ell < 0:
        raise ParameterError("ell must be >= 0")
    n = len(p)
    bound = math.exp(-ell * (ell - 1) / (2 * n))
    exact = None
    if ell <= exact_max:
        exact = float(math.factorial(ell) * elementary_symmetric(p, ell)[ell])
    return BirthdayTail(exact, bound)


def rank_one_si_bound(u, n: int | None = None, tol: float = 1e-12, max_terms: int = 10**7) -> float:
    """sum_l Pr[T >= l] ||u||^(2l) with exact tails up to l = 12, bounds beyond."""
    u = np.asarray(u, dtype=float)
    u = u[u != 0]
    if u.size == 0:
        return 1.0
    q = float(u @ u)
    p = u**2 / q
    m = len(p)
    e = elementary_symmetric(p, min(EXACT_BIRTHDAY, m))
    total = 0.0
    ell = 0
    while ell <= max_terms:
        if ell > m:
            return total
        if ell <= EXACT_BIRTHDAY:
            tail = min(math.factorial(ell) * e[ell] if ell >= 1 else 1.0, 1.0)
            tail = min(tail, math.exp(-ell * (ell - 1) / (2 * m)))
            total += tail * q**ell
        else:
            lt = -ell * (ell - 1) / (2 * m) + ell * math.log(q)
            total += math.exp(lt)
            r = q * math.exp(-ell / m)
            if r < 1 and math.exp(lt) * r / (1 - r) < tol:
                return total
        if q < 1 and ell >= 1 and q ** (ell + 1) / (1 - q) < tol:
            return total
        ell += 1
    return math.inf
