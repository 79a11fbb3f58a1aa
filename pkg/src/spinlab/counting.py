"""Deterministic approximate counting by truncating the subset expansion

    Z = sum_S (theta / (1 - theta))^|S| Z_{S,theta},
    Z_{S,theta} = sum_{T >= S} wt(T) (1 - theta)^|T|,

to |S| < k, with each Z_{S,theta} obtained from single-site marginals of the
(1 - theta)-tilted model computed on the self-avoiding-walk tree.
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import BudgetError, ParameterError
from .exact import unnormalized_log_weights
from .models import Hardcore, IsingGraph, SpinModel, lambda_c, log_weight

TERM_BUDGET = 2**20


# ---------------------------------------------------------------------------
# exact oracle


def superset_log_sums(log_w: np.ndarray, n: int) -> np.ndarray:
    """out[S] = logsumexp of log_w[T] over all T containing S."""
    a = np.array(log_w, dtype=float)
    for i in range(n):
        v = a.reshape(-1, 2, 2**i)  # axis 1 is bit i
        v[:, 0, :] = np.logaddexp(v[:, 0, :], v[:, 1, :])
    return a


def _popcounts(n: int) -> np.ndarray:
    s = np.arange(2**n, dtype=np.int64)
    return ((s[:, None] >> np.arange(n)) & 1).sum(axis=1)


def all_z_s_theta(model: SpinModel, theta: float) -> np.ndarray:
    """log Z_{S,theta} for every subset S (bitmask index)."""
    n = model.n
    lw = unnormalized_log_weights(model) + _popcounts(n) * math.log1p(-theta)
    return superset_log_sums(lw, n)


def _mask(S) -> int:
    if isinstance(S, (int, np.integer)):
        return int(S)
    m = 0
    for v in S:
        m |= 1 << int(v)
    return m


def z_s_theta_exact(model: SpinModel, S, theta: float) -> float:
    """log Z_{S,theta} by enumerating the supersets of S."""
    if not 0 <= theta < 1:
        raise ParameterError("theta must lie in [0, 1)")
    n = model.n
    m = _mask(S)
    lw = unnormalized_log_weights(model)
    s = np.arange(2**n, dtype=np.int64)
    keep = (s & m) == m
    return float(logsumexp(lw[keep] + _popcounts(n)[keep] * math.log1p(-theta)))


# ---------------------------------------------------------------------------
# tree recursions


def _bits(mask: int):
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


class HardcoreRecursion:
    """Memoised ratio R = Pr[w in] / Pr[w out] on the truncated SAW tree.

    A state is (available vertices, blocked vertices, w, remaining depth).
    Blocked vertices carry a closure leaf pinned occupied; a blocked vertex
    has R = 0 once its leaves are within depth. The memo is shared across
    calls, so it must only be used with one fugacity vector.
    """

    def __init__(self, model: Hardcore, order=None):
        g = model.graph
        self.n = g.n_vertices
        self.lam = [float(x) for x in model.fugacity]
        order = list(range(self.n)) if order is None else list(order)
        self.rank = [0] * self.n
        for i, v in enumerate(order):
            self.rank[v] = i
        self.nbr = [sum(1 << u for u in s) for s in g.neighbor_sets]
        self.memo: dict = {}
        self.calls = 0

    def component(self, avail: int, w: int) -> int:
        comp = 1 << w
        frontier = comp
        while frontier:
            new = 0
            for x in _bits(frontier):
                new |= self.nbr[x]
            new &= avail & ~comp
            comp |= new
            frontier = new
        return comp

    def ratio(self, avail: int, blocked: int, w: int, r: int) -> float:
        comp = self.component(avail, w)
        size = comp.bit_count()
        r = min(r, size + 1)
        key = (comp, blocked & comp, w, r)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        self.calls += 1
        if r == 0:
            val = self.lam[w]
        elif blocked >> w & 1:
            val = 0.0
        else:
            nb = sorted(_bits(self.nbr[w] & comp), key=self.rank.__getitem__)
            rest = comp & ~(1 << w)
            val = self.lam[w]
            later = 0
            for x in nb:
                later |= 1 << x
            for u in nb:
                later &= ~(1 << u)
                val /= 1.0 + self.ratio(rest, blocked | later, u, r - 1)
        self.memo[key] = val
        return val


class IsingRecursion:
    """Memoised log(Pr[w=+]/Pr[w=-]) on the truncated SAW tree of an Ising graph.

    Pinned neighbours (external pins and closure leaves) enter as field
    offsets counted in units of beta; they only act when the leaves are within
    the remaining depth.
    """

    def __init__(self, model: IsingGraph, order=None):
        g = model.graph
        self.n = g.n_vertices
        self.beta = float(model.beta)
        self.h = [float(x) for x in model.fields]
        order = list(range(self.n)) if order is None else list(order)
        self.rank = [0] * self.n
        for i, v in enumerate(order):
            self.rank[v] = i
        self.inc = [[] for _ in range(self.n)]
        for k, (u, v) in enumerate(g.edges):
            self.inc[u].append((v, k))
            self.inc[v].append((u, k))
        self.nbr = [sum(1 << u for u, _ in lst) for lst in self.inc]
        self.memo: dict = {}
        self.calls = 0

    component = HardcoreRecursion.component

    def _message(self, lr: float) -> float:
        b = self.beta
        return float(np.logaddexp(b + lr, -b) - np.logaddexp(-b + lr, b))

    def log_ratio(self, avail: int, offsets: dict, w: int, r: int) -> float:
        comp = self.component(avail, w)
        size = comp.bit_count()
        r = min(r, size + 1)
        offs = tuple(offsets.get(x, 0) for x in _bits(comp))
        key = (comp, offs, w, r)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        self.calls += 1
        lr = 2.0 * self.h[w]
        if r > 0:
            lr += 2.0 * self.beta * offsets.get(w, 0)
            edges = sorted(((u, k) for u, k in self.inc[w] if comp >> u & 1),
                           key=lambda t: (self.rank[t[0]], t[1]))
            rest = comp & ~(1 << w)
            for i, (u, k) in enumerate(edges):
                child = {x: offsets.get(x, 0) for x in _bits(rest)}
                for j, (x, _) in enumerate(edges):
                    if j != i:
                        child[x] += 1 if j > i else -1
                lr += self._message(self.log_ratio(rest, child, u, r - 1))
        self.memo[key] = lr
        return lr


def weitz_marginal(model: SpinModel, pinning=None, v: int = 0, depth: int = 10**9, recursion=None) -> float:
    """Pr[v occupied / +1] from the SAW-tree recursion truncated at ``depth``.

    Hardcore pins are applied exactly (pinned and blocked vertices are
    removed); Ising pins enter as fields on their neighbours.
    """
    pinning = dict(pinning or {})
    n = model.n
    if v in pinning:
        return 1.0 if pinning[v] > 0 else 0.0
    if isinstance(model, Hardcore):
        rec = recursion or HardcoreRecursion(model)
        occ = [u for u, s in pinning.items() if s > 0]
        removed = 0
        for u in pinning:
            removed |= 1 << u
        for u in occ:
            removed |= rec.nbr[u]
        if removed >> v & 1:
            return 0.0
        for u in occ:
            if rec.nbr[u] & sum(1 << x for x in occ):
                raise ParameterError("pinned occupied vertices are adjacent")
        avail = ((1 << n) - 1) & ~removed
        R = rec.ratio(avail, 0, v, depth)
        return R / (1.0 + R)
    if isinstance(model, IsingGraph):
        rec = recursion or IsingRecursion(model)
        avail = ((1 << n) - 1)
        offsets: dict = {}
        for u, s in pinning.items():
            avail &= ~(1 << u)
            for x, _ in rec.inc[u]:
                offsets[x] = offsets.get(x, 0) + (1 if s > 0 else -1)
        lr = rec.log_ratio(avail, offsets, v, depth)
        return float(1.0 / (1.0 + math.exp(-lr)))
    raise ParameterError("weitz_marginal supports Hardcore and IsingGraph models")


# ---------------------------------------------------------------------------
# Z_{S,theta} from marginals


@dataclass
class MarginalOracle:
    """Telescoping estimate of log Pr[all free vertices out | S in] on the tilted model."""

    model: SpinModel
    theta: float
    epsilon1: float
    max_depth: int | None = None
    _rec: object = field(default=None, repr=False)
    depths: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        from .models import tilt

        self.tilted = tilt(self.model, self.theta)
        if isinstance(self.model, Hardcore):
            self._rec = HardcoreRecursion(self.tilted)
        elif isinstance(self.model, IsingGraph):
            self._rec = IsingRecursion(self.tilted)
        else:
            raise ParameterError("counting supports Hardcore and IsingGraph models")

    def _hc_log_out(self, avail: int, v: int) -> float:
        comp = self._rec.component(avail, v).bit_count()
        cap = comp + 1 if self.max_depth is None else min(comp + 1, self.max_depth)
        d = 1
        prev = math.log1p(self._rec.ratio(avail, 0, v, 0))
        while True:
            cur = math.log1p(self._rec.ratio(avail, 0, v, d))
            if abs(cur - prev) < self.epsilon1 / 2 or d >= cap:
                self.depths.append(d)
                return -cur
            prev = cur
            d = min(2 * d, cap)

    def _ising_log_minus(self, avail: int, offsets: dict, v: int) -> float:
        comp = self._rec.component(avail, v).bit_count()
        cap = comp + 1 if self.max_depth is None else min(comp + 1, self.max_depth)
        d = 1

        def log_minus(depth):
            lr = self._rec.log_ratio(avail, offsets, v, depth)
            return -float(np.logaddexp(0.0, lr))

        prev = log_minus(0)
        while True:
            cur = log_minus(d)
            if abs(cur - prev) < self.epsilon1 / 2 or d >= cap:
                self.depths.append(d)
                return cur
            prev = cur
            d = min(2 * d, cap)

    def log_all_out(self, S: int) -> float:
        n = self.model.n
        if isinstance(self.model, Hardcore):
            rec = self._rec
            removed = S
            for u in _bits(S):
                removed |= rec.nbr[u]
            avail = ((1 << n) - 1) & ~removed
            total = 0.0
            for v in sorted(_bits(avail)):
                total += self._hc_log_out(avail, v)
                avail &= ~(1 << v)
            return total
        rec = self._rec
        avail = ((1 << n) - 1) & ~S
        offsets: dict = {}
        for u in _bits(S):
            for x, _ in rec.inc[u]:
                offsets[x] = offsets.get(x, 0) + 1
        total = 0.0
        for v in sorted(_bits(avail)):
            total += self._ising_log_minus(avail, offsets, v)
            avail &= ~(1 << v)
            for x, _ in rec.inc[v]:
                offsets[x] = offsets.get(x, 0) - 1
        return total


def _config_of(n: int, S: int) -> np.ndarray:
    return np.array([(S >> i) & 1 for i in range(n)], dtype=np.int8)


def _check_subcritical(model: SpinModel, theta: float):
    if isinstance(model, Hardcore):
        delta = model.graph.max_degree
        if delta >= 3 and np.max(model.fugacity) * (1 - theta) >= lambda_c(delta):
            raise ParameterError("tilted hardcore model is not subcritical: need lambda (1-theta) < lambda_c")


def estimate_z_s_theta(model: SpinModel, S, theta: float, epsilon0: float, oracle: MarginalOracle | None = None) -> float:
    """log Z_{S,theta} = |S| log(1-theta) + log wt(S) - log Pr_tilted[rest out | S in]."""
    if not 0 < theta < 1:
        raise ParameterError("theta must lie in (0, 1)")
    _check_subcritical(model, theta)
    n = model.n
    m = _mask(S)
    lw = log_weight(model, _config_of(n, m))
    if lw == -math.inf:
        return -math.inf
    oracle = oracle or MarginalOracle(model, theta, epsilon0 / (2 * max(n, 1)))
    return m.bit_count() * math.log1p(-theta) + lw - oracle.log_all_out(m)


# ---------------------------------------------------------------------------
# the truncated sum


@dataclass(frozen=True)
class CountingPlan:
    theta: float
    epsilon: float
    epsilon0: float
    oracle: str = "weitz"  # or "exact"
    k_override: int | None = None
    term_budget: int = TERM_BUDGET
    max_depth: int | None = None

    def __post_init__(self):
        if not 0 < self.theta < 1:
            raise ParameterError("theta must lie in (0, 1)")
        if self.epsilon <= 0 or self.epsilon0 < 0 or self.epsilon0 + self.epsilon >= 1:
            raise ParameterError("need epsilon > 0, epsilon0 >= 0 and epsilon + epsilon0 < 1")
        if self.oracle not in ("weitz", "exact"):
            raise ParameterError("oracle must be 'weitz' or 'exact'")

    def k(self, n: int) -> int:
        if self.k_override is not None:
            return int(self.k_override)
        return cutoff(n, self.theta, self.epsilon)


def cutoff(n: int, theta: float, epsilon: float) -> int:
    """ceil(e^2 n theta / (1 - theta) + log(2 / epsilon))."""
    return int(math.ceil(math.e**2 * n * theta / (1 - theta) + math.log(2 / epsilon)))


def _subsets(model: SpinModel, kmax: int):
    """Candidate S with |S| < kmax, in increasing (size, lexicographic) order.

    For hardcore only independent sets are listed; other S have Z_{S,theta} = 0.
    """
    n = model.n
    if isinstance(model, Hardcore):
        nbr = [sum(1 << u for u in s) for s in model.graph.neighbor_sets]
        out = []

        def grow(start, mask, forbidden, size):
            out.append(mask)
            if size + 1 >= kmax:
                return
            for v in range(start, n):
                if not (forbidden >> v & 1):
                    grow(v + 1, mask | 1 << v, forbidden | nbr[v] | 1 << v, size + 1)

        grow(0, 0, 0, 0)
        out.sort(key=lambda m: (m.bit_count(), [i for i in _bits(m)]))
        return out
    out = []
    for size in range(min(kmax, n + 1)):
        for comb in itertools.combinations(range(n), size):
            out.append(_mask(comb))
    return out


@dataclass(frozen=True)
class CountResult:
    log_z_hat: float
    k: int
    n_terms: int
    n_enumerated: int
    max_term: float
    epsilon: float
    epsilon0: float
    max_depth_used: int
    wall_time: float

    def to_dict(self) -> dict:
        return {
            "log_Z_hat": self.log_z_hat, "k": self.k, "n_terms": self.n_terms,
            "n_enumerated": self.n_enumerated, "max_term": self.max_term,
            "epsilon": self.epsilon, "epsilon0": self.epsilon0,
            "max_depth_used": self.max_depth_used, "wall_time": self.wall_time,
        }


def _size_bound(n: int, kmax: int) -> int:
    return sum(math.comb(n, j) for j in range(min(kmax, n + 1)))


def deterministic_count(model: SpinModel, plan: CountingPlan) -> CountResult:
    """log of sum_{|S| < k} (theta/(1-theta))^|S| Z_{S,theta} with estimated terms."""
    t0 = time.perf_counter()
    n = model.n
    k = plan.k(n)
    if not isinstance(model, Hardcore) and _size_bound(n, k) > plan.term_budget:
        raise BudgetError(f"{_size_bound(n, k)} subsets exceed the term budget {plan.term_budget}")
    subsets = _subsets(model, k)
    if len(subsets) > plan.term_budget:
        raise BudgetError(f"{len(subsets)} subsets exceed the term budget {plan.term_budget}")
    ratio = math.log(plan.theta) - math.log1p(-plan.theta)
    if plan.oracle == "exact":
        table = all_z_s_theta(model, plan.theta)
        terms = np.array([m.bit_count() * ratio + table[m] for m in subsets])
        depth_used = 0
    else:
        _check_subcritical(model, plan.theta)
        oracle = MarginalOracle(model, plan.theta, plan.epsilon0 / (2 * max(n, 1)), plan.max_depth)
        terms = np.array([m.bit_count() * ratio + estimate_z_s_theta(model, m, plan.theta, plan.epsilon0, oracle)
                          for m in subsets])
        depth_used = max(oracle.depths, default=0)
    finite = terms[np.isfinite(terms)]
    log_z = float(logsumexp(finite)) if finite.size else -math.inf
    return CountResult(
        log_z, k, int(finite.size), len(subsets),
        float(finite.max()) if finite.size else -math.inf,
        plan.epsilon, plan.epsilon0, int(depth_used), time.perf_counter() - t0,
    )
