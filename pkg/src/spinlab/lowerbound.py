"""Generating-polynomial coefficients behind the critical lower bounds.

Hardcore (symmetric bipartite family, lambda = lambda_c):
    N = (1 + 2x + 2y + 2z + x^2 + y^2)^n,  D = (1 + x + y + z)^(2n),
    N*(x,y,z) = N(x/(D-2), y/(D-2), z/(D-2)^2),  D* = D(x/(D-1), y/(D-1), z/(D-1)^2),
    alpha[A,B,C] = ([x^A y^B z^C] N*)^Delta / ([x^A y^B z^C] D*)^(Delta-1).
Ising (regular bipartite multigraph family, beta = -beta_c, a = e^(2 beta)):
    N = (a x y + x + y + a)^n,  D = (1 + x)^n (1 + y)^n,
    alpha[s,t] = ([x^s y^t] N)^Delta / ([x^s y^t] D)^(Delta-1).
Everything is stored as natural logarithms; zero coefficients are -inf.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.optimize import brentq, fsolve, minimize, minimize_scalar
from scipy.special import gammaln, logsumexp, xlogy

from .errors import BudgetError, ParameterError
from .exact import correlation_form, covariance_matrix
from .models import SpinModel, beta_c, is_ising, lambda_c

NEG = -np.inf


def _lcomb(n, k):
    n = np.asarray(n, dtype=float)
    k = np.asarray(k, dtype=float)
    out = gammaln(n + 1) - (gammaln(k + 1) + gammaln(n - k + 1))  # grouped so C(n,k) == C(n,n-k) bitwise
    return np.where((k < 0) | (k > n), NEG, out)


# ---------------------------------------------------------------------------
# Ising tables


@numba.njit(cache=True)
def _ising_log_n(n, la, lfact):
    out = np.full((n + 1, n + 1), -np.inf)
    for s in range(n + 1):
        m = n - s
        ls = lfact[n] - lfact[s] - lfact[m]
        for t in range(n + 1):
            lo = max(0, t - m)
            hi = min(s, t)
            if lo > hi:
                continue
            best = -np.inf
            for i in range(lo, hi + 1):
                j = t - i
                v = (lfact[s] - lfact[i] - lfact[s - i] + i * la
                     + lfact[m] - lfact[j] - lfact[m - j] + (m - j) * la)
                if v > best:
                    best = v
            acc = 0.0
            for i in range(lo, hi + 1):
                j = t - i
                v = (lfact[s] - lfact[i] - lfact[s - i] + i * la
                     + lfact[m] - lfact[j] - lfact[m - j] + (m - j) * la)
                acc += math.exp(v - best)
            out[s, t] = ls + best + math.log(acc)
    return out


@dataclass(frozen=True, eq=False)
class CoeffTable:
    """Log-coefficients indexed by exponent tuples; ``meta`` names the polynomial."""

    shape: tuple
    log_coeffs: np.ndarray
    meta: dict = field(default_factory=dict)

    def __getitem__(self, idx):
        return self.log_coeffs[idx]


def _orbit_canonical(T: np.ndarray) -> np.ndarray:
    """Copy each entry from one fixed representative of its orbit under
    s<->t and (s,t) -> (n-s,n-t), so both symmetries hold bit for bit."""
    n = T.shape[0] - 1
    s, t = np.indices(T.shape)
    cands = [(s, t), (t, s), (n - s, n - t), (n - t, n - s)]
    key = np.min([a * (n + 1) + b for a, b in cands], axis=0)
    return T.ravel()[key]


def ising_beta(delta: int) -> float:
    return -beta_c(delta)


def coeff_tables_ising(n: int, delta: int, beta: float | None = None) -> tuple[CoeffTable, CoeffTable]:
    """Log coefficients of N and D for the Ising family, shape (n+1, n+1)."""
    if n < 1 or n > 5000:
        raise BudgetError("Ising tables are limited to 1 <= n <= 5000")
    beta = ising_beta(delta) if beta is None else beta
    lfact = gammaln(np.arange(n + 2) + 1.0)
    logN = _orbit_canonical(_ising_log_n(n, 2.0 * beta, lfact))
    k = np.arange(n + 1)
    lc = _lcomb(n, k)
    logD = _orbit_canonical(lc[:, None] + lc[None, :])
    meta = {"n": n, "delta": delta, "beta": beta}
    return (CoeffTable(logN.shape, logN, dict(meta, poly="N")),
            CoeffTable(logD.shape, logD, dict(meta, poly="D")))


def ising_log_n_oracle(n: int, beta: float, s: int, t: int) -> float:
    """[x^s y^t] N by the sum over the number j of factors contributing a."""
    a = 2.0 * beta
    terms = []
    for j in range(n + 1):
        twice_i = s + t - n + j
        if twice_i < 0 or twice_i % 2:
            continue
        i = twice_i // 2
        if i > j or s - i < 0 or s - i > n - j:
            continue
        terms.append(float(_lcomb(n, j) + j * a + _lcomb(j, i) + _lcomb(n - j, s - i)))
    return float(logsumexp(terms)) if terms else NEG


def alpha_ising_table(n: int, delta: int, beta: float | None = None) -> np.ndarray:
    N, D = coeff_tables_ising(n, delta, beta)
    return delta * N.log_coeffs - (delta - 1) * D.log_coeffs


def alpha_ising(n: int, delta: int, s: int, t: int, beta: float | None = None) -> float:
    """log alpha~[s,t]."""
    beta = ising_beta(delta) if beta is None else beta
    if not (0 <= s <= n and 0 <= t <= n):
        return NEG
    ln = ising_log_n_oracle(n, beta, s, t)
    ld = float(_lcomb(n, s) + _lcomb(n, t))
    return delta * ln - (delta - 1) * ld


def ising_checksums(n: int, delta: int, beta: float | None = None, tables=None) -> dict:
    """Evaluate-at-one identities: sum N = (2 + 2a)^n, sum D = 4^n (log scale)."""
    beta = ising_beta(delta) if beta is None else beta
    N, D = tables or coeff_tables_ising(n, delta, beta)
    a = math.exp(2 * beta)
    return {
        "log_sum_N": float(logsumexp(N.log_coeffs)), "log_expected_N": n * math.log(2 + 2 * a),
        "log_sum_D": float(logsumexp(D.log_coeffs)), "log_expected_D": n * math.log(4.0),
    }


# ---------------------------------------------------------------------------
# hardcore tables


@numba.njit(cache=True)
def _hc_step(prev, w1, w2):
    m1 = prev.shape[0]  # = 2(m-1) + 1
    size = m1 + 2
    out = np.full((size, size), -np.inf)
    for A in range(size):
        for B in range(size):
            vals = np.empty(5)
            vals[0] = prev[A, B] if A < m1 and B < m1 else -np.inf
            vals[1] = prev[A - 1, B] + w1 if A >= 1 and A - 1 < m1 and B < m1 else -np.inf
            vals[2] = prev[A, B - 1] + w1 if B >= 1 and B - 1 < m1 and A < m1 else -np.inf
            vals[3] = prev[A - 2, B] + w2 if A >= 2 and B < m1 else -np.inf
            vals[4] = prev[A, B - 2] + w2 if B >= 2 and A < m1 else -np.inf
            best = vals.max()
            if best == -np.inf:
                continue
            acc = 0.0
            for k in range(5):
                acc += math.exp(vals[k] - best)
            out[A, B] = best + math.log(acc)
    return out


class HardcoreTables:
    """Log coefficients of N* (ragged by C) with D* evaluated in closed form.

    [x^A y^B z^C] N* = C(n, C) (2/(D-2)^2)^C [x^A y^B] R_{n-C} where
    R_m = (1 + 2x' + 2y' + x'^2 + y'^2)^m is built one factor at a time.
    Only the C values in ``keep`` are stored (all by default); the
    evaluate-at-one checksum is accumulated for every C while streaming.
    """

    def __init__(self, n: int, delta: int, keep=None):
        if delta < 3:
            raise ParameterError("hardcore tables need Delta >= 3")
        if n < 1 or n > 400:
            raise BudgetError("hardcore tables are limited to 1 <= n <= 400")
        self.n, self.delta = n, delta
        g = delta - 2
        w1, w2 = math.log(2.0 / g), -2.0 * math.log(g)
        wz = math.log(2.0) - 2.0 * math.log(g)
        keep = set(range(n + 1)) if keep is None else {int(c) for c in keep if 0 <= c <= n}
        self.slices: dict[int, np.ndarray] = {}
        total = []
        R = np.zeros((1, 1))
        lc = _lcomb(n, np.arange(n + 1))
        for m in range(n + 1):
            if m > 0:
                R = _hc_step(R, w1, w2)
            C = n - m
            shift = float(lc[C]) + C * wz
            total.append(shift + float(logsumexp(R)))
            if C in keep:
                self.slices[C] = (R + R.T) / 2 + shift  # exact x<->y symmetry
        self.log_sum_n_star = float(logsumexp(total))

    def log_n_star(self, A, B, C) -> float:
        if C not in self.slices:
            raise ParameterError(f"slice C={C} was not kept")
        S = self.slices[C]
        if A < 0 or B < 0 or A >= S.shape[0] or B >= S.shape[1]:
            return NEG
        return float(S[A, B])

    def log_d_star(self, A, B, C):
        return log_d_star(self.n, self.delta, A, B, C)

    def log_alpha(self, A, B, C):
        ln = self.log_n_star(A, B, C)
        if ln == NEG:
            return NEG
        return self.delta * ln - (self.delta - 1) * float(self.log_d_star(A, B, C))

    def alpha_slice(self, C: int) -> np.ndarray:
        """log alpha[A, B, C] over the stored slice."""
        S = self.slices[C]
        a = np.arange(S.shape[0])
        ld = log_d_star(self.n, self.delta, a[:, None], a[None, :], C)
        with np.errstate(invalid="ignore"):
            out = self.delta * S - (self.delta - 1) * ld
        return np.where(np.isfinite(S), out, NEG)

    def checksums(self) -> dict:
        d = self.delta
        return {
            "log_sum_N_star": self.log_sum_n_star,
            "log_expected_N_star": self.n * math.log(1 + 4 / (d - 2) + 4 / (d - 2) ** 2),
            "log_sum_D_star": log_sum_d_star(self.n, d),
            "log_expected_D_star": 4 * self.n * math.log1p(1 / (d - 1)),
        }


def log_d_coeff(n: int, A, B, C):
    """log of the multinomial (2n)! / (A! B! C! (2n-A-B-C)!)."""
    A, B, C = (np.asarray(v, dtype=float) for v in (A, B, C))
    rest = 2 * n - A - B - C
    out = gammaln(2 * n + 1) - (gammaln(A + 1) + gammaln(B + 1)) - gammaln(C + 1) - gammaln(rest + 1)
    bad = (A < 0) | (B < 0) | (C < 0) | (rest < 0)
    res = np.where(bad, NEG, out)
    return float(res) if res.ndim == 0 else res


def log_d_star(n: int, delta: int, A, B, C):
    A, B, C = (np.asarray(v, dtype=float) for v in (A, B, C))
    res = log_d_coeff(n, A, B, C) - (A + B + 2 * C) * math.log(delta - 1)
    return float(res) if np.ndim(res) == 0 else res


def log_sum_d_star(n: int, delta: int) -> float:
    """Sum of all D* coefficients by explicit summation."""
    parts = []
    a = np.arange(2 * n + 1, dtype=float)
    for C in range(2 * n + 1):
        v = log_d_star(n, delta, a[:, None], a[None, :], C)
        parts.append(logsumexp(v))
    return float(logsumexp(parts))


DENSE_HARDCORE_MAX_N = 100


def coeff_tables_hardcore(n: int, delta: int) -> tuple[CoeffTable, CoeffTable]:
    """Dense (2n+1)^3 log-coefficient arrays of N* and D*.

    Dense storage is O(n^3); larger n goes through HardcoreTables, which keeps
    only the requested C slices.
    """
    if n > DENSE_HARDCORE_MAX_N:
        raise BudgetError(f"dense hardcore tables are limited to n <= {DENSE_HARDCORE_MAX_N}; use HardcoreTables")
    t = HardcoreTables(n, delta)
    size = 2 * n + 1
    logN = np.full((size, size, size), NEG)
    for C, S in t.slices.items():
        logN[: S.shape[0], : S.shape[1], C] = S
    a = np.arange(size)
    logD = log_d_star(n, delta, a[:, None, None], a[None, :, None], a[None, None, :])
    meta = {"n": n, "delta": delta}
    return (CoeffTable(logN.shape, logN, dict(meta, poly="N*")),
            CoeffTable(logD.shape, logD, dict(meta, poly="D*")))


def export_alpha_csv(path, tables) -> None:
    """Write finite log-alpha entries as gzip-compressed CSV (``.gz`` paths)."""
    rows = []
    if isinstance(tables, HardcoreTables):
        header = "A,B,C,log_alpha"
        for C in sorted(tables.slices):
            sl = tables.alpha_slice(C)
            A, B = np.nonzero(np.isfinite(sl))
            rows.append(np.column_stack([A, B, np.full(len(A), C), sl[A, B]]))
        fmt = ["%d", "%d", "%d", "%.17g"]
    else:
        la = np.asarray(tables)
        header = "s,t,log_alpha"
        S, T = np.nonzero(np.isfinite(la))
        rows.append(np.column_stack([S, T, la[S, T]]))
        fmt = ["%d", "%d", "%.17g"]
    data = np.vstack(rows) if rows else np.empty((0, len(fmt)))
    np.savetxt(path, data, fmt=fmt, delimiter=",", header=header, comments="")


def alpha_hardcore(n: int, delta: int, A: int, B: int, C: int, tables: HardcoreTables | None = None) -> float:
    """log alpha[A, B, C] at lambda = lambda_c(Delta)."""
    if not (0 <= A <= 2 * n and 0 <= B <= 2 * n and 0 <= C <= 2 * n):
        return NEG
    if C > n:
        return NEG
    t = tables if tables is not None and C in tables.slices else HardcoreTables(n, delta, keep=[C])
    return t.log_alpha(A, B, C)


def hardcore_n_direct(n: int, A: int, B: int, C: int) -> int:
    """[x^A y^B z^C] (1 + 2x + 2y + 2z + x^2 + y^2)^n by exact integer expansion."""
    from collections import Counter

    poly = Counter({(0, 0, 0): 1})
    factor = {(0, 0, 0): 1, (1, 0, 0): 2, (0, 1, 0): 2, (0, 0, 1): 2, (2, 0, 0): 1, (0, 2, 0): 1}
    for _ in range(n):
        nxt: Counter = Counter()
        for (a, b, c), v in poly.items():
            for (da, db, dc), w in factor.items():
                nxt[(a + da, b + db, c + dc)] += v * w
        poly = nxt
    return poly.get((A, B, C), 0)


# ---------------------------------------------------------------------------
# anti-concentration and Gaussian windows


def anti_concentration_ratio(log_alpha, eta: float, exponent: float, n: int | None = None) -> float:
    """Share of alpha mass with |first - second index| > eta n^exponent.

    ``log_alpha`` is an (n+1, n+1) Ising table or a HardcoreTables object.
    """
    if isinstance(log_alpha, HardcoreTables):
        n = log_alpha.n
        thr = eta * n**exponent
        tails, alls = [], []
        for C in sorted(log_alpha.slices):
            sl = log_alpha.alpha_slice(C)
            a = np.arange(sl.shape[0])
            mask = np.abs(a[:, None] - a[None, :]) > thr
            alls.append(logsumexp(sl))
            tails.append(logsumexp(np.where(mask, sl, NEG)))
        return float(math.exp(logsumexp(tails) - logsumexp(alls)))
    la = np.asarray(log_alpha)
    n = la.shape[0] - 1 if n is None else n
    thr = eta * n**exponent
    s = np.arange(la.shape[0])
    mask = np.abs(s[:, None] - s[None, :]) > thr
    return float(math.exp(logsumexp(np.where(mask, la, NEG)) - logsumexp(la)))


def hardcore_quadratic_coeffs(delta: int) -> tuple[float, float, float]:
    d = delta
    kappa = d**2 / ((d - 1) * (d**3 - 4 * d**2 + 6 * d - 4))
    k1 = (2 - 2 * d**2 + d**3) * kappa
    k2 = (4 - 4 * d + d**3) * kappa
    k3 = (8 - 16 * d + 12 * d**2 - 4 * d**3 + d**4) * kappa
    return k1, k2, k3


def ising_quadratic_coeff(delta: int) -> float:
    return 2 * (delta - 1) / (delta - 2)


@dataclass(frozen=True)
class GaussianRatio:
    min_ratio: float  # log scale
    max_ratio: float  # log scale
    center_ratio: float  # log scale
    points: int
    window: float

    @property
    def spread(self) -> float:
        """max / min of the ratio (linear scale)."""
        return math.exp(self.max_ratio - self.min_ratio)


def gaussian_ratio_check(n: int, delta: int, kind: str = "ising", window_exponent: float | None = None,
                         tables=None, scale: float | None = None) -> GaussianRatio:
    """log(alpha / Gaussian) over the box of half-width 2 n^exponent around the centre.

    Ising Gaussian: exp(-(Q/n)(theta_s + theta_t)^2), Q = 2(Delta-1)/(Delta-2).
    Hardcore Gaussian: exp(-scale * Q(theta_A + theta_B, theta_C)) with the
    default scale 1/(4n).
    """
    if kind == "ising":
        w = 2 * n ** (window_exponent or 0.75)
        la = tables if tables is not None else alpha_ising_table(n, delta)
        m = n / 2
        s = np.arange(n + 1)
        sel = s[np.abs(s - m) <= w]
        th = sel - m
        q = ising_quadratic_coeff(delta)
        sc = 1.0 / n if scale is None else scale
        gauss = -q * sc * (th[:, None] + th[None, :]) ** 2
        r = la[np.ix_(sel, sel)] - gauss
        c = int(round(m))
        center = float(la[c, c] + q * sc * (2 * (c - m)) ** 2)
        return GaussianRatio(float(r.min()), float(r.max()), center, r.size, w)
    if kind == "hardcore":
        w = 2 * n ** (window_exponent or 2 / 3)
        m1 = 2 * (delta - 1) * n / delta**2
        m3 = 2 * n / delta**2
        Cs = [C for C in range(0, 2 * n + 1) if abs(C - m3) <= w and C <= n]
        t = tables if tables is not None else HardcoreTables(n, delta, keep=Cs)
        k1, k2, k3 = hardcore_quadratic_coeffs(delta)
        sc = 1.0 / (4 * n) if scale is None else scale
        a = np.arange(2 * n + 1)
        selA = a[np.abs(a - m1) <= w]
        thA = selA - m1
        lo, hi, pts = np.inf, -np.inf, 0
        for C in Cs:
            sl = t.alpha_slice(C)
            sub = np.full((len(selA), len(selA)), NEG)
            ok = selA[selA < sl.shape[0]]
            k = len(ok)
            sub[:k, :k] = sl[np.ix_(ok, ok)]
            u = thA[:, None] + thA[None, :]
            v = C - m3
            g = -sc * (k1 * u**2 + 2 * k2 * u * v + k3 * v**2)
            r = sub - g
            fin = np.isfinite(r)
            if fin.any():
                lo = min(lo, float(r[fin].min()))
                hi = max(hi, float(r[fin].max()))
                pts += int(fin.sum())
        A0, C0 = int(round(m1)), int(round(m3))
        if C0 not in t.slices:
            t0 = HardcoreTables(n, delta, keep=[C0])
        else:
            t0 = t
        u0, v0 = 2 * (A0 - m1), C0 - m3
        center = t0.log_alpha(A0, A0, C0) + sc * (k1 * u0**2 + 2 * k2 * u0 * v0 + k3 * v0**2)
        return GaussianRatio(lo, hi, float(center), pts, w)
    raise ParameterError("kind must be 'ising' or 'hardcore'")


# ---------------------------------------------------------------------------
# entropy landscape


def _H(x):
    return -xlogy(x, x)


def hardcore_weights(delta: int) -> np.ndarray:
    lam = lambda_c(delta)
    x = lam ** (1 / delta)
    return np.array([1.0, 2 * x, 2 * x, 2 * x * x, x * x, x * x])


def _solve_q(p2, p5, P, rho):
    # 2 p5 P Q^2 + p2 P Q - 2 rho = 0, positive root
    if rho <= 0:
        return 0.0
    a, b = 2 * p5 * P, p2 * P
    return (-b + math.sqrt(b * b + 8 * a * rho)) / (2 * a)


def hardcore_inner(rho, delta: int) -> np.ndarray:
    """Maximiser theta of f_N subject to the linear constraints at rho."""
    rho = np.asarray(rho, dtype=float)
    p = hardcore_weights(delta)
    r2, r3, r4 = rho[1], rho[2], rho[3]

    def thetas(P):
        q1 = _solve_q(p[1], p[4], P, r2)
        q2 = _solve_q(p[2], p[5], P, r3)
        return np.array([p[0] * P, p[1] * P * q1, p[2] * P * q2, 2 * r4, p[4] * P * q1**2, p[5] * P * q2**2])

    def g(P):
        return thetas(P).sum() - 1.0

    lo, hi = 1e-300, 1.0 / p[0]
    if g(hi) < 0:
        raise ParameterError("rho outside the feasible region")
    if g(lo) >= 0:
        return thetas(lo)
    P = brentq(g, lo, hi, xtol=1e-300, rtol=1e-15, maxiter=500)
    return thetas(P)


def _check_rho_hc(rho):
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (4,) or np.any(rho < 0) or abs(rho.sum() - 1) > 1e-9 or rho[1] + rho[2] + 2 * rho[3] > 1 + 1e-12:
        raise ParameterError("rho must lie in the feasible simplex region")
    return rho


def evaluate_U_hardcore(rho, delta: int) -> float:
    """U(rho) = Delta max f_N - 2 (Delta - 1) f_D(rho)."""
    rho = _check_rho_hc(rho)
    th = hardcore_inner(rho, delta)
    p = hardcore_weights(delta)
    fN = float(np.sum(_H(th) + xlogy(th, p)))
    fD = float(np.sum(_H(rho)))
    return delta * fN - 2 * (delta - 1) * fD


def U_sym_hardcore(r2: float, r4: float, delta: int) -> float:
    return evaluate_U_hardcore([1 - 2 * r2 - r4, r2, r2, r4], delta)


def _grad(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def hessian(f, x, h=1e-4):
    x = np.asarray(x, dtype=float)
    k = len(x)
    H = np.empty((k, k))
    for i in range(k):
        for j in range(k):
            ei = np.zeros(k)
            ej = np.zeros(k)
            ei[i] = h
            ej[j] = h
            H[i, j] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4 * h * h)
    return H


def critical_point_hardcore(delta: int, start=None) -> np.ndarray:
    """Maximiser (rho_2, rho_4) of U^sym: Nelder-Mead, then a gradient root-find."""
    def f(x):
        r2, r4 = x
        if r2 <= 0 or r4 <= 0 or 2 * r2 + 2 * r4 >= 1:
            return 1e6
        return -U_sym_hardcore(r2, r4, delta)

    x0 = np.array([0.2, 0.05]) if start is None else np.asarray(start, dtype=float)
    res = minimize(f, x0, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 4000})
    sol = fsolve(lambda x: _grad(f, x), res.x, xtol=1e-13)
    return np.asarray(sol)


def _ising_theta4(r1, r2, beta):
    lo = max(0.0, r1 + r2 - 1)
    hi = min(r1, r2)

    def g(t):
        return math.log((r1 - t) * (r2 - t)) - math.log((1 - r1 - r2 + t) * t) + 4 * beta

    eps = 1e-15 * max(hi - lo, 1e-300)
    return brentq(g, lo + eps, hi - eps, xtol=1e-300, rtol=1e-15, maxiter=500)


def evaluate_U_ising(rho, delta: int, beta: float | None = None) -> float:
    """U(rho) = Delta max f_N - (Delta - 1) f_D(rho) for the Ising family."""
    r1, r2 = (float(v) for v in rho)
    if not (0 < r1 < 1 and 0 < r2 < 1):
        raise ParameterError("rho must lie in (0, 1)^2")
    beta = ising_beta(delta) if beta is None else beta
    t = _ising_theta4(r1, r2, beta)
    th = np.array([1 - r1 - r2 + t, r1 - t, r2 - t, t])
    fN = float(np.sum(_H(th)) + 2 * beta * (th[0] + th[3]))
    fD = float(_H(r1) + _H(1 - r1) + _H(r2) + _H(1 - r2))
    return delta * fN - (delta - 1) * fD


def critical_point_ising(delta: int, beta: float | None = None) -> np.ndarray:
    """Maximiser of U; the anti-diagonal is flat to fourth order, so the
    Nelder-Mead point is symmetrised and refined along the diagonal."""
    def f(x):
        if np.any(x <= 0) or np.any(x >= 1):
            return 1e6
        return -evaluate_U_ising(x, delta, beta)

    res = minimize(f, np.array([0.3, 0.6]), method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-15, "maxiter": 4000})
    r = float(res.x.mean())
    h = 1e-5

    def d(r):
        return (evaluate_U_ising((r + h, r + h), delta, beta) - evaluate_U_ising((r - h, r - h), delta, beta)) / (2 * h)

    lo, hi = max(1e-6, r - 0.1), min(1 - 1e-6, r + 0.1)
    if d(lo) * d(hi) < 0:
        r = brentq(d, lo, hi, xtol=1e-14)
    else:
        r = minimize_scalar(lambda x: -evaluate_U_ising((x, x), delta, beta), bounds=(lo, hi),
                            method="bounded", options={"xatol": 1e-12}).x
    return np.array([r, r])


def hardcore_rho(n: int, A: int, B: int, C: int) -> np.ndarray:
    return np.array([1 - (A + B + C) / (2 * n), A / (2 * n), B / (2 * n), C / (2 * n)])


def nearest_hardcore_point(n: int, rho) -> tuple[int, int, int]:
    rho = np.asarray(rho, dtype=float)
    return tuple(int(round(2 * n * r)) for r in rho[1:])


# ---------------------------------------------------------------------------
# exact expectations over matching tuples (small n)


def _all_perms(n):
    return [np.array(p) for p in itertools.permutations(range(n))]


def alpha_exact_ising(n: int, delta: int, beta: float, simple: bool) -> np.ndarray:
    """alpha[s, t] by averaging exp(2 beta #monochromatic edges) over all
    Delta-tuples of perfect matchings (deduplicated when ``simple``)."""
    if n > 5:
        raise BudgetError("exact matching enumeration is limited to n <= 5")
    perms = _all_perms(n)
    cfg = np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.int8)  # subsets of [n]
    sizes = cfg.sum(axis=1)
    total = np.zeros((n + 1, n + 1))
    count = 0
    for tup in itertools.product(range(len(perms)), repeat=delta):
        edges = [(i, int(perms[k][i])) for k in tup for i in range(n)]
        if simple:
            edges = sorted(set(edges))
        e = np.array(edges)
        # monochromatic edges for every (S, T) pair
        mono = (cfg[:, None, e[:, 0]] == cfg[None, :, e[:, 1]]).sum(axis=2)
        w = np.exp(2 * beta * mono)
        np.add.at(total, (sizes[:, None].repeat(len(cfg), 1), sizes[None, :].repeat(len(cfg), 0)), w)
        count += 1
    return total / count


# ---------------------------------------------------------------------------
# quadratic-form lower bound on the influence matrix


@dataclass(frozen=True)
class QuadraticLower:
    value: float
    stderr: float
    exact: bool


def si_quadratic_lower(model: SpinModel, s, exact: bool | None = None, **mc) -> QuadraticLower:
    """s'Cov s / s'diag(Var) s, a lower bound on lambda_max of the influence matrix.

    For +-1 spins with zero means every variance is 1 and this is s'Psi s / s's.
    The Monte-Carlo path estimates Var(s'X)/n and divides by the mean
    coordinate variance.
    """
    s = np.asarray(s, dtype=float)
    n = model.n
    exact = n <= 14 if exact is None else exact
    if exact:
        C = covariance_matrix(model, "01")
        var = np.diag(C)
        return QuadraticLower(float(s @ C @ s / (s**2 @ var)), 0.0, True)
    if not is_ising(model) or np.any(np.asarray(model.fields) != 0):
        raise ParameterError("the sampled bound needs a zero-field Ising model")
    from .samplers import estimate_covariance_quadratic

    # zero field: every spin has mean 0 and variance 1
    est = estimate_covariance_quadratic(model, s, **mc)
    norm = float(s @ s) / n
    return QuadraticLower(est.value / norm, est.stderr / norm, False)


def correlation_lambda_max(model: SpinModel) -> float:
    return float(np.linalg.eigvalsh(correlation_form(model)).max())
