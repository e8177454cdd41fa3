"""Asymptotic expansions of renewal coefficients T_n and their error rates.

For rank-one spectral data every correction term is a scalar multiple of
the eigenprojection P, because each building block P_k = P (tail of R) P
collapses to p_k P.  The explicit second/third/fourth-order terms are
therefore evaluated through the scalar profile p_k, with the infinite
tails supplied by the operator sequence's extrapolation.

Two independent evaluation routes are kept side by side:

* ``expansion_order`` uses the explicit combinatorial sums (including the
  fourth-order nine-sum term, transcribed literally in
  ``fourth_order_bruteforce`` and evaluated fast via algebraic reductions);
* ``series_expansion`` performs truncated power-series arithmetic on
  Q(z) = sum (1 - z^m) P_m and divides by (1 - z) via cumulative sums.

They must agree to ~1e-10 on matching (finitely supported) inputs, which
is exercised by the test suite as a cross-oracle.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import zeta

from .errors import OrderUnsupported
from .operators import OperatorSeq, SpectralData, renewal_solve, spectral_norm
from .sequences import DecaySeq, RateFit, rate_fit

__all__ = [
    "ExpansionReport",
    "error_class",
    "scalar_profile",
    "expansion_first_order",
    "expansion_order",
    "series_expansion",
    "report_csv",
]


def error_class(beta: float, order: int) -> tuple[str, float, float]:
    """Predicted residual class for the order-N expansion.

    Returns (label, exponent, log_power): the residual is
    O(log(n)^log_power / n^exponent).  The three cases compare N(beta-1)
    against beta; order 2 at beta = 2 is labelled "log_over_n2".
    """
    crit = order * (beta - 1.0)
    if crit > beta:
        return (f"poly({beta:g})", beta, 0.0)
    if crit == beta:
        label = "log_over_n2" if order == 2 else f"log_poly({beta:g})"
        return (label, beta, 1.0)
    return (f"poly({crit:g})", crit, 0.0)


def scalar_profile(R: OperatorSeq, S: SpectralData, N: int) -> tuple[np.ndarray, float]:
    """p_0..p_N with p_k = w (sum_{l>k} R_l) v, plus tau = sum_{k>N} p_k.

    w, v are the left/right unit eigenvectors normalized to w v = 1, so
    P_k = p_k P.  Tails beyond the stored horizon come from the
    asymptotic extrapolation; in exact_finite mode tau vanishes once N
    reaches the horizon.
    """
    w, v = S.left, S.right
    M = R.horizon
    g = np.einsum("i,kij,j->k", w, R.terms, v)
    suffix = np.concatenate([np.cumsum(g[::-1])[::-1], [0.0]])  # suffix[k] = sum_{l>k} g_l, k=0..M
    if R.tail_mode == "asymptotic":
        gD = float(w @ R.tail_matrix @ v)
        s = R.beta + 1.0
        beyondM = gD * float(zeta(s, M + 1))
    else:
        gD, s, beyondM = 0.0, R.beta + 1.0, 0.0

    p = np.zeros(N + 1)
    upto = min(N, M)
    p[: upto + 1] = suffix[: upto + 1] + beyondM
    if N > M and gD != 0.0:
        ks = np.arange(M + 1, N + 1, dtype=float)
        p[M + 1 :] = gD * zeta(s, ks + 1.0)

    if gD != 0.0:
        K = max(N, M) + 1
        beyond_all = gD * (float(zeta(s - 1.0, K + 1)) - K * float(zeta(s, K + 1)))
    else:
        beyond_all = 0.0
    if N >= M:
        tau = beyond_all
    else:
        tau = float((suffix[N + 1 : M + 1] + beyondM).sum()) + beyond_all
    return p, tau


def _order_terms(p: np.ndarray, tau: float, order: int):
    """Scalar correction terms of each order, for all n = 0..N.

    Returns a list [t, third, fourth][:order-1] where t[n] = sum_{k>n} p_k,
    third[n] is the double-sum term and fourth[n] the nine-sum term.
    """
    N = len(p) - 1
    pk = p.copy()
    pk[0] = 0.0  # sums run over k >= 1
    C = np.concatenate([[0.0], np.cumsum(pk[1:])])  # C[n] = p_1 + .. + p_n
    total = C[N] + tau
    t = total - C  # t[n] = sum_{k>n} p_k
    out = [t]
    if order >= 3:
        pp = np.convolve(pk[1:], pk[1:])  # index m-2 holds sum_{k+l=m}
        CC = np.zeros(N + 1)
        upper = min(len(pp), N - 1)
        CC[2:] = np.cumsum(pp[:upper])[: N - 1] if upper > 0 else 0.0
        B = C**2 - CC
        out.append(t**2 - B)
    if order >= 4:
        ppp = np.convolve(np.convolve(pk[1:], pk[1:]), pk[1:])
        CCC = np.zeros(N + 1)
        upper = min(len(ppp), N - 2)
        if upper > 0:
            CCC[3:] = np.cumsum(ppp[:upper])[: N - 2]
        B = C**2 - CC
        S5 = np.zeros(N + 1)
        S8c = np.zeros(N + 1)
        A3 = np.zeros(N + 1)
        for n in range(1, N + 1):
            Cn = C[n]
            rev = C[:n][::-1]  # rev[k-1] = C[n-k], k = 1..n
            V = Cn - rev
            S5[n] = np.dot(pk[1 : n + 1], V * V)
            n2 = n // 2
            if n2 >= 1:
                Cnm = C[n - n2 : n][::-1]  # C[n-m], m = 1..n2
                pm = pk[1 : n2 + 1]
                S8c[n] = np.dot(pm * (Cn - Cnm), 2.0 * (Cnm - C[1 : n2 + 1]) + pm)
                A3[n] += np.dot(pm * pm, Cnm)
            if n >= 2:
                ls = np.arange(1, n)
                idx = np.minimum(ls - 1, n - ls)
                A3[n] += 2.0 * np.dot(pk[1:n] * C[1:n][::-1], C[idx])
        nine = t**3 - 3.0 * B * t - 2.0 * S5 - S8c + A3 - CCC
        out.append(nine)
    return out


def fourth_order_bruteforce(p: np.ndarray, tau: float, n: int) -> float:
    """Literal transcription of the fourth-order nine-sum term.

    Sums run over k, l, m >= 1; infinite tails use t[n] = sum_{k>n} p_k.
    Cubic cost; used as the reference the fast reduction is tested against.
    """
    N = len(p) - 1
    pk = p.copy()
    pk[0] = 0.0
    t = float(pk[n + 1 :].sum()) + tau
    s1 = t**3
    s2 = s3 = s4 = 0.0
    s5 = s6 = s7 = s8 = s9 = 0.0
    for k in range(1, n + 1):
        for l in range(1, n + 1):
            if k + l > n:
                s2 += pk[k] * pk[l] * t  # m > n
                s3 += pk[k] * pk[l] * t  # roles permuted; equal scalars
                s4 += pk[k] * pk[l] * t
            for m in range(1, n + 1):
                w = pk[k] * pk[l] * pk[m]
                if k + l > n and k + m > n:
                    s5 += w
                if l + k > n and l + m > n:
                    s6 += w
                if m + k > n and m + l > n:
                    s7 += w
                if k + l > n and k + m > n and l + m > n:
                    s8 += w
                if k + l <= n and k + m <= n and l + m <= n and k + l + m > n:
                    s9 += w
    return s1 - s2 - s3 - s4 - s5 - s6 - s7 + s8 + s9


def third_order_bruteforce(p: np.ndarray, tau: float, n: int) -> float:
    """Direct double-sum evaluation of the third-order term."""
    pk = p.copy()
    pk[0] = 0.0
    t = float(pk[n + 1 :].sum()) + tau
    b = 0.0
    for k in range(1, n + 1):
        for l in range(1, n + 1):
            if k + l > n:
                b += pk[k] * pk[l]
    return t * t - b


@dataclass
class ExpansionReport:
    """Renewal coefficients against their order-N expansion."""

    horizon: int
    order: int
    beta: float
    mu: float
    projection: np.ndarray
    T: np.ndarray
    predicted: np.ndarray
    residual_norms: np.ndarray
    predicted_class: str
    class_exponent: float
    class_log_power: float
    fitted_exponent: float
    fit_plain: Optional[RateFit]
    fit_log: Optional[RateFit]

    @property
    def log_fit_improves(self) -> bool:
        if self.fit_plain is None or self.fit_log is None:
            return False
        return (1.0 - self.fit_log.r_squared) < (1.0 - self.fit_plain.r_squared)


def _default_window(resid: np.ndarray, N: int, floor: float = 1e-11) -> tuple[int, int]:
    """Last-decade fit window, trimmed away from the double-precision floor.

    Residuals of fast-decaying inputs sink below the recursion's roundoff
    (~1e-13) before the horizon; fitting through that plateau would bias
    the exponent toward zero, so the window slides down until its values
    carry signal.
    """
    hi = N
    above = np.nonzero(resid[2:] > floor)[0]
    if above.size:
        hi = min(N, int(above[-1]) + 2)
    lo = max(2, hi // 10)
    return (lo, hi)


def _fit_residuals(resid: np.ndarray, window, points=200):
    lo, hi = window
    seg = resid[lo : hi + 1]
    if len(seg) < 8 or np.any(seg <= 0.0):
        return None, None
    seq = DecaySeq(resid, provenance="measured")
    plain = rate_fit(seq, window, log_regressor=False, points=points)
    withlog = rate_fit(seq, window, log_regressor=True, points=points)
    return plain, withlog


def expansion_order(
    R: OperatorSeq,
    S: SpectralData,
    N: int,
    order: int,
    T: Optional[np.ndarray] = None,
    fit_window=None,
) -> ExpansionReport:
    """Expansion of T_n truncated at ``order`` with residual diagnostics.

    order 1 keeps only P/mu; order 2 adds the tail-projection sum; order 3
    the double-sum term; order 4 the nine-sum term.  ``T`` may be passed
    to reuse coefficients across orders.
    """
    if order not in (1, 2, 3, 4):
        raise OrderUnsupported("explicit orders run up to 4; use series_expansion beyond")
    if T is None:
        T = renewal_solve(R, N)
    p, tau = scalar_profile(R, S, N)
    coeff = np.full(N + 1, 1.0 / S.mu)
    if order >= 2:
        terms = _order_terms(p, tau, order)
        for j, term in enumerate(terms, start=2):
            coeff += S.mu ** (-j) * term
    predicted = coeff[:, None, None] * S.projection
    diff = T - predicted
    resid = np.linalg.norm(diff, ord=2, axis=(1, 2))
    label, cexp, clog = error_class(R.beta, order)
    if fit_window is None:
        fit_window = _default_window(resid, N)
    plain, withlog = _fit_residuals(resid, fit_window)
    return ExpansionReport(
        horizon=N,
        order=order,
        beta=R.beta,
        mu=S.mu,
        projection=S.projection,
        T=T,
        predicted=predicted,
        residual_norms=resid,
        predicted_class=label,
        class_exponent=cexp,
        class_log_power=clog,
        fitted_exponent=plain.gamma if plain else float("nan"),
        fit_plain=plain,
        fit_log=withlog,
    )


def expansion_first_order(R: OperatorSeq, S: SpectralData, N: int, **kw) -> ExpansionReport:
    """The basic expansion: P/mu plus the tail-projection sum (order 2)."""
    return expansion_order(R, S, N, order=2, **kw)


def series_expansion(
    R: OperatorSeq,
    S: SpectralData,
    N_order: int,
    horizon: int,
) -> np.ndarray:
    """Coefficients of the truncated-series form of the expansion.

    Builds Q(z) = sum_{m=0}^{horizon} (1 - z^m) P_m as a polynomial (the
    m = 0 term vanishes identically since 1 - z^0 = 0), raises it to powers
    k = 1..N_order-1 by truncated convolution, divides by (1 - z) via
    cumulative sums and scales by mu^-(k+1).  Returns an array of shape
    (horizon + 1, d, d).
    """
    if N_order < 1:
        raise ValueError("N_order must be >= 1")
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    p, _tau = scalar_profile(R, S, horizon)
    q = np.zeros(horizon + 1)
    q[0] = p[1:].sum()
    q[1:] = -p[1:]
    coeff = np.full(horizon + 1, 1.0 / S.mu)
    Qk = None
    for k in range(1, N_order):
        Qk = q if Qk is None else np.convolve(Qk, q)[: horizon + 1]
        coeff += S.mu ** (-(k + 1)) * np.cumsum(Qk[: horizon + 1])
    return coeff[:, None, None] * S.projection


def report_csv(reports: list[ExpansionReport], path) -> None:
    """CSV export: n, distance to the limit, and per-order residual/prediction."""
    if not reports:
        raise ValueError("no reports to export")
    base = reports[0]
    limit = (1.0 / base.mu) * base.projection
    t_minus_limit = np.linalg.norm(base.T - limit, ord=2, axis=(1, 2))
    header = ["n", "t_minus_limit"]
    for rep in reports:
        header += [f"resid_order_{rep.order}", f"pred_order_{rep.order}"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for n in range(base.horizon + 1):
            row = [n, repr(float(t_minus_limit[n]))]
            for rep in reports:
                row.append(repr(float(rep.residual_norms[n])))
                row.append(repr(float(spectral_norm(rep.predicted[n]))))
            w.writerow(row)
