"""Finite-dimensional operator renewal sequences.

An :class:`OperatorSeq` holds first-entry matrices R_1..R_M with a tail
exponent beta describing sum_{k>n} ||R_k|| = O(n^-beta).  In
``asymptotic`` tail mode the terms beyond the truncation horizon are
extrapolated as D * l**-(beta+1) for a fitted matrix D, so spectral data
and tail sums refer to the infinite model while the recursion for T_n
(which only ever consumes R_1..R_n) stays exact.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import zeta

from .errors import (
    ComputeError,
    MuZero,
    NoUnitEigenvalue,
    NotSimple,
    ProjectionNotZero,
)
from .sequences import DecaySeq, rate_fit

__all__ = [
    "OperatorSeq",
    "SpectralData",
    "power_law_operator",
    "renewal_solve",
    "spectral_data",
    "tail_projection",
    "aperiodicity_check",
    "zero_projection_decay",
    "save_operator_seq",
    "load_operator_seq",
]


def spectral_norm(m: np.ndarray) -> float:
    """Largest singular value (operator 2-norm)."""
    return float(np.linalg.norm(np.atleast_2d(m), 2))


@dataclass
class OperatorSeq:
    """Truncated sequence of d x d matrices R_1..R_M with tail metadata.

    Parameters
    ----------
    terms : (M, d, d) array
        Stored matrices; ``terms[k-1]`` is R_k.
    beta : float
        Tail exponent, > 1: sum_{k>n} ||R_k|| = O(n^-beta).
    tail_mode : "exact_finite" or "asymptotic"
        Finite sequences have R_n = 0 beyond M; asymptotic ones are
        extrapolated as ``tail_matrix * l**-(beta+1)``.
    tail_matrix : optional (d, d) array
        Extrapolation direction; fitted from the last decade of stored
        terms when omitted in asymptotic mode.
    """

    terms: np.ndarray
    beta: float
    tail_mode: str = "exact_finite"
    tail_matrix: Optional[np.ndarray] = None

    def __post_init__(self):
        self.terms = np.asarray(self.terms, dtype=float)
        if self.terms.ndim == 1:
            self.terms = self.terms[:, None, None]
        if self.terms.ndim != 3 or self.terms.shape[1] != self.terms.shape[2]:
            raise ValueError("terms must have shape (M, d, d)")
        if not self.beta > 1.0:
            raise ValueError("beta must exceed 1")
        if self.tail_mode not in ("exact_finite", "asymptotic"):
            raise ValueError(f"unknown tail_mode {self.tail_mode!r}")
        if self.tail_mode == "asymptotic":
            if self.tail_matrix is None:
                self.tail_matrix = self._fit_tail_matrix()
            else:
                self.tail_matrix = np.asarray(self.tail_matrix, dtype=float)
        else:
            self.tail_matrix = None

    @property
    def dim(self) -> int:
        return self.terms.shape[1]

    @property
    def horizon(self) -> int:
        return self.terms.shape[0]

    def _fit_tail_matrix(self) -> np.ndarray:
        # least-squares direction over the last stored decade:
        # D = sum R_l / sum l^-(beta+1)
        M = self.horizon
        lo = max(1, M // 10)
        ls = np.arange(lo, M + 1, dtype=float)
        weights = ls ** -(self.beta + 1.0)
        return self.terms[lo - 1 :].sum(axis=0) / weights.sum()

    def term(self, n: int) -> np.ndarray:
        """R_n, using the extrapolation beyond the stored horizon."""
        if n < 1:
            raise ValueError("terms are indexed from 1")
        if n <= self.horizon:
            return self.terms[n - 1]
        if self.tail_mode == "asymptotic":
            return self.tail_matrix * float(n) ** -(self.beta + 1.0)
        return np.zeros((self.dim, self.dim))

    def terms_tail(self, n: int) -> np.ndarray:
        """sum_{l>n} R_l as a matrix, extrapolated beyond the horizon."""
        M = self.horizon
        out = np.zeros((self.dim, self.dim))
        if n < M:
            out += self.terms[max(n, 0) :].sum(axis=0)
        if self.tail_mode == "asymptotic":
            start = max(n, M) + 1
            out += self.tail_matrix * float(zeta(self.beta + 1.0, start))
        return out

    def r_one(self) -> np.ndarray:
        """R(1) = sum R_l."""
        return self.terms_tail(0)

    def r_prime_one(self) -> np.ndarray:
        """R'(1) = sum l R_l."""
        weights = np.arange(1, self.horizon + 1, dtype=float)
        out = np.einsum("k,kij->ij", weights, self.terms)
        if self.tail_mode == "asymptotic":
            out += self.tail_matrix * float(zeta(self.beta, self.horizon + 1))
        return out

    def stored_tail_norms(self) -> np.ndarray:
        """S_n = sum_{k>n} ||R_k|| from stored terms only, for n = 0..M."""
        norms = np.array([spectral_norm(t) for t in self.terms])
        suffix = np.concatenate([np.cumsum(norms[::-1])[::-1], [0.0]])
        return suffix

    def tail_consistency(self) -> float:
        """Max relative gap between stored tail sums and the c*n^-beta model
        over the last stored decade (asymptotic mode only)."""
        if self.tail_mode != "asymptotic":
            return 0.0
        M = self.horizon
        S = self.stored_tail_norms()
        beyond = spectral_norm(self.tail_matrix) * float(zeta(self.beta + 1.0, M + 1))
        ns = np.arange(max(1, M // 10), M)
        model = spectral_norm(self.tail_matrix) * np.array(
            [float(zeta(self.beta + 1.0, n + 1)) for n in ns]
        )
        actual = S[ns] + beyond
        mask = actual > 0
        if not mask.any():
            return 0.0
        return float(np.max(np.abs(actual[mask] - model[mask]) / actual[mask]))


def power_law_operator(
    beta: float,
    M: int,
    matrix: Optional[np.ndarray] = None,
    extra: Optional[tuple[float, np.ndarray]] = None,
    tail_mode: str = "asymptotic",
    normalize: bool = True,
) -> OperatorSeq:
    """Build R_n = c * n**-(beta+1) * A (+ optional c' rho^n B component).

    ``normalize`` scales the power-law amplitude so the spectral radius of
    R(1) -- including the asymptotic tail when applicable -- equals 1.
    ``extra=(rho, B)`` adds an exponential component rho**n * B, which is
    absorbed into the normalization but leaves the tail exponent untouched.
    """
    A = np.eye(1) if matrix is None else np.asarray(matrix, dtype=float)
    ns = np.arange(1, M + 1, dtype=float)
    profile = ns ** -(beta + 1.0)
    terms = profile[:, None, None] * A
    B = None
    if extra is not None:
        rho, B = extra
        B = np.asarray(B, dtype=float)
        if not 0 < rho < 1:
            raise ValueError("extra component needs 0 < rho < 1")
        terms = terms + (rho ** ns)[:, None, None] * B
    scale = 1.0
    if normalize:
        if tail_mode == "asymptotic":
            r1 = float(zeta(beta + 1.0, 1)) * A
            if B is not None:
                r1 = r1 + (rho / (1.0 - rho)) * B
        else:
            r1 = profile.sum() * A
            if B is not None:
                r1 = r1 + (rho ** ns).sum() * B
        radius = float(np.max(np.abs(np.linalg.eigvals(r1))))
        scale = 1.0 / radius
        terms = terms * scale
    tail = scale * A if tail_mode == "asymptotic" else None
    return OperatorSeq(terms, beta=beta, tail_mode=tail_mode, tail_matrix=tail)


def renewal_solve(R: OperatorSeq, N: int, overflow_bound: float = 1e12) -> np.ndarray:
    """Power-series coefficients T_0..T_N of (I − R(z))^(-1).

    Uses the recursion T_n = sum_{k=1}^{min(n,M)} R_k T_{n-k} with T_0 = I,
    i.e. the coefficient identity of T = I + R T.  Only stored terms enter:
    coefficients up to N are exact for the infinite model whenever N <= M.
    A warning is emitted if ||T_n|| blows past ``overflow_bound`` (spectral
    radius of R(1) above 1).
    """
    if N < 0:
        raise ValueError("N must be >= 0")
    d, M = R.dim, R.horizon
    if d == 1:
        r = np.zeros(N + 1)
        upto = min(M, N)
        r[1 : upto + 1] = R.terms[:upto, 0, 0]
        T = np.empty(N + 1)
        T[0] = 1.0
        warned = False
        for n in range(1, N + 1):
            kmax = min(n, M)
            T[n] = np.dot(r[1 : kmax + 1], T[n - kmax : n][::-1])
            if not warned and abs(T[n]) > overflow_bound:
                warnings.warn("renewal coefficients exceed overflow bound; input likely non-summable")
                warned = True
        return T[:, None, None]
    T = np.empty((N + 1, d, d))
    T[0] = np.eye(d)
    warned = False
    for n in range(1, N + 1):
        kmax = min(n, M)
        block = T[n - kmax : n][::-1]
        T[n] = np.einsum("kij,kjl->il", R.terms[:kmax], block)
        if not warned and n % 256 == 0 and spectral_norm(T[n]) > overflow_bound:
            warnings.warn("renewal coefficients exceed overflow bound; input likely non-summable")
            warned = True
    return T


@dataclass
class SpectralData:
    """Rank-one spectral data of R(1) at its eigenvalue near 1."""

    projection: np.ndarray
    mu: float
    gap: float
    simple: bool
    right: np.ndarray
    left: np.ndarray

    @property
    def P(self) -> np.ndarray:
        return self.projection


def spectral_data(
    R: OperatorSeq,
    eig_tol: float = 1e-8,
    gap_threshold: float = 1e-3,
    mu_tol: float = 1e-12,
) -> SpectralData:
    """Eigenprojection P of R(1) at the eigenvalue nearest 1, and mu.

    Raises NoUnitEigenvalue / NotSimple / MuZero per the respective checks.
    mu is read off trace(P R'(1) P) / trace(P), which equals the scalar in
    P R'(1) P = mu P for rank-one P.
    """
    A = R.r_one()
    evals, evecs = np.linalg.eig(A)
    i = int(np.argmin(np.abs(evals - 1.0)))
    lam = evals[i]
    if abs(lam - 1.0) > eig_tol:
        raise NoUnitEigenvalue(f"nearest eigenvalue to 1 is {lam:.6g}")
    rest = np.delete(evals, i)
    gap = float(np.min(np.abs(rest - 1.0))) if rest.size else float("inf")
    if gap < gap_threshold:
        raise NotSimple(f"spectral gap {gap:.3g} below threshold {gap_threshold:.3g}")
    if abs(lam.imag) > eig_tol:
        raise NotSimple("eigenvalue near 1 has a significant imaginary part")
    v = np.real(evecs[:, i])
    v = v / np.linalg.norm(v)
    evalsL, evecsL = np.linalg.eig(A.T)
    j = int(np.argmin(np.abs(evalsL - 1.0)))
    w = np.real(evecsL[:, j])
    s = float(w @ v)
    if abs(s) < 1e-12:
        raise NotSimple("left/right eigenvectors nearly orthogonal (defective pair)")
    w = w / s
    P = np.outer(v, w)
    mu = float(np.trace(P @ R.r_prime_one() @ P) / np.trace(P))
    if abs(mu) < mu_tol:
        raise MuZero("P R'(1) P vanishes")
    return SpectralData(projection=P, mu=mu, gap=gap, simple=True, right=v, left=w)


def tail_projection(R: OperatorSeq, S: SpectralData, n: int) -> np.ndarray:
    """P_n = P (sum_{l>n} R_l) P.

    In exact_finite mode the result is the zero matrix once n reaches the
    stored horizon (empty tail, by construction).
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    return S.projection @ R.terms_tail(n) @ S.projection


def aperiodicity_check(
    R: OperatorSeq,
    grid_points: int,
    exclude_halfwidth: float = np.pi / 2,
) -> tuple[float, float]:
    """Smallest singular value of I - R(z) on |z| = 1 away from z = 1.

    Samples theta on a uniform inclusive grid over
    [exclude_halfwidth, 2 pi - exclude_halfwidth] (odd grid sizes hit
    theta = pi exactly).  A minimum near zero flags a periodicity /
    failed-invertibility problem; the caller decides.
    """
    if grid_points < 8:
        raise ValueError("grid_points must be >= 8")
    thetas = np.linspace(exclude_halfwidth, 2.0 * np.pi - exclude_halfwidth, grid_points)
    d, M = R.dim, R.horizon
    flat = R.terms.reshape(M, d * d)
    eye = np.eye(d)
    best = (np.inf, thetas[0])
    chunk = max(1, 4_000_000 // max(M, 1))
    powers = np.arange(1, M + 1)
    for lo in range(0, grid_points, chunk):
        th = thetas[lo : lo + chunk]
        Z = np.exp(1j * np.outer(th, powers))
        vals = (Z @ flat).reshape(len(th), d, d)
        for t, Rz in zip(th, vals):
            sv = np.linalg.svd(eye - Rz, compute_uv=False)[-1]
            if sv < best[0]:
                best = (float(sv), float(t))
    return best


def zero_projection_decay(
    R: OperatorSeq,
    S: SpectralData,
    f: np.ndarray,
    N: int,
    proj_tol: float = 1e-8,
    fit_window=None,
) -> DecaySeq:
    """Sequence ||T_n f|| with a decay-rate fit, for f in ker P.

    Raises ProjectionNotZero unless ||P f|| <= proj_tol * ||f||.  For
    vectors killed by the eigenprojection every explicit expansion term
    vanishes, so the decay exponent tracks the full tail exponent beta
    rather than beta - 1.
    """
    f = np.asarray(f, dtype=float)
    nf = np.linalg.norm(f)
    if nf > 0 and np.linalg.norm(S.projection @ f) > proj_tol * nf:
        raise ProjectionNotZero("f has a component along the eigenprojection")
    T = renewal_solve(R, N)
    vals = np.linalg.norm(T @ f, axis=1)
    seq = DecaySeq(vals, provenance="measured")
    if fit_window is None:
        fit_window = (max(2, N // 10), N)
    if np.all(vals[fit_window[0] : fit_window[1] + 1] > 0):
        fit = rate_fit(seq, fit_window, log_regressor=False, points=200)
        seq.gamma = fit.gamma
    return seq


def save_operator_seq(R: OperatorSeq, path) -> None:
    """Structured text format: dim/beta/tail_mode header, then term rows."""
    d = R.dim
    with open(path, "w") as fh:
        fh.write("renewalkit-operator-seq v1\n")
        fh.write(f"dim {d}\n")
        fh.write(f"beta {R.beta!r}\n")
        fh.write(f"tail_mode {R.tail_mode}\n")
        if R.tail_mode == "asymptotic":
            entries = " ".join(repr(float(x)) for x in R.tail_matrix.ravel())
            fh.write(f"tail_matrix {entries}\n")
        fh.write(f"terms {R.horizon}\n")
        for n in range(1, R.horizon + 1):
            entries = " ".join(repr(float(x)) for x in R.terms[n - 1].ravel())
            fh.write(f"{n} {entries}\n")


def load_operator_seq(path) -> OperatorSeq:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("renewalkit-operator-seq"):
        raise ValueError("not an operator-seq file")
    meta = {}
    idx = 1
    while idx < len(lines) and not lines[idx].startswith("terms "):
        key, _, rest = lines[idx].partition(" ")
        meta[key] = rest
        idx += 1
    d = int(meta["dim"])
    beta = float(meta["beta"])
    tail_mode = meta.get("tail_mode", "exact_finite")
    tail_matrix = None
    if "tail_matrix" in meta:
        tail_matrix = np.array([float(x) for x in meta["tail_matrix"].split()]).reshape(d, d)
    M = int(lines[idx].split()[1])
    terms = np.zeros((M, d, d))
    for ln in lines[idx + 1 :]:
        parts = ln.split()
        n = int(parts[0])
        terms[n - 1] = np.array([float(x) for x in parts[1:]]).reshape(d, d)
    return OperatorSeq(terms, beta=beta, tail_mode=tail_mode, tail_matrix=tail_matrix)
