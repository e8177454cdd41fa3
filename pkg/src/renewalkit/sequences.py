"""Scalar-sequence utilities: convolution, tail sums, decay-rate estimation.

Sequences are indexed from n = 0 and power laws are written against (n+1),
so a "1/n^g" profile means a_n = (n+1)**(-g).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy import integrate
from scipy.special import zeta

from .errors import NonPositiveValues, NotSummable, TailUnavailable

__all__ = [
    "DecaySeq",
    "RateFit",
    "synth_tail",
    "convolve",
    "tail_sum",
    "rate_fit",
    "exp_fit",
    "write_seq_csv",
    "read_seq_csv",
]


@dataclass
class DecaySeq:
    """A non-negative scalar sequence tagged with decay-rate metadata.

    ``gamma`` and ``log_power`` describe the asserted or fitted model
    a_n ~ c * log(n+2)**u * (n+1)**(-gamma).  When ``tail_amplitude`` is
    set the sequence carries an asymptotic continuation beyond its stored
    length, used by :func:`tail_sum`.
    """

    values: np.ndarray
    gamma: Optional[float] = None
    log_power: float = 0.0
    provenance: str = "measured"
    tail_amplitude: Optional[float] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1:
            raise ValueError("DecaySeq values must be one-dimensional")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("DecaySeq values must be finite")
        if np.any(self.values < 0):
            raise ValueError("DecaySeq values must be non-negative")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def has_tail(self) -> bool:
        return self.tail_amplitude is not None and self.gamma is not None


def _model_values(c: float, gamma: float, u: float, n: np.ndarray) -> np.ndarray:
    return c * np.log(n + 2.0) ** u * (n + 1.0) ** (-gamma)


def synth_tail(
    c: float,
    gamma: float,
    u: float = 0.0,
    N: int = 1000,
    normalize_to: Optional[float] = None,
) -> DecaySeq:
    """Generate a_n = c * log(n+2)**u * (n+1)**(-gamma) for n = 0..N.

    With ``normalize_to`` the stored values are rescaled so their sum hits
    the target; this requires gamma > 1 (otherwise the family is not
    summable and the rescaling would be meaningless).
    """
    if N < 0:
        raise ValueError("N must be >= 0")
    if u < 0:
        raise ValueError("log power must be >= 0")
    n = np.arange(N + 1, dtype=float)
    values = _model_values(c, gamma, u, n)
    amplitude = c
    if normalize_to is not None:
        if gamma <= 1.0:
            raise NotSummable("normalization requires gamma > 1")
        total = values.sum()
        scale = normalize_to / total
        values = values * scale
        amplitude = c * scale
    return DecaySeq(
        values,
        gamma=gamma,
        log_power=u,
        provenance="synthetic",
        tail_amplitude=amplitude,
    )


def convolve(a: DecaySeq, b: DecaySeq, method: str = "direct") -> DecaySeq:
    """Cauchy convolution c_n = sum_{k+l=n} a_k b_l, truncated to min length.

    ``method`` is "direct" (exact O(N^2) summation, the reference), "fft"
    (scipy fftconvolve) or "auto".  Direct and fft agree to ~1e-13 on
    O(1) data; correctness is anchored to the direct method.
    """
    n = min(len(a), len(b))
    av, bv = a.values[:n], b.values[:n]
    if method == "auto":
        method = "direct" if n <= 4096 else "fft"
    if method == "direct":
        full = np.convolve(av, bv)
    elif method == "fft":
        from scipy.signal import fftconvolve

        full = fftconvolve(av, bv)
    else:
        raise ValueError(f"unknown convolution method {method!r}")
    vals = np.maximum(full[:n], 0.0)
    return DecaySeq(vals, provenance="measured")


def _tail_beyond(c: float, gamma: float, u: float, start: int) -> float:
    """sum_{n >= start} c * log(n+2)**u * (n+1)**(-gamma) for gamma > 1.

    Pure power laws use the Hurwitz zeta; log-corrected tails use an
    Euler-Maclaurin corrected quadrature.
    """
    if gamma <= 1.0:
        raise NotSummable("tail extrapolation requires gamma > 1")
    if u == 0.0:
        # sum_{n>=start} (n+1)^-gamma = zeta(gamma, start+1)
        return float(c * zeta(gamma, start + 1))

    def f(x):
        return np.log(x + 2.0) ** u * (x + 1.0) ** (-gamma)

    integral, _ = integrate.quad(f, start, np.inf, epsabs=0.0, epsrel=1e-12, limit=200)
    # Euler-Maclaurin: sum_{n>=m} f(n) = int_m^inf f + f(m)/2 - f'(m)/12 + ...
    x0 = float(start)
    fp = (u * np.log(x0 + 2.0) ** (u - 1.0) / (x0 + 2.0)
          - gamma * np.log(x0 + 2.0) ** u / (x0 + 1.0)) * (x0 + 1.0) ** (-gamma)
    return float(c * (integral + f(x0) / 2.0 - fp / 12.0))


def tail_sum(a: DecaySeq, n: int) -> float:
    """sum_{k=n+1}^{N} a_k, plus asymptotic continuation when carried."""
    N = len(a) - 1
    if not 0 <= n <= N:
        raise ValueError(f"n must lie in [0, {N}]")
    total = float(a.values[n + 1 :].sum())
    if a.has_tail:
        total += _tail_beyond(a.tail_amplitude, a.gamma, a.log_power, N + 1)
    return total


class RateFit(NamedTuple):
    gamma: float
    u: float
    r_squared: float


def _window_indices(a: DecaySeq, window, points=None) -> np.ndarray:
    n_lo, n_hi = int(window[0]), int(window[1])
    if not (n_hi > n_lo >= 2):
        raise ValueError("window must satisfy n_hi > n_lo >= 2")
    n_hi = min(n_hi, len(a) - 1)
    if points is None:
        return np.arange(n_lo, n_hi + 1)
    grid = np.unique(np.round(np.geomspace(n_lo, n_hi, points)).astype(int))
    return grid


def rate_fit(a: DecaySeq, window, log_regressor: bool = True, points=None) -> RateFit:
    """Least-squares fit of log a_n against {1, log n, log log n}.

    Returns (gamma, u, r_squared) for the model
    a_n = C * n**(-gamma) * (log n)**u on the window [n_lo, n_hi].
    With ``log_regressor=False`` the log log n column is dropped and u = 0.
    ``points`` subsamples the window geometrically, equalizing weight per
    decade (useful when late-window values sit near the noise floor).
    """
    idx = _window_indices(a, window, points)
    y = a.values[idx]
    if np.any(y <= 0):
        raise NonPositiveValues("rate_fit window contains non-positive values")
    logy = np.log(y)
    logn = np.log(idx.astype(float))
    cols = [np.ones_like(logn), -logn]
    if log_regressor:
        cols.append(np.log(logn))
    X = np.column_stack(cols)
    coeffs, *_ = np.linalg.lstsq(X, logy, rcond=None)
    resid = logy - X @ coeffs
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((logy - logy.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    gamma = float(coeffs[1])
    u = float(coeffs[2]) if log_regressor else 0.0
    return RateFit(gamma, u, r2)


def exp_fit(a: DecaySeq, window) -> tuple[float, float]:
    """Fit a_n = C * exp(-rate * n) on the window; returns (rate, r_squared)."""
    idx = _window_indices(a, window)
    y = a.values[idx]
    if np.any(y <= 0):
        raise NonPositiveValues("exp_fit window contains non-positive values")
    logy = np.log(y)
    X = np.column_stack([np.ones(len(idx)), -idx.astype(float)])
    coeffs, *_ = np.linalg.lstsq(X, logy, rcond=None)
    resid = logy - X @ coeffs
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((logy - logy.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(coeffs[1]), r2


def write_seq_csv(a: DecaySeq, path) -> None:
    """Export as CSV with columns n, value."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "value"])
        for n, v in enumerate(a.values):
            w.writerow([n, repr(float(v))])


def read_seq_csv(path) -> DecaySeq:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:2] != ["n", "value"]:
        raise ValueError("expected header 'n,value'")
    vals = np.array([float(r[1]) for r in rows[1:]])
    return DecaySeq(vals, provenance="measured")
