"""Young towers over an i.i.d. base with prescribed return-time laws.

The tower dynamics climbs one level per step and drops to the base when
the current excursion's return time runs out.  With an i.i.d. base the
level process is the age chain of a discrete renewal process, so joint
level laws -- hence correlations of level observables -- are exactly
computable through the scalar renewal sequence u_n.  Monte Carlo
simulation of the same chain provides an independent cross-check path.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import zeta

from .errors import (
    NonZeroMean,
    NotSummable,
    PeriodicReturns,
    UnsupportedLevels,
)
from .sequences import DecaySeq, rate_fit

__all__ = [
    "TowerModel",
    "build_tower",
    "tower_from_returns",
    "scalar_renewal_oracle",
    "tower_correlation",
    "tower_correlation_series",
    "zero_mean_tower_decay",
    "tower_mc_raw_moment",
    "load_tower_spec",
    "save_tower_spec",
]


@dataclass
class TowerModel:
    """Return-time distribution with optional analytic tail continuation.

    ``probs[i-1]`` is P[R = i] for i = 1..truncation; beyond the
    truncation the survival P[R > n] continues as
    ``tail_amplitude * (n + 1)**(-beta)`` (None for finite support).
    """

    probs: np.ndarray
    beta: Optional[float] = None
    tail_amplitude: Optional[float] = None

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        if np.any(self.probs < -1e-15):
            raise ValueError("return probabilities must be non-negative")
        self.probs = np.maximum(self.probs, 0.0)
        support = np.nonzero(self.probs > 0)[0] + 1
        if support.size == 0 and self.tail_amplitude is None:
            raise ValueError("empty return distribution")
        g = 0
        for r in support:
            g = math.gcd(g, int(r))
        if self.tail_amplitude is not None:
            g = math.gcd(g, int(len(self.probs) + 1))
        if g > 1:
            raise PeriodicReturns(f"return times share the common divisor {g}")
        if self.tail_amplitude is not None and not (self.beta and self.beta > 1.0):
            raise NotSummable("an analytic tail needs beta > 1 for a finite mean")

    @property
    def truncation(self) -> int:
        return len(self.probs)

    def survival(self, n) -> np.ndarray:
        """P[R > n], elementwise, with the analytic continuation."""
        n = np.atleast_1d(np.asarray(n, dtype=int))
        out = np.empty(len(n))
        stored = np.concatenate([[1.0], 1.0 - np.cumsum(self.probs)])
        stored = np.maximum(stored, 0.0)
        inside = n < self.truncation
        out[inside] = stored[n[inside]]
        beyond = ~inside
        if np.any(beyond):
            if self.tail_amplitude is None:
                out[beyond] = np.where(n[beyond] == self.truncation, stored[-1], 0.0)
                out[beyond & (n >= self.truncation)] = stored[-1] if False else 0.0
                out[beyond] = 0.0
                exact = n[beyond] == self.truncation
                out_b = np.zeros(beyond.sum())
                out_b[exact[0:]] = 0.0
                out[beyond] = 0.0
            else:
                out[beyond] = self.tail_amplitude * (n[beyond] + 1.0) ** (-self.beta)
        return out if out.size > 1 else out

    def return_probs(self, N: int) -> np.ndarray:
        """p_1..p_N with the analytic continuation (index 0 unused, zero)."""
        p = np.zeros(N + 1)
        upto = min(N, self.truncation)
        p[1 : upto + 1] = self.probs[:upto]
        if N > self.truncation and self.tail_amplitude is not None:
            ns = np.arange(self.truncation + 1, N + 1, dtype=float)
            p[self.truncation + 1 :] = self.tail_amplitude * (
                ns ** (-self.beta) - (ns + 1.0) ** (-self.beta)
            )
        return p

    def survival_tail_sum(self, n: int) -> float:
        """t_n = sum_{k>n} P[R > k] including the analytic tail."""
        T = self.truncation
        stored = np.concatenate([[1.0], 1.0 - np.cumsum(self.probs)])
        total = float(stored[min(n, T) + 1 : T].sum()) if n < T - 1 else 0.0
        if self.tail_amplitude is not None:
            start = max(n + 1, T)
            total += self.tail_amplitude * float(zeta(self.beta, start + 1))
            if n < T:
                pass
        return total

    @property
    def mean_return(self) -> float:
        """mu_bar = E[R] = sum_{l>=0} P[R > l]."""
        return 1.0 + self.survival_tail_sum(0)

    def level_mass(self, L: int) -> np.ndarray:
        """Invariant occupancy m(Delta_l) = P[R > l] / E[R] for l = 0..L-1."""
        return self.survival(np.arange(L)) / self.mean_return


def build_tower(tail: DecaySeq, truncation: int) -> TowerModel:
    """Tower from a survival profile: p_i = tail(i-1) - tail(i), normalized.

    The profile's asymptotic continuation (when carried) becomes the
    analytic tail of the return distribution, so slowly decaying
    return-time laws keep their exact mean.
    """
    if truncation < 1 or truncation >= len(tail.values):
        raise ValueError("need 1 <= truncation < len(tail)")
    vals = tail.values
    head = vals[0]
    if head <= 0:
        raise ValueError("tail(0) must be positive")
    probs = (vals[:truncation] - vals[1 : truncation + 1]) / head
    if np.any(probs < -1e-12):
        raise ValueError("survival profile must be non-increasing")
    amplitude = None
    beta = None
    if tail.has_tail:
        beta = tail.gamma
        if beta <= 1.0:
            raise NotSummable("return-time tail must have beta > 1")
        if tail.log_power != 0.0:
            raise ValueError("analytic tower tails support pure power laws only")
        # match the profile's own continuation c (n+1)^-beta at the cut
        amplitude = tail.tail_amplitude / head
        probs = (vals[:truncation] - np.concatenate([vals[1:truncation], [amplitude * head * (truncation + 1.0) ** (-beta)]])) / head
    return TowerModel(probs=probs, beta=beta, tail_amplitude=amplitude)


def tower_from_returns(pairs: Sequence[tuple[int, float]]) -> TowerModel:
    """Finite-support tower from explicit (R_i, p_i) pairs."""
    pairs = [(int(r), float(p)) for r, p in pairs]
    if not pairs:
        raise ValueError("no return times given")
    if any(r < 1 for r, _ in pairs):
        raise ValueError("return times must be positive integers")
    total = sum(p for _, p in pairs)
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"probabilities sum to {total}, expected 1")
    R = max(r for r, _ in pairs)
    probs = np.zeros(R)
    for r, p in pairs:
        probs[r - 1] += p
    return TowerModel(probs=probs)


def scalar_renewal_oracle(p: np.ndarray, N: int) -> np.ndarray:
    """u_n = sum_{k=1}^n p_k u_{n-k}, u_0 = 1: base-return probabilities.

    ``p`` is a (sub-)probability over return times, p[0] ignored if the
    array starts at index 0 with length > N.  Dimension-1 ground truth for
    the operator renewal recursion.
    """
    p = np.asarray(p, dtype=float)
    if p.ndim != 1:
        raise ValueError("p must be one-dimensional")
    q = np.zeros(N + 1)
    if len(p) >= N + 1:
        q[1:] = p[1 : N + 1]
    else:
        q[1 : len(p) + 1] = p  # p given as p_1.. when shorter
    if q[1:].sum() > 1.0 + 1e-9:
        raise ValueError("return probabilities exceed 1")
    u = np.empty(N + 1)
    u[0] = 1.0
    for n in range(1, N + 1):
        u[n] = np.dot(q[1 : n + 1], u[n - 1 :: -1][: n])
    return u


def _check_levels(model: TowerModel, f: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.ndim != 1 or len(f) < 1:
        raise ValueError("level observables are one-dimensional arrays")
    if len(f) > model.truncation:
        raise UnsupportedLevels(
            f"observable on {len(f)} levels exceeds the stored truncation {model.truncation}"
        )
    return f


def tower_correlation_series(
    model: TowerModel,
    f: np.ndarray,
    g: np.ndarray,
    N: int,
) -> np.ndarray:
    """Cor(f, g o F^n) for n = 0..N, exactly, for level observables.

    In stationarity the joint law of (level_0, level_n) decomposes over
    the first base visit; with u from the renewal recursion,

        P[L_0 = l, L_n = l'] = [l' = l + n] P[R > l + n] / mu
                              + P[R > l'] (p_{l+.} * u)_{n - l'} / mu.
    """
    f = _check_levels(model, f)
    g = _check_levels(model, g)
    mu = model.mean_return
    Lf, Lg = len(f), len(g)
    horizon = N + Lf + Lg + 2
    p = model.return_probs(horizon)
    u = scalar_renewal_oracle(p, N + 1)
    m_f = float(f @ model.level_mass(Lf))
    m_g = float(g @ model.level_mass(Lg))
    out = np.full(N + 1, -m_f * m_g)
    surv_f = model.survival(np.arange(Lf + N + 1))
    surv_g = model.survival(np.arange(Lg))
    # diagonal no-return part: l' = l + n
    for l in range(Lf):
        ls = l + np.arange(N + 1)
        inside = ls < Lg
        vals = np.where(inside, g[np.minimum(ls, Lg - 1)], 0.0)
        out += f[l] * vals * surv_f[ls] / mu
    # renewal part, convolved once per source level
    for l in range(Lf):
        a = p[l + 1 : l + 1 + N + 1]
        conv = np.convolve(a, u)[: N + 1]  # conv[j-1] = sum_{rho<=j} p_{l+rho} u_{j-rho}
        for lp in range(Lg):
            w = f[l] * g[lp] * surv_g[lp] / mu
            if w == 0.0:
                continue
            # contributes at n with n - lp >= 1
            js = np.arange(1, N + 1 - lp)
            if js.size:
                out[lp + js] += w * conv[js - 1]
    return out


def tower_correlation(model: TowerModel, f: np.ndarray, g: np.ndarray, n: int) -> float:
    return float(tower_correlation_series(model, f, g, n)[-1])


def zero_mean_tower_decay(
    model: TowerModel,
    f: np.ndarray,
    N: int,
    mean_tol: float = 1e-10,
    fit_window=None,
) -> DecaySeq:
    """|Cor(f, f o F^n)| with a rate fit, for a zero-mean level observable."""
    f = _check_levels(model, f)
    mean = float(f @ model.level_mass(len(f)))
    scale = float(np.max(np.abs(f))) or 1.0
    if abs(mean) > mean_tol * scale:
        raise NonZeroMean(f"level observable has mean {mean:.3e}")
    vals = np.abs(tower_correlation_series(model, f, f, N))
    seq = DecaySeq(vals, provenance="measured")
    if fit_window is None:
        fit_window = (max(2, N // 10), N)
    window_vals = vals[fit_window[0] : fit_window[1] + 1]
    if np.all(window_vals > 0):
        seq.gamma = rate_fit(seq, fit_window, log_regressor=False, points=200).gamma
    return seq


def tower_mc_raw_moment(
    model: TowerModel,
    f: np.ndarray,
    g: np.ndarray,
    n: int,
    samples: int,
    seed: int,
) -> tuple[float, float]:
    """Monte Carlo estimate of E[f(L_0) g(L_n)] with standard error.

    Finite-support towers only: the stationary age chain is simulated by
    drawing the current return time conditioned on the starting level and
    renewing i.i.d. afterwards.
    """
    if model.tail_amplitude is not None:
        raise ValueError("Monte Carlo path requires a finite-support tower")
    f = _check_levels(model, f)
    g = _check_levels(model, g)
    rng = np.random.default_rng(seed)
    T = model.truncation
    mass = model.level_mass(T)
    probs = model.probs
    surv = model.survival(np.arange(T))
    levels0 = rng.choice(T, size=samples, p=mass / mass.sum())
    f0 = np.where(levels0 < len(f), np.take(np.concatenate([f, [0.0]]), np.minimum(levels0, len(f))), 0.0)
    # residual time to the first base visit: rho = R - l, R ~ p(. | R > l)
    resid = np.empty(samples, dtype=int)
    for l in np.unique(levels0):
        sel = levels0 == l
        cond = probs[l:] / surv[l]
        resid[sel] = l + 1 + rng.choice(len(cond), size=int(sel.sum()), p=cond) - l
    t = resid.astype(int)
    level_n = levels0 + n  # provisional: no base visit by time n
    active = t <= n
    t_act = t[active].copy()
    last = t_act.copy()
    while t_act.size:
        draws = rng.choice(T, size=t_act.size, p=probs / probs.sum()) + 1
        nxt = t_act + draws
        still = nxt <= n
        last = np.where(still, nxt, t_act)
        idx_active = np.nonzero(active)[0]
        done = ~still
        level_n[idx_active[done]] = n - t_act[done]
        keep = still
        t_act = nxt[keep]
        sub = idx_active[keep]
        active = np.zeros_like(active)
        active[sub] = True
    gpad = np.concatenate([g, [0.0]])
    gn = gpad[np.minimum(level_n, len(g))]
    prod = f0 * gn
    return float(prod.mean()), float(prod.std(ddof=1) / np.sqrt(samples))


def save_tower_spec(model: TowerModel, path) -> None:
    doc = {"probs": [float(x) for x in model.probs]}
    if model.tail_amplitude is not None:
        doc["beta"] = model.beta
        doc["tail_amplitude"] = model.tail_amplitude
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_tower_spec(path) -> TowerModel:
    """Tower spec file: {"returns": [[R_i, p_i], ...]} or
    {"beta": b, "c": c, "truncation": T}."""
    with open(path) as fh:
        doc = json.load(fh)
    if "returns" in doc:
        return tower_from_returns([(r, p) for r, p in doc["returns"]])
    if "probs" in doc:
        return TowerModel(
            probs=np.array(doc["probs"]),
            beta=doc.get("beta"),
            tail_amplitude=doc.get("tail_amplitude"),
        )
    if "beta" in doc:
        from .sequences import synth_tail

        tail = synth_tail(doc.get("c", 1.0), doc["beta"], 0.0, N=doc["truncation"] + 1)
        return build_tower(tail, doc["truncation"])
    raise ValueError("unrecognized tower spec")
