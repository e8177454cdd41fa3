"""The Liverani-Saussol-Vaienti interval map and its Ulam discretization.

The map has a left branch x (1 + 2^a x^a) on [0, 1/2] with a neutral fixed
point at 0, and the affine right branch 2x - 1 on (1/2, 1].  Dynamics near
the origin is organized by the ladder of branch points x_0 = 1/2 > x_1 >
x_2 > ... (successive left-branch preimages of 1/2); orbits entering
(x_{n+1}, x_n] need exactly n more steps to climb back into Y = (1/2, 1].

The Ulam grid pins its cell boundaries to the ladder, so deep cells map
exactly onto the rung above and the discretized transfer operator keeps the
Markov structure of the induced partition.  ``map_kind="doubling"``
replaces the left branch by 2x, giving the exponentially mixing doubling
map as a control system on the same machinery.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve
from scipy.stats import kstest, norm

from .errors import (
    DomainError,
    InsufficientBranchPoints,
    NoConvergence,
    NonZeroMean,
    SolverFailure,
    UnsupportedObservable,
)
from .sequences import DecaySeq

__all__ = [
    "lsv_apply",
    "branch_points",
    "Grid",
    "LsvModel",
    "Observable",
    "build_lsv_model",
    "ulam_matrix",
    "invariant_density",
    "return_tail",
    "make_bump",
    "make_zero_mean",
    "coboundary_observable",
    "correlation",
    "correlation_series",
    "leading_constant",
    "green_kubo_variance",
    "sample_measure",
    "birkhoff_clt",
    "mc_raw_moment",
    "simulate_return_tail",
]


def _left_apply(x, alpha: float, map_kind: str = "lsv"):
    if map_kind == "doubling":
        return 2.0 * x
    return x * (1.0 + (2.0**alpha) * x**alpha)


def lsv_apply(x, alpha: float, map_kind: str = "lsv"):
    """One step of the interval map; scalar or array input.

    Left branch applies on [0, 1/2] (the branch point itself maps to 1),
    the right branch 2x - 1 on (1/2, 1].
    """
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise DomainError("map domain is [0, 1]")
    left = arr <= 0.5
    out = np.where(left, _left_apply(arr, alpha, map_kind), 2.0 * arr - 1.0)
    return float(out) if np.isscalar(x) else out


def branch_points(alpha: float, count: int, tol: float = 1e-15, map_kind: str = "lsv") -> np.ndarray:
    """x_1..x_count solving T(x_{i+1}) = x_i on the monotone left branch.

    Each point is found by bisection bracketed inside the previous rung, so
    the resolution stays relative to the rung width all the way down the
    ladder.  Returns a strictly decreasing array (x_0 = 1/2 not included).
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if map_kind == "doubling":
        return 0.5 ** np.arange(2, count + 2)
    out = np.empty(count)
    target = 0.5
    for i in range(count):
        # the left branch exceeds the identity on (0, 1/2], so the
        # preimage of `target` lies strictly below it
        lo, hi = 0.0, target
        if _left_apply(hi, alpha) < target:
            raise SolverFailure("bracket failed on the left branch")
        for _ in range(90):
            mid = 0.5 * (lo + hi)
            if _left_apply(mid, alpha) < target:
                lo = mid
            else:
                hi = mid
            if hi - lo <= tol * hi:
                break
        out[i] = 0.5 * (lo + hi)
        target = out[i]
    return out


@dataclass
class Grid:
    """Partition of [0, 1]; ``boundaries`` ascending with 0 and 1 included."""

    boundaries: np.ndarray

    def __post_init__(self):
        self.boundaries = np.asarray(self.boundaries, dtype=float)
        self.widths = np.diff(self.boundaries)
        self.mids = 0.5 * (self.boundaries[:-1] + self.boundaries[1:])

    @property
    def size(self) -> int:
        return len(self.widths)

    def locate(self, x: float) -> int:
        """Index of the cell containing x (cells are (g_j, g_{j+1}])."""
        j = int(np.searchsorted(self.boundaries, x, side="left")) - 1
        return max(0, min(j, self.size - 1))


def _build_grid(ladder: np.ndarray, grid_size: int) -> Grid:
    """Boundaries pinned to the ladder; rungs subdivided toward a uniform
    target width, right half uniform."""
    right_cells = max(grid_size // 2, 8)
    right = np.linspace(0.5, 1.0, right_cells + 1)
    asc = ladder[::-1]  # x_K .. x_1 ascending
    left_pts = np.concatenate([[0.0], asc, [0.5]])
    budget = max(grid_size - right_cells - len(left_pts) + 1, 0)
    span = 0.5 - left_pts[1]
    delta = span / max(budget, 1)
    pieces = [np.array([0.0])]
    for a, b in zip(left_pts[:-1], left_pts[1:]):
        m = max(1, int(round((b - a) / delta))) if a > 0 else 1
        pieces.append(np.linspace(a, b, m + 1)[1:])
    left = np.concatenate(pieces)
    boundaries = np.unique(np.concatenate([left, right]))
    return Grid(boundaries)


def _left_inverse_array(y: np.ndarray, alpha: float, ladder: np.ndarray, map_kind: str) -> np.ndarray:
    """Preimages under the left branch for y in (0, 1], ladder-bracketed."""
    if map_kind == "doubling":
        return y / 2.0
    asc = np.concatenate([ladder[::-1], [0.5]])  # x_K .. x_1, x_0
    idx = np.searchsorted(asc, y, side="left")
    lo = np.where(idx >= 2, asc[np.maximum(idx - 2, 0)], 0.0)
    hi_idx = np.clip(idx - 1, 0, len(asc) - 1)
    hi = np.where(idx >= 1, asc[hi_idx], asc[0])
    top = y > 0.5
    if np.any(top):
        lo = np.where(top, asc[-2] if len(asc) >= 2 else 0.0, lo)
        hi = np.where(top, 0.5, hi)
    lo = lo.astype(float).copy()
    hi = hi.astype(float).copy()
    for _ in range(90):
        mid = 0.5 * (lo + hi)
        below = _left_apply(mid, alpha) < y
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def ulam_matrix(grid: Grid, alpha: float, ladder: np.ndarray, map_kind: str = "lsv") -> sparse.csr_matrix:
    """Row-stochastic Ulam matrix: entry (i, j) = Leb(cell_i ∩ T^{-1} cell_j) / Leb(cell_i).

    Cell images are intervals on each branch; overlaps come from the
    precomputed inverse images of the grid boundaries, so each row
    telescopes to exactly b - a before normalization.
    """
    g = grid.boundaries
    G = grid.size
    i_half = int(np.searchsorted(g, 0.5))
    if g[i_half] != 0.5:
        raise ValueError("grid must contain the branch point 1/2")
    psi = np.empty_like(g)
    psi[0] = 0.0
    psi[1:] = _left_inverse_array(g[1:], alpha, ladder, map_kind)
    rho = (g + 1.0) / 2.0

    rows, cols, vals = [], [], []
    for i in range(G):
        a, b = g[i], g[i + 1]
        if b <= 0.5:
            Ta, Tb = _left_apply(a, alpha, map_kind), _left_apply(b, alpha, map_kind)
            inv = psi
        else:
            Ta, Tb = 2.0 * a - 1.0, 2.0 * b - 1.0
            inv = rho
        Tb = min(Tb, 1.0)
        j0 = max(int(np.searchsorted(g, Ta, side="right")) - 1, 0)
        j1 = min(int(np.searchsorted(g, Tb, side="left")) - 1, G - 1)
        if j1 < j0:
            j1 = j0
        cuts = np.empty(j1 - j0 + 2)
        cuts[0] = a
        cuts[-1] = b
        if j1 > j0:
            cuts[1:-1] = np.clip(inv[j0 + 1 : j1 + 1], a, b)
        w = np.diff(cuts)
        rows.append(np.full(j1 - j0 + 1, i))
        cols.append(np.arange(j0, j1 + 1))
        vals.append(w / (b - a))
    mat = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(G, G)
    )
    return mat.tocsr()


def invariant_density(
    ulam: sparse.csr_matrix,
    grid: Grid,
    method: str = "direct",
    tol: float = 1e-8,
    max_iter: int = 200_000,
) -> np.ndarray:
    """Density h (per-cell, d mass / d Leb) of the normalized left fixed
    vector of the Ulam matrix.

    ``direct`` solves the bordered fixed-point system in one sparse solve
    (one inverse-iteration step at the exact eigenvalue); ``power`` is the
    plain iteration, which for the intermittent map converges only
    polynomially and is kept for cross-checks at small grids.
    """
    G = grid.size
    if method == "direct":
        A = (ulam.T - sparse.identity(G, format="csr")).tolil()
        A[-1, :] = 1.0
        b = np.zeros(G)
        b[-1] = 1.0
        m = spsolve(A.tocsc(), b)
    elif method == "power":
        UT = ulam.T.tocsr()
        m = grid.widths / grid.widths.sum()
        for it in range(max_iter):
            m_next = UT @ m
            m_next /= m_next.sum()
            if it % 16 == 0 and np.abs(m_next - m).sum() <= 0.1 * tol:
                m = m_next
                break
            m = m_next
        else:
            raise NoConvergence("power iteration did not reach the residual target")
    else:
        raise ValueError(f"unknown method {method!r}")
    if m.min() < -1e-9:
        warnings.warn(f"fixed vector has negative mass {m.min():.2e}; clipping")
    m = np.maximum(m, 0.0)
    m /= m.sum()
    resid = float(np.abs(ulam.T @ m - m).sum())
    if resid > tol:
        raise NoConvergence(f"fixed-point residual {resid:.2e} above {tol:.1e}")
    return m / grid.widths


@dataclass
class Observable:
    """Grid observable with an exact pointwise evaluator.

    ``cell_values`` hold per-cell averages (3-point Gauss) used by the Ulam
    pipeline; ``func`` is the analytic profile used by Monte Carlo paths.
    """

    func: Callable[[np.ndarray], np.ndarray]
    support: tuple[float, float]
    cell_values: np.ndarray
    mean: float
    regularity: str = "lipschitz"

    def __call__(self, x):
        return self.func(x)


@dataclass
class LsvModel:
    """Interval-map model bundle: ladder, grid, Ulam matrix, density."""

    alpha: float
    map_kind: str
    ladder: np.ndarray  # x_1 .. x_K, descending
    grid: Grid
    ulam: sparse.csr_matrix
    h: np.ndarray
    return_tail_seq: Optional[DecaySeq] = None
    _ulam_t: Optional[sparse.csr_matrix] = None

    @property
    def masses(self) -> np.ndarray:
        return self.h * self.grid.widths

    @property
    def ulam_t(self) -> sparse.csr_matrix:
        if self._ulam_t is None:
            self._ulam_t = self.ulam.T.tocsr()
        return self._ulam_t

    def measure(self, a: float, b: float) -> float:
        """mu((a, b]) by integrating the cell densities."""
        g = self.grid.boundaries
        cum = np.concatenate([[0.0], np.cumsum(self.masses)])

        def M(y):
            j = np.searchsorted(g, y, side="right") - 1
            j = min(max(j, 0), self.grid.size - 1)
            return cum[j] + self.h[j] * (y - g[j])

        return float(M(b) - M(a))


def _cell_average(func, grid: Grid) -> np.ndarray:
    """Per-cell averages by 3-point Gauss-Legendre."""
    half = grid.widths / 2.0
    offset = half * np.sqrt(3.0 / 5.0)
    vals = (
        5.0 * func(grid.mids - offset)
        + 8.0 * func(grid.mids)
        + 5.0 * func(grid.mids + offset)
    ) / 18.0
    return vals


def build_lsv_model(
    alpha: float,
    grid_size: int = 20_000,
    ladder_size: int = 800,
    tail_horizon: Optional[int] = None,
    map_kind: str = "lsv",
    density_method: str = "direct",
) -> LsvModel:
    """Full pipeline: ladder, pinned grid, Ulam matrix, invariant density,
    and (optionally) the return-time tail sequence out to ``tail_horizon``."""
    if not (0.0 < alpha < 1.0) and map_kind == "lsv":
        raise ValueError("alpha must lie in (0, 1)")
    if tail_horizon is not None:
        ladder_size = max(ladder_size, tail_horizon + 2)
    ladder = branch_points(alpha, ladder_size, map_kind=map_kind)
    grid = _build_grid(ladder, grid_size)
    U = ulam_matrix(grid, alpha, ladder, map_kind)
    h = invariant_density(U, grid, method=density_method)
    model = LsvModel(alpha=alpha, map_kind=map_kind, ladder=ladder, grid=grid, ulam=U, h=h)
    if tail_horizon is not None:
        model.return_tail_seq = _return_tail_seq(model, tail_horizon)
    return model


def _return_tail_seq(model: LsvModel, n_max: int) -> DecaySeq:
    vals = np.empty(n_max + 1)
    vals[0] = model.measure(0.5, 1.0)
    for n in range(1, n_max + 1):
        vals[n] = return_tail(model, n)
    gamma = 1.0 / model.alpha
    lo = max(2, (n_max * 9) // 10)
    ns = np.arange(lo, n_max + 1, dtype=float)
    c = float(np.mean(vals[lo:] * (ns + 1.0) ** gamma))
    return DecaySeq(vals, gamma=gamma, provenance="measured", tail_amplitude=c)


def return_tail(model: LsvModel, n: int) -> float:
    """mu{x in Y : return time > n} = mu((1/2, (1 + x_{n-1}) / 2]).

    On Y the map is x -> 2x - 1, and the return time exceeds n exactly when
    the image lands at or below the ladder point x_{n-1}.  Verified against
    direct orbit simulation in the test suite.
    """
    if n == 0:
        return model.measure(0.5, 1.0)
    if n == 1:
        xprev = 0.5
    else:
        if n - 1 > len(model.ladder):
            raise InsufficientBranchPoints(f"ladder holds {len(model.ladder)} points, need x_{n-1}")
        xprev = model.ladder[n - 2]
    return model.measure(0.5, (1.0 + xprev) / 2.0)


def make_bump(
    model: LsvModel,
    a: float,
    b: float,
    ramp_frac: float = 0.25,
    height: float = 1.0,
) -> Observable:
    """Lipschitz bump: cubic smoothstep ramps up on [a, a+r], plateau,
    down on [b-r, b], with r = ramp_frac * (b - a) / 2."""
    if not 0.0 <= a < b <= 1.0:
        raise ValueError("need 0 <= a < b <= 1")
    r = ramp_frac * (b - a) / 2.0

    def func(x):
        x = np.asarray(x, dtype=float)
        t_up = np.clip((x - a) / r, 0.0, 1.0)
        t_dn = np.clip((b - x) / r, 0.0, 1.0)
        s = (3.0 - 2.0 * t_up) * t_up**2 * (3.0 - 2.0 * t_dn) * t_dn**2
        return height * s

    cells = _cell_average(func, model.grid)
    mean = float(cells @ model.masses)
    return Observable(func=func, support=(a, b), cell_values=cells, mean=mean)


def make_zero_mean(model: LsvModel, main: Observable, compensator: Observable) -> Observable:
    """main - theta * compensator with theta chosen so the grid mean vanishes."""
    if abs(compensator.mean) < 1e-300:
        raise ValueError("compensator has zero mean")
    theta = main.mean / compensator.mean
    f_main, f_comp = main.func, compensator.func

    def func(x):
        return f_main(x) - theta * f_comp(x)

    cells = main.cell_values - theta * compensator.cell_values
    support = (min(main.support[0], compensator.support[0]), max(main.support[1], compensator.support[1]))
    return Observable(func=func, support=support, cell_values=cells, mean=float(cells @ model.masses))


def coboundary_observable(model: LsvModel, g: Observable) -> Observable:
    """f = g o T - g; its Birkhoff sums telescope, so the CLT variance is 0.

    The support necessarily leaks below 1/2 (every point of (0, 1) has a
    left-branch preimage), so this observable is only valid for the
    degenerate-variance diagnostics, not the sharp-decay statements.
    """
    alpha, kind = model.alpha, model.map_kind
    gf = g.func

    def func(x):
        return gf(lsv_apply(x, alpha, kind)) - gf(x)

    lo = float(_left_inverse_array(np.array([g.support[0]]), alpha, model.ladder, kind)[0])
    cells = _cell_average(func, model.grid)
    return Observable(
        func=func,
        support=(min(lo, g.support[0]), 1.0),
        cell_values=cells,
        mean=float(cells @ model.masses),
    )


def _check_observable(model: LsvModel, obs: Observable) -> None:
    if obs.support[0] <= model.grid.boundaries[1]:
        raise UnsupportedObservable("support touches the unresolved cell at 0")


def correlation_series(model: LsvModel, f: Observable, g: Observable, N: int) -> np.ndarray:
    """Cor(f, g o T^n) for n = 0..N via the Ulam transfer operator.

    Pushes the cell masses of f dmu forward n times and pairs with g,
    subtracting the product of the means.
    """
    _check_observable(model, f)
    _check_observable(model, g)
    masses = model.masses
    v = f.cell_values * masses
    mean_f = float(f.cell_values @ masses)
    mean_g = float(g.cell_values @ masses)
    out = np.empty(N + 1)
    out[0] = float((f.cell_values * g.cell_values) @ masses) - mean_f * mean_g
    UT = model.ulam_t
    for n in range(1, N + 1):
        v = UT @ v
        out[n] = float(g.cell_values @ v) - mean_f * mean_g
    return out


def correlation(model: LsvModel, f: Observable, g: Observable, n: int) -> float:
    """Cor(f, g o T^n) = int f . g o T^n dmu - int f dmu int g dmu."""
    return float(correlation_series(model, f, g, n)[-1])


def h_at_half(model: LsvModel) -> float:
    """Density estimate just right of 1/2 (first cell of Y)."""
    j = model.grid.locate(0.5 + 1e-12)
    return float(model.h[j])


def leading_constant(model: LsvModel, h_half: Optional[float] = None) -> float:
    """(1/4) h(1/2) alpha^(-1/alpha) (1/alpha - 1)^(-1), the amplitude of
    the n^(1 - 1/alpha) correlation asymptotics."""
    a = model.alpha
    if h_half is None:
        h_half = h_at_half(model)
    return 0.25 * h_half * a ** (-1.0 / a) / (1.0 / a - 1.0)


def green_kubo_variance(
    model: LsvModel,
    f: Observable,
    n_max: int = 2000,
    mean_tol: float = 1e-6,
    term_tol: float = 1e-10,
) -> float:
    """sigma^2 = -int f^2 dmu + 2 sum_{n>=0} int f . f o T^n dmu.

    Autocorrelations come from the Ulam pipeline; the series is truncated
    at ``n_max`` or once the terms sink below ``term_tol``.  Slightly
    negative results are clipped to zero with a warning.
    """
    scale = float(np.max(np.abs(f.cell_values))) or 1.0
    if abs(f.mean) > mean_tol * scale:
        raise NonZeroMean(f"mean {f.mean:.2e} exceeds tolerance")
    acf = correlation_series(model, f, f, n_max)
    cutoff = n_max
    below = np.nonzero(np.abs(acf) >= term_tol)[0]
    if below.size:
        cutoff = int(below[-1])
    sigma2 = float(acf[0] + 2.0 * acf[1 : cutoff + 1].sum())
    if sigma2 < 0:
        if sigma2 < -1e-6:
            warnings.warn(f"Green-Kubo series summed to {sigma2:.3e}; clipping to 0")
        sigma2 = 0.0
    return sigma2


def sample_measure(model: LsvModel, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw from mu by inverse CDF over cells, uniform placement within."""
    cum = np.cumsum(model.masses)
    u = rng.random(size) * cum[-1]
    idx = np.searchsorted(cum, u)
    g = model.grid.boundaries
    return g[idx] + rng.random(size) * model.grid.widths[idx]


def birkhoff_clt(
    model: LsvModel,
    f: Observable,
    n: int,
    samples: int,
    seed: int,
    sigma2: Optional[float] = None,
    mean_tol: float = 1e-6,
    require_support_in_y: bool = True,
) -> tuple[float, float]:
    """Kolmogorov-Smirnov distance of S_n / sqrt(n) to N(0, sigma^2).

    Starting points are drawn from mu; Birkhoff sums use the exact map and
    the analytic observable.  ``sigma2`` defaults to the Green-Kubo value.
    Returns (ks_statistic, sigma_hat); the KS statistic is NaN when the
    target variance degenerates (coboundary case).
    """
    scale = float(np.max(np.abs(f.cell_values))) or 1.0
    if abs(f.mean) > mean_tol * scale:
        raise NonZeroMean(f"mean {f.mean:.2e} exceeds tolerance")
    _check_observable(model, f)
    if require_support_in_y and f.support[0] < 0.5:
        raise UnsupportedObservable("observable not supported in Y=(1/2,1]")
    if sigma2 is None:
        sigma2 = green_kubo_variance(model, f)
    rng = np.random.default_rng(seed)
    x = sample_measure(model, samples, rng)
    S = np.zeros(samples)
    for _ in range(n):
        S += f.func(x)
        x = lsv_apply(x, model.alpha, model.map_kind)
    scaled = S / np.sqrt(n)
    sigma_hat = float(np.std(scaled, ddof=1))
    if sigma2 > 1e-12:
        ks = float(kstest(scaled, norm(loc=0.0, scale=np.sqrt(sigma2)).cdf).statistic)
    else:
        ks = float("nan")
    return ks, sigma_hat


def mc_raw_moment(
    model: LsvModel,
    f: Observable,
    g: Observable,
    n: int,
    samples: int,
    seed: int,
) -> tuple[float, float]:
    """Monte Carlo estimate of E[f(x) g(T^n x)] with its standard error."""
    rng = np.random.default_rng(seed)
    x = sample_measure(model, samples, rng)
    fx = f.func(x)
    for _ in range(n):
        x = lsv_apply(x, model.alpha, model.map_kind)
    prod = fx * g.func(x)
    return float(prod.mean()), float(prod.std(ddof=1) / np.sqrt(samples))


def simulate_return_tail(
    model: LsvModel,
    n_max: int,
    samples: int,
    seed: int,
) -> np.ndarray:
    """Empirical survival m[phi > n] for n = 0..n_max by orbit simulation.

    Points start in Y under mu|_Y (renormalized); absolute values are
    rescaled by mu(Y) to match the unconditioned tail.
    """
    rng = np.random.default_rng(seed)
    masses = model.masses.copy()
    g = model.grid.boundaries
    masses[g[1:] <= 0.5] = 0.0
    cum = np.cumsum(masses)
    u = rng.random(samples) * cum[-1]
    idx = np.searchsorted(cum, u)
    x = g[idx] + rng.random(samples) * model.grid.widths[idx]
    mu_y = model.measure(0.5, 1.0)
    out = np.empty(n_max + 1)
    out[0] = mu_y
    alive = np.ones(samples, dtype=bool)
    for n in range(1, n_max + 1):
        x[alive] = lsv_apply(x[alive], model.alpha, model.map_kind)
        alive = alive & (x <= 0.5)
        out[n] = alive.mean() * mu_y
    return out
