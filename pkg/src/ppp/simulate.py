"""Samplers for Poisson, LGCP, Strauss, and LGCP-Strauss point processes.

The Gaussian random field is drawn by dense Cholesky factorization of the
cell-center correlation matrix (exponential covariance), with the factor
cached per (window, resolution, scale).  The Gibbs models are sampled with
a birth-death Metropolis-Hastings chain compiled with numba; all
randomness is drawn up front from a numpy Generator so that runs are
bit-reproducible given the seed.
"""

from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
from numba import njit

from .geometry import PointPattern, Window

DEFAULT_RESOLUTION = 64
DEFAULT_STRAUSS_ITERS = 100_000
DEFAULT_LGCP_STRAUSS_ITERS = 200_000

#: diagonal nugget added to the correlation matrix before factorization
CHOL_NUGGET = 1e-10


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class GrfParams:
    """Mean, variance, and correlation scale of the log-intensity field."""

    mu: float
    sigma2: float
    s: float

    def __post_init__(self):
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be >= 0")
        if self.s <= 0:
            raise ValueError("s must be > 0")


@dataclass(frozen=True)
class StraussParams:
    beta: float
    gamma: float
    R: float

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be > 0")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")
        if self.R < 0:
            raise ValueError("R must be >= 0")


@dataclass(frozen=True)
class LgcpStraussParams:
    grf: GrfParams
    gamma: float
    R: float

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")
        if self.R < 0:
            raise ValueError("R must be >= 0")


@dataclass(frozen=True)
class FieldGrid:
    """Field values at cell centers of a regular grid over ``window``.

    ``values[i, j]`` is the value at center ``(x_min + (i+.5)*dx,
    y_min + (j+.5)*dy)``.
    """

    window: Window
    resolution: int
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.resolution, self.resolution):
            raise ValueError("field shape does not match resolution")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field contains non-finite values")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def cell_sizes(self) -> tuple[float, float]:
        sx, sy = self.window.side_lengths()
        return sx / self.resolution, sy / self.resolution

    def cell_area(self) -> float:
        dx, dy = self.cell_sizes()
        return dx * dy

    def value_at(self, points: np.ndarray) -> np.ndarray:
        """Nearest-cell field value; points outside snap to the edge cell."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        dx, dy = self.cell_sizes()
        ix = np.clip(
            ((pts[:, 0] - self.window.x_min) / dx).astype(int), 0, self.resolution - 1
        )
        iy = np.clip(
            ((pts[:, 1] - self.window.y_min) / dy).astype(int), 0, self.resolution - 1
        )
        return self.values[ix, iy]


@dataclass(frozen=True)
class Trace:
    """Thinned chain diagnostics: iteration index, n(x), and S_R(x)."""

    iterations: np.ndarray
    n_points: np.ndarray
    r_close_pairs: np.ndarray

    def __len__(self) -> int:
        return len(self.iterations)


def trace_diagnostics(samples, thin: int = 1) -> Trace:
    """Turn recorded ``(n, s_r)`` chain samples into a trace series.

    ``samples`` is a sequence of (n, s_r) pairs recorded every ``thin``
    iterations; the series carries the original iteration index.
    """
    arr = np.asarray(list(samples), dtype=float).reshape(-1, 2)
    iters = np.arange(1, len(arr) + 1) * thin
    return Trace(iters, arr[:, 0].astype(int), arr[:, 1].astype(int))


# ---------------------------------------------------------------------------
# Gaussian random field


class _CholCache:
    """Tiny LRU for Cholesky factors, keyed on (window sides, resolution, s).

    Factors are large (a resolution-64 factor is ~130 MB), so the cache is
    deliberately small; read access is lock-protected and the stored arrays
    are never mutated.
    """

    def __init__(self, maxsize: int = 4):
        self.maxsize = maxsize
        self._lock = threading.Lock()
        self._factors: OrderedDict[tuple, np.ndarray] = OrderedDict()
        self._dist: OrderedDict[tuple, np.ndarray] = OrderedDict()

    def _cell_centers(self, w: Window, resolution: int) -> np.ndarray:
        dx, dy = w.side_lengths()
        cx = w.x_min + (np.arange(resolution) + 0.5) * dx / resolution
        cy = w.y_min + (np.arange(resolution) + 0.5) * dy / resolution
        X, Y = np.meshgrid(cx, cy, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])

    def _distances(self, w: Window, resolution: int) -> np.ndarray:
        key = (*w.side_lengths(), resolution)
        with self._lock:
            if key in self._dist:
                return self._dist[key]
        pts = self._cell_centers(w, resolution)
        diff = pts[:, None, :] - pts[None, :, :]
        d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        with self._lock:
            self._dist[key] = d
            while len(self._dist) > 2:
                self._dist.popitem(last=False)
        return d

    def factor(self, w: Window, resolution: int, s: float) -> np.ndarray:
        key = (*w.side_lengths(), resolution, float(s))
        with self._lock:
            if key in self._factors:
                self._factors.move_to_end(key)
                return self._factors[key]
        d = self._distances(w, resolution)
        corr = np.exp(-d / s)
        corr[np.diag_indices_from(corr)] += CHOL_NUGGET
        try:
            L = np.linalg.cholesky(corr)
        except np.linalg.LinAlgError:
            # larger nugget as fallback; report via the raised error if even
            # that fails
            corr[np.diag_indices_from(corr)] += 1e-6
            try:
                L = np.linalg.cholesky(corr)
            except np.linalg.LinAlgError as exc:
                raise SimulationError(
                    f"correlation factorization failed for s={s}"
                ) from exc
        L.setflags(write=False)
        with self._lock:
            self._factors[key] = L
            while len(self._factors) > self.maxsize:
                self._factors.popitem(last=False)
        return L


_chol_cache = _CholCache()


def snap_scale(s: float, lo: float, hi: float, levels: int) -> float:
    """Snap a correlation scale to one of ``levels`` values on [lo, hi].

    Optional discretization so that bulk field simulation with freshly
    sampled scales can reuse cached Cholesky factors.
    """
    grid = np.linspace(lo, hi, levels)
    return float(grid[np.argmin(np.abs(grid - s))])


def sample_grf(
    w: Window,
    resolution: int,
    p: GrfParams,
    rng: np.random.Generator,
) -> FieldGrid:
    """Draw a stationary Gaussian field with exponential correlation.

    Mean ``mu`` and covariance ``sigma2 * exp(-d/s)`` between cell centers;
    exact via dense Cholesky of the correlation matrix.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    if p.sigma2 == 0.0:
        return FieldGrid(w, resolution, np.full((resolution, resolution), p.mu))
    L = _chol_cache.factor(w, resolution, p.s)
    z = rng.standard_normal(resolution * resolution)
    vals = p.mu + np.sqrt(p.sigma2) * (L @ z)
    return FieldGrid(w, resolution, vals.reshape(resolution, resolution))


# ---------------------------------------------------------------------------
# Poisson and Cox samplers


def sample_poisson(
    w: Window, intensity: float, rng: np.random.Generator
) -> PointPattern:
    """Homogeneous Poisson pattern on ``w``."""
    if intensity < 0:
        raise ValueError("intensity must be >= 0")
    n = rng.poisson(intensity * w.area())
    xs = rng.uniform(w.x_min, w.x_max, n)
    ys = rng.uniform(w.y_min, w.y_max, n)
    return PointPattern(np.column_stack([xs, ys]), w)


def _poisson_given_field(
    field: FieldGrid, rng: np.random.Generator
) -> PointPattern:
    """Inhomogeneous Poisson draw with intensity exp(field), cell by cell."""
    w = field.window
    res = field.resolution
    dx, dy = field.cell_sizes()
    means = np.exp(field.values) * field.cell_area()
    counts = rng.poisson(means)
    total = int(counts.sum())
    if total == 0:
        return PointPattern(np.zeros((0, 2)), w)
    ix, iy = np.nonzero(counts)
    reps = counts[ix, iy]
    cell_x = np.repeat(w.x_min + ix * dx, reps)
    cell_y = np.repeat(w.y_min + iy * dy, reps)
    xs = cell_x + rng.uniform(0.0, dx, total)
    ys = cell_y + rng.uniform(0.0, dy, total)
    # guard against floating point spill over the far boundary
    xs = np.minimum(xs, w.x_max)
    ys = np.minimum(ys, w.y_max)
    return PointPattern(np.column_stack([xs, ys]), w)


def sample_lgcp(
    w: Window,
    p: GrfParams,
    resolution: int = DEFAULT_RESOLUTION,
    rng: np.random.Generator | None = None,
) -> PointPattern:
    """Log-Gaussian Cox pattern: Poisson draw given exp(Gaussian field)."""
    rng = np.random.default_rng() if rng is None else rng
    field = sample_grf(w, resolution, p, rng)
    return _poisson_given_field(field, rng)


# ---------------------------------------------------------------------------
# Gibbs models: birth-death Metropolis-Hastings


def papangelou_strauss(u, x: PointPattern, p: StraussParams) -> float:
    """Conditional intensity beta * gamma^(neighbours of u within R)."""
    u = np.asarray(u, dtype=float).reshape(2)
    if x.n() == 0:
        return p.beta
    d = np.hypot(x.points[:, 0] - u[0], x.points[:, 1] - u[1])
    k = int(np.count_nonzero(d <= p.R))
    return p.beta * p.gamma**k


@njit(cache=True)
def _bd_chain(
    pts,
    n0,
    rand,
    R2,
    gamma,
    logf,
    fx0,
    fy0,
    fdx,
    fdy,
    ex0,
    ex1,
    ey0,
    ey1,
    thin,
    trace_n,
    trace_s,
):
    """Birth-death MH chain targeting density prop. to
    exp(sum logf(x_i)) * gamma^(R-close pairs) on the extended window.

    ``logf`` is the log activity surface on a grid over the field window
    (a 1x1 grid realises a constant-activity Strauss model); lookups snap
    to the nearest cell.  Returns (final n, final pair count); n == -1
    signals buffer overflow.
    """
    n = n0
    area = (ex1 - ex0) * (ey1 - ey0)
    fnx, fny = logf.shape
    cap = pts.shape[0]

    s_r = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = pts[i, 0] - pts[j, 0]
            dy = pts[i, 1] - pts[j, 1]
            if dx * dx + dy * dy <= R2:
                s_r += 1

    for it in range(rand.shape[0]):
        if rand[it, 0] < 0.5:
            # birth: uniform location on the extended window
            ux = ex0 + rand[it, 1] * (ex1 - ex0)
            uy = ey0 + rand[it, 2] * (ey1 - ey0)
            k = 0
            for i in range(n):
                dx = pts[i, 0] - ux
                dy = pts[i, 1] - uy
                if dx * dx + dy * dy <= R2:
                    k += 1
            ix = int((ux - fx0) / fdx)
            iy = int((uy - fy0) / fdy)
            if ix < 0:
                ix = 0
            elif ix >= fnx:
                ix = fnx - 1
            if iy < 0:
                iy = 0
            elif iy >= fny:
                iy = fny - 1
            lam = np.exp(logf[ix, iy]) * gamma**k
            ratio = lam * area / (n + 1)
            if rand[it, 3] < ratio:
                if n == cap:
                    return -1, -1
                pts[n, 0] = ux
                pts[n, 1] = uy
                n += 1
                s_r += k
        elif n > 0:
            # death: uniform victim
            j = int(rand[it, 1] * n)
            if j == n:
                j = n - 1
            k = 0
            for i in range(n):
                if i == j:
                    continue
                dx = pts[i, 0] - pts[j, 0]
                dy = pts[i, 1] - pts[j, 1]
                if dx * dx + dy * dy <= R2:
                    k += 1
            ix = int((pts[j, 0] - fx0) / fdx)
            iy = int((pts[j, 1] - fy0) / fdy)
            if ix < 0:
                ix = 0
            elif ix >= fnx:
                ix = fnx - 1
            if iy < 0:
                iy = 0
            elif iy >= fny:
                iy = fny - 1
            lam = np.exp(logf[ix, iy]) * gamma**k
            accept = False
            if lam == 0.0:
                accept = True  # leaving a zero-density configuration
            elif rand[it, 3] < n / (lam * area):
                accept = True
            if accept:
                pts[j, 0] = pts[n - 1, 0]
                pts[j, 1] = pts[n - 1, 1]
                n -= 1
                s_r -= k
        if thin > 0 and (it + 1) % thin == 0:
            idx = (it + 1) // thin - 1
            trace_n[idx] = n
            trace_s[idx] = s_r
    return n, s_r


def _run_bd_chain(
    extended: Window,
    logf: np.ndarray,
    field_window: Window,
    gamma: float,
    R: float,
    n_iter: int,
    rng: np.random.Generator,
    init_points: np.ndarray,
    expected_n: float,
    trace_every: int | None,
) -> tuple[np.ndarray, Trace | None]:
    fdx = field_window.side_lengths()[0] / logf.shape[0]
    fdy = field_window.side_lengths()[1] / logf.shape[1]
    thin = int(trace_every) if trace_every else 0
    n_trace = n_iter // thin if thin else 0
    rand = rng.random((n_iter, 4))
    cap = max(int(6 * expected_n) + 256, 2 * len(init_points) + 256)
    for _ in range(4):
        pts = np.zeros((cap, 2))
        pts[: len(init_points)] = init_points
        trace_n = np.zeros(n_trace, dtype=np.int64)
        trace_s = np.zeros(n_trace, dtype=np.int64)
        n, _ = _bd_chain(
            pts,
            len(init_points),
            rand,
            R * R,
            gamma,
            logf,
            field_window.x_min,
            field_window.y_min,
            fdx,
            fdy,
            extended.x_min,
            extended.x_max,
            extended.y_min,
            extended.y_max,
            thin,
            trace_n,
            trace_s,
        )
        if n >= 0:
            trace = (
                trace_diagnostics(np.column_stack([trace_n, trace_s]), thin)
                if thin
                else None
            )
            return pts[:n].copy(), trace
        cap *= 4
    raise SimulationError("birth-death chain exceeded its point buffer")


def sample_strauss(
    w: Window,
    p: StraussParams,
    n_iter: int = DEFAULT_STRAUSS_ITERS,
    rng: np.random.Generator | None = None,
    trace_every: int | None = None,
) -> PointPattern | tuple[PointPattern, Trace]:
    """Approximate Strauss draw on ``w``.

    The chain runs on the window extended by a margin of 2R on all sides
    and the returned pattern is clipped back to ``w``.  With
    ``trace_every`` set, also returns the thinned (n, S_R) trace.
    """
    if n_iter < 1:
        raise ValueError("n_iter must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    extended = w.dilated(2 * p.R)
    # constant activity realised as a 1x1 log-intensity grid
    logf = np.full((1, 1), np.log(p.beta))
    init = sample_poisson(extended, p.beta, rng).points
    pts, trace = _run_bd_chain(
        extended,
        logf,
        extended,
        p.gamma,
        p.R,
        n_iter,
        rng,
        init,
        p.beta * extended.area(),
        trace_every,
    )
    pattern = PointPattern(pts, extended).restricted_to(w)
    return (pattern, trace) if trace_every else pattern


def sample_lgcp_strauss(
    w: Window,
    p: LgcpStraussParams,
    resolution: int = DEFAULT_RESOLUTION,
    n_iter: int = DEFAULT_LGCP_STRAUSS_ITERS,
    rng: np.random.Generator | None = None,
    trace_every: int | None = None,
) -> PointPattern | tuple[PointPattern, Trace]:
    """Approximate LGCP-Strauss draw on ``w``.

    One Gaussian field is drawn on ``w``; conditional on it, a birth-death
    chain targets the density prop. to exp(sum Y(x_i)) * gamma^(S_R) on
    the 2R-extended window, with field values outside ``w`` taken from the
    nearest cell.  The returned pattern is clipped back to ``w``.
    """
    if n_iter < 1:
        raise ValueError("n_iter must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    field = sample_grf(w, resolution, p.grf, rng)
    extended = w.dilated(2 * p.R)
    # start from the gamma=1 collapse (LGCP draw given the field) on w
    init = _poisson_given_field(field, rng).points
    expected = float(np.exp(field.values).sum() * field.cell_area())
    pts, trace = _run_bd_chain(
        extended,
        field.values,
        w,
        p.gamma,
        p.R,
        n_iter,
        rng,
        init,
        expected,
        trace_every,
    )
    pattern = PointPattern(pts, extended).restricted_to(w)
    return (pattern, trace) if trace_every else pattern


# ---------------------------------------------------------------------------
# model dispatch (shared by the pipeline, the envelopes, and the CLI)

MODELS = ("poisson", "lgcp", "strauss", "lgcp-strauss")


def simulate_model(
    model: str,
    params,
    w: Window,
    rng: np.random.Generator,
    resolution: int = DEFAULT_RESOLUTION,
    n_iter: int | None = None,
) -> PointPattern:
    """Draw one pattern from a named model.

    ``params`` is the matching parameter object (a plain intensity for
    ``poisson``).
    """
    if model == "poisson":
        return sample_poisson(w, float(params), rng)
    if model == "lgcp":
        return sample_lgcp(w, params, resolution, rng)
    if model == "strauss":
        return sample_strauss(w, params, n_iter or DEFAULT_STRAUSS_ITERS, rng)
    if model == "lgcp-strauss":
        return sample_lgcp_strauss(
            w, params, resolution, n_iter or DEFAULT_LGCP_STRAUSS_ITERS, rng
        )
    raise ValueError(f"unknown model {model!r}; expected one of {MODELS}")
