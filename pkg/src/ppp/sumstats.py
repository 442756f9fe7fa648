"""Nonparametric functional summary statistics.

Implements the K-function with Ripley's isotropic edge correction, the
centered L-function used as network input, Kaplan-Meier estimates of the
empty-space function F and nearest-neighbour function G with border
censoring, and their ratio J.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import PointPattern, Window, distance_to_boundary

DEFAULT_GRID_SIZE = 513
#: F estimation samples empty-space distances at this many cells per axis
F_GRID_RESOLUTION = 128
#: J is reported only where 1 - F exceeds this cutoff
J_VALIDITY_EPS = 1e-9
#: ... and where the F/G estimates stay below this level; the ratio
#: estimator degrades quickly as the denominator 1 - F shrinks
J_MAX_CDF = 0.9


class DegeneratePatternError(ValueError):
    """Raised when a statistic needs more points than the pattern has."""


@dataclass(frozen=True)
class SummaryCurve:
    """A summary statistic evaluated on an increasing grid of distances.

    ``valid`` flags the grid positions where the estimate is reliable;
    outside it the value may be NaN (J beyond its recommended range) or a
    zero placeholder (degenerate patterns).
    """

    r: np.ndarray
    values: np.ndarray
    kind: str
    valid: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        v = np.asarray(self.values, dtype=float)
        mask = np.asarray(self.valid, dtype=bool)
        if not (r.ndim == 1 and len(r) >= 2 and np.all(np.diff(r) > 0) and r[0] >= 0):
            raise ValueError("r must be a strictly increasing nonnegative grid")
        if v.shape != r.shape or mask.shape != r.shape:
            raise ValueError("values/valid must match the r grid")
        if not np.all(np.isfinite(v[mask])):
            raise ValueError("non-finite values on the valid range")
        for name, arr in (("r", r), ("values", v), ("valid", mask)):
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def default_r_grid(w: Window, m: int = DEFAULT_GRID_SIZE) -> np.ndarray:
    """Equally spaced grid from 0 to a quarter of the shorter window side."""
    return np.linspace(0.0, w.shorter_side() / 4.0, m)


def _isotropic_weights(centers: np.ndarray, radii: np.ndarray, w: Window) -> np.ndarray:
    """Vectorized Ripley isotropic correction for circle centers/radii.

    Weight = 1 / (fraction of the circle inside the rectangle), from the
    closed-form arc construction: each edge cuts an arc of half-angle
    acos(d_edge/r), and arcs overlapping past a corner are counted once.
    """
    x, y = centers[:, 0], centers[:, 1]
    r = np.maximum(radii, np.finfo(float).tiny)
    dists = np.stack(
        [x - w.x_min, w.x_max - x, y - w.y_min, w.y_max - y]
    )  # (left, right, bottom, top)
    half = np.arccos(np.clip(dists / r, 0.0, 1.0))
    exterior = 2.0 * half.sum(axis=0)
    aL, aR, aB, aT = half
    for av, ah in ((aL, aB), (aL, aT), (aR, aB), (aR, aT)):
        exterior -= np.maximum(0.0, av + ah - np.pi / 2.0)
    inside_frac = 1.0 - exterior / (2.0 * np.pi)
    return 1.0 / np.maximum(inside_frac, 1e-12)


def isotropic_weight(x_i, x_j, w: Window) -> float:
    """Edge correction weight for the pair (x_i, x_j), centered at x_i."""
    x_i = np.asarray(x_i, dtype=float).reshape(1, 2)
    x_j = np.asarray(x_j, dtype=float).reshape(1, 2)
    r = np.hypot(*(x_j - x_i)[0])
    if r == 0.0:
        return 1.0
    return float(_isotropic_weights(x_i, np.array([r]), w)[0])


def _zero_curve(r: np.ndarray, kind: str) -> SummaryCurve:
    return SummaryCurve(r, np.zeros_like(r), kind, np.ones_like(r, bool), True)


def estimate_K(p: PointPattern, r: np.ndarray | None = None) -> SummaryCurve:
    """Ripley's K with isotropic edge correction on the given r grid."""
    r = default_r_grid(p.window) if r is None else np.asarray(r, dtype=float)
    n = p.n()
    if n < 2:
        raise DegeneratePatternError(f"K needs at least 2 points, got {n}")
    tree = cKDTree(p.points)
    pairs = tree.query_pairs(r[-1], output_type="ndarray")
    weighted = np.zeros(len(r) + 1)
    if len(pairs):
        a = p.points[pairs[:, 0]]
        b = p.points[pairs[:, 1]]
        d = np.hypot(a[:, 0] - b[:, 0], a[:, 1] - b[:, 1])
        wgt = _isotropic_weights(a, d, p.window) + _isotropic_weights(b, d, p.window)
        idx = np.searchsorted(r, d, side="left")
        weighted = np.bincount(idx, weights=wgt, minlength=len(r) + 1)
    cum = np.cumsum(weighted[: len(r)])
    values = p.window.area() / (n * (n - 1)) * cum
    return SummaryCurve(r, values, "K", np.ones_like(r, bool))


def estimate_L_centered(p: PointPattern, r: np.ndarray | None = None) -> SummaryCurve:
    """Centered L-function sqrt(K/pi) - r; zero in the Poisson case."""
    r = default_r_grid(p.window) if r is None else np.asarray(r, dtype=float)
    K = estimate_K(p, r)
    values = np.sqrt(K.values / np.pi) - r
    return SummaryCurve(r, values, "L_centered", K.valid, K.degenerate)


def centered_l_input(p: PointPattern, r: np.ndarray) -> SummaryCurve:
    """Centered L for the estimation pipeline: degenerate patterns (n < 2)
    yield a flagged zero curve instead of an error."""
    try:
        return estimate_L_centered(p, r)
    except DegeneratePatternError:
        return _zero_curve(np.asarray(r, dtype=float), "L_centered")


def _kaplan_meier(
    observed: np.ndarray, event: np.ndarray, r: np.ndarray
) -> np.ndarray:
    """CDF estimate 1 - prod(1 - d_t/n_t) on the grid ``r``.

    ``observed`` are min(distance, censoring distance) with ``event`` true
    when the distance itself was observed (not censored at the boundary).
    """
    order = np.argsort(observed, kind="stable")
    t = observed[order]
    e = event[order]
    times = t[e]
    if len(times) == 0:
        return np.zeros_like(r)
    uniq, counts = np.unique(times, return_counts=True)
    # at risk just before each event time: observations with t >= time
    at_risk = len(t) - np.searchsorted(t, uniq, side="left")
    surv_steps = np.cumprod(1.0 - counts / at_risk)
    idx = np.searchsorted(uniq, r, side="right")
    surv = np.concatenate([[1.0], surv_steps])[idx]
    return 1.0 - surv


def estimate_F(p: PointPattern, r: np.ndarray | None = None) -> SummaryCurve:
    """Kaplan-Meier empty-space function from a regular grid of test points."""
    r = default_r_grid(p.window) if r is None else np.asarray(r, dtype=float)
    if p.n() == 0:
        raise DegeneratePatternError("F is undefined for an empty pattern")
    w = p.window
    res = F_GRID_RESOLUTION
    dx, dy = w.side_lengths()[0] / res, w.side_lengths()[1] / res
    cx = w.x_min + (np.arange(res) + 0.5) * dx
    cy = w.y_min + (np.arange(res) + 0.5) * dy
    X, Y = np.meshgrid(cx, cy, indexing="ij")
    grid = np.column_stack([X.ravel(), Y.ravel()])
    d, _ = cKDTree(p.points).query(grid)
    b = distance_to_boundary(grid, w)
    event = d <= b
    values = _kaplan_meier(np.minimum(d, b), event, r)
    return SummaryCurve(r, values, "F", np.ones_like(r, bool))


def estimate_G(p: PointPattern, r: np.ndarray | None = None) -> SummaryCurve:
    """Kaplan-Meier nearest-neighbour distance function."""
    r = default_r_grid(p.window) if r is None else np.asarray(r, dtype=float)
    if p.n() < 2:
        raise DegeneratePatternError(f"G needs at least 2 points, got {p.n()}")
    d, _ = cKDTree(p.points).query(p.points, k=2)
    nn = d[:, 1]
    b = distance_to_boundary(p.points, p.window)
    event = nn <= b
    values = _kaplan_meier(np.minimum(nn, b), event, r)
    return SummaryCurve(r, values, "G", np.ones_like(r, bool))


def estimate_J(p: PointPattern, r: np.ndarray | None = None) -> SummaryCurve:
    """J = (1 - G)/(1 - F) on the range where both CDF estimates are reliable."""
    r = default_r_grid(p.window) if r is None else np.asarray(r, dtype=float)
    F = estimate_F(p, r)
    G = estimate_G(p, r)
    denom = 1.0 - F.values
    valid = (
        (denom > J_VALIDITY_EPS)
        & (F.values <= J_MAX_CDF)
        & (G.values <= J_MAX_CDF)
    )
    # truncate to the leading contiguous valid stretch (F is nondecreasing,
    # but guard against flat numerical wiggles)
    if not valid.all():
        first_bad = int(np.argmin(valid))
        valid[first_bad:] = False
    values = np.full_like(r, np.nan)
    values[valid] = (1.0 - G.values[valid]) / denom[valid]
    return SummaryCurve(r, values, "J", valid)


def estimate_statistic(kind: str, p: PointPattern, r: np.ndarray | None = None):
    """Dispatch by statistic name (K, L, F, G, or J)."""
    funcs = {
        "K": estimate_K,
        "L": estimate_L_centered,
        "F": estimate_F,
        "G": estimate_G,
        "J": estimate_J,
    }
    if kind not in funcs:
        raise ValueError(f"unknown statistic {kind!r}; expected one of {sorted(funcs)}")
    return funcs[kind](p, r)
