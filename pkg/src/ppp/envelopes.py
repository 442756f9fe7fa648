"""Global envelopes and tests from simulated summary curves.

Curves are ordered by the extreme rank length: pointwise two-sided ranks
among all curves, sorted increasingly per curve, compared
lexicographically (smaller = more extreme).  The envelope is the pointwise
min/max of the least extreme curves and containment of the data curve
corresponds to non-rejection.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .geometry import PointPattern
from .simulate import simulate_model
from .sumstats import SummaryCurve, estimate_statistic

DEFAULT_N_SIM = 2499


class EnvelopeError(ValueError):
    pass


@dataclass(frozen=True)
class EnvelopeResult:
    r: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    central: np.ndarray
    p_value: float
    alpha: float
    n_sim: int

    def data_inside(self, data_curve: np.ndarray) -> bool:
        data_curve = np.asarray(data_curve, dtype=float)
        return bool(
            np.all(data_curve >= self.lower) and np.all(data_curve <= self.upper)
        )


def erl_ordering(curves: np.ndarray) -> np.ndarray:
    """Extreme-rank-length measure per curve; smaller = more extreme.

    ``curves`` is (n_curves, m).  At each grid position every curve gets
    the two-sided rank min(#values <= own, #values >= own); each curve's
    ranks are sorted increasingly and the sorted vectors are compared
    lexicographically.  Tied curves share their measure.
    """
    curves = np.asarray(curves, dtype=float)
    if curves.ndim != 2 or curves.shape[0] < 2:
        raise EnvelopeError("need a 2-D stack of at least two curves")
    if not np.all(np.isfinite(curves)):
        raise EnvelopeError("curves must be finite on the shared grid")
    n = curves.shape[0]
    order = np.argsort(curves, axis=0, kind="stable")
    pos = np.empty_like(order)
    np.put_along_axis(pos, order, np.arange(n)[:, None], axis=0)
    # counts <=/>= own value, with ties counted on both sides
    sorted_vals = np.take_along_axis(curves, order, axis=0)
    le = np.empty_like(pos)
    ge = np.empty_like(pos)
    for j in range(curves.shape[1]):
        col = curves[:, j]
        sv = sorted_vals[:, j]
        le[:, j] = np.searchsorted(sv, col, side="right")
        ge[:, j] = n - np.searchsorted(sv, col, side="left")
    two_sided = np.minimum(le, ge)
    rank_vectors = np.sort(two_sided, axis=1)
    # unique() sorts rows lexicographically; the inverse index is the measure
    _, inverse = np.unique(rank_vectors, axis=0, return_inverse=True)
    return inverse.astype(float)


def global_envelope(
    data_curve: np.ndarray, sim_curves: np.ndarray, alpha: float = 0.05
) -> EnvelopeResult:
    """Extreme-rank-length global envelope and test.

    The envelope is the pointwise min/max of the ceil((1-alpha)(N+1))
    least extreme of the N+1 curves (data included); the p-value counts
    simulations at least as extreme as the data.
    """
    data_curve = np.asarray(data_curve, dtype=float)
    sim_curves = np.asarray(sim_curves, dtype=float)
    if sim_curves.ndim != 2 or data_curve.ndim != 1:
        raise EnvelopeError("expected one data curve and a stack of simulated curves")
    if sim_curves.shape[1] != data_curve.shape[0]:
        raise EnvelopeError(
            f"grid mismatch: data has {data_curve.shape[0]} values, "
            f"simulations have {sim_curves.shape[1]}"
        )
    n_sim = sim_curves.shape[0]
    if n_sim < int(np.ceil(1.0 / alpha)) - 1:
        warnings.warn(
            f"{n_sim} simulations is too few for a level-{alpha} envelope test"
        )
    allc = np.vstack([data_curve[None, :], sim_curves])
    measures = erl_ordering(allc)
    n_total = n_sim + 1
    k_keep = int(np.ceil((1.0 - alpha) * n_total))
    # critical measure of the k-th least extreme curve; curves tied with it
    # are all kept, which errs on the conservative (wider envelope) side
    crit = np.sort(measures)[::-1][k_keep - 1]
    keep = measures >= crit
    lower = allc[keep].min(axis=0)
    upper = allc[keep].max(axis=0)
    p_value = (1 + int(np.count_nonzero(measures[1:] <= measures[0]))) / n_total
    return EnvelopeResult(
        r=np.arange(data_curve.shape[0], dtype=float),
        lower=lower,
        upper=upper,
        central=sim_curves.mean(axis=0),
        p_value=float(p_value),
        alpha=alpha,
        n_sim=n_sim,
    )


def _common_valid(curves: list[SummaryCurve]) -> np.ndarray:
    mask = np.ones_like(curves[0].valid)
    for c in curves:
        mask &= c.valid
    if not mask.any():
        raise EnvelopeError("curves share no valid range")
    return mask


def envelope_from_curves(
    data: SummaryCurve, sims: list[SummaryCurve], alpha: float = 0.05
) -> EnvelopeResult:
    """Envelope on the intersection of the curves' valid ranges."""
    mask = _common_valid([data, *sims])
    result = global_envelope(
        data.values[mask], np.array([c.values[mask] for c in sims]), alpha
    )
    return EnvelopeResult(
        r=data.r[mask],
        lower=result.lower,
        upper=result.upper,
        central=result.central,
        p_value=result.p_value,
        alpha=result.alpha,
        n_sim=result.n_sim,
    )


def validate_fit(
    pattern: PointPattern,
    model: str,
    params,
    rng: np.random.Generator,
    n_sim: int = DEFAULT_N_SIM,
    statistic: str = "J",
    alpha: float = 0.05,
    r: np.ndarray | None = None,
    resolution: int = 64,
    n_iter: int | None = None,
) -> EnvelopeResult:
    """Goodness-of-fit envelope test under a fitted model.

    Simulates ``n_sim`` patterns from the fitted model, computes the
    chosen statistic (default J) for data and simulations on a shared
    grid, and runs the global envelope test on the common valid range.
    """
    data_curve = estimate_statistic(statistic, pattern, r)
    sims = []
    for _ in range(n_sim):
        sim = simulate_model(model, params, pattern.window, rng, resolution, n_iter)
        sims.append(estimate_statistic(statistic, sim, r))
    return envelope_from_curves(data_curve, sims, alpha)
