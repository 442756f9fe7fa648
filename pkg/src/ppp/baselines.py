"""Classical estimators used as comparison baselines.

Minimum contrast estimation of the LGCP (exponential covariance) against
the theoretical K-function, and profile maximum pseudo-likelihood
estimation of the Strauss process.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.spatial import cKDTree

from .geometry import PointPattern, count_r_close_pairs, erode
from .sumstats import default_r_grid, estimate_K

#: default candidate interaction radii for the profile pseudo-likelihood
DEFAULT_R_GRID = np.linspace(0.001, 0.05, 50)
#: grid used to turn the pseudo-likelihood integral into level-set areas
PL_GRID_RESOLUTION = 512

NEG_INF = -np.inf


@dataclass(frozen=True)
class MinContrastOpts:
    """Contrast integral settings: integrate |K^q - Khat^q|^p on [a1, a2]."""

    a1: float = 0.0
    a2: float | None = None  # default: top of the summary grid
    exponent_p: float = 2.0
    exponent_q: float = 0.25
    grid_size: int = 513
    max_evals: int = 2000


@dataclass(frozen=True)
class MinContrastResult:
    mu: float
    sigma2: float
    s: float
    contrast: float
    converged: bool


@dataclass(frozen=True)
class MpleResult:
    beta: float
    gamma: float
    pl_value: float
    converged: bool


@dataclass(frozen=True)
class ProfileMpleResult:
    beta: float
    gamma: float
    R: float
    R_grid: np.ndarray
    pl_values: np.ndarray


# ---------------------------------------------------------------------------
# Nelder-Mead simplex minimizer


@dataclass(frozen=True)
class NelderMeadOpts:
    x_tol: float = 1e-8
    f_tol: float = 1e-12
    max_evals: int = 2000
    initial_step: float = 0.5


@dataclass(frozen=True)
class NelderMeadResult:
    x: np.ndarray
    fun: float
    n_evals: int
    converged: bool


def nelder_mead(objective, start, opts: NelderMeadOpts = NelderMeadOpts()):
    """Standard reflect/expand/contract/shrink simplex minimization.

    Stops when the simplex diameter and value spread fall below tolerance,
    or when the evaluation budget runs out (flagged, not raised).
    """
    start = np.asarray(start, dtype=float)
    n = len(start)
    simplex = [start]
    for i in range(n):
        v = start.copy()
        v[i] += opts.initial_step
        simplex.append(v)
    simplex = np.array(simplex)
    fvals = np.array([objective(v) for v in simplex])
    n_evals = n + 1
    if not np.isfinite(fvals[0]):
        raise ValueError("objective is not finite at the start point")

    alpha, gamma_c, rho, sigma = 1.0, 2.0, 0.5, 0.5
    while n_evals < opts.max_evals:
        order = np.argsort(fvals, kind="stable")
        simplex, fvals = simplex[order], fvals[order]
        diameter = np.max(np.linalg.norm(simplex[1:] - simplex[0], axis=1))
        if diameter < opts.x_tol and fvals[-1] - fvals[0] < opts.f_tol:
            return NelderMeadResult(simplex[0], fvals[0], n_evals, True)
        centroid = simplex[:-1].mean(axis=0)
        xr = centroid + alpha * (centroid - simplex[-1])
        fr = objective(xr)
        n_evals += 1
        if fvals[0] <= fr < fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
        elif fr < fvals[0]:
            xe = centroid + gamma_c * (xr - centroid)
            fe = objective(xe)
            n_evals += 1
            if fe < fr:
                simplex[-1], fvals[-1] = xe, fe
            else:
                simplex[-1], fvals[-1] = xr, fr
        else:
            xc = centroid + rho * (simplex[-1] - centroid)
            fc = objective(xc)
            n_evals += 1
            if fc < fvals[-1]:
                simplex[-1], fvals[-1] = xc, fc
            else:
                for i in range(1, n + 1):
                    simplex[i] = simplex[0] + sigma * (simplex[i] - simplex[0])
                    fvals[i] = objective(simplex[i])
                n_evals += n
    order = np.argsort(fvals, kind="stable")
    return NelderMeadResult(simplex[order][0], fvals[order][0], n_evals, False)


# ---------------------------------------------------------------------------
# LGCP minimum contrast


def lgcp_theoretical_K(r, sigma2: float, s: float):
    """Theoretical K for the exponential-covariance LGCP.

    K(r) = 2 pi int_0^r t exp(sigma2 exp(-t/s)) dt; the pair correlation of
    the model is g(t) = exp(c(0, t)).  Scalars use adaptive quadrature,
    sorted arrays a refined cumulative Simpson rule.
    """
    if sigma2 < 0 or s <= 0:
        raise ValueError("need sigma2 >= 0 and s > 0")

    def integrand(t):
        return 2.0 * np.pi * t * np.exp(sigma2 * np.exp(-t / s))

    if np.isscalar(r):
        if r < 0:
            raise ValueError("r must be >= 0")
        if r == 0:
            return 0.0
        val, _ = quad(integrand, 0.0, r, epsabs=1e-10, epsrel=1e-10, limit=200)
        return float(val)

    r = np.asarray(r, dtype=float)
    if np.any(np.diff(r) <= 0) or r[0] < 0:
        raise ValueError("array r must be strictly increasing and nonnegative")
    # composite Simpson with 8 panels per grid interval, accumulated
    out = np.zeros_like(r)
    start = 0.0 if r[0] == 0 else None
    prev_r = 0.0
    acc = 0.0
    for i, ri in enumerate(r):
        if ri > prev_r:
            sub = np.linspace(prev_r, ri, 17)
            fy = integrand(sub)
            h = sub[1] - sub[0]
            acc += h / 3.0 * (fy[0] + fy[-1] + 4 * fy[1::2].sum() + 2 * fy[2:-1:2].sum())
        out[i] = acc
        prev_r = ri
    return out


def minimum_contrast_lgcp(
    p: PointPattern, opts: MinContrastOpts = MinContrastOpts()
) -> MinContrastResult:
    """Minimum contrast fit of (sigma2, s), then mu from the intensity.

    The contrast is minimized with Nelder-Mead over (log sigma2, log s);
    mu is recovered from rho_hat = n/|W| via rho = exp(mu + sigma2/2).
    Non-convergence is flagged but the estimates are still returned;
    extreme values are deliberately left unclamped.
    """
    if p.n() < 2:
        raise ValueError("minimum contrast needs at least 2 points")
    w = p.window
    r = np.linspace(
        0.0, w.shorter_side() / 4.0 if opts.a2 is None else opts.a2, opts.grid_size
    )
    K_hat = estimate_K(p, r).values
    mask = (r >= opts.a1) & (r > 0)
    r_fit = r[mask]
    target = K_hat[mask] ** opts.exponent_q

    def contrast(logparams):
        sigma2, s = np.exp(logparams)
        K_theo = lgcp_theoretical_K(r_fit, sigma2, s)
        diff = np.abs(K_theo**opts.exponent_q - target) ** opts.exponent_p
        return float(np.trapezoid(diff, r_fit))

    start = np.log([1.0, w.shorter_side() / 20.0])
    res = nelder_mead(contrast, start, NelderMeadOpts(max_evals=opts.max_evals))
    sigma2_hat, s_hat = np.exp(res.x)
    mu_hat = float(np.log(p.n() / w.area()) - sigma2_hat / 2.0)
    return MinContrastResult(mu_hat, float(sigma2_hat), float(s_hat), res.fun, res.converged)


# ---------------------------------------------------------------------------
# Strauss pseudo-likelihood


def _strauss_pl_stats(
    p: PointPattern,
    R: float,
    grid_n: int = PL_GRID_RESOLUTION,
    domain_margin: float | None = None,
):
    """Sufficient pieces of the Strauss log pseudo-likelihood on A=erode(W,R).

    Returns (n_A, sum of neighbour counts over points in A, area_k) where
    area_k[k] approximates the area of {u in A : t(u, x) = k}, measured by
    counting cells of a grid over A.  The conditional intensity takes
    finitely many values, so the integral term is beta * sum_k gamma^k
    area_k exactly up to grid resolution.

    ``domain_margin`` overrides the erosion margin; profile fits pass the
    largest candidate R so that values at different R share one domain.
    """
    w = p.window
    A = erode(w, R if domain_margin is None else domain_margin)
    in_A = A.contains(p.points)
    n_A = int(np.count_nonzero(in_A))

    tree = cKDTree(p.points) if p.n() else None
    sum_t = 0
    if n_A and tree is not None:
        # neighbours of each data point in A among the other points
        counts = tree.query_ball_point(p.points[in_A], R, return_length=True)
        sum_t = int(np.sum(counts) - n_A)  # each query counts the point itself

    dx, dy = A.side_lengths()[0] / grid_n, A.side_lengths()[1] / grid_n
    cx = A.x_min + (np.arange(grid_n) + 0.5) * dx
    cy = A.y_min + (np.arange(grid_n) + 0.5) * dy
    X, Y = np.meshgrid(cx, cy, indexing="ij")
    grid = np.column_stack([X.ravel(), Y.ravel()])
    if tree is not None:
        t_u = tree.query_ball_point(grid, R, return_length=True)
    else:
        t_u = np.zeros(len(grid), dtype=int)
    area_k = np.bincount(t_u) * (dx * dy)
    return n_A, sum_t, area_k


def pseudo_loglik_strauss(
    p: PointPattern,
    R: float,
    log_beta: float,
    log_gamma: float,
    grid_n: int = PL_GRID_RESOLUTION,
) -> float:
    """Log pseudo-likelihood of a Strauss model on the eroded domain.

    log PL = sum_{u in x∩A} [log beta + t(u, x\\u) log gamma]
             - beta * sum_k gamma^k area_k.
    A hard core (gamma = 0) with any close pair in A gives -inf.
    """
    n_A, sum_t, area_k = _strauss_pl_stats(p, R, grid_n)
    return _pl_value(n_A, sum_t, area_k, log_beta, log_gamma)


def _pl_value(n_A, sum_t, area_k, log_beta, log_gamma):
    beta = np.exp(log_beta)
    gamma = np.exp(log_gamma)
    if gamma == 0.0 and sum_t > 0:
        return NEG_INF
    k = np.arange(len(area_k))
    integral = beta * float(np.sum(gamma**k * area_k))
    data_term = n_A * log_beta + (sum_t * log_gamma if sum_t else 0.0)
    return float(data_term - integral)


def mple_strauss_given_R(
    p: PointPattern,
    R: float,
    grid_n: int = PL_GRID_RESOLUTION,
    max_iter: int = 100,
    domain_margin: float | None = None,
) -> MpleResult:
    """Maximum pseudo-likelihood (beta, gamma) for a fixed radius R.

    Newton ascent on the concave log PL in (log beta, log gamma).  If the
    unconstrained maximizer lands at gamma > 1, the model is refit with
    gamma fixed at 1 (the Poisson case); if no close pairs touch the
    eroded domain, the maximizer is the hard core gamma = 0.
    """
    n_A, sum_t, area_k = _strauss_pl_stats(p, R, grid_n, domain_margin)
    area_total = float(area_k.sum())
    if n_A == 0:
        # no usable data points: Poisson-degenerate fit
        return MpleResult(0.0 if area_total == 0 else 1e-12, 1.0, 0.0, True)
    if sum_t == 0:
        # gamma -> 0 maximizes; beta has the closed Poisson-like form
        beta = n_A / area_k[0] if area_k[0] > 0 else n_A / area_total
        value = n_A * np.log(beta) - beta * float(area_k[0])
        return MpleResult(float(beta), 0.0, float(value), True)

    k = np.arange(len(area_k))
    theta = np.array([np.log(n_A / area_total), np.log(0.5)])
    converged = False
    for _ in range(max_iter):
        beta, gamma = np.exp(theta)
        gk = gamma**k * area_k
        I0 = beta * gk.sum()
        I1 = beta * (k * gk).sum()
        I2 = beta * (k * k * gk).sum()
        grad = np.array([n_A - I0, sum_t - I1])
        if np.linalg.norm(grad) < 1e-9:
            converged = True
            break
        hess = -np.array([[I0, I1], [I1, I2]])
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            break
        new = theta - step
        # damping: halve the step until the (concave) objective improves
        f_old = _pl_value(n_A, sum_t, area_k, *theta)
        for _ in range(30):
            if _pl_value(n_A, sum_t, area_k, *new) >= f_old - 1e-12:
                break
            new = theta + (new - theta) / 2.0
        theta = new
        theta[1] = min(theta[1], 50.0)  # keeps exp finite; clamp handled below
    if theta[1] > 0:
        # invalid gamma > 1: refit with gamma = 1 (Poisson MLE for beta)
        beta = n_A / area_total
        value = _pl_value(n_A, sum_t, area_k, np.log(beta), 0.0)
        return MpleResult(float(beta), 1.0, float(value), True)
    value = _pl_value(n_A, sum_t, area_k, *theta)
    return MpleResult(float(np.exp(theta[0])), float(np.exp(theta[1])), value, converged)


def profile_mple_strauss(
    p: PointPattern,
    R_grid: np.ndarray = DEFAULT_R_GRID,
    grid_n: int = PL_GRID_RESOLUTION,
) -> ProfileMpleResult:
    """Profile the pseudo-likelihood over candidate R values.

    All candidate fits use the common domain erode(W, max(R_grid)) so that
    their pseudo-likelihood values are comparable; ties in the profile are
    broken toward the smallest R.
    """
    R_grid = np.asarray(R_grid, dtype=float)
    if len(R_grid) == 0:
        raise ValueError("R grid must be nonempty")
    margin = float(R_grid.max())
    fits = [mple_strauss_given_R(p, R, grid_n, domain_margin=margin) for R in R_grid]
    values = np.array([f.pl_value for f in fits])
    best = int(np.argmax(values))  # argmax returns the first (smallest R) on ties
    return ProfileMpleResult(
        fits[best].beta, fits[best].gamma, float(R_grid[best]), R_grid, values
    )
