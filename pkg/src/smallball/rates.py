"""Complexity machinery: Gaussian mean widths, critical radii, small-ball constants.

The closed-form widths are explicit upper bounds on the expected supremum of
the canonical Gaussian process over the intersection of a penalty ball of
radius rho with an L2 ball (or covariance ellipsoid) of radius r.  The
critical radii r_Q and r_M are the smallest radii at which the width is
dominated by r*sqrt(N) and r^2*sqrt(N) respectively; their maximum drives
both the error guarantee and the admissible regularization window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .norms import L1, SLOPE, TRACE, RegNorm
from .solver import Dataset

ISO_GAUSSIAN = "isotropic-gaussian"
RADEMACHER = "rademacher"
CORRELATED = "correlated-gaussian"

# Constant on the rho-branch of the l1 width.  sqrt(2) (rather than 1) makes
# the closed form a true upper bound on E max|g_i|, which the Monte Carlo
# sandwich checks; the r*sqrt(d) branch is exact by Jensen and stays at 1.
L1_RHO_CONST = math.sqrt(2.0)


def gauss_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


@dataclass(frozen=True)
class DesignModel:
    """Distribution of a design row: isotropic (Gaussian / Rademacher) or
    correlated Gaussian with covariance ``cov``."""

    kind: str
    shape: object
    cov: np.ndarray | None = field(default=None, repr=False)
    subgaussian_constant: float = 1.0

    def __post_init__(self):
        if self.kind not in (ISO_GAUSSIAN, RADEMACHER, CORRELATED):
            raise ValueError(f"unknown design kind {self.kind!r}")
        if self.kind == CORRELATED:
            cov = np.asarray(self.cov, dtype=float)
            if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
                raise ValueError("covariance must be square")
            if not np.allclose(cov, cov.T, atol=1e-10):
                raise ValueError("covariance must be symmetric")
            if cov.shape[0] != self.dim:
                raise ValueError("covariance size must match the dimension")
            object.__setattr__(self, "cov", cov)
        elif self.cov is not None:
            raise ValueError("covariance only applies to the correlated kind")

    @property
    def dim(self) -> int:
        if isinstance(self.shape, tuple):
            return self.shape[0] * self.shape[1]
        return int(self.shape)

    @property
    def is_isotropic(self) -> bool:
        return self.kind != CORRELATED

    @cached_property
    def _root(self) -> np.ndarray:
        if self.is_isotropic:
            return np.eye(self.dim)
        w, V = np.linalg.eigh(self.cov)
        if w.min() < -1e-8 * max(1.0, w.max()):
            raise ValueError("covariance is not positive semidefinite")
        return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T

    def cov_root(self) -> np.ndarray:
        """Symmetric PSD square root of the covariance (identity if isotropic)."""
        return self._root

    @cached_property
    def row_bound(self) -> float:
        """sigma = max_j ||(cov^{1/2})_{j.}||_2; equals 1 for isotropic kinds."""
        if self.is_isotropic:
            return 1.0
        root = self.cov_root()
        return float(np.sqrt(np.max(np.sum(root * root, axis=1))))

    def l2_metric(self, t: np.ndarray) -> float:
        """L2(mu) norm of the linear form <t, .>."""
        t = np.asarray(t, dtype=float).ravel()
        if self.is_isotropic:
            return float(np.linalg.norm(t))
        return float(np.linalg.norm(self.cov_root() @ t))


@dataclass(frozen=True)
class NoiseModel:
    """Noise distribution with its L_q norm (q > 2, closed-form moments)."""

    kind: str
    scale: float
    dof: float = 3.0
    q: float = 2.5

    def __post_init__(self):
        if self.kind not in ("gaussian", "student-t"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.scale < 0:
            raise ValueError("scale must be nonnegative")
        if self.q <= 2:
            raise ValueError("q must exceed 2")
        if self.kind == "student-t" and self.q >= self.dof:
            raise ValueError("q must be below the degrees of freedom")

    @property
    def lq_norm(self) -> float:
        if self.scale == 0:
            return 0.0
        q = self.q
        if self.kind == "gaussian":
            moment = 2 ** (q / 2) * math.gamma((q + 1) / 2) / math.sqrt(math.pi)
        else:
            nu = self.dof
            moment = (
                nu ** (q / 2)
                * math.gamma((q + 1) / 2)
                * math.gamma((nu - q) / 2)
                / (math.sqrt(math.pi) * math.gamma(nu / 2))
            )
        return float(self.scale * moment ** (1.0 / q))

    @property
    def l2_norm(self) -> float:
        if self.kind == "gaussian":
            return float(self.scale)
        if self.dof <= 2:
            return math.inf
        return float(self.scale * math.sqrt(self.dof / (self.dof - 2)))


@dataclass(frozen=True)
class RateConstants:
    """Multiplicative constants the theory leaves unspecified (default 1)."""

    c_q: float = 1.0
    c_m: float = 1.0
    # r_Q vanishes once N >= r_q_zero_factor * ambient dimension
    r_q_zero_factor: float = 2.0


@dataclass(frozen=True)
class RateReport:
    rho: float
    r_q: float
    r_m: float
    r: float
    kappa: float
    epsilon: float
    theta: float
    gamma_o_bound: float
    delta: float
    constants: RateConstants

    def __post_init__(self):
        assert abs(self.r - max(self.r_q, self.r_m)) <= 1e-12 * max(1.0, self.r)

    @property
    def lambda_lower(self) -> float:
        """3 * gamma_O / rho with the gamma_O <= theta r^2 / 8 bound."""
        return 3.0 * self.theta * self.r**2 / (8.0 * self.rho)

    @property
    def lambda_upper(self) -> float:
        return self.theta * self.r**2 / (2.0 * self.rho)


def width_closed_form(norm: RegNorm, rho: float, r: float, design: DesignModel) -> float:
    """Explicit upper bound on the mean width of (rho-ball of Psi) ∩ (r-ball of L2(mu)).

    All branches are jointly 1-homogeneous in (rho, r) and nondecreasing in
    each argument.
    """
    if rho <= 0 or r <= 0:
        raise ValueError("rho and r must be positive")
    d = norm.dim
    if norm.kind == TRACE:
        if not design.is_isotropic:
            raise ValueError("no closed-form width for correlated matrix designs")
        m, T = norm.shape
        return min(rho * math.sqrt(max(m, T)), r * math.sqrt(m * T))

    if design.is_isotropic:
        if norm.kind == L1:
            log_arg = np.e * d * min(1.0, (r / rho) ** 2)
            return min(
                r * math.sqrt(d),
                L1_RHO_CONST * rho * math.sqrt(max(1.0, math.log(log_arg))),
            )
        beta = norm.weights
        i = np.arange(1, d + 1, dtype=float)
        log_term = np.sqrt(np.log(np.e * d / i))
        # suffix max over i >= k of sqrt(log(ed/i)) / beta_i
        tail = np.maximum.accumulate((log_term / beta)[::-1])[::-1]
        k = np.arange(0, d, dtype=float)  # k - 1 for k = 1..d
        head = np.zeros(d)
        head[1:] = np.sqrt(k[1:] * np.log(np.e * d / k[1:]))
        return float(min(np.min(r * head + rho * tail), r * math.sqrt(d)))

    sigma = design.row_bound
    if norm.kind == L1:
        return min(r * math.sqrt(d), rho * sigma * math.sqrt(math.log(np.e * d)))
    C = norm.effective_weight_constant()
    return min(
        (3.0 * math.sqrt(6.0) / 8.0) * sigma * rho / C + math.sqrt(math.pi / 2.0) * r,
        r * math.sqrt(d),
    )


@dataclass(frozen=True)
class WidthEstimate:
    lower_mean: float
    lower_se: float
    upper_mean: float
    upper_se: float
    trials: int


def _l1_support_exact(gs: np.ndarray, rho: float, r: float) -> np.ndarray:
    """Exact support function of rho*B1 ∩ r*B2 at each row of sorted |g|.

    Evaluates min over tau of rho*tau + r*||(|g|-tau)_+||_2 by scanning the
    breakpoints and the per-segment stationary points (the objective is
    convex piecewise-smooth in tau).
    """
    trials, d = gs.shape
    s1 = np.cumsum(gs, axis=1)
    s2 = np.cumsum(gs * gs, axis=1)

    # candidate taus: every breakpoint gs[:, j], tau = 0, and per-segment
    # stationary points
    best = rho * gs[:, 0]  # tau = max|g|: all inactive, f = rho * tau
    # tau = 0: f = r * ||g||_2
    best = np.minimum(best, r * np.sqrt(s2[:, -1]))
    for j in range(d):
        tau = gs[:, j]
        k = j + 1.0
        quad = np.maximum(s2[:, j] - 2.0 * tau * s1[:, j] + k * tau * tau, 0.0)
        best = np.minimum(best, rho * tau + r * np.sqrt(quad))
    # interior stationary points on segment with active count k:
    # rho * sqrt(Q(tau)) has derivative zero where
    # (r^2 k - rho^2) k tau^2 - 2 s1 (r^2 k - rho^2) tau + r^2 s1^2 - rho^2 s2 = 0
    for j in range(d):
        k = j + 1.0
        a = k * (r * r * k - rho * rho)
        with np.errstate(invalid="ignore", divide="ignore"):
            b = -2.0 * s1[:, j] * (r * r * k - rho * rho)
            c = r * r * s1[:, j] ** 2 - rho * rho * s2[:, j]
            disc = b * b - 4.0 * a * c
            valid = (a != 0) & (disc >= 0)
            root = np.where(valid, (-b - np.sqrt(np.maximum(disc, 0.0))) / (2.0 * a), np.nan)
        lo = gs[:, j + 1] if j + 1 < d else np.zeros(trials)
        hi = gs[:, j]
        tau = np.clip(root, lo, hi)
        ok = valid & np.isfinite(tau)
        if not np.any(ok):
            continue
        quad = np.maximum(s2[:, j] - 2.0 * tau * s1[:, j] + k * tau * tau, 0.0)
        cand = rho * tau + r * np.sqrt(quad)
        best = np.where(ok, np.minimum(best, cand), best)
    return best


def _vector_lower(gs: np.ndarray, beta: np.ndarray, rho: float, r: float) -> np.ndarray:
    """Best feasible candidate value per row of sorted |g| (signs absorbed).

    Candidates: flat and g-proportional vectors on the top-k coordinates,
    scaled to satisfy both Psi(w) <= rho and ||w||_2 <= r.
    """
    d = gs.shape[1]
    kk = np.arange(1, d + 1, dtype=float)
    s1 = np.cumsum(gs, axis=1)
    s2 = np.cumsum(gs * gs, axis=1)
    b1 = np.cumsum(beta)
    wsum = np.cumsum(beta * gs, axis=1)
    flat = np.minimum(rho / b1, r / np.sqrt(kk)) * s1
    with np.errstate(invalid="ignore", divide="ignore"):
        prop = np.where(s2 > 0, np.minimum(rho / np.maximum(wsum, 1e-300), r / np.sqrt(np.maximum(s2, 1e-300))) * s2, 0.0)
    return np.maximum(flat.max(axis=1), prop.max(axis=1))


def width_mc(
    norm: RegNorm,
    rho: float,
    r: float,
    design: DesignModel,
    trials: int,
    seed: int,
    batch: int = 4096,
) -> WidthEstimate:
    """Monte Carlo sandwich for the mean width: feasible-point lower bound vs
    per-sample support-function upper bound; lower <= upper for every sample."""
    if trials < 100:
        raise ValueError("need at least 100 trials")
    if rho <= 0 or r <= 0:
        raise ValueError("rho and r must be positive")
    if norm.kind == TRACE and not design.is_isotropic:
        raise ValueError("correlated matrix designs are not supported")
    rng = np.random.default_rng(seed)
    d = norm.dim
    root = None if design.is_isotropic else design.cov_root()

    uppers = np.empty(trials)
    lowers = np.empty(trials)
    done = 0
    while done < trials:
        n = min(batch, trials - done)
        g = rng.standard_normal((n, d))
        if norm.kind == TRACE:
            m, T = norm.shape
            sv = np.linalg.svd(g.reshape(n, m, T), compute_uv=False)
            up = np.minimum(rho * sv[:, 0], r * np.sqrt(np.sum(sv * sv, axis=1)))
            lo = _vector_lower(sv, np.ones(sv.shape[1]), rho, r)
        elif design.is_isotropic:
            gs = -np.sort(-np.abs(g), axis=1)
            if norm.kind == L1:
                up = _l1_support_exact(gs, rho, r)
                lo = _vector_lower(gs, np.ones(d), rho, r)
            else:
                beta = norm.weights
                pre = np.zeros((n, d))  # ||g#_{1:k-1}||_2 for k = 1..d
                pre[:, 1:] = np.sqrt(np.cumsum(gs * gs, axis=1))[:, :-1]
                tail = np.flip(np.maximum.accumulate(np.flip(gs / beta, axis=1), axis=1), axis=1)
                up = np.min(r * pre + rho * tail, axis=1)
                up = np.minimum(up, r * np.sqrt(np.sum(gs * gs, axis=1)))
                lo = _vector_lower(gs, beta, rho, r)
        else:
            z = g @ root  # process increment <cov^{1/2} g, w>
            za = np.abs(z)
            zs = -np.sort(-za, axis=1)
            beta = norm.weights if norm.kind == SLOPE else np.ones(d)
            dual = np.max(np.cumsum(zs, axis=1) / np.cumsum(beta), axis=1)
            up = np.minimum(rho * dual, r * np.sqrt(np.sum(g * g, axis=1)))
            # feasible candidates: flat top-k sign patterns of z, scaled so
            # that Psi(w) <= rho and ||cov^{1/2} w||_2 <= r
            order = np.argsort(-za, axis=1)
            lo = np.zeros(n)
            b1 = np.cumsum(beta)
            for i in range(n):
                sgn = np.sign(z[i, order[i]])
                s1 = np.cumsum(za[i, order[i]])
                cum = np.cumsum(root[:, order[i]] * sgn, axis=1)
                ell = np.linalg.norm(cum, axis=0)
                with np.errstate(divide="ignore"):
                    a = np.minimum(rho / b1, np.where(ell > 0, r / ell, np.inf))
                lo[i] = float(np.max(a * s1))
        uppers[done : done + n] = up
        # feasible-point values cannot exceed the support function; clip the
        # float noise so the per-sample sandwich holds exactly
        lowers[done : done + n] = np.minimum(lo, up)
        done += n

    def mean_se(v):
        return float(v.mean()), float(v.std(ddof=1) / math.sqrt(trials))

    lm, ls = mean_se(lowers)
    um, us = mean_se(uppers)
    return WidthEstimate(lm, ls, um, us, trials)


def small_ball_estimate(
    design: DesignModel,
    kappa: float,
    samples: int,
    seed: int,
    directions: np.ndarray | None = None,
    n_directions: int = 16,
):
    """Monte Carlo lower bound on the small-ball probability.

    Estimates min over directions t of Pr(|<t, X>| >= kappa * ||<t,.>||_L2)
    and returns (epsilon_hat, theta) with theta = kappa^2 * epsilon_hat / 16.
    """
    if not 0 < kappa <= 1:
        raise ValueError("kappa must be in (0, 1]")
    if samples < 1000:
        raise ValueError("need at least 1e3 samples")
    rng = np.random.default_rng(seed)
    d = design.dim
    X = sample_design(design, samples, rng)
    if directions is None:
        dirs = rng.standard_normal((n_directions, d))
    else:
        dirs = np.atleast_2d(np.asarray(directions, dtype=float))
    eps = 1.0
    for t in dirs:
        scale = design.l2_metric(t)
        if scale == 0:
            continue
        eps = min(eps, float(np.mean(np.abs(X @ t) >= kappa * scale)))
    return eps, kappa * kappa * eps / 16.0


def sample_design(design: DesignModel, N: int, rng: np.random.Generator) -> np.ndarray:
    """Draw N i.i.d. design rows (flattened for matrix shapes)."""
    d = design.dim
    if design.kind == RADEMACHER:
        return rng.integers(0, 2, size=(N, d)).astype(float) * 2.0 - 1.0
    g = rng.standard_normal((N, d))
    if design.kind == ISO_GAUSSIAN:
        return g
    return g @ design.cov_root()


def default_epsilon(design: DesignModel, kappa: float, seed: int = 0) -> float:
    """Small-ball constant at level kappa.

    Exact Gaussian tail value for Gaussian designs (any covariance: linear
    forms stay Gaussian); Monte Carlo estimate otherwise.
    """
    if design.kind in (ISO_GAUSSIAN, CORRELATED):
        return 2.0 * (1.0 - gauss_cdf(kappa))
    eps, _ = small_ball_estimate(design, kappa, samples=200_000, seed=seed)
    return eps


def _smallest_radius(condition, lo: float, hi: float, what: str, iters: int = 200) -> float:
    """Smallest r with condition(r) True, given the True-set is an up-set.

    Returns 0.0 when the condition already holds at ``lo``; raises with
    diagnostics when it fails everywhere in [lo, hi].
    """
    if condition(lo):
        return 0.0
    if not condition(hi):
        raise RuntimeError(
            f"bisection bracket failure for {what}: condition fails on [{lo:g}, {hi:g}]"
        )
    for _ in range(iters):
        mid = math.sqrt(lo * hi)
        if condition(mid):
            hi = mid
        else:
            lo = mid
    return hi


def critical_radii(
    norm: RegNorm,
    design: DesignModel,
    noise: NoiseModel,
    N: int,
    rho: float,
    delta: float = 0.05,
    constants: RateConstants = RateConstants(),
    kappa: float = 0.5,
    epsilon: float | None = None,
) -> RateReport:
    """Compute r_Q(rho), r_M(rho) and r(rho) = max of the two by bisection.

    r_Q is the smallest r with width(rho, r) <= c_q * r * sqrt(N) (zero once
    N >= r_q_zero_factor * dim); r_M is the smallest r with
    ||xi||_Lq * width(rho, r) <= c_m * r^2 * sqrt(N).  Monotonicity of
    width(rho, r)/r in r makes both condition sets up-sets.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if rho <= 0:
        raise ValueError("rho must be positive")
    if epsilon is None:
        epsilon = default_epsilon(design, kappa)
    theta = kappa * kappa * epsilon / 16.0
    d = norm.dim
    sqrt_n = math.sqrt(N)

    def width(r):
        return width_closed_form(norm, rho, r, design)

    # generous bracket: width saturates at width(rho, hi) for huge r, and the
    # r*sqrt(d) branch rules small r
    hi = max(rho, 1.0) * math.sqrt(d) * 1e6
    lo = min(rho, 1.0) * 1e-9 / math.sqrt(d)

    if N >= constants.r_q_zero_factor * d:
        r_q = 0.0
    else:
        r_q = _smallest_radius(
            lambda r: width(r) <= constants.c_q * r * sqrt_n, lo, hi, "r_Q"
        )

    lq = noise.lq_norm
    if lq == 0.0:
        r_m = 0.0
    else:
        r_m = _smallest_radius(
            lambda r: lq * width(r) <= constants.c_m * r * r * sqrt_n, lo, hi, "r_M"
        )

    r = max(r_q, r_m)
    return RateReport(
        rho=rho,
        r_q=r_q,
        r_m=r_m,
        r=r,
        kappa=kappa,
        epsilon=epsilon,
        theta=theta,
        gamma_o_bound=theta * r * r / 8.0,
        delta=delta,
        constants=constants,
    )


def excess_loss_decomposition(data: Dataset, t: np.ndarray, t_star: np.ndarray):
    """Split the empirical excess squared loss at t into its quadratic and
    cross components; total = quadratic + cross is an algebraic identity.

    Returns (quadratic, cross, total) with the noise taken as
    xi_i = <t_star, X_i> - y_i.
    """
    t = np.asarray(t, dtype=float).ravel()
    t_star = np.asarray(t_star, dtype=float).ravel()
    X, y, N = data.X, data.y, data.N
    xi = X @ t_star - y
    diff = X @ (t - t_star)
    quadratic = float(np.dot(diff, diff)) / N
    cross = 2.0 * float(np.dot(xi, diff)) / N
    r_t = X @ t - y
    total = (float(np.dot(r_t, r_t)) - float(np.dot(xi, xi))) / N
    return quadratic, cross, total
