"""Sparsity equation: per-norm sufficient conditions, the smallest feasible
radius rho*, the admissible regularization window, and a small-dimension
oracle for the norming-functional margin.

The margin Delta(rho) is the worst case over the localized sphere
{Psi(w) = rho, ||w||_2 <= r(rho)} of the best pairing with a functional that
is norming somewhere in the (rho/20)-ball around the target.  The recovery
guarantee needs Delta(rho) >= 4*rho/5; the per-norm conditions below imply
it, and the oracle measures it directly for d <= 6.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .norms import L1, SLOPE, TRACE, RegNorm, decreasing_rearrangement, sparsity_weight
from .rates import DesignModel, NoiseModel, RateConstants, RateReport, critical_radii

ISOTROPIC = "isotropic"
NON_ISOTROPIC = "non-isotropic"

# Sufficient-condition constants; the theory fixes these values without
# claiming optimality, so they are overridable.
LEMMA_CONSTANTS = {
    (L1, ISOTROPIC): 100.0,
    (SLOPE, ISOTROPIC): 40.0,
    (TRACE, ISOTROPIC): 400.0,
    (L1, NON_ISOTROPIC): 20.0,
    (SLOPE, NON_ISOTROPIC): 80.0,
}

MARGIN_FRACTION = 0.8  # Delta(rho) >= 4*rho/5 when a condition is satisfied
BALL_DIVISOR = 20.0  # approximant must sit within rho/20 of the target


@dataclass(frozen=True)
class SparsityCheck:
    kind: str
    regime: str
    s: int
    rho: float
    r: float
    condition_lhs: float
    condition_rhs: float
    satisfied: bool
    margin_lower_bound: float | None

    def __post_init__(self):
        assert self.satisfied == (self.condition_lhs <= self.condition_rhs)


def sparsity_condition(
    norm: RegNorm,
    s: int,
    rho: float,
    r: float,
    regime: str = ISOTROPIC,
    constants: dict | None = None,
) -> SparsityCheck:
    """Evaluate the per-norm sufficient condition for the sparsity equation.

    Isotropic: 100*s <= (rho/r)^2 (l1), 40*B_s <= rho/r (slope),
    400*rank <= (rho/r)^2 (trace).  Non-isotropic: 20*B_s <= rho/r (l1,
    unit weights) and 80*B_s <= rho/r (slope).
    """
    if s < 1 or rho <= 0 or r < 0:
        raise ValueError("need s >= 1, rho > 0, r >= 0")
    table = dict(LEMMA_CONSTANTS)
    if constants:
        table.update(constants)
    key = (norm.kind, regime)
    if key not in table:
        raise ValueError(f"no sparsity condition for {key}")
    c = table[key]
    ratio = math.inf if r == 0 else rho / r
    if key == (L1, ISOTROPIC):
        lhs, rhs = c * s, ratio**2
    elif key == (TRACE, ISOTROPIC):
        lhs, rhs = c * s, ratio**2
    elif key == (SLOPE, ISOTROPIC):
        lhs, rhs = c * sparsity_weight(norm.weights, s), ratio
    elif key == (L1, NON_ISOTROPIC):
        lhs, rhs = c * sparsity_weight(np.ones(norm.dim), s), ratio
    else:  # slope, non-isotropic
        lhs, rhs = c * sparsity_weight(norm.weights, s), ratio
    ok = lhs <= rhs
    return SparsityCheck(
        kind=norm.kind,
        regime=regime,
        s=s,
        rho=rho,
        r=r,
        condition_lhs=float(lhs),
        condition_rhs=float(rhs),
        satisfied=bool(ok),
        margin_lower_bound=MARGIN_FRACTION * rho if ok else None,
    )


def _analytic_rho_guess(norm: RegNorm, s: int, N: int, noise: NoiseModel) -> float:
    lq = noise.lq_norm
    d = norm.dim
    if lq == 0:
        return s / math.sqrt(N)
    if norm.kind == TRACE:
        m, T = norm.shape
        return lq * s * math.sqrt(max(m, T) / N)
    if norm.kind == SLOPE:
        return lq * s / math.sqrt(N) * math.log(math.e * d / s)
    return lq * s * math.sqrt(math.log(math.e * d) / N)


def solve_sparsity_equation(
    norm: RegNorm,
    s: int,
    N: int,
    design: DesignModel,
    noise: NoiseModel,
    delta: float = 0.05,
    constants: RateConstants = RateConstants(),
    lemma_constants: dict | None = None,
    kappa: float = 0.5,
    epsilon: float | None = None,
    grid_factor: float = 1.1,
    grid_steps: int = 97,
):
    """Smallest rho on a geometric grid whose critical radius satisfies the
    sparsity condition; returns (rho_star, RateReport at rho_star).

    The feasible set is an up-set in rho because r(rho)/rho is nonincreasing,
    so a binary search over the grid finds the minimal point.
    """
    regime = ISOTROPIC if design.is_isotropic else NON_ISOTROPIC
    # rho* scales exactly like 1/c_m (joint homogeneity of the width), so the
    # grid anchor must track the constant override
    guess = _analytic_rho_guess(norm, s, N, noise)
    if noise.lq_norm > 0:
        guess = guess / constants.c_m
    grid = guess * grid_factor ** np.arange(-grid_steps, grid_steps + 1, dtype=float)

    reports: dict[int, RateReport] = {}

    def feasible(i: int) -> bool:
        rep = reports.get(i)
        if rep is None:
            rep = critical_radii(
                norm, design, noise, N, rho=float(grid[i]), delta=delta,
                constants=constants, kappa=kappa, epsilon=epsilon,
            )
            reports[i] = rep
        return sparsity_condition(
            norm, s, rep.rho, rep.r, regime, lemma_constants
        ).satisfied

    last = grid.size - 1
    if not feasible(last):
        chk = sparsity_condition(
            norm, s, reports[last].rho, reports[last].r, regime, lemma_constants
        )
        raise RuntimeError(
            "sparsity equation infeasible on the whole grid "
            f"[{grid[0]:.3g}, {grid[-1]:.3g}]: at rho={grid[-1]:.3g} the binding "
            f"constraint is {chk.condition_lhs:.4g} <= {chk.condition_rhs:.4g} "
            f"({norm.kind}, {regime}); increase N or s budget"
        )
    if feasible(0):
        return float(grid[0]), reports[0]
    lo, hi = 0, last
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return float(grid[hi]), reports[hi]


@dataclass(frozen=True)
class LambdaPolicy:
    """How to pick lambda inside [3*theta*r^2/(8*rho), theta*r^2/(2*rho))."""

    rule: str = "midpoint"  # midpoint | lower | explicit
    value: float | None = None

    def __post_init__(self):
        if self.rule not in ("midpoint", "lower", "explicit"):
            raise ValueError(f"unknown lambda rule {self.rule!r}")
        if self.rule == "explicit" and (self.value is None or self.value <= 0):
            raise ValueError("explicit rule needs a positive value")


def select_lambda(
    report: RateReport,
    rho_star: float,
    policy: LambdaPolicy = LambdaPolicy(),
    psi_t_star: float | None = None,
) -> float:
    """Regularization parameter inside the admissible window at rho_star.

    When rho_star >= Psi(t_star) the upper constraint is dropped (any
    lambda >= the lower endpoint is admissible).
    """
    if abs(report.rho - rho_star) > 1e-9 * max(1.0, rho_star):
        raise ValueError("report was computed at a different rho")
    lower, upper = report.lambda_lower, report.lambda_upper
    large_rho = psi_t_star is not None and rho_star >= psi_t_star
    if policy.rule == "lower":
        return lower
    if policy.rule == "midpoint":
        # midpoint of [3/8, 1/2) * theta r^2 / rho
        return (7.0 / 16.0) * report.theta * report.r**2 / rho_star
    lam = float(policy.value)
    if lam < lower or (not large_rho and lam >= upper):
        raise ValueError(
            f"explicit lambda {lam:g} outside the admissible window "
            f"[{lower:g}, {upper:g}{'...' if large_rho else ')'}"
        )
    return lam


@dataclass(frozen=True)
class MarginEstimate:
    value: float
    rho: float
    r: float
    n_feasible: int
    empty: bool


def _min_l2_on_sphere(norm: RegNorm, rho: float) -> float:
    """Smallest l2 norm on the Psi-sphere of radius rho (uniform-magnitude point)."""
    d = norm.dim
    if norm.kind == L1:
        return rho / math.sqrt(d)
    return rho * math.sqrt(d) / float(np.sum(norm.weights))


def _psi_rows(norm: RegNorm, V: np.ndarray) -> np.ndarray:
    """Norm of every row of V (vectorized; d is tiny here)."""
    A = np.abs(V)
    if norm.kind == L1:
        return A.sum(axis=1)
    return (-np.sort(-A, axis=1)) @ norm.weights


def _norming_sup(norm: RegNorm, p: np.ndarray, W: np.ndarray) -> np.ndarray:
    """sup over extreme norming functionals of p of <z, w>, rows of W.

    For l1 the off-support +/-1 completions are the extreme points, so the
    sup is exact; for the sorted norm the support weights follow the ranks of
    |p| and the leftover weights pair with the sorted off-support entries.
    """
    d = p.size
    supp = np.flatnonzero(p != 0.0)
    off = np.setdiff1d(np.arange(d), supp, assume_unique=True)
    if norm.kind == L1:
        vals = W[:, supp] @ np.sign(p[supp]) if supp.size else np.zeros(W.shape[0])
        if off.size:
            vals = vals + np.sum(np.abs(W[:, off]), axis=1)
        return vals
    beta = norm.weights
    order = np.argsort(-np.abs(p[supp]), kind="stable")
    z_supp = np.sign(p[supp[order]]) * beta[: supp.size]
    vals = W[:, supp[order]] @ z_supp if supp.size else np.zeros(W.shape[0])
    if off.size:
        tail = -np.sort(-np.abs(W[:, off]), axis=1)
        vals = vals + tail @ beta[supp.size :]
    return vals


def sparsity_margin_oracle(
    norm: RegNorm,
    t_star: np.ndarray,
    rho: float,
    r: float,
    resolution: int = 100_000,
    seed: int = 0,
    n_gamma: int = 256,
) -> MarginEstimate:
    """Direct estimate of the norming margin at (rho, r) for d <= 6.

    Samples the localized sphere {Psi(w) = rho, ||w||_2 <= r} (interior
    points plus bisected boundary points) and takes, for each sample, the
    best extreme norming functional among deterministic sparsifications of
    the target and random points of the (rho/20)-ball.  An infeasible sphere
    (its minimal l2 norm exceeds r) returns rho by convention.
    """
    if norm.kind not in (L1, SLOPE):
        raise ValueError("oracle only supports l1/slope")
    t_star = np.asarray(t_star, dtype=float).ravel()
    d = t_star.size
    if d > 6:
        raise ValueError("oracle limited to d <= 6")
    if norm.dim != d:
        raise ValueError("norm dimension mismatch")
    if rho <= 0 or r <= 0:
        raise ValueError("rho and r must be positive")

    if _min_l2_on_sphere(norm, rho) > r * (1 + 1e-12):
        return MarginEstimate(rho, rho, r, 0, True)

    rng = np.random.default_rng(seed)
    budget = rho / BALL_DIVISOR

    # Gamma candidates: subset-zeroed targets within the ball, the target
    # itself, and random ball points.
    cands = [t_star]
    for mask in range(1, 2**d):
        keep = np.array([(mask >> i) & 1 for i in range(d)], dtype=bool)
        p = np.where(keep, t_star, 0.0)
        if norm.value(t_star - p) <= budget and np.any(p != 0.0):
            cands.append(p)
    dirs = rng.standard_normal((n_gamma, d))
    radii = budget * rng.uniform(0, 1, size=n_gamma)
    for u, c in zip(dirs, radii):
        psi = norm.value(u)
        if psi > 0:
            cands.append(t_star + c * u / psi)

    # Localized-sphere samples: scale random directions onto the Psi-sphere,
    # and pull the ones outside the l2 ball to its boundary by blending with
    # the sign-matched uniform-magnitude point (which has minimal l2 norm).
    U = rng.standard_normal((resolution, d))
    psi_u = _psi_rows(norm, U)
    U = U[psi_u > 0]
    W = rho * U / _psi_rows(norm, U)[:, None]
    inside = np.linalg.norm(W, axis=1) <= r
    samples = [W[inside]]
    out = W[~inside]
    if out.shape[0]:
        m = np.sign(out)
        m[m == 0] = 1.0
        m = rho * m / _psi_rows(norm, m)[:, None]
        lo = np.zeros(out.shape[0])
        hi = np.ones(out.shape[0])
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            V = (1 - mid[:, None]) * out + mid[:, None] * m
            Wm = rho * V / _psi_rows(norm, V)[:, None]
            far = np.linalg.norm(Wm, axis=1) > r
            lo = np.where(far, mid, lo)
            hi = np.where(far, hi, mid)
        V = (1 - hi[:, None]) * out + hi[:, None] * m
        Wb = rho * V / _psi_rows(norm, V)[:, None]
        samples.append(Wb[np.linalg.norm(Wb, axis=1) <= r * (1 + 1e-9)])
    H = np.vstack(samples)
    if H.shape[0] == 0:
        return MarginEstimate(rho, rho, r, 0, True)

    best = np.full(H.shape[0], -np.inf)
    for p in cands:
        best = np.maximum(best, _norming_sup(norm, p, H))
    return MarginEstimate(float(best.min()), rho, r, H.shape[0], False)


@dataclass(frozen=True)
class CompatibilityResult:
    passed: bool
    sigma: float
    worst_ratio: float
    witness: np.ndarray | None = field(default=None, repr=False)
    n_tested: int = 0


def covariance_compatibility_check(
    cov: np.ndarray,
    s: int,
    beta: np.ndarray,
    samples: int = 20_000,
    seed: int = 0,
) -> CompatibilityResult:
    """Check the non-isotropic design assumption for a covariance matrix.

    Item 1 computes sigma = max row norm of cov^{1/2}.  Item 2 searches for
    x on the Psi-sphere of radius 20*B_s inside the covariance ellipsoid
    with 2*||cov^{1/2} x||_2 < max_{|J|<=s} ||x_J||_2; candidates include
    coordinate directions, covariance eigenvectors, sparse and dense random
    directions.  Returns the most violating point found.
    """
    beta = np.asarray(beta, dtype=float).ravel()
    d = beta.size
    design = DesignModel("correlated-gaussian", d, np.asarray(cov, dtype=float))
    root = design.cov_root()
    sigma = design.row_bound
    radius = BALL_DIVISOR * sparsity_weight(beta, s)
    norm = RegNorm(SLOPE, d, beta) if np.any(beta != 1.0) else RegNorm.l1(d)

    rng = np.random.default_rng(seed)
    cands = [np.eye(d)[i] for i in range(d)]
    eigvecs = np.linalg.eigh(np.asarray(cov, dtype=float))[1]
    cands.extend(eigvecs.T)
    n_sparse = samples // 2
    supp_sizes = rng.integers(1, min(2 * s, d) + 1, size=n_sparse)
    for k in supp_sizes:
        x = np.zeros(d)
        idx = rng.choice(d, size=int(k), replace=False)
        x[idx] = rng.standard_normal(int(k))
        cands.append(x)
    cands.extend(rng.standard_normal((samples - n_sparse, d)))

    worst = math.inf
    witness = None
    tested = 0
    for x in cands:
        psi = norm.value(x)
        if psi == 0:
            continue
        x = x * (radius / psi)
        lhs = 2.0 * float(np.linalg.norm(root @ x))
        if lhs / 2.0 > 1.0 + 1e-9:  # not inside the ellipsoid
            continue
        top = decreasing_rearrangement(x)[:s]
        rhs = float(np.linalg.norm(top))
        tested += 1
        ratio = math.inf if rhs == 0 else lhs / rhs
        if ratio < worst:
            worst = ratio
            witness = x
    return CompatibilityResult(worst >= 1.0, sigma, worst, witness, tested)
