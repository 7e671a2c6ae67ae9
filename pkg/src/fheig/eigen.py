"""Constrained minimization of the nonlocal Rayleigh quotient.

The least eigenvalue is the infimum of J_mu(u) over the constraint set
{ integral V |u|^p = 1 }.  The primary path is projected gradient descent
on the quotient: step along -(dJ - lambda dPsi) with lambda the current
quotient, renormalize onto the constraint after every step, and accept
steps by Armijo backtracking on the quotient (a spectral step length
seeds each line search).  Steps that would push the constraint integral
below a floor are rejected, which keeps the iteration inside the branch
where the constraint set is a manifold even for sign-changing V.

For p = 2 the same problem is a symmetric generalized pencil; a dense
eigensolve (Cholesky reduction of the energy matrix, which is positive
definite for mu below the discrete Hardy constant) provides both the
cross-validation oracle for the descent path and the full eigenvalue
sequence with energy-orthogonal eigenfunctions.  Sign-changing V makes
the right-hand side indefinite: only the positive part of the pencil
spectrum corresponds to the minimization, and fewer than the requested
number of eigenvalues may exist at a fixed discretization.

No minimax sequence is computed for p != 2: descent only produces
stationary values there, and they are labeled as such.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla

from . import nonlocal_form as nf
from .errors import ConvergenceError, ValidationError
from .grid import Grid, SubdomainRelation
from .hardy import HardyParams
from .weights import ProbePlan, Weight, check_Ap

__all__ = [
    "SolverOptions",
    "EigenPair",
    "SpectrumReport",
    "solve_lambda1",
    "solve_sequence_p2",
    "pencil_eigensolve",
    "verify_simplicity",
    "verify_sign_properties",
    "verify_weight_monotonicity",
    "verify_domain_monotonicity",
    "scaling_collapse_test",
    "lambda_growth_check",
]

_SIGN_EPS = 1e-10


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 3e-8              # stationarity tolerance, relative (float64 line-search floor is ~1.5e-8)
    max_iter: int = 20000
    seed: int = 0
    trials: int = 1
    mu_cap: float = 0.95           # refuse mu above this fraction of the probed constant
    psi_floor: float = 0.5         # reject steps with constraint integral below this
    armijo: float = 1e-4
    max_backtracks: int = 60
    check_admissibility: bool = True
    allow_inadmissible: bool = False
    cross_validate: bool = True    # p = 2, V >= 0: dense pencil comparison


@dataclass(frozen=True)
class EigenPair:
    value: float
    function: np.ndarray
    constraint_residual: float
    stationarity_residual: float
    iterations: int
    converged: bool
    label: str = "lambda_1"        # "stationary value" for p != 2 beyond the minimum
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SpectrumReport:
    pairs: list[EigenPair]
    sign_changes: list[bool]
    requested_k: int
    simplicity_gap: float          # (lambda_2 - lambda_1) / lambda_1 when available

    @property
    def values(self) -> np.ndarray:
        return np.array([p.value for p in self.pairs])

    @property
    def available_k(self) -> int:
        return len(self.pairs)


def _phi_p(z: np.ndarray, p: float) -> np.ndarray:
    if p == 2.0:
        return z
    return np.sign(z) * np.abs(z) ** (p - 1.0)


def _max_threads() -> int:
    raw = os.environ.get("FHE_MAX_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _weight_values(form: nf.NonlocalForm, V: Weight) -> np.ndarray:
    return V.eval(form.grid.interior_coords)


def _psi(wv: np.ndarray, u: np.ndarray, p: float) -> float:
    return float(np.dot(wv, np.abs(u) ** p))


def _initial_point(form: nf.NonlocalForm, vvals: np.ndarray, rng):
    """Positive bump at the V+ mass centroid plus seeded noise."""
    X = form.grid.interior_coords
    w = form.grid.interior_weights
    mass = w * np.maximum(vvals, 0.0)
    centroid = (mass[:, None] * X).sum(axis=0) / mass.sum()
    extent = max(hi - lo for lo, hi in form.grid.bounds)
    sigma = extent / 5.0
    bump = np.exp(-np.sum((X - centroid) ** 2, axis=1) / (2.0 * sigma * sigma))
    wv = w * vvals
    p = form.params.p
    for attempt in range(12):
        noise = 0.3 * 0.5 ** attempt * rng.standard_normal(len(bump))
        u = bump * (1.0 + noise)
        val = _psi(wv, u, p)
        if val > 0.0:
            return u / val ** (1.0 / p)
    raise ValidationError(
        "could not find a starting point with positive constraint integral"
    )


def _descend(form: nf.NonlocalForm, vvals: np.ndarray, opts: SolverOptions, seed: int) -> EigenPair:
    p = form.params.p
    wv = form.grid.interior_weights * vvals
    rng = np.random.default_rng(seed)
    u = _initial_point(form, vvals, rng)
    lam = nf.energy(form, u)

    prev_u = None
    prev_res = None
    t_prev = 1.0
    converged = False
    it = 0
    res = np.inf
    stagnant = 0

    for it in range(1, opts.max_iter + 1):
        g = nf.gradient(form, u)
        gpsi = p * wv * _phi_p(u, p)
        res_vec = g - lam * gpsi
        res = float(np.max(np.abs(res_vec)))
        scale = max(float(np.max(np.abs(g))), abs(lam) * float(np.max(np.abs(gpsi))), 1e-300)
        if res <= opts.tol * scale:
            converged = True
            break

        d = -res_vec
        dd = float(np.dot(d, d))
        if prev_u is not None:
            s = u - prev_u
            y = res_vec - prev_res
            sy = float(np.dot(s, y))
            t0 = float(np.dot(s, s)) / sy if sy > 0.0 else 2.0 * t_prev
        else:
            t0 = 0.1 * max(float(np.linalg.norm(u)), 1.0) / np.sqrt(dd)
        t0 = min(max(t0, 1e-18), 1e18)

        accepted = False
        t = t0
        for _ in range(opts.max_backtracks):
            trial = u + t * d
            psi_t = _psi(wv, trial, p)
            if psi_t <= opts.psi_floor:
                t *= 0.5
                continue
            cand = trial / psi_t ** (1.0 / p)
            j_cand = nf.energy(form, cand)
            if j_cand <= lam - opts.armijo * t * dd:
                accepted = True
                break
            if j_cand <= lam + 1e-13 * max(abs(lam), 1.0):
                # descent is below float measurement; accept on strict
                # residual progress instead (quotient still nonincreasing
                # up to rounding)
                g_c = nf.gradient(form, cand)
                res_c = float(np.max(np.abs(g_c - j_cand * p * wv * _phi_p(cand, p))))
                if res_c <= 0.75 * res:
                    accepted = True
                    break
            t *= 0.5
        if not accepted:
            break
        # quotient decrease below rounding for many steps: at the float floor
        if lam - j_cand <= 1e-14 * max(abs(lam), 1e-300):
            stagnant += 1
            if stagnant >= 30:
                prev_u, prev_res = u, res_vec
                u, lam = cand, j_cand
                break
        else:
            stagnant = 0
        prev_u, prev_res = u, res_vec
        u, lam = cand, j_cand
        t_prev = t

    # recompute final diagnostics at the reported point
    g = nf.gradient(form, u)
    gpsi = p * wv * _phi_p(u, p)
    res_vec = g - lam * gpsi
    res = float(np.max(np.abs(res_vec)))
    scale = max(float(np.max(np.abs(g))), abs(lam) * float(np.max(np.abs(gpsi))), 1e-300)
    converged = converged or res <= opts.tol * scale

    if float(np.dot(form.grid.interior_weights, u)) < 0.0:
        u = -u
    return EigenPair(
        value=lam,
        function=u,
        constraint_residual=abs(_psi(wv, u, p) - 1.0),
        stationarity_residual=res,
        iterations=it,
        converged=converged,
        label="lambda_1",
        diagnostics={"seed": seed, "relative_residual": res / scale},
    )


def _precheck(form: nf.NonlocalForm, V: Weight, opts: SolverOptions) -> np.ndarray:
    vvals = _weight_values(form, V)
    wpos = form.grid.interior_weights * np.maximum(vvals, 0.0)
    if wpos.sum() <= 0.0:
        raise ValidationError("V+ vanishes on the grid: the constraint set is empty")
    if opts.check_admissibility:
        report = check_Ap(V, form.params, form.grid, ProbePlan())
        if report.verdict == "inadmissible":
            if opts.allow_inadmissible:
                warnings.warn(
                    f"weight {V.name or '<anonymous>'} fails the admissibility proxies; "
                    "continuing on user override",
                    stacklevel=3,
                )
            else:
                raise ValidationError(
                    f"weight {V.name or '<anonymous>'} is inadmissible "
                    f"(v1_ok={report.v1_ok} local_ok={report.local_ok} tail_ok={report.tail_ok})"
                )
    if form.mu > 0.0:
        c_probe = nf.discrete_hardy_min_ratio(form, n_samples=256, seed=2022)
        if form.mu >= opts.mu_cap * c_probe:
            raise ValidationError(
                f"mu={form.mu} is above {opts.mu_cap:.2f} x the probed discrete Hardy "
                f"constant {c_probe:.6g}; refusing (configure mu_cap to override)"
            )
    return vvals


def solve_lambda1(form: nf.NonlocalForm, V: Weight, opts: SolverOptions | None = None) -> EigenPair:
    """Least eigenvalue by projected descent over seeded trials.

    Runs ``opts.trials`` independent starts (seeds opts.seed, opts.seed+1,
    ...) and returns the converged pair with the smallest quotient.  For
    p = 2 with a nonnegative weight the result is cross-validated against
    the dense pencil eigensolve and the comparison recorded in the
    diagnostics.
    """
    opts = opts or SolverOptions()
    vvals = _precheck(form, V, opts)

    seeds = [opts.seed + k for k in range(opts.trials)]
    workers = min(_max_threads(), len(seeds))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            pairs = list(pool.map(lambda s: _descend(form, vvals, opts, s), seeds))
    else:
        pairs = [_descend(form, vvals, opts, s) for s in seeds]

    good = [pr for pr in pairs if pr.converged]
    if not good:
        worst = min(pr.stationarity_residual for pr in pairs)
        raise ConvergenceError(
            f"no trial converged in {opts.max_iter} iterations "
            f"(best stationarity residual {worst:.3e})"
        )
    best = min(good, key=lambda pr: pr.value)
    # converged trials above the minimum are stationary values, never
    # higher eigenvalues (no minimax sequence exists for p != 2)
    others = sorted(pr.value for pr in good
                    if pr.value > best.value * (1.0 + 1e-9))
    if others:
        best = replace(best, diagnostics={
            **best.diagnostics, "stationary_values": tuple(others)})

    if form.params.p == 2.0 and opts.cross_validate and np.all(vvals >= 0.0) and form.n_dof <= 512:
        lam_pencil = pencil_eigensolve(form, V, k_max=1)[0][0]
        gap = abs(best.value - lam_pencil) / max(abs(lam_pencil), 1e-300)
        best = replace(best, diagnostics={**best.diagnostics, "pencil_lambda": lam_pencil,
                                          "pencil_rel_gap": gap})
        if gap > 1e-6:
            warnings.warn(
                f"descent value {best.value:.12g} deviates from the pencil oracle "
                f"{lam_pencil:.12g} by {gap:.2e}",
                stacklevel=2,
            )
    return best


def pencil_eigensolve(form: nf.NonlocalForm, V: Weight, k_max: int | None = None):
    """Positive spectrum of the p = 2 pencil (energy matrix, weight matrix).

    Returns (values ascending, functions as columns, relative residuals).
    Functions are normalized to unit constraint integral and are both
    energy- and weight-orthogonal.
    """
    if form.params.p != 2.0:
        raise ValidationError("the dense pencil route requires p = 2")
    vvals = _weight_values(form, V)
    wv = form.grid.interior_weights * vvals
    A = form.quadratic_matrix()
    try:
        L = sla.cholesky(A, lower=True)
    except sla.LinAlgError as exc:
        raise ValidationError(
            "energy matrix is not positive definite; mu is too large for this grid"
        ) from exc
    Y = sla.solve_triangular(L, np.diag(wv), lower=True)
    M = sla.solve_triangular(L, Y.T, lower=True).T
    M = 0.5 * (M + M.T)
    mus, Q = sla.eigh(M)
    cutoff = 1e-12 * max(float(np.max(np.abs(mus))), 1e-300)
    pos = np.flatnonzero(mus > cutoff)
    order = pos[np.argsort(-mus[pos])]          # descending mu = ascending lambda
    if k_max is not None:
        order = order[:k_max]
    lams = 1.0 / mus[order]
    funcs = np.empty((form.n_dof, len(order)))
    resids = np.empty(len(order))
    for col, idx in enumerate(order):
        y = Q[:, idx]
        u = sla.solve_triangular(L, y, lower=True, trans="T") / np.sqrt(mus[idx])
        if float(np.dot(form.grid.interior_weights, u)) < 0.0:
            u = -u
        funcs[:, col] = u
        r = 2.0 * (A @ u) - 2.0 * lams[col] * (wv * u)
        resids[col] = float(np.max(np.abs(r))) / max(float(np.max(np.abs(2.0 * (A @ u)))), 1e-300)
    return lams, funcs, resids


def _first_significant_node(u: np.ndarray) -> int:
    thresh = 1e-8 * float(np.max(np.abs(u)))
    idx = np.flatnonzero(np.abs(u) > thresh)
    return int(idx[0]) if len(idx) else 0


def _has_sign_change(u: np.ndarray) -> bool:
    return bool(np.any(u > _SIGN_EPS) and np.any(u < -_SIGN_EPS))


def solve_sequence_p2(form: nf.NonlocalForm, V: Weight, k_max: int,
                      opts: SolverOptions | None = None) -> SpectrumReport:
    """Eigenvalue sequence of the p = 2 problem with recursive orthogonality.

    Realized as the dense pencil eigensolve: its eigenfunctions are
    automatically orthogonal in the energy inner product, so the k-th pair
    solves the constrained minimization deflated against all earlier ones.
    Sign-changing weights admit only finitely many positive pencil
    eigenvalues at a fixed discretization; the report then carries fewer
    than ``k_max`` entries.
    """
    opts = opts or SolverOptions()
    if form.params.p != 2.0:
        raise ValidationError("the eigenvalue sequence is computed only for p = 2")
    if k_max < 1:
        raise ValidationError("k_max must be at least 1")
    _precheck(form, V, opts)

    lams, funcs, resids = pencil_eigensolve(form, V, k_max=k_max)
    if len(lams) < k_max:
        warnings.warn(
            f"only {len(lams)} positive pencil eigenvalues exist at this "
            f"discretization (requested {k_max})",
            stacklevel=2,
        )

    # deterministic ordering of numerically equal eigenvalues
    order = sorted(
        range(len(lams)),
        key=lambda i: (round(float(lams[i]) / max(1e-9 * abs(lams[0]), 1e-30)) if len(lams) else 0,
                       _first_significant_node(funcs[:, i])),
    )
    lams = lams[order]
    funcs = funcs[:, order]
    resids = resids[order]

    wv = form.grid.interior_weights * _weight_values(form, V)
    pairs = []
    sign_changes = []
    for k in range(len(lams)):
        u = funcs[:, k]
        pairs.append(EigenPair(
            value=float(lams[k]),
            function=u,
            constraint_residual=abs(_psi(wv, u, 2.0) - 1.0),
            stationarity_residual=float(resids[k]),
            iterations=0,
            converged=True,
            label=f"lambda_{k + 1}",
            diagnostics={"method": "dense pencil"},
        ))
        sign_changes.append(_has_sign_change(u))

    gap = float((lams[1] - lams[0]) / lams[0]) if len(lams) > 1 else np.inf
    return SpectrumReport(
        pairs=pairs,
        sign_changes=sign_changes,
        requested_k=k_max,
        simplicity_gap=gap,
    )


@dataclass(frozen=True)
class SimplicityReport:
    n_trials: int
    min_alignment: float
    lambda_spread: float
    max_picone_aggregate: float | None
    passed: bool


def verify_simplicity(form: nf.NonlocalForm, V: Weight, trials: int,
                      opts: SolverOptions | None = None,
                      alignment_tol: float = 1e-8,
                      picone_tol: float = 1e-10) -> SimplicityReport:
    """Random-start ground states must agree up to scaling.

    Solves from ``trials`` seeds, then checks pairwise alignment of the
    normalized eigenfunctions and, where the iterates are strictly
    positive, the pairwise Picone aggregate.
    """
    opts = opts or SolverOptions()
    if trials < 2:
        raise ValidationError("simplicity needs at least two random starts")
    pairs = []
    for k in range(trials):
        pr = solve_lambda1(form, V, replace(opts, seed=opts.seed + k, trials=1))
        if not pr.converged:
            raise ConvergenceError(f"trial {k} did not converge")
        pairs.append(pr)

    values = np.array([pr.value for pr in pairs])
    spread = float((values.max() - values.min()) / max(abs(values.min()), 1e-300))

    min_align = 1.0
    max_agg = None
    for i in range(trials):
        for j in range(i + 1, trials):
            a = pairs[i].function
            b = pairs[j].function
            align = abs(float(np.dot(a, b))) / (np.linalg.norm(a) * np.linalg.norm(b))
            min_align = min(min_align, align)
            if np.all(a >= 0.0) and np.all(b > 0.0):
                agg = abs(nf.picone_defect(form, a, b).aggregate)
                max_agg = agg if max_agg is None else max(max_agg, agg)

    passed = min_align >= 1.0 - alignment_tol and spread <= max(alignment_tol, 1e-6)
    if max_agg is not None:
        passed = passed and max_agg <= picone_tol
    return SimplicityReport(
        n_trials=trials,
        min_alignment=min_align,
        lambda_spread=spread,
        max_picone_aggregate=max_agg,
        passed=passed,
    )


@dataclass(frozen=True)
class SignReport:
    first_one_signed: bool
    higher_sign_changing: tuple[bool, ...]
    passed: bool


def verify_sign_properties(report: SpectrumReport) -> SignReport:
    """Ground state one-signed; eigenfunctions above it change sign."""
    first = report.pairs[0].function
    sup = float(np.max(np.abs(first)))
    one_signed = float(np.min(first)) * float(np.max(first)) >= -1e-10 * sup * sup
    lam1 = report.pairs[0].value
    higher = []
    for k in range(1, len(report.pairs)):
        if report.pairs[k].value > lam1 * (1.0 + 1e-9):
            higher.append(_has_sign_change(report.pairs[k].function))
        else:
            higher.append(True)    # degenerate with lambda_1: exempt
    return SignReport(
        first_one_signed=one_signed,
        higher_sign_changing=tuple(higher),
        passed=one_signed and all(higher),
    )


@dataclass(frozen=True)
class MonotonicityReport:
    lambda_low: float      # eigenvalue of the smaller weight / smaller domain
    lambda_high: float     # eigenvalue of the larger weight / larger domain
    margin: float
    passed: bool


def verify_weight_monotonicity(form: nf.NonlocalForm, V_small: Weight, V_big: Weight,
                               opts: SolverOptions | None = None) -> MonotonicityReport:
    """Strictly larger weight gives a strictly smaller least eigenvalue."""
    from .weights import pointwise_compare

    cmp = pointwise_compare(V_small, V_big, form.grid)
    if not (cmp.ordered and cmp.strict_on_positive_measure):
        raise ValidationError(
            "weight monotonicity needs V_small <= V_big with strict inequality "
            "on at least one node"
        )
    lam_small = solve_lambda1(form, V_small, opts).value
    lam_big = solve_lambda1(form, V_big, opts).value
    margin = lam_small - lam_big
    return MonotonicityReport(
        lambda_low=lam_big,
        lambda_high=lam_small,
        margin=margin,
        passed=margin > 0.0,
    )


def verify_domain_monotonicity(rel: SubdomainRelation, V: Weight, params: HardyParams,
                               mu: float = 0.0,
                               opts: SolverOptions | None = None) -> MonotonicityReport:
    """A proper subdomain has a strictly larger least eigenvalue."""
    form_parent = nf.assemble(params, rel.parent, mu)
    form_child = nf.assemble(params, rel.child, mu)
    lam_parent = solve_lambda1(form_parent, V, opts).value
    lam_child = solve_lambda1(form_child, V, opts).value
    margin = lam_child - lam_parent
    return MonotonicityReport(
        lambda_low=lam_parent,
        lambda_high=lam_child,
        margin=margin,
        passed=margin > 0.0,
    )


@dataclass(frozen=True)
class ScalingTable:
    r_values: np.ndarray
    quotients: np.ndarray

    @property
    def monotone_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.quotients) <= 0.0))

    @property
    def collapse_ratio(self) -> float:
        """quotient at the first r over quotient at the last r."""
        return float(self.quotients[0] / self.quotients[-1])


def scaling_collapse_test(params: HardyParams, grid: Grid, V: Weight, u0,
                          r_sequence, direction: str = "origin",
                          mu: float = 0.0) -> ScalingTable:
    """Rayleigh quotients of u(x/r) on geometrically rescaled grids.

    For a weight whose Hardy-normalized profile |x|^(p*alpha) V(x) blows
    up at the declared direction the quotient sequence must sink to zero;
    for an admissible weight it stays bounded away from it.  The quotient
    identity under simultaneous rescaling of grid and function is exact,
    so this is evaluation, not re-optimization.
    """
    if direction not in ("origin", "infinity"):
        raise ValidationError("direction must be 'origin' or 'infinity'")
    u0 = np.asarray(u0, dtype=float)
    base_form = nf.assemble(params, grid, mu)
    if u0.shape != (grid.n_interior,):
        raise ValidationError("u0 must be an interior function on the base grid")
    if direction == "infinity":
        support_r = grid.radii("interior")[np.abs(u0) > 0.0]
        if len(support_r) and support_r.min() < 2.0 * grid.cell_diameter:
            raise ValidationError(
                "for the decay-at-infinity direction u0 must vanish near the origin"
            )
    rs = np.asarray(list(r_sequence), dtype=float)
    if np.any(rs <= 0.0):
        raise ValidationError("scaling factors must be positive")

    quotients = []
    for r in rs:
        g_r = grid.scaled(float(r))
        form_r = nf.assemble(params, g_r, mu)
        wv = g_r.interior_weights * V.eval(g_r.interior_coords)
        denom = _psi(wv, u0, params.p)
        if denom <= 0.0:
            raise ValidationError(f"constraint integral vanished at r={r}")
        quotients.append(nf.energy(form_r, u0) / denom)
    return ScalingTable(r_values=rs, quotients=np.array(quotients))


@dataclass(frozen=True)
class GrowthReport:
    values: np.ndarray
    nondecreasing: bool
    ratio: float
    passed: bool


def lambda_growth_check(report: SpectrumReport, ratio_threshold: float = 5.0) -> GrowthReport:
    """Monotone-divergence proxy for the eigenvalue growth.

    The sequence must be nondecreasing and the last value must exceed the
    first by the configured ratio; no growth law is fitted.
    """
    vals = report.values
    nondec = bool(np.all(np.diff(vals) >= -1e-10 * np.abs(vals[:-1])))
    ratio = float(vals[-1] / vals[0])
    return GrowthReport(
        values=vals,
        nondecreasing=nondec,
        ratio=ratio,
        passed=nondec and ratio >= ratio_threshold,
    )
