"""Mechanical verification of posterior propriety and geometric ergodicity.

Two propriety condition sets are implemented. The power-prior path (all
b_j = 0) requires the stacked design W to have full column rank, a strictly
positive null combination of the signed design rows, 2a_j + q_j > 0, a_j < 0,
and a link moment bound. The reduced-design path works without the full-rank
assumption: it checks the prior shape per block, 2a_j + q_j - 1 > 0, full
rank of the reparametrized design, and the positive-null-vector condition on
its signed version; for the probit and logistic links the moment condition
holds automatically.

Geometric ergodicity is certified either through the full-rank route (prior
shape plus the first three power-prior conditions) or, for rank-deficient W,
through the reduced-design conditions plus a grid scan of

    2^{-s} * sum_j [Gamma(q_j/2 + a_j - s) / Gamma(q_j/2 + a_j)] * sigma_j^s < 1

over s strictly inside (0, min(1, s_tilde)), where sigma_j is the trace of
the j-th diagonal block of I minus the projection onto the column space of
Z'(I - P_X)Z and s_tilde = min_j (a_j + q_j/2).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import gammaln

from . import simplex
from .linalg import projection_colspace, sym_eigen
from .model import ModelValidationError, ProbitMixedModel, signed_design, transform_design

PASS = "pass"
FAIL = "fail"
ASSUMED = "assumed"
INCONCLUSIVE = "inconclusive"
NOT_APPLICABLE = "not-applicable"
BOUNDARY = "boundary"

#: grid minima closer to 1 than this are reported as 'boundary', not 'pass'
BOUNDARY_MARGIN = 1e-6


@dataclass(frozen=True)
class ConditionCheck:
    name: str
    verdict: str
    detail: str

    def to_dict(self):
        return {"name": self.name, "verdict": self.verdict, "detail": self.detail}


@dataclass(frozen=True)
class LPResult:
    """Outcome of the positive-null-vector feasibility problem."""

    feasible: bool
    witness_e: np.ndarray | None
    status: str  # feasible | infeasible | inconclusive
    residual: float = 0.0


POWER_PRIOR = "power-prior"
REDUCED_DESIGN = "reduced-design"
FULL_RANK = "full-rank"


@dataclass(frozen=True)
class ProprietyReport:
    path: str  # "power-prior" | "reduced-design"
    conditions: tuple
    overall: str  # "proper" | "not-established"

    @property
    def proper(self) -> bool:
        return self.overall == "proper"

    def to_dict(self):
        return {
            "path": self.path,
            "conditions": [c.to_dict() for c in self.conditions],
            "overall": self.overall,
        }


@dataclass(frozen=True)
class ErgodicityReport:
    route: str  # "full-rank" | "reduced-design"
    conditions: tuple
    overall: str  # "geometric" | "not-established"
    s_tilde: float | None = None
    grid: tuple = field(default=())
    s_star: float | None = None
    trace_terms: tuple = field(default=())

    @property
    def geometric(self) -> bool:
        return self.overall == "geometric"

    def to_dict(self):
        return {
            "path": self.route,
            "conditions": [c.to_dict() for c in self.conditions],
            "overall": self.overall,
            "s_tilde": self.s_tilde,
            "grid": [[float(s), float(v)] for s, v in self.grid],
            "s_star": self.s_star,
            "trace_terms": [float(t) for t in self.trace_terms],
        }


def check_full_rank(M, tol: float = 1e-10) -> bool:
    """True iff the numerical rank (singular values above tol * largest)
    equals the column count."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    sv = np.linalg.svd(M, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return False
    return int(np.sum(sv > tol * sv[0])) == M.shape[1]


def check_positive_null_vector(Wstar) -> LPResult:
    """Search for e > 0 with W*'e = 0.

    The condition is scale free, so e is normalized to e >= 1: substituting
    f = e - 1 >= 0 gives the equality-feasibility problem
    W*'f = -W*'1, solved by the phase-1 simplex.
    """
    Wstar = np.atleast_2d(np.asarray(Wstar, dtype=float))
    n, k = Wstar.shape
    A = Wstar.T
    b = -A @ np.ones(n)
    status, f = simplex.solve_feasibility(A, b, max_iter=10 * (n + k))
    if status != simplex.FEASIBLE:
        return LPResult(feasible=False, witness_e=None, status=status)
    e = f + 1.0
    residual = float(np.abs(Wstar.T @ e).max())
    scale = max(1.0, float(np.linalg.norm(Wstar)))
    if residual >= 1e-8 * scale or np.any(e <= 0):
        return LPResult(feasible=False, witness_e=None, status=simplex.INCONCLUSIVE,
                        residual=residual)
    return LPResult(feasible=True, witness_e=e, status=status, residual=residual)


def gamma_ratio(qj: float, aj: float, s: float) -> float:
    """Gamma(q/2 + a - s) / Gamma(q/2 + a), via log-gamma differences."""
    top = qj / 2.0 + aj - s
    bottom = qj / 2.0 + aj
    if top <= 0 or bottom <= 0:
        raise ValueError("gamma arguments must be positive: "
                         f"q/2+a-s={top:g}, q/2+a={bottom:g}")
    return float(np.exp(gammaln(top) - gammaln(bottom)))


def _lp_condition(name: str, Wstar, label: str) -> tuple[ConditionCheck, LPResult]:
    lp = check_positive_null_vector(Wstar)
    if lp.feasible:
        detail = f"positive null vector of {label} found, residual {lp.residual:.2e}"
        verdict = PASS
    elif lp.status == simplex.INCONCLUSIVE:
        detail = f"LP on {label} hit the iteration cap; result inconclusive"
        verdict = INCONCLUSIVE
    else:
        detail = f"no positive vector e satisfies e'{label} = 0"
        verdict = FAIL
    return ConditionCheck(name, verdict, detail), lp


def _moment_condition(name: str, link: str, order: float, user_moment_ok: bool) -> ConditionCheck:
    if link == "probit":
        return ConditionCheck(name, PASS,
                              "probit link: every Gaussian absolute moment is finite")
    if link == "logistic":
        return ConditionCheck(name, PASS,
                              "logistic link: every logistic absolute moment is finite")
    if user_moment_ok:
        return ConditionCheck(name, ASSUMED,
                              f"user link: finite absolute moment of order {order:g} "
                              "asserted by the caller, not verified")
    return ConditionCheck(name, FAIL,
                          f"user link requires a finite absolute moment of order "
                          f"{order:g}; not asserted")


def _overall(conditions) -> str:
    ok = all(c.verdict in (PASS, ASSUMED) for c in conditions)
    return "proper" if ok else "not-established"


def check_propriety_power_prior(model: ProbitMixedModel, link: str = "probit",
                       user_moment_ok: bool = False) -> ProprietyReport:
    """Power-prior propriety conditions (requires b_j = 0 for every block)."""
    a, b, q = model.prior.a, model.prior.b, model.re.q
    if np.any(b != 0):
        cond = ConditionCheck(
            "power-prior applicability", NOT_APPLICABLE,
            "the power-prior path requires b_j = 0 for every block")
        return ProprietyReport(path=POWER_PRIOR, conditions=(cond,),
                               overall="not-established")

    conditions = []
    full = check_full_rank(model.W)
    conditions.append(ConditionCheck(
        "full rank of W", PASS if full else FAIL,
        f"W is {model.n} x {model.p + model.q}; full column rank: {full}"))

    lp_cond, _ = _lp_condition("positive null vector of W*",
                               signed_design(model).Wstar, "W*")
    conditions.append(lp_cond)

    ok3 = bool(np.all(2 * a + q > 0))
    conditions.append(ConditionCheck(
        "shape exponent 2a_j + q_j > 0", PASS if ok3 else FAIL,
        f"values: {(2 * a + q).tolist()}"))

    ok4 = bool(np.all(a < 0))
    conditions.append(ConditionCheck(
        "negative prior exponent a_j < 0", PASS if ok4 else FAIL,
        f"a: {a.tolist()}"))

    order = model.p - 2 * float(a.sum())
    conditions.append(_moment_condition("link moment bound", link, order,
                                        user_moment_ok))

    conditions = tuple(conditions)
    return ProprietyReport(path=POWER_PRIOR, conditions=conditions,
                           overall=_overall(conditions))


def check_propriety_reduced_design(model: ProbitMixedModel, link: str = "probit",
                       user_moment_ok: bool = False) -> ProprietyReport:
    """Reduced-design propriety conditions (requires an intercept column)."""
    a, b, q = model.prior.a, model.prior.b, model.re.q
    td = transform_design(model)

    conditions = []
    per_block = [(a[j] < 0 and b[j] == 0 and q[j] >= 2) or b[j] > 0
                 for j in range(model.r)]
    conditions.append(ConditionCheck(
        "prior shape per block", PASS if all(per_block) else FAIL,
        "each block needs a_j < b_j = 0 with q_j >= 2, or b_j > 0; "
        f"block verdicts: {per_block}"))

    ok2 = bool(np.all(2 * a + q - 1 > 0))
    conditions.append(ConditionCheck(
        "shape exponent 2a_j + q_j - 1 > 0", PASS if ok2 else FAIL,
        f"values: {(2 * a + q - 1).tolist()}"))

    full = check_full_rank(td.Wtilde)
    conditions.append(ConditionCheck(
        "full rank of reduced design", PASS if full else FAIL,
        f"reduced design is {model.n} x {td.Wtilde.shape[1]}; full column rank: {full}"))

    lp_cond, _ = _lp_condition("positive null vector of reduced signed design",
                               td.Wtilde_star, "reduced W*")
    conditions.append(lp_cond)

    t = float(np.sum(np.where(b == 0, -2 * a, q - 1)))
    conditions.append(_moment_condition("link moment bound", link,
                                        model.p + t, user_moment_ok))

    conditions = tuple(conditions)
    return ProprietyReport(path=REDUCED_DESIGN, conditions=conditions,
                           overall=_overall(conditions))


@dataclass(frozen=True)
class GridScan:
    """Result of scanning the ergodicity criterion over s."""

    s_tilde: float
    trace_terms: tuple
    grid: tuple  # ((s, lhs), ...)
    s_star: float | None
    min_lhs: float | None
    verdict: str  # pass | fail | boundary
    detail: str


def criterion_lhs(model: ProbitMixedModel, trace_terms, s):
    """The grid criterion left-hand side
    2^{-s} sum_j gamma_ratio(q_j, a_j, s) * trace_j^s, vectorized over s."""
    s = np.asarray(s, dtype=float)
    a, q = model.prior.a, model.re.q
    out = np.zeros_like(s)
    for j in range(model.r):
        tj = float(trace_terms[j])
        if tj <= 0.0:
            continue  # a zero trace kills the term
        if np.any(s >= q[j] / 2.0 + a[j]):
            raise ValueError(f"s must stay below q_j/2 + a_j = {q[j] / 2 + a[j]:g} "
                             f"for block {j + 1}")
        ratio = np.exp(gammaln(q[j] / 2.0 + a[j] - s) - gammaln(q[j] / 2.0 + a[j]))
        out += ratio * tj ** s
    return (2.0 ** (-s)) * out


def trace_terms(model: ProbitMixedModel) -> np.ndarray:
    """Per-block traces of I minus the projection onto col(Z'(I - P_X)Z)."""
    X, Z = model.obs.X, model.re.Z
    xtz = X.T @ Z
    A = Z.T @ Z - xtz.T @ cho_solve(cho_factor(X.T @ X, lower=True), xtz)
    E = sym_eigen(0.5 * (A + A.T), psd=True, scale=float(Z.sum()))
    ip_diag = 1.0 - np.diag(projection_colspace(E))
    # traces are sums of projector-complement diagonals: true values are
    # either exactly zero or order one, so sub-noise values snap to zero
    floor = 1e-12 * max(1.0, model.q)
    out = np.empty(model.r)
    for j in range(model.r):
        tj = float(ip_diag[model.re.block_slice(j)].sum())
        out[j] = tj if tj > floor else 0.0
    return out


def grid_criterion(model: ProbitMixedModel, grid_size: int = 200) -> GridScan:
    """Scan the rank-deficient-route criterion on a grid strictly inside
    (0, min(1, s_tilde)); holds iff the grid minimum is below one."""
    a, q = model.prior.a, model.re.q
    s_tilde = float(np.min(a + q / 2.0))
    terms = trace_terms(model)
    if s_tilde <= 0:
        return GridScan(s_tilde=s_tilde, trace_terms=tuple(terms), grid=(),
                        s_star=None, min_lhs=None, verdict=FAIL,
                        detail=f"s_tilde = {s_tilde:g} <= 0: the scan interval is empty")
    upper = min(1.0, s_tilde)
    # half-step offset keeps every grid point strictly inside the open interval
    step = upper / grid_size
    s_grid = (np.arange(grid_size) + 0.5) * step
    lhs = criterion_lhs(model, terms, s_grid)
    k = int(np.argmin(lhs))
    min_lhs = float(lhs[k])
    if abs(min_lhs - 1.0) < BOUNDARY_MARGIN:
        verdict = BOUNDARY
        detail = (f"grid minimum {min_lhs:.9f} is within {BOUNDARY_MARGIN:g} of 1; "
                  "the criterion cannot be certified either way")
    elif min_lhs < 1.0:
        verdict = PASS
        detail = f"criterion holds: minimum {min_lhs:.6g} at s = {s_grid[k]:.6g}"
    else:
        verdict = FAIL
        detail = f"criterion fails: grid minimum {min_lhs:.6g} is not below 1"
    return GridScan(s_tilde=s_tilde, trace_terms=tuple(terms),
                    grid=tuple(zip(s_grid.tolist(), lhs.tolist())),
                    s_star=float(s_grid[k]) if verdict == PASS else None,
                    min_lhs=min_lhs, verdict=verdict, detail=detail)


def check_geometric_ergodicity(model: ProbitMixedModel, grid_size: int = 200,
                               route: str | None = None) -> ErgodicityReport:
    """Certify geometric ergodicity of the block Gibbs chain.

    The full-rank route is used when W has full column rank; otherwise the
    reduced-design route with the grid criterion applies. Pass route to
    force either one.
    """
    a, b, q = model.prior.a, model.prior.b, model.re.q
    if route not in (None, FULL_RANK, REDUCED_DESIGN):
        raise ValueError(f"route must be {FULL_RANK!r}, {REDUCED_DESIGN!r} or None")
    w_full = check_full_rank(model.W)
    path = route if route is not None else (FULL_RANK if w_full else REDUCED_DESIGN)

    conditions = []
    if path == FULL_RANK:
        per_block = [(a[j] < 0 and b[j] == 0) or b[j] > 0 for j in range(model.r)]
        conditions.append(ConditionCheck(
            "prior shape per block", PASS if all(per_block) else FAIL,
            f"each block needs a_j < b_j = 0 or b_j > 0; block verdicts: {per_block}"))
        conditions.append(ConditionCheck(
            "full rank of W", PASS if w_full else FAIL,
            f"full column rank: {w_full}"))
        lp_cond, _ = _lp_condition("positive null vector of W*",
                                   signed_design(model).Wstar, "W*")
        conditions.append(lp_cond)
        ok3 = bool(np.all(2 * a + q > 0))
        conditions.append(ConditionCheck(
            "shape exponent 2a_j + q_j > 0", PASS if ok3 else FAIL,
            f"values: {(2 * a + q).tolist()}"))
        conditions = tuple(conditions)
        ok = all(c.verdict == PASS for c in conditions)
        return ErgodicityReport(route=FULL_RANK, conditions=conditions,
                                overall="geometric" if ok else "not-established")

    try:
        b_report = check_propriety_reduced_design(model, link="probit")
    except ModelValidationError as exc:
        cond = ConditionCheck("full rank of reduced design", FAIL, str(exc))
        return ErgodicityReport(route=REDUCED_DESIGN, conditions=(cond,),
                                overall="not-established")
    conditions.extend(c for c in b_report.conditions
                      if not c.name.startswith("link moment"))
    scan = grid_criterion(model, grid_size=grid_size)
    conditions.append(ConditionCheck("grid criterion", scan.verdict, scan.detail))
    conditions = tuple(conditions)
    ok = all(c.verdict == PASS for c in conditions)
    return ErgodicityReport(route=REDUCED_DESIGN, conditions=conditions,
                            overall="geometric" if ok else "not-established",
                            s_tilde=scan.s_tilde, grid=scan.grid,
                            s_star=scan.s_star, trace_terms=scan.trace_terms)
