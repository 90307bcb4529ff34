"""Solve one SQP subproblem: quadratic objective over a linearized cone constraint.

The subproblem is treated as the generalized equation for its KKT system

    g + H d + A^T lam = 0,      lam normal to the cone at c + A d,

not as a global minimization: the Hessian may be indefinite, in which case
minimizers can fail to exist while KKT points do (and vice versa).  Three
engines are provided:

* ``enumeration`` -- exhaustive active-pattern solve for purely polyhedral
  cones at small m; returns ALL KKT points, which also certifies
  nonexistence when the list is empty.
* ``semismooth_newton`` -- damped Newton on the projection-based residual
  map, with deterministic multi-start; handles second-order blocks.
* ``splitting`` -- ADMM on the explicit splitting (direction, cone slack),
  for positive-semidefinite Hessians, polished by a few Newton steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import cones, polyhedra
from .cones import ConeSpec
from .polyhedra import BudgetExceeded, Polyhedron

KKT_POINT = "KKTPoint"
NO_KKT_POINT = "NoKKTPoint"
UNBOUNDED = "Unbounded"
INFEASIBLE = "Infeasible"
ITER_LIMIT = "IterLimit"

ENGINE_ENUMERATION = "Enumeration"
ENGINE_NEWTON = "SemismoothNewton"
ENGINE_SPLITTING = "Splitting"

_ENUM_MAX_M = 10


@dataclass(frozen=True)
class SubproblemData:
    H: np.ndarray
    g: np.ndarray
    A: np.ndarray
    c: np.ndarray
    cone: ConeSpec

    def __post_init__(self):
        H = np.asarray(self.H, float)
        g = np.asarray(self.g, float)
        A = np.asarray(self.A, float)
        c = np.asarray(self.c, float)
        n = g.shape[0]
        m = c.shape[0]
        if H.shape != (n, n) or A.shape != (m, n) or self.cone.total_dim != m:
            raise ValueError("inconsistent subproblem dimensions")
        if np.max(np.abs(H - H.T), initial=0.0) > 1e-12 * (1.0 + np.max(np.abs(H), initial=0.0)):
            raise ValueError("H must be symmetric")
        object.__setattr__(self, "H", 0.5 * (H + H.T))
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "c", c)

    @property
    def n(self) -> int:
        return self.g.shape[0]

    @property
    def m(self) -> int:
        return self.c.shape[0]

    def objective(self, d: np.ndarray) -> float:
        return float(self.g @ d + 0.5 * d @ self.H @ d)


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-9
    sign_slack: float = 1e-10
    seed: int = 0
    n_starts: int = 50
    newton_max_iters: int = 100
    admm_rho: float = 1.0
    admm_max_iters: int = 20_000
    engine: str | None = None  # force a specific engine (tests / cross-validation)


@dataclass(frozen=True)
class SubproblemSolution:
    status: str
    d: np.ndarray | None = None
    lam: np.ndarray | None = None
    residual: float = float("inf")
    engine: str = ""
    kkt_points: tuple = field(default=(), repr=False)  # enumeration only


def kkt_residual(data: SubproblemData, d: np.ndarray, lam: np.ndarray) -> float:
    """Independent re-verification of the subproblem KKT conditions."""
    stat = float(np.linalg.norm(data.g + data.H @ d + data.A.T @ lam))
    y = data.c + data.A @ d
    comp = cones.normal_cone_residual(data.cone, y, lam, require_membership=False)
    feas = cones.distance(data.cone, y)
    return stat + comp + feas


# ---------------------------------------------------------------------------
# Enumeration engine (polyhedral cones)


def enumerate_kkt_points(data: SubproblemData, cfg: SolverConfig | None = None):
    """All KKT points of a purely polyhedral subproblem, by active patterns.

    For every active/inactive pattern of orthant coordinates the KKT system
    restricted to that pattern is linear; solutions passing the sign checks
    are collected and deduplicated.  The empty list certifies that the
    generalized equation has no solution.
    """
    cfg = cfg or SolverConfig()
    if not data.cone.is_polyhedral:
        raise ValueError("enumeration requires a purely polyhedral cone")
    if data.m > _ENUM_MAX_M:
        raise BudgetExceeded(f"enumeration limited to m <= {_ENUM_MAX_M}, got {data.m}")
    zero_idx: list[int] = []
    orth_idx: list[int] = []
    for block, sl in data.cone.slices():
        idx = list(range(sl.start, sl.stop))
        (zero_idx if block.kind == cones.ZERO else orth_idx).extend(idx)
    n, m = data.n, data.m
    scale = 1.0 + float(np.linalg.norm(data.g)) + float(np.linalg.norm(data.c))
    slack = cfg.sign_slack * scale
    found: list[tuple[np.ndarray, np.ndarray]] = []
    for bits in range(2 ** len(orth_idx)):
        active = list(zero_idx) + [j for k, j in enumerate(orth_idx) if bits >> k & 1]
        inactive = [j for j in range(m) if j not in active]
        na = len(active)
        M = np.zeros((n + na, n + na))
        M[:n, :n] = data.H
        if na:
            M[:n, n:] = data.A[active].T
            M[n:, :n] = data.A[active]
        rhs = np.concatenate([-data.g, -data.c[active]])
        sol, res, rank, _ = np.linalg.lstsq(M, rhs, rcond=None)
        if float(np.linalg.norm(M @ sol - rhs)) > 1e-9 * scale:
            continue  # pattern system inconsistent
        candidates = []
        if rank < n + na:
            cand = _resolve_degenerate_pattern(data, M, rhs, active, inactive, slack)
            if cand is not None:
                candidates.append(cand)
        else:
            candidates.append(sol)
        for sol in candidates:
            d = sol[:n]
            lam = np.zeros(m)
            lam[active] = sol[n:]
            y = data.c + data.A @ d
            if any(lam[j] > slack for j in active if j in orth_idx):
                continue
            if any(y[j] < -slack for j in inactive):
                continue
            found.append((d, lam))
    return _dedupe(found, tol=1e-9 * scale)


def _resolve_degenerate_pattern(data, M, rhs, active, inactive, slack):
    """Pattern system is singular: pick a sign-feasible point of its affine
    solution set (if any) via the polyhedral engine."""
    n, m = data.n, data.m
    sol0, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    _, s, vt = np.linalg.svd(M)
    null = vt[np.sum(s > 1e-10 * max(s[0], 1.0)):].T  # (n+na, k)
    if null.shape[1] == 0:
        return sol0
    rows = []
    rhs_ub = []
    orth_active = [i for i, j in enumerate(active) if j not in _zero_set(data)]
    for i in orth_active:  # lam_active <= 0
        rows.append(null[n + i])
        rhs_ub.append(slack - sol0[n + i])
    for j in inactive:  # (c + A d)_j >= 0
        row = -(data.A[j] @ null[:n])
        rows.append(row)
        rhs_ub.append(data.c[j] + data.A[j] @ sol0[:n] + slack)
    poly = Polyhedron.build(null.shape[1], a_ub=np.array(rows), b_ub=np.array(rhs_ub))
    t = polyhedra.feasible_point(poly)
    if t is None:
        return None
    return sol0 + null @ t


def _zero_set(data: SubproblemData) -> set[int]:
    out: set[int] = set()
    for block, sl in data.cone.slices():
        if block.kind == cones.ZERO:
            out.update(range(sl.start, sl.stop))
    return out


def _dedupe(points, tol):
    unique: list[tuple[np.ndarray, np.ndarray]] = []
    for d, lam in points:
        vec = np.concatenate([d, lam])
        if all(np.linalg.norm(vec - np.concatenate([d2, l2])) > tol for d2, l2 in unique):
            unique.append((d, lam))
    return unique


# ---------------------------------------------------------------------------
# Semismooth Newton engine


def _projection_jacobian(cone: ConeSpec, z: np.ndarray) -> np.ndarray:
    """An element of the generalized Jacobian of the cone projection at z."""
    m = cone.total_dim
    P = np.zeros((m, m))
    for block, sl in cone.slices():
        zb = z[sl]
        if block.kind == cones.ZERO:
            continue
        if block.kind == cones.ORTHANT:
            diag = np.where(zb > 0.0, 1.0, np.where(zb < 0.0, 0.0, 0.5))
            P[sl, sl] = np.diag(diag)
        else:
            zbar, zm = zb[:-1], zb[-1]
            r = float(np.linalg.norm(zbar))
            d = block.dim
            if r <= zm:
                P[sl, sl] = np.eye(d)
            elif r <= -zm:
                continue
            else:
                s = zbar / r
                J = np.empty((d, d))
                J[:-1, :-1] = 0.5 * ((1.0 + zm / r) * np.eye(d - 1) - (zm / r) * np.outer(s, s))
                J[:-1, -1] = 0.5 * s
                J[-1, :-1] = 0.5 * s
                J[-1, -1] = 0.5
                P[sl, sl] = J
    return P


def _newton_from(data: SubproblemData, d0, lam0, cfg: SolverConfig):
    n, m = data.n, data.m
    d, lam = d0.copy(), lam0.copy()

    def residual_vec(d, lam):
        y = data.c + data.A @ d
        return np.concatenate(
            [data.g + data.H @ d + data.A.T @ lam, y - cones.project(data.cone, y + lam)]
        )

    F = residual_vec(d, lam)
    for _ in range(cfg.newton_max_iters):
        nrm = float(np.linalg.norm(F))
        if nrm <= 1e-13 * (1.0 + float(np.linalg.norm(data.g))):
            break
        z = data.c + data.A @ d + lam
        P = _projection_jacobian(data.cone, z)
        J = np.zeros((n + m, n + m))
        J[:n, :n] = data.H
        J[:n, n:] = data.A.T
        J[n:, :n] = (np.eye(m) - P) @ data.A
        J[n:, n:] = -P
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(J, -F, rcond=None)
        alpha = 1.0
        for _ in range(30):
            d_new, lam_new = d + alpha * step[:n], lam + alpha * step[n:]
            F_new = residual_vec(d_new, lam_new)
            if float(np.linalg.norm(F_new)) < (1.0 - 1e-4 * alpha) * nrm:
                break
            alpha *= 0.5
        else:
            return d, lam, nrm  # stalled
        d, lam, F = d_new, lam_new, F_new
    return d, lam, float(np.linalg.norm(F))


def semismooth_newton_solve(data: SubproblemData, hint, cfg: SolverConfig):
    """Multi-start semismooth Newton; returns all distinct KKT points found."""
    n, m = data.n, data.m
    rng = np.random.default_rng(cfg.seed)
    hint_d, hint_lam = hint
    starts = [(hint_d.copy(), hint_lam.copy()), (np.zeros(n), np.zeros(m))]
    scale = 1.0 + float(np.linalg.norm(data.g)) + float(np.linalg.norm(data.c))
    while len(starts) < cfg.n_starts:
        spread = scale * 10 ** rng.uniform(-1.0, 1.0)
        starts.append(
            (hint_d + spread * rng.normal(size=n), hint_lam + spread * rng.normal(size=m))
        )
    tol = cfg.tol * scale
    solutions: list[tuple[np.ndarray, np.ndarray]] = []
    for d0, lam0 in starts:
        d, lam, res = _newton_from(data, d0, lam0, cfg)
        if res <= tol:
            solutions.append((d, lam))
            if np.linalg.norm(np.concatenate([d - hint_d, lam - hint_lam])) <= tol * 10:
                break  # found the hint-adjacent solution, no need to keep searching
    return _dedupe(solutions, tol=1e-8 * scale)


# ---------------------------------------------------------------------------
# Splitting (ADMM) engine


def splitting_solve(data: SubproblemData, cfg: SolverConfig):
    """ADMM on min g.d + 0.5 d.H.d  s.t.  s = c + A d, s in cone (H psd)."""
    eigs = np.linalg.eigvalsh(data.H)
    if eigs.min(initial=0.0) < -1e-9 * max(1.0, abs(eigs).max(initial=1.0)):
        return None
    rho = cfg.admm_rho
    n, m = data.n, data.m
    M = data.H + rho * data.A.T @ data.A
    try:
        M_chol = np.linalg.cholesky(M + 1e-14 * np.eye(n) * max(1.0, np.trace(M)))
    except np.linalg.LinAlgError:
        return None
    s = cones.project(data.cone, data.c)
    u = np.zeros(m)
    scale = 1.0 + float(np.linalg.norm(data.g)) + float(np.linalg.norm(data.c))
    d = np.zeros(n)
    for _ in range(cfg.admm_max_iters):
        rhs = -data.g - rho * data.A.T @ (data.c - s + u)
        d = np.linalg.solve(M_chol.T, np.linalg.solve(M_chol, rhs))
        y = data.c + data.A @ d
        s_prev = s
        s = cones.project(data.cone, y + u)
        u = u + y - s
        primal = float(np.linalg.norm(y - s))
        dual = rho * float(np.linalg.norm(data.A.T @ (s - s_prev)))
        if primal <= 1e-11 * scale and dual <= 1e-11 * scale:
            break
    lam = rho * u
    # polish: a few Newton steps to machine-precision KKT residual
    d, lam, _ = _newton_from(data, d, lam, replace(cfg, newton_max_iters=25))
    return d, lam


# ---------------------------------------------------------------------------
# Status classification helpers (polyhedral feasibility / descent rays)


def _linearized_feasible(data: SubproblemData) -> bool | None:
    """Feasibility of {d : c + A d in cone}; None when not decidable exactly."""
    if not data.cone.is_polyhedral:
        return None
    rows_ub, rhs_ub, rows_eq, rhs_eq = [], [], [], []
    for block, sl in data.cone.slices():
        for j in range(sl.start, sl.stop):
            if block.kind == cones.ZERO:
                rows_eq.append(data.A[j])
                rhs_eq.append(-data.c[j])
            else:
                rows_ub.append(-data.A[j])
                rhs_ub.append(data.c[j])
    poly = Polyhedron.build(
        data.n,
        a_ub=np.array(rows_ub).reshape(-1, data.n),
        b_ub=np.array(rhs_ub),
        a_eq=np.array(rows_eq).reshape(-1, data.n),
        b_eq=np.array(rhs_eq),
    )
    try:
        return polyhedra.is_feasible(poly)
    except BudgetExceeded:
        return None


def _descent_ray(data: SubproblemData, seed: int = 0) -> np.ndarray | None:
    """A direction with A d in the cone's recession cone, g.d < 0 and
    nonpositive curvature: an unboundedness certificate.

    Exact polyhedral search; sampled (but individually verified) candidates
    otherwise.
    """
    if not data.cone.is_polyhedral:
        return _sampled_descent_ray(data, seed)
    rows_ub, rows_eq = [], []
    for block, sl in data.cone.slices():
        for j in range(sl.start, sl.stop):
            if block.kind == cones.ZERO:
                rows_eq.append(data.A[j])
            else:
                rows_ub.append(-data.A[j])
    rows_ub.append(data.g)  # g.d <= -1
    poly = Polyhedron.build(
        data.n,
        a_ub=np.array(rows_ub).reshape(-1, data.n),
        b_ub=np.concatenate([np.zeros(len(rows_ub) - 1), [-1.0]]),
        a_eq=np.array(rows_eq).reshape(-1, data.n),
        b_eq=np.zeros(len(rows_eq)),
    )
    try:
        ray = polyhedra.feasible_point(poly)
    except BudgetExceeded:
        return None
    if ray is not None and float(ray @ data.H @ ray) <= 1e-10 * (1.0 + float(ray @ ray)):
        return ray
    return None


def _sampled_descent_ray(data: SubproblemData, seed: int, tries: int = 512) -> np.ndarray | None:
    rng = np.random.default_rng(seed)

    def candidates():
        for _ in range(tries):
            yield rng.normal(size=data.n)  # direct direction samples
        for _ in range(tries):
            s = cones.sample_point(data.cone, rng)  # pull back a cone sample
            d, *_ = np.linalg.lstsq(data.A, s, rcond=None)
            if float(np.linalg.norm(data.A @ d - s)) <= 1e-10 * (1.0 + float(np.linalg.norm(s))):
                yield d

    for d in candidates():
        nrm = float(np.linalg.norm(d))
        if nrm < 1e-10:
            continue
        d = d / nrm
        if float(data.g @ d) >= -1e-8:
            d = -d
        if (
            float(data.g @ d) < -1e-8
            and float(d @ data.H @ d) <= 1e-10
            and cones.contains(data.cone, data.A @ d, tol=1e-12)
        ):
            return d
    return None


# ---------------------------------------------------------------------------
# Front end


def solve_subproblem(
    data: SubproblemData, hint: tuple[np.ndarray, np.ndarray] | None = None,
    cfg: SolverConfig | None = None,
) -> SubproblemSolution:
    """Find a KKT point of the subproblem, preferring the one nearest the hint."""
    cfg = cfg or SolverConfig()
    if hint is None:
        hint = (np.zeros(data.n), np.zeros(data.m))
    hint = (np.asarray(hint[0], float), np.asarray(hint[1], float))
    scale = 1.0 + float(np.linalg.norm(data.g)) + float(np.linalg.norm(data.c))

    engine = cfg.engine
    if engine is None:
        engine = (
            ENGINE_ENUMERATION
            if data.cone.is_polyhedral and data.m <= _ENUM_MAX_M
            else ENGINE_NEWTON
        )

    if engine == ENGINE_ENUMERATION:
        points = enumerate_kkt_points(data, cfg)
        if points:
            d, lam = _nearest(points, hint)
            return SubproblemSolution(
                KKT_POINT, d, lam, kkt_residual(data, d, lam), ENGINE_ENUMERATION,
                kkt_points=tuple(points),
            )
        if _linearized_feasible(data) is False:
            return SubproblemSolution(INFEASIBLE, engine=ENGINE_ENUMERATION)
        return SubproblemSolution(NO_KKT_POINT, engine=ENGINE_ENUMERATION)

    if engine == ENGINE_SPLITTING:
        out = splitting_solve(data, cfg)
        if out is not None:
            d, lam = out
            res = kkt_residual(data, d, lam)
            if res <= cfg.tol * scale:
                return SubproblemSolution(KKT_POINT, d, lam, res, ENGINE_SPLITTING)
        return SubproblemSolution(ITER_LIMIT, engine=ENGINE_SPLITTING)

    # general path: semismooth Newton first, splitting as psd fallback
    points = semismooth_newton_solve(data, hint, cfg)
    if points:
        d, lam = _nearest(points, hint)
        return SubproblemSolution(KKT_POINT, d, lam, kkt_residual(data, d, lam), ENGINE_NEWTON)
    out = splitting_solve(data, cfg)
    if out is not None:
        d, lam = out
        res = kkt_residual(data, d, lam)
        if res <= cfg.tol * scale:
            return SubproblemSolution(KKT_POINT, d, lam, res, ENGINE_SPLITTING)
    if _linearized_feasible(data) is False:
        return SubproblemSolution(INFEASIBLE, engine=ENGINE_NEWTON)
    if _descent_ray(data, seed=cfg.seed) is not None:
        return SubproblemSolution(UNBOUNDED, engine=ENGINE_NEWTON)
    return SubproblemSolution(ITER_LIMIT, engine=ENGINE_NEWTON)


def _nearest(points, hint):
    hint_vec = np.concatenate(hint)

    def key(pt):
        vec = np.concatenate(pt)
        return (float(np.linalg.norm(vec - hint_vec)), tuple(np.round(vec, 12)))

    return min(points, key=key)
