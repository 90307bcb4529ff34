"""Second-order stability diagnostics at a KKT point.

For a KKT pair (x, lam) the module decides, exactly wherever the critical
cone is polyhedral (which covers every supported block except a
second-order block sitting at its apex with a zero multiplier):

* the second-order sufficient condition: minimum over the unit sphere of
  ``w . hess_L . w + d2(jac_f w)`` over directions with ``jac_f w`` in the
  critical cone, by eigen-analysis on the faces of the constraint cone;
* noncriticality of the multiplier: whether the homogenized KKT inclusion
  ``0 in hess_L w + jac_f^T DN(jac_f w)`` admits a nonzero direction;
* the strict Robinson qualification in its dual form
  ``K* ∩ ker jac_f^T = {0}``, cross-checked against the primal
  range-plus-critical-cone form on polyhedral instances;
* calmness of the multiplier map via polyhedrality or strict
  complementarity (anything else is reported Inconclusive, never guessed);
* an empirical isolated-calmness probe that solves tilt/shift perturbed
  KKT systems at shrinking radii and records worst-case distance ratios.

Verdicts carry an explicit ``conclusive`` flag: sampled or multi-start
searches never masquerade as proofs.  ``classify_stationary_point`` runs
everything and cross-checks the verdicts against each other; a violated
biconditional with conclusive inputs is reported as a FAILURE artifact.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from . import cones, expr, polyhedra
from . import problem as problem_mod
from .cones import CriticalCone
from .polyhedra import BudgetExceeded, Polyhedron
from .problem import KKTPair, MultiplierSetAnalysis, ProblemSpec
from .subproblem import _projection_jacobian

CALM = "Calm"
INCONCLUSIVE = "Inconclusive"

PROBE_BOUNDED = "bounded"
PROBE_DIVERGING = "diverging"
PROBE_INDETERMINATE = "indeterminate"

_SSOC_THRESHOLD = 1e-8
_FACE_BUDGET = 14  # at most 2**_FACE_BUDGET face patterns


@dataclass(frozen=True)
class DiagnosticsConfig:
    tol: float = 1e-8
    gate_tol: float = 1e-8
    seed: int = 0
    sample_count: int = 100  # safety-net samples for non-polyhedral searches
    probe_radii: tuple[float, ...] = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
    probe_samples: int = 8  # random directions per radius, besides the axes
    probe_ball: float = 0.5
    run_probe: bool = True
    jobs: int = 1


@dataclass(frozen=True)
class SSOCResult:
    min_value: float  # +inf when the critical pre-image is {0}
    witness: np.ndarray | None
    conclusive: bool

    @property
    def holds(self) -> bool:
        return self.min_value > _SSOC_THRESHOLD


@dataclass(frozen=True)
class NoncriticalityResult:
    noncritical: bool
    witness: tuple[np.ndarray, np.ndarray] | None  # (w, u) when critical
    conclusive: bool
    reason: str = ""


@dataclass(frozen=True)
class SRCQResult:
    holds: bool
    certificate: str
    witness: np.ndarray | None
    conclusive: bool
    primal_crosscheck: bool | None = None  # polyhedral instances only


@dataclass(frozen=True)
class CalmnessResult:
    verdict: str  # Calm | Inconclusive
    reason: str


@dataclass(frozen=True)
class RadiusSample:
    radius: float
    max_ratio: float
    n_solved: int
    n_samples: int


@dataclass(frozen=True)
class ProbeResult:
    samples: tuple[RadiusSample, ...]
    profile: str  # bounded | diverging | indeterminate
    growth: float  # ratio(smallest radius) / ratio(largest comparison radius)


@dataclass(frozen=True)
class DiagnosticsReport:
    point: KKTPair
    ssoc: SSOCResult
    srcq: SRCQResult
    noncriticality: NoncriticalityResult
    multiplier_calm: CalmnessResult
    multipliers: MultiplierSetAnalysis
    lambda_unique: bool | None
    calmness_probe: ProbeResult | None
    isolated_calmness_consistent: bool | None
    qualification_consistent: bool | None
    failures: tuple[str, ...] = field(default=())


def _gate(p: ProblemSpec, z: KKTPair, tol: float):
    res = problem_mod.kkt_residual(p, z)
    scale = 1.0 + float(np.linalg.norm(z.lam))
    if res.total > tol * scale:
        raise ValueError(
            f"point is not a KKT solution: residual {res.total:.3e} exceeds gate {tol * scale:.3e}"
        )
    return res


def _point_data(p: ProblemSpec, z: KKTPair):
    data = problem_mod.lagrangian_data(p, z)
    K = cones.critical_cone(p.cone, data.f_val, z.lam, tol=1e-7)
    return data, K


def _null_basis(rows: np.ndarray, dim: int) -> np.ndarray:
    if rows.size == 0:
        return np.eye(dim)
    _, s, vt = np.linalg.svd(rows, full_matrices=True)
    rank = int(np.sum(s > 1e-10 * max(float(s[0]) if s.size else 1.0, 1.0)))
    return vt[rank:].T


# ---------------------------------------------------------------------------
# Second-order sufficient condition


def check_ssoc(p: ProblemSpec, z: KKTPair, cfg: DiagnosticsConfig | None = None) -> SSOCResult:
    """Minimum of the stability quadratic over unit critical directions.

    Exact by face enumeration plus eigen-analysis whenever the critical
    cone is polyhedral; a sampled upper bound (flagged inconclusive)
    otherwise.
    """
    cfg = cfg or DiagnosticsConfig()
    _gate(p, z, cfg.gate_tol)
    data, K = _point_data(p, z)
    J = data.jac_f
    Q = data.hess_xx + J.T @ K.curvature_matrix() @ J
    Q = 0.5 * (Q + Q.T)
    E = (K.eq @ J) if K.eq.size else np.zeros((0, p.n))
    G = (K.ineq @ J) if K.ineq.size else np.zeros((0, p.n))
    if K.is_polyhedral and G.shape[0] <= _FACE_BUDGET:
        return _ssoc_exact(Q, E, G, p.n)
    return _ssoc_sampled(Q, E, G, K, J, p.n, cfg)


def _ssoc_exact(Q, E, G, n) -> SSOCResult:
    best = math.inf
    witness = None
    q = G.shape[0]
    for r in range(q + 1):
        for S in combinations(range(q), r):
            rows = np.vstack([E, G[list(S)]]) if (E.size or S) else np.zeros((0, n))
            B = _null_basis(rows, n)
            if B.shape[1] == 0:
                continue
            R = B.T @ Q @ B
            vals, vecs = np.linalg.eigh(0.5 * (R + R.T))
            for theta, v in zip(vals, vecs.T):
                w = B @ v
                for s in (1.0, -1.0):
                    cand = s * w
                    if G.shape[0] == 0 or np.all(G @ cand <= 1e-9):
                        if theta < best:
                            best = float(theta)
                            witness = cand
                        break
    return SSOCResult(best, witness, conclusive=True)


def _ssoc_sampled(Q, E, G, K: CriticalCone, J, n, cfg: DiagnosticsConfig) -> SSOCResult:
    rng = np.random.default_rng(cfg.seed)
    B = _null_basis(E, n)
    if B.shape[1] == 0:
        return SSOCResult(math.inf, None, conclusive=True)  # only w = 0 is critical
    best = math.inf
    witness = None
    for _ in range(50 * max(cfg.sample_count, 1)):
        t = rng.normal(size=B.shape[1])
        w = B @ t
        nrm = float(np.linalg.norm(w))
        if nrm < 1e-12:
            continue
        w /= nrm
        if G.shape[0] and np.any(G @ w > 1e-9):
            continue
        if not K.contains(J @ w, tol=1e-9):
            continue
        val = float(w @ Q @ w)
        if val < best:
            best, witness = val, w
    return SSOCResult(best, witness, conclusive=False)


# ---------------------------------------------------------------------------
# Noncriticality


def check_noncriticality(
    p: ProblemSpec, z: KKTPair, cfg: DiagnosticsConfig | None = None
) -> NoncriticalityResult:
    """Search for a nonzero direction solving the homogenized KKT inclusion.

    Face enumeration over the critical cone makes the search exhaustive on
    polyhedral structure; second-order blocks at an apex fall back to a
    sampled search and can only certify criticality, not its absence.
    """
    cfg = cfg or DiagnosticsConfig()
    _gate(p, z, cfg.gate_tol)
    data, K = _point_data(p, z)
    J = data.jac_f
    Hc = K.curvature_matrix()
    Q = data.hess_xx + J.T @ Hc @ J
    Q = 0.5 * (Q + Q.T)
    E, G = K.eq, K.ineq
    if K.is_polyhedral and G.shape[0] <= _FACE_BUDGET:
        try:
            witness = _noncrit_face_search(p, data, K, Q, J, Hc)
        except BudgetExceeded as exc:
            return NoncriticalityResult(False, None, conclusive=False, reason=str(exc))
        if witness is not None:
            return NoncriticalityResult(False, witness, conclusive=True)
        return NoncriticalityResult(True, None, conclusive=True)
    witness = _noncrit_sampled(p, data, K, Q, J, Hc, cfg)
    if witness is not None:
        return NoncriticalityResult(False, witness, conclusive=True)
    return NoncriticalityResult(
        True, None, conclusive=False, reason="sampled search only (apex second-order block)"
    )


def _noncrit_face_search(p, data, K: CriticalCone, Q, J, Hc):
    """Exhaustive pattern search for a nonzero critical direction.

    Variables (w, a, b): ``Q w + J^T (E^T a + G_P^T b) = 0`` with the
    pattern rows of G tight on ``J w``, the rest slack, and ``b >= 0``.
    Solutions form a cone, so a nonzero direction exists iff some
    coordinate of ``w`` admits a nonzero value.
    """
    n, m = p.n, p.m
    E, G = K.eq, K.ineq
    q = G.shape[0]
    for r in range(q + 1):
        for S in combinations(range(q), r):
            S = list(S)
            notS = [i for i in range(q) if i not in S]
            p_eq = E.shape[0]
            nb = len(S)
            nvars = n + p_eq + nb
            gen = np.zeros((m, p_eq + nb))
            if p_eq:
                gen[:, :p_eq] = E.T
            if nb:
                gen[:, p_eq:] = G[S].T
            a_eq = np.zeros((n + p_eq + nb, nvars))
            a_eq[:n, :n] = Q
            a_eq[:n, n:] = J.T @ gen
            if p_eq:
                a_eq[n : n + p_eq, :n] = E @ J
            if nb:
                a_eq[n + p_eq :, :n] = G[S] @ J
            b_eq = np.zeros(n + p_eq + nb)
            rows_ub = []
            for i in notS:
                row = np.zeros(nvars)
                row[:n] = G[i] @ J
                rows_ub.append(row)
            for k in range(nb):
                row = np.zeros(nvars)
                row[n + p_eq + k] = -1.0
                rows_ub.append(row)
            poly = Polyhedron.build(
                nvars,
                a_ub=np.array(rows_ub).reshape(-1, nvars),
                b_ub=np.zeros(len(rows_ub)),
                a_eq=a_eq,
                b_eq=b_eq,
            )
            for j in range(n):
                c = np.zeros(nvars)
                c[j] = 1.0
                rng = polyhedra.functional_range(poly, c)
                if rng is None:
                    break  # pattern infeasible
                target = 0.0
                if rng[1] > 1e-9:
                    target = 1.0
                elif rng[0] < -1e-9:
                    target = -1.0
                if target == 0.0:
                    continue
                fixed = Polyhedron.build(
                    nvars,
                    a_ub=poly.a_ub,
                    b_ub=poly.b_ub,
                    a_eq=np.vstack([poly.a_eq, c]),
                    b_eq=np.concatenate([poly.b_eq, [target]]),
                )
                sol = polyhedra.feasible_point(fixed)
                if sol is None:
                    continue
                w = sol[:n]
                u = Hc @ (J @ w) + gen @ sol[n:]
                if _verify_critical_witness(data, K, J, w, u):
                    return w, u
    return None


def _verify_critical_witness(data, K: CriticalCone, J, w, u, tol: float = 1e-9) -> bool:
    scale = 1.0 + float(np.linalg.norm(w)) + float(np.linalg.norm(u))
    if float(np.linalg.norm(w)) <= 1e-7:
        return False
    if float(np.linalg.norm(data.hess_xx @ w + J.T @ u)) > tol * scale:
        return False
    v = J @ w
    if not K.contains(v, tol):
        return False
    return K.normal_cone_residual(v, u - K.curvature_matrix() @ v) <= tol * scale


def _normal_cone_generators(K: CriticalCone, v: np.ndarray, rng, tol=1e-8):
    """Generators (free part, nonneg part) of N_K(v), built from the local
    active structure; apex second-order blocks get sampled polar rays."""
    m = K.cone.total_dim
    free_rows = [row for row in K.eq]
    nonneg_rows = [row for row in K.ineq if abs(float(row @ v)) <= tol * (1 + np.linalg.norm(v))]
    for sl in K.soc_block_slices:
        vb = v[sl]
        d = sl.stop - sl.start
        nb = float(np.linalg.norm(vb))
        if nb <= tol:
            for _ in range(8):  # sampled polar rays at the apex
                g = rng.normal(size=d - 1)
                g /= max(np.linalg.norm(g), 1e-12)
                row = np.zeros(m)
                row[sl.start : sl.stop - 1] = g
                row[sl.stop - 1] = -1.0
                nonneg_rows.append(row)
        elif float(np.linalg.norm(vb[:-1])) >= vb[-1] - tol * (1 + nb):
            row = np.zeros(m)
            row[sl.start : sl.stop - 1] = vb[:-1] / max(np.linalg.norm(vb[:-1]), 1e-12)
            row[sl.stop - 1] = -1.0
            nonneg_rows.append(row)
    free = np.array(free_rows).reshape(-1, m)
    nonneg = np.array(nonneg_rows).reshape(-1, m)
    return free, nonneg


def _noncrit_sampled(p, data, K: CriticalCone, Q, J, Hc, cfg: DiagnosticsConfig):
    """Safety net: random-direction sign-constrained least-squares solves."""
    rng = np.random.default_rng(cfg.seed + 1)
    E = (K.eq @ J) if K.eq.size else np.zeros((0, p.n))
    B = _null_basis(E, p.n)
    if B.shape[1] == 0:
        return None
    for _ in range(cfg.sample_count):
        w = B @ rng.normal(size=B.shape[1])
        nrm = float(np.linalg.norm(w))
        if nrm < 1e-12:
            continue
        w /= nrm
        v = J @ w
        if not K.contains(v, tol=1e-9):
            continue
        free, nonneg = _normal_cone_generators(K, v, rng)
        gen = np.vstack([free, nonneg]).T  # m x (p + q)
        if gen.size == 0:
            u = Hc @ v
            if _verify_critical_witness(data, K, J, w, u):
                return w, u
            continue
        target = -(Q @ w)
        M = J.T @ gen
        coef, *_ = np.linalg.lstsq(M, target, rcond=None)
        nfree = free.shape[0]
        for _ in range(300):  # clipped projected gradient enforces signs
            coef[nfree:] = np.maximum(coef[nfree:], 0.0)
            grad = M.T @ (M @ coef - target)
            lip = max(float(np.linalg.norm(M, 2)) ** 2, 1e-9)
            coef = coef - grad / lip
        coef[nfree:] = np.maximum(coef[nfree:], 0.0)
        u = Hc @ v + gen @ coef
        if _verify_critical_witness(data, K, J, w, u):
            return w, u
    return None


# ---------------------------------------------------------------------------
# Strict Robinson qualification (dual form, with polyhedral primal cross-check)


def check_srcq(p: ProblemSpec, z: KKTPair, cfg: DiagnosticsConfig | None = None) -> SRCQResult:
    """Triviality of ``K* ∩ ker jac_f^T`` at the KKT point."""
    cfg = cfg or DiagnosticsConfig()
    _gate(p, z, cfg.gate_tol)
    data, K = _point_data(p, z)
    J = data.jac_f
    B = _null_basis(J.T, p.m)  # basis of ker J^T in R^m
    k = B.shape[1]
    if k == 0:
        return SRCQResult(True, "kernel of jac_f^T is trivial", None, True,
                          _srcq_primal(p, K, J) if K.is_polyhedral else None)
    if not K.is_polyhedral:
        witness = _srcq_sampled(K, B, cfg)
        if witness is not None:
            return SRCQResult(False, "nonzero polar direction in the kernel", witness, True)
        return SRCQResult(
            True, "no witness found by sampling (apex second-order block)", None, False
        )
    # K* is generated by the rows of E (free sign) and G (nonnegative sign)
    E, G = K.eq, K.ineq
    p_eq, q = E.shape[0], G.shape[0]
    nvars = p_eq + q + k
    gen = np.zeros((p.m, p_eq + q))
    if p_eq:
        gen[:, :p_eq] = E.T
    if q:
        gen[:, p_eq:] = G.T
    a_eq = np.hstack([gen, -B])
    rows_ub = np.zeros((q, nvars))
    for i in range(q):
        rows_ub[i, p_eq + i] = -1.0
    poly = Polyhedron.build(nvars, a_ub=rows_ub, b_ub=np.zeros(q), a_eq=a_eq, b_eq=np.zeros(p.m))
    try:
        for j in range(k):
            c = np.zeros(nvars)
            c[p_eq + q + j] = 1.0
            rng = polyhedra.functional_range(poly, c)
            target = 0.0
            if rng is not None and rng[1] > 1e-9:
                target = 1.0
            elif rng is not None and rng[0] < -1e-9:
                target = -1.0
            if target == 0.0:
                continue
            fixed = Polyhedron.build(
                nvars, a_ub=poly.a_ub, b_ub=poly.b_ub,
                a_eq=np.vstack([poly.a_eq, c]), b_eq=np.concatenate([poly.b_eq, [target]]),
            )
            sol = polyhedra.feasible_point(fixed)
            if sol is None:
                continue
            u = B @ sol[p_eq + q :]
            if _verify_srcq_witness(K, J, u):
                return SRCQResult(False, "nonzero polar direction in the kernel", u, True,
                                  _srcq_primal(p, K, J))
    except BudgetExceeded as exc:
        return SRCQResult(True, f"budget exceeded: {exc}", None, False)
    return SRCQResult(True, "face enumeration exhausted", None, True, _srcq_primal(p, K, J))


def _verify_srcq_witness(K: CriticalCone, J, u, tol: float = 1e-8) -> bool:
    nrm = float(np.linalg.norm(u))
    if nrm <= 1e-7:
        return False
    u = u / nrm
    # u in the polar of K iff the projection of u onto K vanishes
    return (
        float(np.linalg.norm(K.project(u))) <= tol
        and float(np.linalg.norm(J.T @ u)) <= tol
    )


def _srcq_sampled(K: CriticalCone, B, cfg: DiagnosticsConfig):
    rng = np.random.default_rng(cfg.seed + 2)
    for _ in range(50 * cfg.sample_count):
        u = B @ rng.normal(size=B.shape[1])
        nrm = float(np.linalg.norm(u))
        if nrm < 1e-12:
            continue
        u /= nrm
        if float(np.linalg.norm(K.project(u))) <= 1e-9:
            return u
    return None


def _srcq_primal(p: ProblemSpec, K: CriticalCone, J) -> bool:
    """Primal form on polyhedral structure: range(J) + K covers ±e_i."""
    n, m = p.n, p.m
    E, G = K.eq, K.ineq
    for i in range(m):
        for sign in (1.0, -1.0):
            # variables (w, v): J w + v = sign * e_i, v in K
            nvars = n + m
            a_eq = np.zeros((m + E.shape[0], nvars))
            a_eq[:m, :n] = J
            a_eq[:m, n:] = np.eye(m)
            b_eq = np.zeros(m + E.shape[0])
            b_eq[i] = sign
            if E.shape[0]:
                a_eq[m:, n:] = E
            a_ub = np.zeros((G.shape[0], nvars))
            if G.shape[0]:
                a_ub[:, n:] = G
            poly = Polyhedron.build(nvars, a_ub=a_ub, b_ub=np.zeros(G.shape[0]),
                                    a_eq=a_eq, b_eq=b_eq)
            try:
                if not polyhedra.is_feasible(poly):
                    return False
            except BudgetExceeded:
                return False
    return True


# ---------------------------------------------------------------------------
# Multiplier-map calmness


def check_multiplier_calmness(p: ProblemSpec, z: KKTPair, cfg: DiagnosticsConfig | None = None) -> CalmnessResult:
    """Calm for polyhedral cones; otherwise strict complementarity is the
    only sufficient condition implemented, anything else is Inconclusive."""
    cfg = cfg or DiagnosticsConfig()
    _gate(p, z, cfg.gate_tol)
    if p.cone.is_polyhedral:
        return CalmnessResult(CALM, "polyhedral constraint cone (Hoffman bound)")
    data, _ = _point_data(p, z)
    y = data.f_val
    tol = cfg.tol
    lscale = 1.0 + float(np.linalg.norm(z.lam))
    for block, sl in p.cone.slices():
        if block.kind != cones.SOC:
            continue
        case = cones._soc_case(y[sl], tol)
        lb = z.lam[sl]
        if case == "interior":
            continue  # lam block is 0, trivially interior to {0}
        if case == "boundary":
            if -lb[-1] <= tol * lscale:
                return CalmnessResult(INCONCLUSIVE, "strict complementarity fails")
        else:  # apex: lam must be interior to the polar cone
            if not (float(np.linalg.norm(lb[:-1])) < -lb[-1] - tol * lscale):
                return CalmnessResult(INCONCLUSIVE, "strict complementarity fails")
    return CalmnessResult(CALM, "strict complementarity on every active second-order block")


# ---------------------------------------------------------------------------
# Empirical isolated-calmness probe


def _perturbed_residual(p: ProblemSpec, x, lam, v, w):
    obj = expr.eval2(p.objective, x)
    f_val, jac_f, _ = problem_mod.constraint_data(p, x)
    y = f_val + w
    r1 = obj.gradient - v + jac_f.T @ lam
    r2 = y - cones.project(p.cone, y + lam)
    return float(np.linalg.norm(r1)) + float(np.linalg.norm(r2)) + cones.distance(p.cone, y)


def _newton_perturbed(p: ProblemSpec, x0, lam0, v, w, max_iters=60):
    """Damped semismooth Newton on the tilt/shift perturbed KKT residual."""
    x, lam = x0.copy(), lam0.copy()

    def residual_vec(x, lam):
        obj = expr.eval2(p.objective, x)
        f_val, jac_f, _ = problem_mod.constraint_data(p, x)
        y = f_val + w
        return (
            np.concatenate([obj.gradient - v + jac_f.T @ lam, y - cones.project(p.cone, y + lam)]),
            jac_f,
            f_val,
        )

    F, jac_f, f_val = residual_vec(x, lam)
    for _ in range(max_iters):
        nrm = float(np.linalg.norm(F))
        if nrm <= 1e-13:
            break
        data = problem_mod.lagrangian_data(p, KKTPair(x, lam))
        P = _projection_jacobian(p.cone, f_val + w + lam)
        n, m = p.n, p.m
        Jm = np.zeros((n + m, n + m))
        Jm[:n, :n] = data.hess_xx
        Jm[:n, n:] = data.jac_f.T
        Jm[n:, :n] = (np.eye(m) - P) @ data.jac_f
        Jm[n:, n:] = -P
        try:
            step = np.linalg.solve(Jm, -F)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(Jm, -F, rcond=None)
        alpha = 1.0
        for _ in range(30):
            x_new, lam_new = x + alpha * step[:n], lam + alpha * step[n:]
            F_new, jac_f, f_val = residual_vec(x_new, lam_new)
            if float(np.linalg.norm(F_new)) < (1.0 - 1e-4 * alpha) * nrm:
                break
            alpha *= 0.5
        else:
            return x, lam, nrm
        x, lam, F = x_new, lam_new, F_new
    return x, lam, float(np.linalg.norm(F))


def _pattern_solutions(p: ProblemSpec, z: KKTPair, v, w, tol=1e-10):
    """Active-pattern Newton solves of the perturbed KKT system (polyhedral)."""
    zero_idx, orth_idx = [], []
    for block, sl in p.cone.slices():
        idx = list(range(sl.start, sl.stop))
        (zero_idx if block.kind == cones.ZERO else orth_idx).extend(idx)
    if len(orth_idx) > 10:
        return []
    out = []
    for bits in range(2 ** len(orth_idx)):
        active = list(zero_idx) + [j for k, j in enumerate(orth_idx) if bits >> k & 1]
        sol = _pattern_newton(p, z, v, w, active)
        if sol is None:
            continue
        x, lam = sol
        inactive = [j for j in range(p.m) if j not in active]
        f_val, _, _ = problem_mod.constraint_data(p, x)
        slack = 1e-9 * (1.0 + float(np.linalg.norm(lam)))
        if any(lam[j] > slack for j in active if j in orth_idx):
            continue
        if any(f_val[j] + w[j] < -slack for j in inactive):
            continue
        if _perturbed_residual(p, x, lam, v, w) <= 1e-8:
            out.append(KKTPair(x, lam))
    return out


def _pattern_newton(p: ProblemSpec, z: KKTPair, v, w, active, max_iters=60):
    x = z.x.copy()
    lam_a = z.lam[active].copy()
    na = len(active)
    for _ in range(max_iters):
        obj = expr.eval2(p.objective, x)
        f_val, jac_f, f_hess = problem_mod.constraint_data(p, x)
        lam_full = np.zeros(p.m)
        lam_full[active] = lam_a
        F = np.concatenate(
            [obj.gradient - v + jac_f.T @ lam_full, f_val[active] + w[active]]
        )
        if float(np.linalg.norm(F)) <= 1e-12:
            break
        Hl = obj.hessian + np.tensordot(lam_full, f_hess, axes=1)
        Jm = np.zeros((p.n + na, p.n + na))
        Jm[: p.n, : p.n] = Hl
        if na:
            Jm[: p.n, p.n :] = jac_f[active].T
            Jm[p.n :, : p.n] = jac_f[active]
        try:
            step = np.linalg.solve(Jm, -F)
        except np.linalg.LinAlgError:
            return None
        if not np.all(np.isfinite(step)) or float(np.linalg.norm(step)) > 1e3:
            return None
        x = x + step[: p.n]
        lam_a = lam_a + step[p.n :]
    else:
        return None
    lam_full = np.zeros(p.m)
    lam_full[active] = lam_a
    return x, lam_full


def _solve_perturbed(p: ProblemSpec, z: KKTPair, v, w, rng_seed: int) -> list[KKTPair]:
    """All perturbed-KKT solutions found near z (pattern enumeration plus
    multi-start semismooth Newton)."""
    sols: list[KKTPair] = []
    if p.cone.is_polyhedral:
        sols.extend(_pattern_solutions(p, z, v, w))
    rng = np.random.default_rng(rng_seed)
    r = float(np.linalg.norm(np.concatenate([v, w])))
    spreads = [0.0, r, math.sqrt(max(r, 0.0)), 0.1, 0.45]
    for spread in spreads:
        x0 = z.x + spread * rng.normal(size=p.n)
        lam0 = z.lam + spread * rng.normal(size=p.m)
        x, lam, res = _newton_perturbed(p, z.x if spread == 0.0 else x0,
                                        z.lam if spread == 0.0 else lam0, v, w)
        if res <= 1e-9 and _perturbed_residual(p, x, lam, v, w) <= 1e-8:
            sols.append(KKTPair(x, lam))
    unique: list[KKTPair] = []
    for s in sols:
        if all(s.distance_to(t) > 1e-9 for t in unique):
            unique.append(s)
    return unique


def probe_isolated_calmness(
    p: ProblemSpec, z: KKTPair, cfg: DiagnosticsConfig | None = None
) -> ProbeResult:
    """Solve tilt/shift perturbed KKT systems on shrinking spheres and record
    the worst distance-over-radius ratio among solutions near z.

    A profile that stays bounded as the radius shrinks is empirical
    evidence of isolated calmness of the perturbed solution map; a growing
    profile is evidence of its failure.  Corroborating evidence only: the
    decision-grade tests are the second-order checks.
    """
    cfg = cfg or DiagnosticsConfig()
    _gate(p, z, cfg.gate_tol)
    dim = p.n + p.m
    rng = np.random.default_rng(cfg.seed + 3)
    dirs = [e * s for e in np.eye(dim) for s in (1.0, -1.0)]
    for _ in range(cfg.probe_samples):
        d = rng.normal(size=dim)
        dirs.append(d / float(np.linalg.norm(d)))

    def run_sample(job):
        ri, si, radius, direction = job
        v = radius * direction[: p.n]
        w = radius * direction[p.n :]
        sols = _solve_perturbed(p, z, v, w, rng_seed=cfg.seed + 1000 * ri + si)
        best = 0.0
        found = 0
        for s in sols:
            dist = s.distance_to(z)
            if dist <= cfg.probe_ball:
                found += 1
                best = max(best, dist / radius)
        return ri, best, found

    jobs = [
        (ri, si, radius, direction)
        for ri, radius in enumerate(cfg.probe_radii)
        for si, direction in enumerate(dirs)
    ]
    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(run_sample, jobs))
    else:
        results = [run_sample(j) for j in jobs]
    samples = []
    for ri, radius in enumerate(cfg.probe_radii):
        rows = [r for r in results if r[0] == ri]
        samples.append(
            RadiusSample(
                radius=radius,
                max_ratio=max((r[1] for r in rows), default=0.0),
                n_solved=sum(r[2] for r in rows),
                n_samples=len(rows),
            )
        )
    profile, growth = _classify_profile(samples)
    return ProbeResult(tuple(samples), profile, growth)


def _classify_profile(samples: list[RadiusSample]):
    by_radius = {s.radius: s.max_ratio for s in samples}
    big = by_radius.get(1e-2)
    small = by_radius.get(1e-6)
    if big is None or small is None:
        radii = sorted(by_radius)
        big, small = by_radius[radii[-1]], by_radius[radii[0]]
    if big == 0.0 and small == 0.0:
        return PROBE_BOUNDED, 1.0
    growth = small / max(big, 1e-300)
    if growth <= 3.0:
        return PROBE_BOUNDED, growth
    if growth >= 10.0:
        return PROBE_DIVERGING, growth
    return PROBE_INDETERMINATE, growth


# ---------------------------------------------------------------------------
# Full classification with cross-checks


def classify_stationary_point(
    p: ProblemSpec, z: KKTPair, cfg: DiagnosticsConfig | None = None
) -> DiagnosticsReport:
    """Run every diagnostic and cross-check the verdicts against each other.

    Two biconditionals are asserted whenever all ingredients are conclusive:

    * (SSOC and multiplier-map calm and unique multiplier)
      <=> (SSOC and strict Robinson qualification);
    * (unique multiplier and multiplier-map calm)
      <=> strict Robinson qualification.

    A conclusively critical multiplier together with a bounded probe
    profile is also flagged.  Violations are FAILURE artifacts.
    """
    cfg = cfg or DiagnosticsConfig()
    _gate(p, z, cfg.gate_tol)
    ssoc = check_ssoc(p, z, cfg)
    srcq = check_srcq(p, z, cfg)
    noncrit = check_noncriticality(p, z, cfg)
    calm = check_multiplier_calmness(p, z, cfg)
    msa = problem_mod.multiplier_set_analysis(p, z.x, tol=cfg.tol)
    unique: bool | None = msa.unique if msa.status == "exact" else None
    probe = probe_isolated_calmness(p, z, cfg) if cfg.run_probe else None

    failures: list[str] = []
    iso_consistent: bool | None = None
    if ssoc.conclusive and srcq.conclusive and unique is not None and calm.verdict == CALM:
        lhs = ssoc.holds and unique  # calm is conclusively true here
        rhs = ssoc.holds and srcq.holds
        iso_consistent = lhs == rhs
        if not iso_consistent:
            failures.append(
                "FAILURE: isolated-calmness characterizations disagree "
                f"(ssoc={ssoc.holds}, unique={unique}, srcq={srcq.holds})"
            )
    qual_consistent: bool | None = None
    if srcq.conclusive and unique is not None:
        if calm.verdict == CALM:
            qual_consistent = (unique and True) == srcq.holds
            if not qual_consistent:
                failures.append(
                    "FAILURE: qualification biconditional violated "
                    f"(unique={unique}, calm, srcq={srcq.holds})"
                )
        elif srcq.holds and not unique:
            # qualification implies a unique multiplier regardless of calmness
            qual_consistent = False
            failures.append(
                "FAILURE: strict Robinson qualification holds but the multiplier is not unique"
            )
    if srcq.conclusive and srcq.primal_crosscheck is not None:
        if srcq.primal_crosscheck != srcq.holds:
            failures.append(
                "FAILURE: primal and dual strict-Robinson tests disagree "
                f"(dual={srcq.holds}, primal={srcq.primal_crosscheck})"
            )
    if probe is not None and noncrit.conclusive and not noncrit.noncritical:
        if probe.profile == PROBE_BOUNDED:
            failures.append(
                "FAILURE: critical multiplier with a bounded isolated-calmness probe"
            )
    return DiagnosticsReport(
        point=z,
        ssoc=ssoc,
        srcq=srcq,
        noncriticality=noncrit,
        multiplier_calm=calm,
        multipliers=msa,
        lambda_unique=unique,
        calmness_probe=probe,
        isolated_calmness_consistent=iso_consistent,
        qualification_consistent=qual_consistent,
        failures=tuple(failures),
    )
