"""Constrained problem model: min objective(x) subject to f(x) in a cone.

Holds the expression-based problem data, evaluates Lagrangian quantities,
KKT residuals, and analyzes the Lagrange multiplier set
``{lam : jac_f(x)^T lam = -grad_objective(x), lam normal to the cone at f(x)}``
exactly at desk scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import cones, expr, polyhedra
from .cones import ConeSpec
from .expr import ExprAST
from .polyhedra import BudgetExceeded, Polyhedron

STATIONARITY_TOL = 1e-8


@dataclass(frozen=True)
class KKTPair:
    x: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, float))
        object.__setattr__(self, "lam", np.asarray(self.lam, float))
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.lam))):
            raise ValueError("KKT pair entries must be finite")

    def distance_to(self, other: "KKTPair") -> float:
        return float(np.linalg.norm(np.concatenate([self.x - other.x, self.lam - other.lam])))


@dataclass(frozen=True)
class KKTResidual:
    stationarity: float
    complementarity: float
    feasibility: float

    @property
    def total(self) -> float:
        return self.stationarity + self.complementarity + self.feasibility


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    n: int
    objective: ExprAST
    constraints: tuple[ExprAST, ...]
    cone: ConeSpec
    reference: KKTPair | None = None

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if self.objective.n != self.n or any(c.n != self.n for c in self.constraints):
            raise ValueError("expression dimension disagrees with problem dimension")
        if self.cone.total_dim != self.m:
            raise ValueError(
                f"cone dimension {self.cone.total_dim} != number of constraints {self.m}"
            )
        if self.reference is not None:
            if self.reference.x.shape != (self.n,) or self.reference.lam.shape != (self.m,):
                raise ValueError("reference point has wrong dimensions")

    @property
    def m(self) -> int:
        return len(self.constraints)


@dataclass(frozen=True)
class LagrangianData:
    L: float
    grad_x: np.ndarray
    hess_xx: np.ndarray
    f_val: np.ndarray
    jac_f: np.ndarray


def constraint_data(p: ProblemSpec, x: np.ndarray):
    """Values, Jacobian (m x n) and per-component Hessians of f at x."""
    vals = np.empty(p.m)
    jac = np.empty((p.m, p.n))
    hessians = np.empty((p.m, p.n, p.n))
    for i, c in enumerate(p.constraints):
        so = expr.eval2(c, x)
        vals[i], jac[i], hessians[i] = so.value, so.gradient, so.hessian
    return vals, jac, hessians


def lagrangian_data(p: ProblemSpec, z: KKTPair) -> LagrangianData:
    obj = expr.eval2(p.objective, z.x)
    f_val, jac_f, f_hess = constraint_data(p, z.x)
    hess = obj.hessian + np.tensordot(z.lam, f_hess, axes=1)
    return LagrangianData(
        L=obj.value + float(f_val @ z.lam),
        grad_x=obj.gradient + jac_f.T @ z.lam,
        hess_xx=0.5 * (hess + hess.T),
        f_val=f_val,
        jac_f=jac_f,
    )


def kkt_residual(p: ProblemSpec, z: KKTPair) -> KKTResidual:
    data = lagrangian_data(p, z)
    return KKTResidual(
        stationarity=float(np.linalg.norm(data.grad_x)),
        complementarity=cones.normal_cone_residual(
            p.cone, data.f_val, z.lam, require_membership=False
        ),
        feasibility=cones.distance(p.cone, data.f_val),
    )


# ---------------------------------------------------------------------------
# Multiplier set analysis


@dataclass(frozen=True)
class MultiplierSetAnalysis:
    status: str  # "exact" | "inconclusive"
    nonempty: bool
    unique: bool
    sample: np.ndarray | None
    bounding_box: tuple[tuple[float, float], ...] | None
    reason: str = ""


def _multiplier_parametrization(p: ProblemSpec, y: np.ndarray, tol: float):
    """Linear parametrization lam = B v (+ sign constraints on v) of the
    normal cone at y, when every block admits one.

    Returns (B, neg_idx, None) with columns of B spanning the candidate
    multipliers; v[neg_idx] <= 0.  Returns (None, None, reason) when a
    second-order block sits at its apex (the normal cone is not a
    polyhedral image there).
    """
    m = p.m
    cols: list[np.ndarray] = []
    neg_idx: list[int] = []
    yscale = 1.0 + float(np.linalg.norm(y))
    for block, sl in p.cone.slices():
        yb = y[sl]
        if block.kind == cones.ZERO:
            for i in range(sl.start, sl.stop):
                e = np.zeros(m)
                e[i] = 1.0
                cols.append(e)
        elif block.kind == cones.ORTHANT:
            for i in range(sl.start, sl.stop):
                if y[i] <= tol * yscale:  # active: lam_i <= 0
                    e = np.zeros(m)
                    e[i] = 1.0
                    neg_idx.append(len(cols))
                    cols.append(e)
        else:
            case = cones._soc_case(yb, tol)
            if case == "interior":
                continue  # lam block forced to zero
            if case == "apex":
                return None, None, "second-order block at its apex"
            a = cones._soc_boundary_normal(yb)
            col = np.zeros(m)
            col[sl] = -a  # lam = mu * a with mu >= 0, written as v * (-a), v <= 0
            neg_idx.append(len(cols))
            cols.append(col)
    B = np.array(cols).T.reshape(m, len(cols))
    return B, neg_idx, None


def multiplier_set_analysis(
    p: ProblemSpec, x: np.ndarray, tol: float = STATIONARITY_TOL
) -> MultiplierSetAnalysis:
    """Exact nonemptiness / uniqueness / per-coordinate bounds of the
    multiplier set at x, by eliminating the stationarity equations over the
    facially-parametrized normal cone.
    """
    x = np.asarray(x, float)
    obj = expr.eval2(p.objective, x)
    f_val, jac_f, _ = constraint_data(p, x)
    B, neg_idx, reason = _multiplier_parametrization(p, f_val, tol)
    if B is None:
        return MultiplierSetAnalysis("inconclusive", False, False, None, None, reason)
    k = B.shape[1]
    if k == 0:
        # no active structure anywhere: the only candidate multiplier is zero
        if float(np.linalg.norm(obj.gradient)) <= tol * (1.0 + float(np.linalg.norm(obj.gradient))):
            box = tuple((0.0, 0.0) for _ in range(p.m))
            return MultiplierSetAnalysis("exact", True, True, np.zeros(p.m), box, "")
        return MultiplierSetAnalysis("exact", False, False, None, None, "no multiplier exists")
    a_eq = jac_f.T @ B  # n x k
    b_eq = -obj.gradient
    a_ub = np.zeros((len(neg_idx), k))
    for r, j in enumerate(neg_idx):
        a_ub[r, j] = 1.0
    poly = Polyhedron.build(k, a_ub=a_ub, b_ub=np.zeros(len(neg_idx)), a_eq=a_eq, b_eq=b_eq)
    eqtol = tol * (1.0 + float(np.linalg.norm(obj.gradient)))
    try:
        if not polyhedra.is_feasible(poly, tol=eqtol):
            return MultiplierSetAnalysis("exact", False, False, None, None, "no multiplier exists")
        v0 = polyhedra.feasible_point(poly, tol=eqtol)
        box = []
        width_tol = 1e-9 * (1.0 + float(np.linalg.norm(B @ v0)))
        unique = True
        for i in range(p.m):
            rng = polyhedra.functional_range(poly, B[i], tol=eqtol)
            box.append((rng[0], rng[1]))
            width = rng[1] - rng[0]
            if not math.isfinite(width) or width > width_tol:
                unique = False
    except BudgetExceeded as exc:
        return MultiplierSetAnalysis("inconclusive", True, False, None, None, str(exc))
    return MultiplierSetAnalysis("exact", True, unique, B @ v0, tuple(box), "")


def multiplier_sample(p: ProblemSpec, x: np.ndarray, tol: float = STATIONARITY_TOL):
    analysis = multiplier_set_analysis(p, x, tol)
    return analysis.sample
