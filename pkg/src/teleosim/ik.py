"""Constrained differential inverse kinematics.

One velocity solve minimizes the sum of position tracking costs
||J_p v + alpha * e_p||^2 over the target set, subject to joint velocity
bounds (with position-limit shielding) and a linearized self-collision
clearance constraint. e_p = current site position - target, so the
minimizer moves sites toward their targets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Transform
from .hands import TargetSet
from .kinematics import (
    forward_kinematics,
    min_distance_only,
    min_self_distance,
    site_jacobian,
)
from .model import RobotModel
from .qp import CONVERGED, QpInfeasibleError, solve_qp

INFEASIBLE_RELAXED = "infeasible_relaxed"

# The collision row enters the QP only inside this band above the margin;
# farther out the constraint cannot bind the optimum.
COLLISION_TRIGGER_BAND = 0.05


@dataclass
class IkParams:
    alpha: float = 10.0          # tracking gain, 1/s
    damping: float = 1e-6        # Tikhonov weight keeping H SPD
    dt: float = 0.005            # control timestep, s
    d_margin: float = 0.01       # self-collision clearance floor, m
    limit_horizon: float = 1.0   # fraction of dt used for limit shielding
    qp_max_iter: int = 200
    qp_tol: float = 1e-8

    def validate(self) -> "IkParams":
        for name in ("alpha", "damping", "dt", "limit_horizon", "qp_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"IkParams.{name} must be > 0")
        if self.qp_max_iter <= 0:
            raise ValueError("IkParams.qp_max_iter must be > 0")
        if self.d_margin < 0:
            raise ValueError("IkParams.d_margin must be >= 0")
        return self

    def with_overrides(self, overrides: dict[str, float]) -> "IkParams":
        p = IkParams(self.alpha, self.damping, self.dt, self.d_margin,
                     self.limit_horizon, self.qp_max_iter, self.qp_tol)
        for key, value in overrides.items():
            if not hasattr(p, key):
                raise ValueError(f"unknown ik parameter '{key}'")
            setattr(p, key, type(getattr(p, key))(value))
        return p.validate()


@dataclass
class VelocityCommand:
    v: np.ndarray
    status: str                      # converged | iteration_capped | infeasible_relaxed
    active_constraints: list = field(default_factory=list)
    kkt_residual: float = 0.0
    min_distance: float = float("inf")


def velocity_bounds(model: RobotModel, q: np.ndarray,
                    params: IkParams) -> tuple[np.ndarray, np.ndarray]:
    """Effective velocity box: hardware limits shielded by position limits.

    Shielding scales so a full step of dt cannot overshoot a position limit;
    at a limit the corresponding bound is exactly zero.
    """
    q = model.check_q(q)
    lo, hi = model.joint_limits()
    v_lim = model.velocity_limits()
    beta_dt = params.limit_horizon / params.dt
    v_hi = np.minimum(v_lim, beta_dt * (hi - q))
    v_lo = np.maximum(-v_lim, beta_dt * (lo - q))
    return v_lo, v_hi


def _flatten_targets(targets) -> tuple[list[tuple[str, np.ndarray]], list[TargetSet]]:
    if isinstance(targets, TargetSet):
        targets = [targets]
    entries: list[tuple[str, np.ndarray]] = []
    for ts in targets:
        entries.extend(ts.entries)
    return entries, list(targets)


def tracking_error(model: RobotModel, q: np.ndarray, targets,
                   base: Transform | None = None) -> float:
    """Sum of squared site-position errors for the target set."""
    entries, _ = _flatten_targets(targets)
    fk = forward_kinematics(model, q, base)
    return float(sum(np.sum((fk.site_position(name) - p) ** 2)
                     for name, p in entries))


def solve_velocity(model: RobotModel, q: np.ndarray, targets,
                   params: IkParams, base: Transform | None = None) -> VelocityCommand:
    """One constrained tracking solve; accepts one TargetSet or several.

    Gripper aperture-joint columns are excluded from the task Jacobians:
    that joint belongs to the aperture channel, not the pose tracker.
    """
    q = model.check_q(q)
    if not np.all(np.isfinite(q)):
        raise ValueError("non-finite joint state")
    entries, target_sets = _flatten_targets(targets)
    for ts in target_sets:
        ts.validate_for(model)

    fk = forward_kinematics(model, q, base)
    aperture_dofs = [model.joints[g.aperture_joint].dof_index
                     for g in model.grippers
                     if model.joints[g.aperture_joint].dof_index >= 0]

    H = params.damping * np.eye(model.dof)
    g_vec = np.zeros(model.dof)
    for name, p_target in entries:
        p_target = np.asarray(p_target, dtype=float)
        if not np.all(np.isfinite(p_target)):
            raise ValueError(f"non-finite target for site '{name}'")
        jac = site_jacobian(model, q, name, base, fk=fk)
        if aperture_dofs:
            jac[:, aperture_dofs] = 0.0
        err = fk.site_position(name) - p_target
        H += jac.T @ jac
        g_vec += params.alpha * (jac.T @ err)

    v_lo, v_hi = velocity_bounds(model, q, params)

    A = b = None
    d_now = float("inf")
    if len(model.collision_spheres) >= 2:
        # Cheap value-only query every solve; the FD gradient only inside
        # the trigger band where the constraint can actually bind.
        d_now = min_distance_only(model, q, base, fk=fk)
        if np.isfinite(d_now) and d_now < params.d_margin + COLLISION_TRIGGER_BAND:
            report = min_self_distance(model, q, base, fk=fk)
            d_now = report.min_distance
            A = (report.gradient * params.dt)[None, :]
            b = np.array([params.d_margin - d_now])

    active: list = []
    try:
        res = solve_qp(H, g_vec, v_lo, v_hi, A, b,
                       max_iter=params.qp_max_iter, tol=params.qp_tol)
        v = res.x
        status = res.status
        active = res.active
        kkt = res.kkt_residual
    except QpInfeasibleError:
        # Best-effort clearance: satisfy the collision row in least squares
        # over the box. Box rows are hardware limits and are never relaxed.
        ls_h = A.T @ A + params.damping * np.eye(model.dof)
        res = solve_qp(ls_h, -(A.T @ b), v_lo, v_hi,
                       max_iter=params.qp_max_iter, tol=params.qp_tol)
        v = res.x
        status = INFEASIBLE_RELAXED
        active = res.active + [("collision", 0)]
        kkt = res.kkt_residual

    # The linearization ignores curvature; when the trigger band is active,
    # back the step off along v until the true post-step clearance holds.
    if A is not None and status != INFEASIBLE_RELAXED and d_now >= params.d_margin:
        v = _collision_backstop(model, q, v, params, base)

    v = np.clip(v, v_lo, v_hi)
    return VelocityCommand(v, status, active, kkt, d_now)


def _collision_backstop(model: RobotModel, q: np.ndarray, v: np.ndarray,
                        params: IkParams, base: Transform | None) -> np.ndarray:
    lo, hi = model.joint_limits()

    def dist(scale: float) -> float:
        q_next = np.clip(q + scale * v * params.dt, lo, hi)
        return min_distance_only(model, q_next, base)

    if dist(1.0) >= params.d_margin:
        return v
    good, bad = 0.0, 1.0
    for _ in range(40):
        mid = 0.5 * (good + bad)
        if dist(mid) >= params.d_margin:
            good = mid
        else:
            bad = mid
    return v * good


def integrate(model: RobotModel, q: np.ndarray, v: np.ndarray,
              dt: float) -> np.ndarray:
    """Euler step clamped to position limits (a no-op under shielding)."""
    lo, hi = model.joint_limits()
    return np.clip(model.check_q(q) + np.asarray(v, dtype=float) * dt, lo, hi)
