"""Walk through the kinematic substrate: FK, Jacobians, self-collision.

Loads the bundled two-arm fixture, poses it, and shows how the analytic
Jacobian predicts site motion and how the sphere-pair clearance behaves as
the arms fold toward each other.
"""

import numpy as np

from teleosim import forward_kinematics, min_self_distance, parse_robot, site_jacobian
from teleosim.config import bundled_asset_text

model = parse_robot(bundled_asset_text("dualarm7.robot"))
print(f"robot '{model.name}': {model.dof} dof, {len(model.links)} links, "
      f"{len(model.grippers)} grippers\n")

q = model.home_q()
fk = forward_kinematics(model, q)
print("home pose, key sites:")
for name in ("l_thumb_tip", "l_index_tip", "r_thumb_tip"):
    print(f"  {name:<12} {np.round(fk.site_position(name), 3)}")

print("\nJacobian of l_thumb_tip (columns = joints, rows = xyz):")
jac = site_jacobian(model, q, "l_thumb_tip")
print(np.round(jac[:, :8], 3), "... (right-arm columns are exactly zero)")

dq = np.zeros(model.dof)
dq[1] = 0.01  # nudge the left shoulder pitch
predicted = fk.site_position("l_thumb_tip") + jac @ dq
actual = forward_kinematics(model, q + dq).site_position("l_thumb_tip")
print(f"\n10 mrad shoulder nudge: prediction error "
      f"{np.linalg.norm(predicted - actual):.2e} m (second order)")

print("\nfolding both arms toward the midline:")
for s in np.linspace(0.0, 1.0, 6):
    q = model.home_q()
    q[0], q[8] = -1.1 * s, 1.1 * s
    q[3], q[11] = 0.6 * s, 0.6 * s
    rep = min_self_distance(model, q)
    print(f"  fold {s:4.2f}: clearance {rep.min_distance * 100:6.2f} cm "
          f"(witness spheres {rep.witness})")
