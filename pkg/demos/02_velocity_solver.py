"""The constrained velocity solver in action.

Tracks a target with the planar arm, then shows the two constraint
mechanisms: velocity-limit clamping and the self-collision clearance
barrier holding the 1 cm margin while the command tries to cross it.
"""

import numpy as np

from teleosim import (
    IkParams,
    Transform,
    forward_kinematics,
    hand_template,
    integrate,
    map_hand_to_targets,
    min_self_distance,
    parse_robot,
    solve_velocity,
)
from teleosim.config import bundled_asset_text
from teleosim.hands import TargetSet

params = IkParams(dt=0.005)

print("== planar2 converging on a fixed target ==")
planar2 = parse_robot(bundled_asset_text("planar2.robot"))
q = np.array([0.3, 0.2])
target = TargetSet([("tip", np.array([0.5, 1.0, 0.0]))])
for step in range(401):
    cmd = solve_velocity(planar2, q, target, params)
    q = integrate(planar2, q, cmd.v, params.dt)
    if step % 80 == 0:
        err = np.linalg.norm(forward_kinematics(planar2, q)
                             .site_position("tip") - target.entries[0][1])
        print(f"  t={step * params.dt:4.2f}s  error {err * 1000:8.3f} mm  "
              f"v={np.round(cmd.v, 3)}")

print("\n== dualarm7 commanded into a self-collision ==")
dualarm = parse_robot(bundled_asset_text("dualarm7.robot"))
q = dualarm.home_q()
# both palms commanded to the same spot in front of the chest
left = hand_template(Transform((0.45, 0.02, 0.35)), 0.0)
right = hand_template(Transform((0.45, -0.02, 0.35)), 0.0)
targets = [map_hand_to_targets(left, dualarm, gripper_index=0),
           map_hand_to_targets(right, dualarm, gripper_index=1)]
for step in range(400):
    cmd = solve_velocity(dualarm, q, targets, params)
    q = integrate(dualarm, q, cmd.v, params.dt)
    if step % 80 == 0 or step == 399:
        d = min_self_distance(dualarm, q).min_distance
        print(f"  t={step * params.dt:4.2f}s  clearance {d * 100:6.2f} cm  "
              f"status {cmd.status}")
d = min_self_distance(dualarm, q).min_distance
print(f"\nthe barrier holds: final clearance {d * 100:.2f} cm "
      f">= margin {params.d_margin * 100:.0f} cm")
