"""
Rotation primitives
===================

Exponential map, nearest-rotation projection and the chordal distance.
"""

import numpy as np

from socpgo.geometry import chordal_distance, geodesic_angle, project_to_so3, so3_exp, so3_log

# a rotation of 0.5 rad about z, and back through the log map
R = so3_exp([0.0, 0.0, 0.5])
print("exp([0, 0, 0.5]) =\n", np.round(R, 6))
print("log of it:", so3_log(R))

# perturb it with a random matrix and pull it back onto SO(3)
rng = np.random.default_rng(0)
Y = R + 0.3 * rng.normal(size=(3, 3))
P = project_to_so3(Y)
print("\n|P^T P - I| =", np.linalg.norm(P.T @ P - np.eye(3)), " det(P) =", np.linalg.det(P))

# the projection is the closest rotation: try a few thousand others
others = np.stack([so3_exp(v) for v in rng.normal(size=(5000, 3))])
print("distance to Y: projection %.4f, best of 5000 random %.4f"
      % (np.linalg.norm(P - Y), np.linalg.norm(others - Y, axis=(1, 2)).min()))

# chordal distance grows like 2*sqrt(2)*sin(theta/2)
for theta in (0.1, 1.0, 3.0):
    Q = so3_exp([theta, 0, 0])
    print(f"theta={theta}: chordal {chordal_distance(np.eye(3), Q):.4f}, "
          f"2 sqrt(2) sin(theta/2) {2 * np.sqrt(2) * np.sin(theta / 2):.4f}, "
          f"geodesic {geodesic_angle(np.eye(3), Q):.4f}")
