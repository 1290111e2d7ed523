"""
Poses, twists, and the constant-velocity flow
=============================================

A quick tour of the SE(3) utilities: building planar poses, mapping twists
through the exponential, and why exp(dt * w^) is the right model for a
sensor that moves while it measures.
"""

import numpy as np

from spinradar import (BodyVelocity, Pose, Twist, exp_se3, log_se3,
                       velocity_to_transform)

# A planar pose is (x, y, yaw); under the hood it is a full 4x4 matrix.
T = Pose.from_xytheta(2.0, 1.0, np.deg2rad(30.0))
print("pose matrix:\n", np.round(T.matrix, 3))
print("yaw recovered:", np.rad2deg(T.yaw), "deg")

# Twists live in the tangent space; exp and log move between the two.
xi = Twist(np.array([1.0, 0.5, 0.0]), np.array([0.0, 0.0, 0.2]))
back = log_se3(exp_se3(xi.vector))
print("round trip error:", np.max(np.abs(back.vector - xi.vector)))

# A body velocity w = (nu, omega) generates motion through the flow
# T(t) = exp(t * w^).  Driving at 10 m/s while yawing 0.5 rad/s for one
# second traces a circular arc, not a straight line:
w = BodyVelocity.planar(10.0, 0.0, 0.5)
for t in (0.25, 0.5, 1.0):
    M = velocity_to_transform(w, t).matrix
    print(f"t={t:4.2f}s  position ({M[0, 3]:6.3f}, {M[1, 3]:6.3f})")

# The flow composes along time, which is what lets an estimator relate
# measurements taken at arbitrary instants within a scan:
a = velocity_to_transform(w, 0.1) @ velocity_to_transform(w, 0.15)
b = velocity_to_transform(w, 0.25)
print("composition error:", np.max(np.abs(a.matrix - b.matrix)))
