"""Minimal SO(3)/SE(3) toolbox for constant-velocity motion models.

Conventions: a pose T = [[C, r], [0, 1]] maps coordinates between frames,
twists are stacked as [rho; phi] and body velocities as [nu; omega].  A
sensor moving with constant body velocity w for a time dt advances by
left-multiplication with exp(dt * w^).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Below this rotation magnitude the Rodrigues terms degenerate to 0/0 and the
# first-order limit is used instead.
SMALL_ANGLE = 1e-12

_ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class Pose:
    """Rigid transform on SE(3): 3x3 rotation C and 3-vector translation r."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        C = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        r = np.asarray(self.translation, dtype=float).reshape(3)
        if not np.all(np.isfinite(C)) or not np.all(np.isfinite(r)):
            raise ValueError("pose entries must be finite")
        if np.max(np.abs(C.T @ C - np.eye(3))) > _ORTHO_TOL:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(C) - 1.0) > _ORTHO_TOL:
            raise ValueError("rotation determinant is not +1")
        object.__setattr__(self, "rotation", C)
        object.__setattr__(self, "translation", r)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, T: np.ndarray) -> "Pose":
        T = np.asarray(T, dtype=float)
        if T.shape != (4, 4):
            raise ValueError("expected a 4x4 homogeneous matrix")
        if np.max(np.abs(T[3] - np.array([0.0, 0.0, 0.0, 1.0]))) > 0:
            raise ValueError("bottom row must be exactly [0 0 0 1]")
        return cls(T[:3, :3], T[:3, 3])

    @classmethod
    def from_xytheta(cls, x: float, y: float, theta: float) -> "Pose":
        """Planar pose embedded in SE(3): yaw by theta, translate in x-y."""
        c, s = np.cos(theta), np.sin(theta)
        C = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return cls(C, np.array([x, y, 0.0]))

    @property
    def matrix(self) -> np.ndarray:
        """4x4 homogeneous form; bottom row exactly [0 0 0 1]."""
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    @property
    def yaw(self) -> float:
        return float(np.arctan2(self.rotation[1, 0], self.rotation[0, 0]))

    def inverse(self) -> "Pose":
        Ct = self.rotation.T
        return Pose(Ct, -Ct @ self.translation)

    def __matmul__(self, other):
        if isinstance(other, Pose):
            return Pose(self.rotation @ other.rotation,
                        self.rotation @ other.translation + self.translation)
        return NotImplemented

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform (..., 3) points (or a single 3-vector)."""
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation


@dataclass(frozen=True)
class Twist:
    """se(3) element split into translational (rho) and rotational (phi) parts."""

    rho: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=float).reshape(3)
        phi = np.asarray(self.phi, dtype=float).reshape(3)
        if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(phi))):
            raise ValueError("twist entries must be finite")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "phi", phi)

    @classmethod
    def planar(cls, rho_x: float, rho_y: float, phi_z: float) -> "Twist":
        return cls(np.array([rho_x, rho_y, 0.0]), np.array([0.0, 0.0, phi_z]))

    @classmethod
    def from_vector(cls, xi: np.ndarray) -> "Twist":
        xi = np.asarray(xi, dtype=float).reshape(6)
        return cls(xi[:3], xi[3:])

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.rho, self.phi])


@dataclass(frozen=True)
class BodyVelocity:
    """Sensor-frame velocity: linear nu (m/s) and angular omega (rad/s)."""

    nu: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        nu = np.asarray(self.nu, dtype=float).reshape(3)
        omega = np.asarray(self.omega, dtype=float).reshape(3)
        if not (np.all(np.isfinite(nu)) and np.all(np.isfinite(omega))):
            raise ValueError("velocity entries must be finite")
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "omega", omega)

    @classmethod
    def planar(cls, v_x: float, v_y: float, omega_z: float) -> "BodyVelocity":
        return cls(np.array([v_x, v_y, 0.0]), np.array([0.0, 0.0, omega_z]))

    @classmethod
    def zero(cls) -> "BodyVelocity":
        return cls(np.zeros(3), np.zeros(3))

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.nu, self.omega])


def wedge_so3(phi: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix such that wedge_so3(phi) @ v == cross(phi, v)."""
    phi = np.asarray(phi, dtype=float).reshape(3)
    return np.array([
        [0.0, -phi[2], phi[1]],
        [phi[2], 0.0, -phi[0]],
        [-phi[1], phi[0], 0.0],
    ])


def vee_so3(M: np.ndarray) -> np.ndarray:
    """Inverse of wedge_so3 for antisymmetric M."""
    return np.array([M[2, 1], M[0, 2], M[1, 0]])


def wedge_se3(xi) -> np.ndarray:
    """4x4 se(3) matrix [[phi^, rho], [0, 0]] from a Twist or 6-vector."""
    if not isinstance(xi, Twist):
        xi = Twist.from_vector(xi)
    M = np.zeros((4, 4))
    M[:3, :3] = wedge_so3(xi.phi)
    M[:3, 3] = xi.rho
    return M


def _so3_exp_terms(theta: float):
    # Rodrigues coefficients a = sin(t)/t, b = (1-cos t)/t^2, c = (t-sin t)/t^3
    if theta < SMALL_ANGLE:
        return 1.0, 0.5, 1.0 / 6.0
    return (np.sin(theta) / theta,
            (1.0 - np.cos(theta)) / theta**2,
            (theta - np.sin(theta)) / theta**3)


def exp_se3(xi) -> Pose:
    """Exponential map se(3) -> SE(3) (closed-form Rodrigues + left Jacobian)."""
    if not isinstance(xi, Twist):
        xi = Twist.from_vector(xi)
    phi_w = wedge_so3(xi.phi)
    theta = float(np.linalg.norm(xi.phi))
    if theta < SMALL_ANGLE:
        # First-order limit C = I + phi^, r = rho (orthonormal to O(theta^2)).
        return Pose(np.eye(3) + phi_w, xi.rho)
    a, b, c = _so3_exp_terms(theta)
    phi_w2 = phi_w @ phi_w
    C = np.eye(3) + a * phi_w + b * phi_w2
    V = np.eye(3) + b * phi_w + c * phi_w2
    return Pose(C, V @ xi.rho)


def log_se3(T: Pose) -> Twist:
    """Logarithm map SE(3) -> se(3); rejects rotations within 1e-6 of pi."""
    C = T.rotation
    cos_theta = np.clip((np.trace(C) - 1.0) / 2.0, -1.0, 1.0)
    theta = float(np.arccos(cos_theta))
    if theta > np.pi - 1e-6:
        raise ValueError("log branch ambiguous: rotation angle too close to pi")
    if theta < SMALL_ANGLE:
        phi = vee_so3(C - C.T) / 2.0
        return Twist(T.translation.copy(), phi)
    phi = theta / (2.0 * np.sin(theta)) * vee_so3(C - C.T)
    phi_w = wedge_so3(phi)
    # Closed-form inverse of the left Jacobian V.
    coef = (1.0 / theta**2
            - (1.0 + np.cos(theta)) / (2.0 * theta * np.sin(theta)))
    Vinv = np.eye(3) - 0.5 * phi_w + coef * (phi_w @ phi_w)
    return Twist(Vinv @ T.translation, phi)


def velocity_to_transform(w: BodyVelocity, dt: float) -> Pose:
    """Transform accumulated by a constant body velocity over dt seconds.

    Returns exp(dt * w^); dt may be negative for backward interpolation.
    """
    return exp_se3(Twist(dt * w.nu, dt * w.omega))


def odot(p: np.ndarray) -> np.ndarray:
    """4x6 operator satisfying wedge_se3(xi) @ p == odot(p) @ xi.vector.

    For a homogeneous point p = [rho; eta] the layout is
    [[eta*I, -rho^], [0^T, 0^T]].
    """
    p = np.asarray(p, dtype=float).reshape(4)
    M = np.zeros((4, 6))
    M[:3, :3] = p[3] * np.eye(3)
    M[:3, 3:] = -wedge_so3(p[:3])
    return M
