"""Rotation and kinematics helpers shared by the flight-data models."""

from __future__ import annotations

import numpy as np

__all__ = [
    "skew",
    "dcm_body_to_ned",
    "dcm_body_to_ned_many",
    "misalignment_dcm",
    "misalignment_dcm_deriv",
    "euler_rates_to_body",
]


def skew(v):
    """Cross-product matrix: skew(v) @ w == cross(v, w)."""
    v = np.asarray(v, dtype=float)
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def dcm_body_to_ned(phi, theta, psi):
    """Direction cosine matrix from body axes to NED for a 3-2-1 (yaw, pitch,
    roll) Euler sequence. Orthonormal with determinant +1."""
    sphi, cphi = np.sin(phi), np.cos(phi)
    sth, cth = np.sin(theta), np.cos(theta)
    spsi, cpsi = np.sin(psi), np.cos(psi)
    return np.array([
        [cth * cpsi, sphi * sth * cpsi - cphi * spsi, cphi * sth * cpsi + sphi * spsi],
        [cth * spsi, sphi * sth * spsi + cphi * cpsi, cphi * sth * spsi - sphi * cpsi],
        [-sth, sphi * cth, cphi * cth],
    ])


def dcm_body_to_ned_many(eul):
    """Vectorized dcm_body_to_ned for an (N, 3) array of [phi, theta, psi]."""
    eul = np.asarray(eul, dtype=float)
    phi, theta, psi = eul[:, 0], eul[:, 1], eul[:, 2]
    sphi, cphi = np.sin(phi), np.cos(phi)
    sth, cth = np.sin(theta), np.cos(theta)
    spsi, cpsi = np.sin(psi), np.cos(psi)
    C = np.empty((eul.shape[0], 3, 3))
    C[:, 0, 0] = cth * cpsi
    C[:, 0, 1] = sphi * sth * cpsi - cphi * spsi
    C[:, 0, 2] = cphi * sth * cpsi + sphi * spsi
    C[:, 1, 0] = cth * spsi
    C[:, 1, 1] = sphi * sth * spsi + cphi * cpsi
    C[:, 1, 2] = cphi * sth * spsi - sphi * cpsi
    C[:, 2, 0] = -sth
    C[:, 2, 1] = sphi * cth
    C[:, 2, 2] = cphi * cth
    return C


def misalignment_dcm(eps):
    """Rotation by eps about the probe x axis (boom misalignment)."""
    c, s = np.cos(eps), np.sin(eps)
    return np.array([
        [1.0, 0.0, 0.0],
        [0.0, c, s],
        [0.0, -s, c],
    ])


def misalignment_dcm_deriv(eps):
    """d misalignment_dcm / d eps."""
    c, s = np.cos(eps), np.sin(eps)
    return np.array([
        [0.0, 0.0, 0.0],
        [0.0, -s, c],
        [0.0, -c, -s],
    ])


def euler_rates_to_body(phi, theta, phidot, thetadot, psidot):
    """Body angular rates [p, q, r] realizing given Euler-angle rates."""
    sphi, cphi = np.sin(phi), np.cos(phi)
    sth, cth = np.sin(theta), np.cos(theta)
    p = phidot - psidot * sth
    q = thetadot * cphi + psidot * sphi * cth
    r = -thetadot * sphi + psidot * cphi * cth
    return p, q, r
