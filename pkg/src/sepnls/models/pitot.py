"""Pitot/flow-vane airspeed calibration model.

Ground-velocity measurements (m = 3, NED) are explained by rotating the
air-relative velocity into NED and adding wind, with a lever-arm correction
for the probe location:

    z = Cnb @ (C_eps @ u_dir(alpha, beta) * Va + omega x r_probe ...)

rearranged into canonical form with

    xi1 = (lam_Va, b_Va, W_N, W_E, W_D)     airspeed scale/bias and wind
    xi2 = (lam_al, b_al, lam_be, b_be, eps_phi)  vane calibrations and boom roll

    A = [F * V_raw | F | I3],   b = F * V_raw - Cnb @ (omega x r_probe)
    F = Cnb @ C(eps_phi) @ u_dir(alpha, beta)

where V_raw = sqrt(2 (P_t - P_s) / rho) is the uncalibrated airspeed,
alpha = (1 + lam_al) * P_da / (K_al * (P_t - P_s)) + b_al, and likewise beta.
Angle biases are radians. Per-sample context x = [phi, theta, psi, p, q, r,
b_p, b_q, b_r] (measured rates plus their known biases) and input
u = [P_da, P_db, P_t, P_s].
"""

from __future__ import annotations

import numpy as np

from ..canon import CanonicalModel, InvalidModelError, ParamSpace
from .attitude import dcm_body_to_ned_many, misalignment_dcm, misalignment_dcm_deriv

__all__ = ["PitotModel", "pitot_airdata", "PITOT_CONSTANTS"]

PITOT_CONSTANTS = {
    "rho": 1.225,
    "K_alpha": 0.0833,
    "K_beta": 0.0833,
    "probe_offset": (0.2, 0.0, 0.0),
}


def pitot_airdata(u, xi2, rho=1.225, K_alpha=0.0833, K_beta=0.0833):
    """Raw airspeed and calibrated flow angles from one pressure sample.

    Returns (V_raw, alpha, beta). Raises InvalidModelError when the dynamic
    pressure P_t - P_s is not positive.
    """
    P_da, P_db, P_t, P_s = (float(v) for v in u)
    q = P_t - P_s
    if q <= 0.0:
        raise InvalidModelError(f"non-positive dynamic pressure: P_t - P_s = {q}")
    V_raw = np.sqrt(2.0 * q / rho)
    a_raw = P_da / (K_alpha * q)
    b_raw = P_db / (K_beta * q)
    alpha = (1.0 + xi2[0]) * a_raw + xi2[1]
    beta = (1.0 + xi2[2]) * b_raw + xi2[3]
    return V_raw, alpha, beta


class PitotModel(CanonicalModel):
    model_id = "pitot"
    m = 3

    def __init__(self, rho=1.225, K_alpha=0.0833, K_beta=0.0833,
                 probe_offset=(0.2, 0.0, 0.0)):
        self.rho = float(rho)
        self.K_alpha = float(K_alpha)
        self.K_beta = float(K_beta)
        self.probe_offset = np.asarray(probe_offset, dtype=float)
        d2r = np.pi / 180.0
        self.space = ParamSpace(
            names1=("lam_Va", "b_Va", "W_N", "W_E", "W_D"),
            names2=("lam_al", "b_al", "lam_be", "b_be", "eps_phi"),
            lo1=[-0.5, -5.0, -6.0, -6.0, -2.0],
            hi1=[0.5, 5.0, 6.0, 6.0, 2.0],
            lo2=[-0.5, -5.0 * d2r, -0.5, -5.0 * d2r, -0.2618],
            hi2=[0.5, 5.0 * d2r, 0.5, 5.0 * d2r, 0.2618],
            ell1=8.0, ell2=1.0,
        )
        self._ctx_cache = None

    def constants(self):
        return {
            "rho": self.rho,
            "K_alpha": self.K_alpha,
            "K_beta": self.K_beta,
            "probe_offset": self.probe_offset.tolist(),
        }

    # xi2-independent per-sample quantities, cached per contexts tuple
    def _prep(self, contexts):
        cached = self._ctx_cache
        if cached is not None and cached[0] is contexts:
            return cached[1]
        X = np.stack([c.x for c in contexts])
        U = np.stack([c.u for c in contexts])
        q = U[:, 2] - U[:, 3]
        if np.any(q <= 0.0):
            k = int(np.nonzero(q <= 0.0)[0][0])
            raise InvalidModelError(
                f"non-positive dynamic pressure at sample {k}: P_t - P_s = {q[k]}"
            )
        V_raw = np.sqrt(2.0 * q / self.rho)
        a_raw = U[:, 0] / (self.K_alpha * q)
        b_raw = U[:, 1] / (self.K_beta * q)
        Cnb = dcm_body_to_ned_many(X[:, 0:3])
        omega = X[:, 3:6] - X[:, 6:9]  # measured rates minus known biases
        lever = np.einsum("nij,nj->ni", Cnb, np.cross(omega, self.probe_offset[None, :]))
        prep = {"V_raw": V_raw, "a_raw": a_raw, "b_raw": b_raw,
                "Cnb": Cnb, "lever": lever}
        self._ctx_cache = (contexts, prep)
        return prep

    @staticmethod
    def _udir(alpha, beta):
        ca, sa = np.cos(alpha), np.sin(alpha)
        cb, sb = np.cos(beta), np.sin(beta)
        return np.stack([ca * cb, sb, sa * cb], axis=-1)

    def _flow(self, prep, xi2):
        """F = Cnb @ C(eps) @ u_dir for every sample, shape (N, 3)."""
        alpha = (1.0 + xi2[0]) * prep["a_raw"] + xi2[1]
        beta = (1.0 + xi2[2]) * prep["b_raw"] + xi2[3]
        M = np.einsum("nij,jk->nik", prep["Cnb"], misalignment_dcm(xi2[4]))
        return np.einsum("nik,nk->ni", M, self._udir(alpha, beta)), alpha, beta, M

    def eval_A_all(self, contexts, xi2):
        prep = self._prep(contexts)
        F, _, _, _ = self._flow(prep, xi2)
        N = F.shape[0]
        A = np.zeros((N, 3, 5))
        A[:, :, 0] = F * prep["V_raw"][:, None]
        A[:, :, 1] = F
        A[:, 0, 2] = 1.0
        A[:, 1, 3] = 1.0
        A[:, 2, 4] = 1.0
        return A

    def eval_b_all(self, contexts, xi2):
        prep = self._prep(contexts)
        F, _, _, _ = self._flow(prep, xi2)
        return F * prep["V_raw"][:, None] - prep["lever"]

    def eval_A(self, ctx, xi2):
        return self.eval_A_all((ctx,), xi2)[0]

    def eval_b(self, ctx, xi2):
        return self.eval_b_all((ctx,), xi2)[0]

    def _dF(self, prep, xi2):
        """dF/dxi2, shape (N, 3, 5)."""
        F, alpha, beta, M = self._flow(prep, xi2)
        ca, sa = np.cos(alpha), np.sin(alpha)
        cb, sb = np.cos(beta), np.sin(beta)
        du_da = np.stack([-sa * cb, np.zeros_like(sa), ca * cb], axis=-1)
        du_db = np.stack([-ca * sb, cb, -sa * sb], axis=-1)
        Mda = np.einsum("nik,nk->ni", M, du_da)
        Mdb = np.einsum("nik,nk->ni", M, du_db)
        dC = misalignment_dcm_deriv(xi2[4])
        u = self._udir(alpha, beta)
        dF = np.empty((F.shape[0], 3, 5))
        dF[:, :, 0] = Mda * prep["a_raw"][:, None]
        dF[:, :, 1] = Mda
        dF[:, :, 2] = Mdb * prep["b_raw"][:, None]
        dF[:, :, 3] = Mdb
        dF[:, :, 4] = np.einsum("nij,jk,nk->ni", prep["Cnb"], dC, u)
        return dF

    def dA_dxi2_all(self, contexts, xi2):
        prep = self._prep(contexts)
        dF = self._dF(prep, xi2)
        N = dF.shape[0]
        dA = np.zeros((N, 3, 5, 5))
        dA[:, :, 0, :] = dF * prep["V_raw"][:, None, None]
        dA[:, :, 1, :] = dF
        return dA

    def db_dxi2_all(self, contexts, xi2):
        prep = self._prep(contexts)
        return self._dF(prep, xi2) * prep["V_raw"][:, None, None]
