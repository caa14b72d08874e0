"""Flight-path reconstruction (data compatibility) model.

Air-data and attitude measurements are compared against states reconstructed
by integrating the rigid-body kinematics with bias-corrected IMU inputs. The
IMU biases are the nonlinear parameters; per measurement channel a scale
factor and bias are the linear ones:

    z_k = [ (1+lam_V) V_k + b_V, (1+lam_beta) beta_k + b_beta, ... ] + v_k

with channel order (V, beta, alpha, phi, theta, psi). The states
(u, v, w, phi, theta, psi) at sample k come from RK4 propagation of

    udot = r v - q w - g sin(theta) + ax        phidot = p + (q sphi + r cphi) t_theta
    vdot = p w - r u + g sphi ctheta + ay       thetadot = q cphi - r sphi
    wdot = q u - p v + g cphi ctheta + az       psidot = (q sphi + r cphi) / ctheta

driven by inputs (ax, ay, az, p, q, r) = measured IMU + candidate bias xi2,
from the known initial state. Per-sample context x carries the reference
states (for inspection and file output); the model itself uses only x0 and
the measured input history.
"""

from __future__ import annotations

import numpy as np

from ..canon import CanonicalModel, InvalidModelError, ParamSpace
from .. import _kernels

__all__ = ["DataCompatModel", "datacompat_airdata", "CHANNELS"]

CHANNELS = ("V", "beta", "alpha", "phi", "theta", "psi")


def datacompat_airdata(state):
    """(V, beta, alpha) from one state vector [u, v, w, phi, theta, psi].

    beta = asin(v / V) and alpha = atan(w / u); raises InvalidModelError when
    the axial velocity u vanishes (alpha undefined).
    """
    u, v, w = float(state[0]), float(state[1]), float(state[2])
    V = np.sqrt(u * u + v * v + w * w)
    if abs(u) < 1e-9 or V < 1e-9:
        raise InvalidModelError(f"air-data angles undefined at u={u}, V={V}")
    return V, np.arcsin(v / V), np.arctan(w / u)


class DataCompatModel(CanonicalModel):
    model_id = "datacompat"
    m = 6

    def __init__(self, x0, inputs_meas, dt, g=9.80665):
        self.x0 = np.asarray(x0, dtype=float).copy()
        self.inputs_meas = np.asarray(inputs_meas, dtype=float).copy()
        if self.x0.shape != (6,) or self.inputs_meas.ndim != 2 or self.inputs_meas.shape[1] != 6:
            raise InvalidModelError("need x0 of shape (6,) and inputs of shape (N, 6)")
        self.dt = float(dt)
        self.g = float(g)
        self.space = ParamSpace(
            names1=(
                "lam_V", "b_V", "lam_beta", "b_beta", "lam_alpha", "b_alpha",
                "lam_phi", "b_phi", "lam_theta", "b_theta", "lam_psi", "b_psi",
            ),
            names2=("b_ax", "b_ay", "b_az", "b_p", "b_q", "b_r"),
            lo1=[-0.5, -2.0] + [-0.5, -0.2] * 5,
            hi1=[0.5, 2.0] + [0.5, 0.2] * 5,
            lo2=[-0.5] * 3 + [-0.02] * 3,
            hi2=[0.5] * 3 + [0.02] * 3,
            ell1=2.0, ell2=0.9,
        )
        self._memo = {}

    def constants(self):
        return {"dt": self.dt, "g": self.g}

    @property
    def N(self):
        return self.inputs_meas.shape[0]

    def states_for(self, xi2):
        """Reconstructed state trajectory under candidate biases (memoized)."""
        xi2 = np.asarray(xi2, dtype=float)
        key = xi2.tobytes()
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        states = _kernels.rk4_kinematics(
            self.x0, self.inputs_meas + xi2[None, :], self.dt, self.g
        )
        if len(self._memo) > 32:
            self._memo.clear()
        self._memo[key] = states
        return states

    def _predicted_channels(self, xi2, N):
        states = self.states_for(xi2)
        if states.shape[0] != N:
            raise InvalidModelError(
                f"dataset has {N} samples but the stored input history has "
                f"{states.shape[0]}"
            )
        u, v, w = states[:, 0], states[:, 1], states[:, 2]
        V = np.sqrt(u * u + v * v + w * w)
        if np.any(np.abs(u) < 1e-9) or np.any(V < 1e-9):
            k = int(np.nonzero((np.abs(u) < 1e-9) | (V < 1e-9))[0][0])
            raise InvalidModelError(f"air-data angles undefined at sample {k}")
        chan = np.empty((N, 6))
        chan[:, 0] = V
        chan[:, 1] = np.arcsin(np.clip(v / V, -1.0, 1.0))
        chan[:, 2] = np.arctan(w / u)
        chan[:, 3:6] = states[:, 3:6]
        return chan

    def eval_A_all(self, contexts, xi2):
        chan = self._predicted_channels(xi2, len(contexts))
        N = chan.shape[0]
        A = np.zeros((N, 6, 12))
        for i in range(6):
            A[:, i, 2 * i] = chan[:, i]
            A[:, i, 2 * i + 1] = 1.0
        return A

    def eval_b_all(self, contexts, xi2):
        return self._predicted_channels(xi2, len(contexts))

    # Single-sample evaluations address one row of the reconstructed
    # trajectory via the context's sample index (the propagation itself is
    # memoized, so repeated single-point calls stay cheap).
    def _row(self, ctx):
        if ctx.k < 0 or ctx.k >= self.N:
            raise InvalidModelError(
                f"context sample index {ctx.k} outside the stored history"
            )
        return ctx.k

    def eval_A(self, ctx, xi2):
        k = self._row(ctx)
        chan = self._predicted_channels(xi2, self.N)
        A = np.zeros((6, 12))
        for i in range(6):
            A[i, 2 * i] = chan[k, i]
            A[i, 2 * i + 1] = 1.0
        return A

    def eval_b(self, ctx, xi2):
        k = self._row(ctx)
        return self._predicted_channels(xi2, self.N)[k]
