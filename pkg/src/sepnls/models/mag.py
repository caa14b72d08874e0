"""Magnetometer scale/offset/soft-iron/misalignment calibration model.

The measured field is

    z = C_alpha @ C_eta @ diag(1 + lam) @ h_b + n + v

with h_b the known body-frame reference field per sample,
C_alpha a symmetric unit-diagonal soft-iron matrix with off-diagonal entries
(al_xy, al_xz, al_yz), and C_eta = I + skew(eta) a small-angle sensor
misalignment. Splitting the diagonal scale gives the canonical form

    A = [M @ diag(h_b) | I3],  b = M @ h_b,  M = C_alpha @ C_eta

with xi1 = (lam, n) and xi2 = (al_xy, al_xz, al_yz, eta). The symmetric
soft-iron shape is deliberate: together with the skew misalignment and the
diagonal scale it parametrizes a general 3x3 matrix without redundancy, so
the decomposition is locally identifiable.
"""

from __future__ import annotations

import numpy as np

from ..canon import CanonicalModel, ParamSpace
from .attitude import skew

__all__ = ["MagModel", "mag_build"]


def _c_alpha(a):
    return np.array([
        [1.0, a[0], a[1]],
        [a[0], 1.0, a[2]],
        [a[1], a[2], 1.0],
    ])


def mag_build(h_b, xi2):
    """Canonical (A, b) for one sample: A = [M diag(h_b), I], b = M h_b."""
    h_b = np.asarray(h_b, dtype=float)
    M = _c_alpha(xi2[0:3]) @ (np.eye(3) + skew(xi2[3:6]))
    A = np.zeros((3, 6))
    A[:, 0:3] = M * h_b[None, :]
    A[:, 3:6] = np.eye(3)
    return A, M @ h_b


class MagModel(CanonicalModel):
    model_id = "mag"
    m = 3

    def __init__(self):
        self.space = ParamSpace(
            names1=("lam_x", "lam_y", "lam_z", "n_x", "n_y", "n_z"),
            names2=("al_xy", "al_xz", "al_yz", "eta_x", "eta_y", "eta_z"),
            lo1=[-0.5] * 3 + [-1.0] * 3,
            hi1=[0.5] * 3 + [1.0] * 3,
            lo2=[-0.1] * 6,
            hi2=[0.1] * 6,
            ell1=1.5, ell2=0.25,
        )
        self._ctx_cache = None

    def _field(self, contexts):
        cached = self._ctx_cache
        if cached is not None and cached[0] is contexts:
            return cached[1]
        H = np.stack([c.x for c in contexts])
        self._ctx_cache = (contexts, H)
        return H

    def eval_A(self, ctx, xi2):
        A, _ = mag_build(ctx.x, xi2)
        return A

    def eval_b(self, ctx, xi2):
        _, b = mag_build(ctx.x, xi2)
        return b

    def eval_A_all(self, contexts, xi2):
        H = self._field(contexts)
        M = _c_alpha(xi2[0:3]) @ (np.eye(3) + skew(xi2[3:6]))
        N = H.shape[0]
        A = np.zeros((N, 3, 6))
        # column j of the scale block is M[:, j] * h_b[j]
        A[:, :, 0:3] = M[None, :, :] * H[:, None, :]
        A[:, :, 3:6] = np.eye(3)[None, :, :]
        return A

    def eval_b_all(self, contexts, xi2):
        H = self._field(contexts)
        M = _c_alpha(xi2[0:3]) @ (np.eye(3) + skew(xi2[3:6]))
        return H @ M.T

    def _dM(self, xi2):
        """dM/dxi2 as a (6, 3, 3) stack of matrices."""
        Ce = np.eye(3) + skew(xi2[3:6])
        Ca = _c_alpha(xi2[0:3])
        out = np.empty((6, 3, 3))
        sym = {0: (0, 1), 1: (0, 2), 2: (1, 2)}
        for idx, (i, j) in sym.items():
            E = np.zeros((3, 3))
            E[i, j] = E[j, i] = 1.0
            out[idx] = E @ Ce
        for k in range(3):
            e = np.zeros(3)
            e[k] = 1.0
            out[3 + k] = Ca @ skew(e)
        return out

    def dA_dxi2_all(self, contexts, xi2):
        H = self._field(contexts)
        dM = self._dM(xi2)
        N = H.shape[0]
        dA = np.zeros((N, 3, 6, 6))
        # scale-block columns vary with every xi2 entry; bias block does not
        dA[:, :, 0:3, :] = np.transpose(
            dM[None, :, :, :] * H[:, None, None, :], (0, 2, 3, 1)
        )
        return dA

    def db_dxi2_all(self, contexts, xi2):
        H = self._field(contexts)
        dM = self._dM(xi2)
        return np.einsum("pij,nj->nip", dM, H)
