"""Two bundled scalar oscillator models.

Both measure z = (1 + a) * cos(arg) + offset + v with a phase/frequency
perturbation inside the cosine:

* scalar1: arg = eta + b, xi1 = (a, c), xi2 = (b,)
* scalar2: arg = eta * (1 + b) + c, xi1 = (a, d), xi2 = (b, c)

In canonical form A = [cos(arg), 1] and b-vector = cos(arg), so the cosine
term carries both a linear coefficient and a known part.
"""

from __future__ import annotations

import numpy as np

from ..canon import CanonicalModel, ParamSpace, SampleContext

__all__ = ["Scalar1Model", "Scalar2Model", "canonical_eta"]


def canonical_eta(N=100):
    """The bundled sampling grid for the scalar models: N points on [1, 10]."""
    return np.linspace(1.0, 10.0, N)


class _ScalarBase(CanonicalModel):
    m = 1

    def __init__(self, eta):
        self.eta = np.atleast_1d(np.asarray(eta, dtype=float)).copy()
        self._ctx_cache = None

    def contexts(self):
        return tuple(SampleContext(x=np.array([e])) for e in self.eta)

    def _eta_of(self, contexts):
        # Reuse the stored grid when the caller passes our own contexts back.
        cached = self._ctx_cache
        if cached is not None and cached[0] is contexts:
            return cached[1]
        eta = np.fromiter((c.x[0] for c in contexts), dtype=float, count=len(contexts))
        self._ctx_cache = (contexts, eta)
        return eta


class Scalar1Model(_ScalarBase):
    """Phase-shift model: arg = eta + b."""

    model_id = "scalar1"

    def __init__(self, eta):
        super().__init__(eta)
        self.space = ParamSpace(
            names1=("a", "c"), names2=("b",),
            lo1=[-5.0, -5.0], hi1=[5.0, 5.0],
            lo2=[0.0], hi2=[0.2],
            ell1=2.0, ell2=0.1,
        )

    def eval_A(self, ctx, xi2):
        c = np.cos(ctx.x[0] + xi2[0])
        return np.array([[c, 1.0]])

    def eval_b(self, ctx, xi2):
        return np.array([np.cos(ctx.x[0] + xi2[0])])

    def eval_A_all(self, contexts, xi2):
        eta = self._eta_of(contexts)
        c = np.cos(eta + xi2[0])
        A = np.empty((eta.size, 1, 2))
        A[:, 0, 0] = c
        A[:, 0, 1] = 1.0
        return A

    def eval_b_all(self, contexts, xi2):
        eta = self._eta_of(contexts)
        return np.cos(eta + xi2[0])[:, None]

    def dA_dxi2_all(self, contexts, xi2):
        eta = self._eta_of(contexts)
        d = np.zeros((eta.size, 1, 2, 1))
        d[:, 0, 0, 0] = -np.sin(eta + xi2[0])
        return d

    def db_dxi2_all(self, contexts, xi2):
        eta = self._eta_of(contexts)
        return -np.sin(eta + xi2[0])[:, None, None]

    def sweep_arrays(self, dataset, cands):
        """Candidate-stacked regressors for the batched stage-1 solve."""
        eta = self._eta_of(dataset.contexts)
        b = np.asarray([c[0] for c in cands])
        cosw = np.cos(eta[None, :] + b[:, None])
        A = np.empty((b.size, eta.size, 2))
        A[:, :, 0] = cosw
        A[:, :, 1] = 1.0
        y = dataset.z[:, 0][None, :] - cosw
        return A, y


class Scalar2Model(_ScalarBase):
    """Frequency-scaling model: arg = eta * (1 + b) + c."""

    model_id = "scalar2"

    def __init__(self, eta):
        super().__init__(eta)
        self.space = ParamSpace(
            names1=("a", "d"), names2=("b", "c"),
            lo1=[-5.0, -5.0], hi1=[5.0, 5.0],
            lo2=[0.0, 0.0], hi2=[0.5, 1.0],
            ell1=2.0, ell2=0.6,
        )

    @staticmethod
    def _arg(eta, xi2):
        return eta * (1.0 + xi2[0]) + xi2[1]

    def eval_A(self, ctx, xi2):
        c = np.cos(self._arg(ctx.x[0], xi2))
        return np.array([[c, 1.0]])

    def eval_b(self, ctx, xi2):
        return np.array([np.cos(self._arg(ctx.x[0], xi2))])

    def eval_A_all(self, contexts, xi2):
        eta = self._eta_of(contexts)
        c = np.cos(self._arg(eta, xi2))
        A = np.empty((eta.size, 1, 2))
        A[:, 0, 0] = c
        A[:, 0, 1] = 1.0
        return A

    def eval_b_all(self, contexts, xi2):
        eta = self._eta_of(contexts)
        return np.cos(self._arg(eta, xi2))[:, None]

    def dA_dxi2_all(self, contexts, xi2):
        eta = self._eta_of(contexts)
        s = np.sin(self._arg(eta, xi2))
        d = np.zeros((eta.size, 1, 2, 2))
        d[:, 0, 0, 0] = -s * eta
        d[:, 0, 0, 1] = -s
        return d

    def db_dxi2_all(self, contexts, xi2):
        eta = self._eta_of(contexts)
        s = np.sin(self._arg(eta, xi2))
        d = np.empty((eta.size, 1, 2))
        d[:, 0, 0] = -s * eta
        d[:, 0, 1] = -s
        return d

    def sweep_arrays(self, dataset, cands):
        eta = self._eta_of(dataset.contexts)
        xi2 = np.asarray(cands, dtype=float)
        arg = eta[None, :] * (1.0 + xi2[:, 0][:, None]) + xi2[:, 1][:, None]
        cosw = np.cos(arg)
        A = np.empty((xi2.shape[0], eta.size, 2))
        A[:, :, 0] = cosw
        A[:, :, 1] = 1.0
        y = dataset.z[:, 0][None, :] - cosw
        return A, y
