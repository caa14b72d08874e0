"""Reference (pure numpy) implementations of the hot kernels.

Both kernels mirror the algorithm in the compiled extension step for step so
the two paths agree to rounding:

* ``mgs_sweep``: batched thin-QR least squares (modified Gram-Schmidt with one
  reorthogonalization pass) across many candidate regressor matrices.
* ``rk4_kinematics``: fixed-step RK4 propagation of body-frame velocity and
  Euler angles driven by sampled specific forces and angular rates.
"""

import numpy as np

HAVE_NATIVE = False


def mgs_sweep(A, y):
    """Solve min ||A_c x - y_c|| for every candidate c.

    Parameters
    ----------
    A : ndarray, shape (C, N, n)
    y : ndarray, shape (C, N)

    Returns
    -------
    xi : (C, n) solutions (nan rows where the factorization broke down)
    msr : (C,) mean squared residual per candidate
    ok : (C,) bool, False where A_c was numerically rank deficient
    """
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float)
    C, N, n = A.shape
    V = A.copy()
    Q = np.empty_like(A)
    R = np.zeros((C, n, n))
    ok = np.ones(C, dtype=bool)
    col_scale = np.max(np.linalg.norm(A, axis=1), axis=1)  # largest column norm
    for j in range(n):
        for i in range(j):
            # two projection passes: MGS plus one reorthogonalization
            for _ in range(2):
                rij = np.einsum("ck,ck->c", Q[:, :, i], V[:, :, j])
                V[:, :, j] -= rij[:, None] * Q[:, :, i]
                R[:, i, j] += rij
        nrm = np.linalg.norm(V[:, :, j], axis=1)
        R[:, j, j] = nrm
        ok &= nrm > 1e-10 * np.maximum(col_scale, 1e-300)
        safe = np.where(nrm > 0, nrm, 1.0)
        Q[:, :, j] = V[:, :, j] / safe[:, None]
    qty = np.einsum("ckj,ck->cj", Q, y)
    xi = np.zeros((C, n))
    for j in range(n - 1, -1, -1):
        s = qty[:, j].copy()
        if j + 1 < n:
            s -= np.einsum("cj,cj->c", R[:, j, j + 1:], xi[:, j + 1:])
        xi[:, j] = s / np.where(R[:, j, j] > 0, R[:, j, j], 1.0)
    resid = y - np.einsum("ckj,cj->ck", A, xi)
    msr = np.mean(resid * resid, axis=1)
    xi[~ok] = np.nan
    msr[~ok] = np.inf
    return xi, msr, ok


def _rates(x, f, g):
    """Time derivative of [u, v, w, phi, theta, psi] under inputs
    f = [ax, ay, az, p, q, r] (specific force and body rates)."""
    u, v, w, phi, theta, _psi = x
    ax, ay, az, p, q, r = f
    sphi, cphi = np.sin(phi), np.cos(phi)
    sth, cth = np.sin(theta), np.cos(theta)
    tth = sth / cth
    return np.array([
        r * v - q * w - g * sth + ax,
        p * w - r * u + g * sphi * cth + ay,
        q * u - p * v + g * cphi * cth + az,
        p + (q * sphi + r * cphi) * tth,
        q * cphi - r * sphi,
        (q * sphi + r * cphi) / cth,
    ])


def rk4_kinematics(x0, inputs, dt, g):
    """Propagate the six-state kinematics with classical RK4.

    inputs has one row per sample time; step k uses inputs[k] at the left
    node, the average of inputs[k] and inputs[k+1] at the midpoints, and
    inputs[k+1] at the right node. Returns states at all N sample times with
    row 0 equal to x0.
    """
    x0 = np.asarray(x0, dtype=float)
    inputs = np.asarray(inputs, dtype=float)
    N = inputs.shape[0]
    out = np.empty((N, 6))
    out[0] = x0
    x = x0.copy()
    for k in range(N - 1):
        f0 = inputs[k]
        f1 = inputs[k + 1]
        fm = 0.5 * (f0 + f1)
        k1 = _rates(x, f0, g)
        k2 = _rates(x + 0.5 * dt * k1, fm, g)
        k3 = _rates(x + 0.5 * dt * k2, fm, g)
        k4 = _rates(x + dt * k3, f1, g)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[k + 1] = x
    return out
