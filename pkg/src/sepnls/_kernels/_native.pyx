# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels (see _ref.py for the reference).

The algorithms match the reference implementation operation for operation;
tests assert parity between the two paths.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, sin, sqrt, tan, INFINITY, NAN

cnp.import_array()

HAVE_NATIVE = True


def mgs_sweep(object A_in, object y_in):
    """Batched thin-QR least squares; same contract as the reference."""
    cdef double[:, :, ::1] A = np.ascontiguousarray(A_in, dtype=np.float64)
    cdef double[:, ::1] y = np.ascontiguousarray(y_in, dtype=np.float64)
    cdef Py_ssize_t C = A.shape[0]
    cdef Py_ssize_t N = A.shape[1]
    cdef Py_ssize_t n = A.shape[2]

    xi_arr = np.zeros((C, n))
    msr_arr = np.zeros(C)
    ok_arr = np.ones(C, dtype=np.uint8)
    cdef double[:, ::1] xi = xi_arr
    cdef double[::1] msr = msr_arr
    cdef cnp.uint8_t[::1] ok = ok_arr

    V_arr = np.empty((N, n))
    R_arr = np.empty((n, n))
    q_arr = np.empty(n)
    cdef double[:, ::1] V = V_arr
    cdef double[:, ::1] R = R_arr
    cdef double[::1] qty = q_arr

    cdef Py_ssize_t c, i, j, k, p
    cdef double rij, nrm, s, col_scale, pred

    for c in range(C):
        # copy candidate regressor and find its largest column norm
        col_scale = 0.0
        for j in range(n):
            s = 0.0
            for k in range(N):
                V[k, j] = A[c, k, j]
                s += V[k, j] * V[k, j]
            s = sqrt(s)
            if s > col_scale:
                col_scale = s
        if col_scale < 1e-300:
            col_scale = 1e-300
        for i in range(n):
            for j in range(n):
                R[i, j] = 0.0
        # modified Gram-Schmidt with one reorthogonalization pass
        for j in range(n):
            for i in range(j):
                for p in range(2):
                    rij = 0.0
                    for k in range(N):
                        rij += V[k, i] * V[k, j]
                    for k in range(N):
                        V[k, j] -= rij * V[k, i]
                    R[i, j] += rij
            nrm = 0.0
            for k in range(N):
                nrm += V[k, j] * V[k, j]
            nrm = sqrt(nrm)
            R[j, j] = nrm
            if nrm <= 1e-10 * col_scale:
                ok[c] = 0
            if nrm > 0.0:
                for k in range(N):
                    V[k, j] /= nrm
        # Q^T y and back substitution
        for j in range(n):
            s = 0.0
            for k in range(N):
                s += V[k, j] * y[c, k]
            qty[j] = s
        for j in range(n - 1, -1, -1):
            s = qty[j]
            for i in range(j + 1, n):
                s -= R[j, i] * xi[c, i]
            if R[j, j] > 0.0:
                xi[c, j] = s / R[j, j]
            else:
                xi[c, j] = 0.0
        # mean squared residual against the original regressor
        s = 0.0
        for k in range(N):
            pred = 0.0
            for j in range(n):
                pred += A[c, k, j] * xi[c, j]
            pred = y[c, k] - pred
            s += pred * pred
        msr[c] = s / N
        if not ok[c]:
            for j in range(n):
                xi[c, j] = NAN
            msr[c] = INFINITY

    return xi_arr, msr_arr, ok_arr.astype(bool)


cdef inline void _rates(const double* x, const double* f, double g, double* out) noexcept nogil:
    cdef double sphi = sin(x[3])
    cdef double cphi = cos(x[3])
    cdef double sth = sin(x[4])
    cdef double cth = cos(x[4])
    cdef double tth = sth / cth
    out[0] = f[5] * x[1] - f[4] * x[2] - g * sth + f[0]
    out[1] = f[3] * x[2] - f[5] * x[0] + g * sphi * cth + f[1]
    out[2] = f[4] * x[0] - f[3] * x[1] + g * cphi * cth + f[2]
    out[3] = f[3] + (f[4] * sphi + f[5] * cphi) * tth
    out[4] = f[4] * cphi - f[5] * sphi
    out[5] = (f[4] * sphi + f[5] * cphi) / cth


def rk4_kinematics(object x0_in, object inputs_in, double dt, double g):
    """Fixed-step RK4 propagation; same contract as the reference."""
    cdef double[::1] x0 = np.ascontiguousarray(x0_in, dtype=np.float64)
    cdef double[:, ::1] inp = np.ascontiguousarray(inputs_in, dtype=np.float64)
    cdef Py_ssize_t N = inp.shape[0]
    out_arr = np.empty((N, 6))
    cdef double[:, ::1] out = out_arr
    cdef double x[6]
    cdef double xt[6]
    cdef double fm[6]
    cdef double k1[6]
    cdef double k2[6]
    cdef double k3[6]
    cdef double k4[6]
    cdef Py_ssize_t k, i

    for i in range(6):
        x[i] = x0[i]
        out[0, i] = x[i]
    for k in range(N - 1):
        for i in range(6):
            fm[i] = 0.5 * (inp[k, i] + inp[k + 1, i])
        _rates(x, &inp[k, 0], g, k1)
        for i in range(6):
            xt[i] = x[i] + 0.5 * dt * k1[i]
        _rates(xt, fm, g, k2)
        for i in range(6):
            xt[i] = x[i] + 0.5 * dt * k2[i]
        _rates(xt, fm, g, k3)
        for i in range(6):
            xt[i] = x[i] + dt * k3[i]
        _rates(xt, &inp[k + 1, 0], g, k4)
        for i in range(6):
            x[i] = x[i] + (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            out[k + 1, i] = x[i]
    return out_arr
