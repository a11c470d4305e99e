# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled propagation kernel.

Same contract as ``_pykernel.integrate_rho``: adaptive Dormand-Prince 5(4)
over the augmented state [vec(rho), s_eta, s_tau, s_trace], with the two
matrix products of the generator evaluated through BLAS zgemm and the
stepper loop running without the GIL.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, pow
from libc.string cimport memcpy
from scipy.linalg.cython_blas cimport zgemm

from ..errors import ExcitranError, StiffnessError

cnp.import_array()

ctypedef double complex zcomplex


cdef inline double _cmod(zcomplex z) noexcept nogil:
    cdef double re = z.real
    cdef double im = z.imag
    return (re * re + im * im) ** 0.5


cdef void _rhs(int n, zcomplex* M, zcomplex* MH, double gamma, zcomplex* K,
               double t, zcomplex* y, zcomplex* out) noexcept nogil:
    # out[:nn] = -(M@rho + rho@MH) + gamma*(diag(rho) - rho)
    # row-major X@Y through column-major zgemm: pass (a=Y, b=X)
    cdef int nn = n * n
    cdef int i, j
    cdef zcomplex neg_one = -1.0
    cdef zcomplex one = 1.0
    cdef zcomplex zero = 0.0
    cdef zcomplex tkr = 0.0
    cdef zcomplex tr = 0.0
    zgemm("N", "N", &n, &n, &n, &neg_one, y, &n, M, &n, &zero, out, &n)
    zgemm("N", "N", &n, &n, &n, &neg_one, MH, &n, y, &n, &one, out, &n)
    if gamma != 0.0:
        for i in range(n):
            for j in range(n):
                if i != j:
                    out[i * n + j] = out[i * n + j] - gamma * y[i * n + j]
    for i in range(n):
        tr = tr + y[i * n + i]
        for j in range(n):
            tkr = tkr + K[i * n + j] * y[j * n + i]
    out[nn] = 2.0 * tkr
    out[nn + 1] = (2.0 * t) * tkr
    out[nn + 2] = tr


cdef double _error_norm(int m, zcomplex* e, zcomplex* y, zcomplex* ynew,
                        double rtol, double atol) noexcept nogil:
    cdef double err = 0.0
    cdef double sc, ay, an, r
    cdef int i
    for i in range(m):
        ay = _cmod(y[i])
        an = _cmod(ynew[i])
        sc = atol + rtol * (ay if ay > an else an)
        r = _cmod(e[i]) / sc
        if r > err:
            err = r
    return err


def integrate_rho(M, double gamma_phi, K, rho0, double t0, sample_times,
                  double rtol, double atol, long max_steps=5_000_000):
    """Propagate rho0 from t0 through the given absolute sample times.

    Returns (trajectory (T,N,N) complex, flux (3,) float, n_steps, min_step).
    """
    cdef cnp.ndarray[zcomplex, ndim=2, mode="c"] M_ = np.ascontiguousarray(M, dtype=complex)
    cdef cnp.ndarray[zcomplex, ndim=2, mode="c"] K_ = np.ascontiguousarray(K, dtype=complex)
    cdef cnp.ndarray[zcomplex, ndim=2, mode="c"] MH_ = np.ascontiguousarray(M_.conj().T)
    cdef cnp.ndarray[double, ndim=1, mode="c"] ts_ = np.asarray(sample_times, dtype=float)
    cdef int n = M_.shape[0]
    cdef int nn = n * n
    cdef int m = nn + 3
    cdef Py_ssize_t n_samples = ts_.shape[0]

    if n_samples == 0:
        raise ValueError("sample_times must be non-empty")
    if np.any(np.diff(ts_) < 0) or ts_[0] < t0:
        raise ValueError("sample_times must be ascending and >= t0")

    cdef cnp.ndarray[zcomplex, ndim=1, mode="c"] y_ = np.empty(m, dtype=complex)
    y_[:nn] = np.asarray(rho0, dtype=complex).reshape(-1)
    y_[nn:] = 0.0
    cdef cnp.ndarray[zcomplex, ndim=3, mode="c"] traj_ = np.empty((n_samples, n, n), dtype=complex)
    cdef cnp.ndarray[zcomplex, ndim=2, mode="c"] k_ = np.empty((7, m), dtype=complex)
    cdef cnp.ndarray[zcomplex, ndim=1, mode="c"] work_ = np.empty(m, dtype=complex)
    cdef cnp.ndarray[zcomplex, ndim=1, mode="c"] err_ = np.empty(m, dtype=complex)

    cdef zcomplex* y = &y_[0]
    cdef zcomplex* work = &work_[0]
    cdef zcomplex* evec = &err_[0]
    cdef zcomplex* kp = &k_[0, 0]
    cdef zcomplex* Mp = &M_[0, 0]
    cdef zcomplex* MHp = &MH_[0, 0]
    cdef zcomplex* Kp = &K_[0, 0]
    cdef zcomplex* trajp = &traj_[0, 0, 0]
    cdef double* tsp = &ts_[0]

    # Dormand-Prince 5(4) tableau; row s of A feeds stage s+1, the last row
    # holding the 5th-order weights (FSAL).
    cdef double[7] C = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0]
    cdef double[6][6] A
    cdef double[7] E
    A[0][0] = 1.0 / 5.0
    A[1][0] = 3.0 / 40.0; A[1][1] = 9.0 / 40.0
    A[2][0] = 44.0 / 45.0; A[2][1] = -56.0 / 15.0; A[2][2] = 32.0 / 9.0
    A[3][0] = 19372.0 / 6561.0; A[3][1] = -25360.0 / 2187.0
    A[3][2] = 64448.0 / 6561.0; A[3][3] = -212.0 / 729.0
    A[4][0] = 9017.0 / 3168.0; A[4][1] = -355.0 / 33.0; A[4][2] = 46732.0 / 5247.0
    A[4][3] = 49.0 / 176.0; A[4][4] = -5103.0 / 18656.0
    A[5][0] = 35.0 / 384.0; A[5][1] = 0.0; A[5][2] = 500.0 / 1113.0
    A[5][3] = 125.0 / 192.0; A[5][4] = -2187.0 / 6784.0; A[5][5] = 11.0 / 84.0
    E[0] = 71.0 / 57600.0; E[1] = 0.0; E[2] = -71.0 / 16695.0; E[3] = 71.0 / 1920.0
    E[4] = -17253.0 / 339200.0; E[5] = 22.0 / 525.0; E[6] = -1.0 / 40.0

    cdef double SAFETY = 0.9, MIN_FACTOR = 0.2, MAX_FACTOR = 5.0
    cdef double EPS = 2.220446049250313e-16

    cdef double t = t0
    cdef double t_end = tsp[n_samples - 1]
    cdef Py_ssize_t isample = 0
    while isample < n_samples and tsp[isample] <= t:
        memcpy(trajp + isample * nn, y, nn * sizeof(zcomplex))
        isample += 1
    if isample == n_samples:
        return traj_, np.zeros(3), 0, 0.0

    cdef double h, d0, d1, d2, dm, h1, sc, v
    cdef long n_steps = 0
    cdef double min_step = -1.0
    cdef double t_target, h_use, err, factor, hmin
    cdef bint clipped
    cdef int i, s, j, status = 0
    cdef zcomplex acc

    with nogil:
        _rhs(n, Mp, MHp, gamma_phi, Kp, t, y, kp)

        # initial step size (Hairer-style heuristic)
        d0 = 0.0
        d1 = 0.0
        for i in range(m):
            sc = atol + rtol * _cmod(y[i])
            v = _cmod(y[i]) / sc
            if v > d0:
                d0 = v
            v = _cmod(kp[i]) / sc
            if v > d1:
                d1 = v
        h = 0.01 * d0 / d1 if (d0 >= 1e-5 and d1 >= 1e-10) else 1e-6
        if h > t_end - t:
            h = t_end - t
        for i in range(m):
            work[i] = y[i] + h * kp[i]
        _rhs(n, Mp, MHp, gamma_phi, Kp, t + h, work, evec)
        d2 = 0.0
        for i in range(m):
            sc = atol + rtol * _cmod(y[i])
            v = _cmod(evec[i] - kp[i]) / sc
            if v > d2:
                d2 = v
        d2 /= h
        dm = d1 if d1 > d2 else d2
        h1 = pow(0.01 / dm, 0.2) if dm > 1e-15 else (1e-6 if 1e-6 > h * 1e-3 else h * 1e-3)
        h = 100.0 * h
        if h1 < h:
            h = h1
        if t_end - t < h:
            h = t_end - t
        if h < 1e-12:
            h = 1e-12

        while isample < n_samples and status == 0:
            if n_steps >= max_steps:
                status = 2
                break
            t_target = tsp[isample]
            clipped = t + h >= t_target
            h_use = (t_target - t) if clipped else h

            for s in range(1, 7):
                for i in range(m):
                    acc = y[i]
                    for j in range(s):
                        if A[s - 1][j] != 0.0:
                            acc = acc + (h_use * A[s - 1][j]) * kp[j * m + i]
                    work[i] = acc
                _rhs(n, Mp, MHp, gamma_phi, Kp, t + C[s] * h_use, work, kp + s * m)
            # work now holds the 5th-order solution (stage-7 input, FSAL)
            for i in range(m):
                acc = 0.0
                for j in range(7):
                    if E[j] != 0.0:
                        acc = acc + E[j] * kp[j * m + i]
                evec[i] = h_use * acc
            err = _error_norm(m, evec, y, work, rtol, atol)
            n_steps += 1

            if err <= 1.0:
                t = t_target if clipped else t + h_use
                memcpy(y, work, m * sizeof(zcomplex))
                memcpy(kp, kp + 6 * m, m * sizeof(zcomplex))
                if min_step < 0.0 or h_use < min_step:
                    min_step = h_use
                while isample < n_samples and tsp[isample] <= t:
                    memcpy(trajp + isample * nn, y, nn * sizeof(zcomplex))
                    isample += 1
                if not clipped:
                    if err == 0.0:
                        factor = MAX_FACTOR
                    else:
                        factor = SAFETY * pow(err, -0.2)
                        if factor > MAX_FACTOR:
                            factor = MAX_FACTOR
                        if factor < MIN_FACTOR:
                            factor = MIN_FACTOR
                    h = h * factor
            else:
                factor = SAFETY * pow(err, -0.2)
                if factor < MIN_FACTOR:
                    factor = MIN_FACTOR
                h = h_use * factor
                hmin = 16.0 * EPS * (fabs(t) if fabs(t) > 1.0 else 1.0)
                if h < hmin:
                    status = 1
                    break

    if status == 1:
        raise StiffnessError(f"step size underflow at t={t:.6g} ps", min_step=h)
    if status == 2:
        raise ExcitranError(f"step budget exceeded ({max_steps} steps) at t={t:.6g} ps")

    flux = np.real(y_[nn:]).astype(float)
    return traj_, flux, n_steps, (0.0 if min_step < 0.0 else min_step)
