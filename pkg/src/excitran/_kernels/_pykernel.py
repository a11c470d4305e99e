"""Pure-numpy reference implementation of the propagation kernel.

Semantics are identical to the compiled kernel in ``_core``: an adaptive
Dormand-Prince 5(4) integrator over the augmented state

    y = [vec(rho) (row-major), s_eta, s_tau, s_trace]

with derivative

    drho/dt   = -(M rho + rho M^dag) + gamma_phi * (diag(rho) - rho)
    s_eta'    = 2 tr(K rho)
    s_tau'    = 2 t tr(K rho)
    s_trace'  = tr(rho)

where M = i*H + Gamma*I + K collects the coherent part and every
anti-Hermitian decay channel. Local error is controlled per element through
|e_i| <= atol + rtol*max(|y_i|, |y_new_i|).
"""

import numpy as np

from ..errors import ExcitranError, StiffnessError

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0


def _rhs(t, y, n, M, MH, gamma_phi, K, out):
    rho = y[: n * n].reshape(n, n)
    drho = out[: n * n].reshape(n, n)
    np.matmul(M, rho, out=drho)
    drho += rho @ MH
    np.negative(drho, out=drho)
    if gamma_phi != 0.0:
        diag = np.einsum("ii->i", rho).copy()
        drho -= gamma_phi * rho
        idx = np.arange(n)
        drho[idx, idx] += gamma_phi * diag
    tkr = np.einsum("ij,ji->", K, rho)
    tr = np.einsum("ii->", rho)
    out[n * n] = 2.0 * tkr
    out[n * n + 1] = 2.0 * t * tkr
    out[n * n + 2] = tr
    return out


def _error_norm(e, y, ynew, rtol, atol):
    scale = atol + rtol * np.maximum(np.abs(y), np.abs(ynew))
    return float(np.max(np.abs(e) / scale))


def integrate_rho(M, gamma_phi, K, rho0, t0, sample_times, rtol, atol, max_steps=5_000_000):
    """Propagate rho0 from t0 through the given absolute sample times.

    Returns (trajectory (T,N,N) complex, flux (3,) float, n_steps, min_step)
    with flux = [2*int tr(K rho) dt, 2*int t*tr(K rho) dt, int tr(rho) dt]
    accumulated over [t0, sample_times[-1]].
    """
    M = np.ascontiguousarray(M, dtype=complex)
    K = np.ascontiguousarray(K, dtype=complex)
    n = M.shape[0]
    MH = np.ascontiguousarray(M.conj().T)
    sample_times = np.asarray(sample_times, dtype=float)
    if sample_times.size == 0:
        raise ValueError("sample_times must be non-empty")
    if np.any(np.diff(sample_times) < 0) or sample_times[0] < t0:
        raise ValueError("sample_times must be ascending and >= t0")

    nn = n * n
    y = np.empty(nn + 3, dtype=complex)
    y[:nn] = np.asarray(rho0, dtype=complex).reshape(-1)
    y[nn:] = 0.0

    traj = np.empty((sample_times.size, n, n), dtype=complex)
    t = float(t0)
    t_end = float(sample_times[-1])

    isample = 0
    while isample < sample_times.size and sample_times[isample] <= t:
        traj[isample] = y[:nn].reshape(n, n)
        isample += 1
    if isample == sample_times.size:
        return traj, np.zeros(3), 0, 0.0

    k = np.empty((7, nn + 3), dtype=complex)
    work = np.empty(nn + 3, dtype=complex)
    _rhs(t, y, n, M, MH, gamma_phi, K, k[0])

    # initial step size (Hairer-style heuristic)
    scale = atol + rtol * np.abs(y)
    d0 = float(np.max(np.abs(y) / scale))
    d1 = float(np.max(np.abs(k[0]) / scale))
    h = 0.01 * d0 / d1 if (d0 >= 1e-5 and d1 >= 1e-10) else 1e-6
    h = min(h, t_end - t)
    ytrial = y + h * k[0]
    _rhs(t + h, ytrial, n, M, MH, gamma_phi, K, work)
    d2 = float(np.max(np.abs(work - k[0]) / scale)) / h
    dm = max(d1, d2)
    h1 = (0.01 / dm) ** 0.2 if dm > 1e-15 else max(1e-6, h * 1e-3)
    h = max(min(100.0 * h, h1, t_end - t), 1e-12)

    n_steps = 0
    min_step = np.inf
    eps = np.finfo(float).eps
    while isample < sample_times.size:
        if n_steps >= max_steps:
            raise ExcitranError(f"step budget exceeded ({max_steps} steps) at t={t:.6g} ps")
        t_target = float(sample_times[isample])
        clipped = t + h >= t_target
        h_use = t_target - t if clipped else h

        for s in range(1, 7):
            work[:] = y
            for j in range(s):
                a = _A[s][j]
                if a != 0.0:
                    work += (h_use * a) * k[j]
            _rhs(t + _C[s] * h_use, work, n, M, MH, gamma_phi, K, k[s])
        # stage 7 input is the 5th-order solution (FSAL)
        ynew = work
        err_vec = h_use * (_E @ k)
        err = _error_norm(err_vec, y, ynew, rtol, atol)
        n_steps += 1

        if err <= 1.0:
            t = t_target if clipped else t + h_use
            y, work = ynew.copy(), y
            k[0] = k[6]
            min_step = min(min_step, h_use)
            while isample < sample_times.size and sample_times[isample] <= t:
                traj[isample] = y[:nn].reshape(n, n)
                isample += 1
            if not clipped:
                factor = _MAX_FACTOR if err == 0.0 else min(
                    _MAX_FACTOR, max(_MIN_FACTOR, _SAFETY * err ** -0.2)
                )
                h *= factor
        else:
            factor = max(_MIN_FACTOR, _SAFETY * err ** -0.2)
            h = h_use * factor
            hmin = 16.0 * eps * max(abs(t), 1.0)
            if h < hmin:
                raise StiffnessError(f"step size underflow at t={t:.6g} ps", min_step=h)

    flux = np.real(y[nn:]).astype(float)
    return traj, flux, n_steps, (0.0 if not np.isfinite(min_step) else float(min_step))
