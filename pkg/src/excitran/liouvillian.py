"""The pure-dephasing generator and its representations.

The equation of motion implemented here is

    drho/dt = -i [H, rho] + gamma_phi * (diag(rho) - rho) - {G, rho}

with H the site Hamiltonian converted to rad/ps, and G = Gamma*I + K the
positive rate operator collecting uniform recombination (Gamma) and trapping
(K, built from site projectors or eigenstate projectors). Under this
convention a single decaying site obeys rho(t) = exp(-2*(Gamma+k)*t) rho(0),
so the trapped fraction of a one-site model is k/(k+Gamma).

Two representations are provided: a matrix-free application (`apply_generator`,
used by the adaptive propagator) and the dense N^2 x N^2 superoperator in
row-major vectorization (`build_superoperator`, used for resolvent solves and
as a cross-validation oracle).
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import _kernels, model, units
from .errors import ExcitranError, GeneratorNotInvertibleError

MAX_SUPEROPERATOR_SITES = 64

TRAP_MODES = ("site_based", "exciton_based", "none")


@dataclass(frozen=True)
class TrapSpec:
    """Where and how fast excitation leaves the network.

    `targets` holds site labels for site_based mode, or eigenstate indices
    (0 = lowest energy) for exciton_based mode.
    """

    mode: str = "none"
    targets: tuple = ()
    rate: float = 1.0

    def __post_init__(self):
        if self.mode not in TRAP_MODES:
            raise ExcitranError(f"unknown trap mode {self.mode!r}")
        if self.rate < 0:
            raise ExcitranError("trap rate must be >= 0")
        object.__setattr__(self, "targets", tuple(self.targets))
        if self.mode != "none" and not self.targets:
            raise ExcitranError(f"trap mode {self.mode!r} requires targets")


@dataclass(frozen=True, eq=False)
class LindbladModel:
    """A site graph plus the three incoherent rates (all ps^-1)."""

    graph: model.SiteGraph
    gamma_phi: float = 0.0
    gamma_recomb: float = 0.0
    trap: TrapSpec = TrapSpec()

    def __post_init__(self):
        if self.gamma_phi < 0:
            raise ExcitranError("gamma_phi must be >= 0")
        if self.gamma_recomb < 0:
            raise ExcitranError("gamma_recomb must be >= 0")
        if self.trap.mode == "exciton_based":
            n = self.graph.n_sites
            for idx in self.trap.targets:
                if not (0 <= int(idx) < n):
                    raise ExcitranError(
                        f"eigenstate index {idx} outside 0..{n - 1}"
                    )

    @property
    def n_sites(self):
        return self.graph.n_sites


@dataclass(frozen=True, eq=False)
class SuperOperator:
    """Dense generator in row-major vectorization: vec(rho)[i*N+j] = rho[i,j]."""

    data: np.ndarray
    n_sites: int


def trap_operator(m):
    """The positive trap rate operator K (N x N) for a model."""
    n = m.graph.n_sites
    K = np.zeros((n, n), dtype=complex)
    if m.trap.mode == "none" or m.trap.rate == 0.0:
        return K
    if m.trap.mode == "site_based":
        for label in m.trap.targets:
            i = m.graph.index_of(label)
            K[i, i] += m.trap.rate
    else:
        _, vecs = model.spectrum(m.graph)
        for idx in m.trap.targets:
            v = vecs[:, int(idx)]
            K += m.trap.rate * np.outer(v, v.conj())
    return K


def hamiltonian_rad(graph):
    """Site Hamiltonian in rad/ps (the single cm^-1 conversion point)."""
    return units.TWO_PI_C * graph.hamiltonian_cm1().astype(complex)


def drift_matrix(m):
    """M = i*H + Gamma*I + K; the generator is
    drho/dt = -(M rho + rho M^dag) + gamma_phi*(diag(rho) - rho)."""
    n = m.graph.n_sites
    K = trap_operator(m)
    return 1j * hamiltonian_rad(m.graph) + m.gamma_recomb * np.eye(n) + K, K


def apply_generator(m, rho):
    """Time derivative of rho under the model's generator (matrix-free)."""
    rho = np.asarray(rho, dtype=complex)
    n = m.graph.n_sites
    if rho.shape != (n, n):
        raise ValueError(f"rho shape {rho.shape} does not match {n} sites")
    M, _ = drift_matrix(m)
    out = -(M @ rho + rho @ M.conj().T)
    if m.gamma_phi != 0.0:
        out -= m.gamma_phi * rho
        idx = np.arange(n)
        out[idx, idx] += m.gamma_phi * np.diag(rho)
    return out


def build_superoperator(m):
    """Dense superoperator such that unvec(L @ vec(rho)) == apply_generator."""
    n = m.graph.n_sites
    if n > MAX_SUPEROPERATOR_SITES:
        raise ExcitranError(
            f"dense superoperator limited to {MAX_SUPEROPERATOR_SITES} sites, got {n}"
        )
    return SuperOperator(data=_superoperator_dense(m), n_sites=n)


def _superoperator_dense(m):
    n = m.graph.n_sites
    H = hamiltonian_rad(m.graph)
    M, _ = drift_matrix(m)
    G = M - 1j * H  # Gamma*I + K
    eye = np.eye(n)
    # vec(A B C) = (A kron C^T) vec(B) in row-major vectorization
    L = -1j * (np.kron(H, eye) - np.kron(eye, H.T))
    L -= np.kron(G, eye) + np.kron(eye, G.T)
    if m.gamma_phi != 0.0:
        deph = np.full(n * n, -m.gamma_phi, dtype=complex)
        deph[np.arange(n) * (n + 1)] = 0.0
        L += np.diag(deph)
    return L


def propagate(m, rho0, sample_times, rtol=1e-9, atol=1e-9):
    """Trajectory of rho at the given times (ps) via adaptive integration.

    Times must be sorted ascending and >= 0. Each sample is re-symmetrized
    to counter Hermiticity drift. Raises StiffnessError on step underflow.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    n = m.graph.n_sites
    if rho0.shape != (n, n):
        raise ValueError(f"rho0 shape {rho0.shape} does not match {n} sites")
    sample_times = np.asarray(sample_times, dtype=float)
    if sample_times.size == 0:
        return np.empty((0, n, n), dtype=complex)
    if np.any(np.diff(sample_times) < 0) or sample_times[0] < 0:
        raise ValueError("sample_times must be sorted ascending and >= 0")
    M, K = drift_matrix(m)
    traj, _, _, _ = _kernels.integrate_rho(
        M, m.gamma_phi, K, rho0, 0.0, sample_times, rtol, atol
    )
    return 0.5 * (traj + np.conj(np.transpose(traj, (0, 2, 1))))


def propagate_flux(m, rho0, t0, t_end, rtol=1e-9, atol=1e-9):
    """Integrate from t0 to t_end, accumulating the trapping/trace integrals.

    Returns (rho_end, eta_part, tau_part, trace_part) where
    eta_part = 2*int tr(K rho) dt, tau_part = 2*int t*tr(K rho) dt and
    trace_part = int tr(rho) dt over [t0, t_end] with absolute time weights.
    """
    M, K = drift_matrix(m)
    traj, flux, _, _ = _kernels.integrate_rho(
        M, m.gamma_phi, K, np.asarray(rho0, dtype=complex), t0, [t_end], rtol, atol
    )
    rho_end = 0.5 * (traj[-1] + traj[-1].conj().T)
    return rho_end, float(flux[0]), float(flux[1]), float(flux[2])


def resolvent_solve(sop, b):
    """Solve L x = b for the dense superoperator, with a residual guarantee.

    Raises GeneratorNotInvertibleError when L is singular or numerically
    ill-conditioned (e.g. no recombination and no reachable trap).
    """
    L = sop.data
    b = np.asarray(b, dtype=complex).reshape(-1)
    if b.shape[0] != L.shape[0]:
        raise ValueError(f"b has length {b.shape[0]}, expected {L.shape[0]}")
    try:
        lu, piv = scipy.linalg.lu_factor(L, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise GeneratorNotInvertibleError(f"generator not invertible: {exc}") from exc
    anorm = np.linalg.norm(L, 1)
    rcond = _rcond_from_lu(lu, piv, anorm)
    if not np.isfinite(rcond) or rcond < 1e-14:
        raise GeneratorNotInvertibleError(
            f"generator not invertible (reciprocal condition estimate {rcond:.2e})"
        )
    x = scipy.linalg.lu_solve((lu, piv), b, check_finite=False)
    bnorm = np.max(np.abs(b))
    if bnorm > 0:
        # one step of iterative refinement, then enforce the residual contract
        r = b - L @ x
        x += scipy.linalg.lu_solve((lu, piv), r, check_finite=False)
        res = np.max(np.abs(L @ x - b))
        if res >= 1e-9 * bnorm:
            raise GeneratorNotInvertibleError(
                f"resolvent residual {res:.2e} exceeds 1e-9*|b| ({1e-9 * bnorm:.2e})"
            )
    return x


def _rcond_from_lu(lu, piv, anorm):
    gecon = scipy.linalg.get_lapack_funcs("gecon", (lu,))
    rcond, info = gecon(lu, anorm)
    if info != 0:
        return 0.0
    return float(rcond)


def expm_propagate(m, rho0, sample_times):
    """Dense exp(L t) reference propagation (small N oracle, exact output)."""
    sop = build_superoperator(m)
    n = m.graph.n_sites
    v0 = np.asarray(rho0, dtype=complex).reshape(-1)
    out = np.empty((len(sample_times), n, n), dtype=complex)
    for i, t in enumerate(sample_times):
        out[i] = (scipy.linalg.expm(sop.data * t) @ v0).reshape(n, n)
    return out
