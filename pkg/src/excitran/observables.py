"""Populations, delocalization, and correlation measures.

All measures operate on the single-excitation density matrix in the site
basis. Because recombination and trapping leak probability out of that
block, a trace below one is interpreted as weight in the (unmodeled)
zero-exciton state; the reduction and entanglement formulas below account
for that vacuum weight explicitly.

Convention: delocalization uses the natural log, von Neumann entropies and
mutual information use log base 2 (bits).
"""

from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .errors import ExcitranError, FitConvergenceError


@dataclass(frozen=True)
class Partition:
    """A named subsystem: a set of site labels."""

    name: str
    site_labels: tuple

    def __post_init__(self):
        labels = tuple(self.site_labels)
        if len(set(labels)) != len(labels):
            raise ExcitranError(f"partition {self.name!r} has duplicate labels")
        if not labels:
            raise ExcitranError(f"partition {self.name!r} is empty")
        object.__setattr__(self, "site_labels", labels)

    def indices(self, graph):
        return [graph.index_of(lab) for lab in self.site_labels]


@dataclass(frozen=True)
class TimescaleFit:
    """Double-exponential fit y0 + A1*exp(-t/t1) + A2*exp(-t/t2), t1 <= t2."""

    y0: float
    A1: float
    t1: float
    A2: float
    t2: float
    residual_rms: float
    degenerate: bool = False


def populations(rho):
    """Site populations: real parts of the diagonal."""
    return np.real(np.diag(rho)).copy()


def delocalization(rho):
    """Shannon entropy (natural log) of the normalized site populations."""
    p = populations(rho)
    total = p.sum()
    if total <= 0:
        raise ExcitranError("delocalization undefined: total population is zero")
    lam = np.clip(p / total, 0.0, None)
    nz = lam[lam > 0]
    return float(-np.sum(nz * np.log(nz)))


def reduced_state(rho, graph, part):
    """Single-excitation reduced state over a partition.

    Returns a (|A|+1)-dimensional density matrix: index 0 is the vacuum,
    carrying all weight not found on the partition's sites, and the excited
    block is rho restricted to the partition (coherences within it kept).
    """
    idx = part.indices(graph)
    k = len(idx)
    out = np.zeros((k + 1, k + 1), dtype=complex)
    block = np.asarray(rho, dtype=complex)[np.ix_(idx, idx)]
    out[1:, 1:] = block
    out[0, 0] = 1.0 - np.real(np.trace(block))
    return out


def von_neumann_entropy(rho):
    """Entropy in bits of a density matrix (eigenvalues clipped at zero)."""
    lam = np.clip(np.linalg.eigvalsh(rho), 0.0, None)
    nz = lam[lam > 1e-300]
    return float(-np.sum(nz * np.log2(nz)))


def _check_disjoint(a, b):
    overlap = set(a.site_labels) & set(b.site_labels)
    if overlap:
        raise ExcitranError(f"partitions {a.name!r} and {b.name!r} overlap: {sorted(overlap)}")


def mutual_information(rho, graph, a, b):
    """Quantum mutual information S_A + S_B - S_AB in bits."""
    _check_disjoint(a, b)
    ab = Partition(name=f"{a.name}+{b.name}", site_labels=a.site_labels + b.site_labels)
    sa = von_neumann_entropy(reduced_state(rho, graph, a))
    sb = von_neumann_entropy(reduced_state(rho, graph, b))
    sab = von_neumann_entropy(reduced_state(rho, graph, ab))
    return sa + sb - sab


def negativity(rho, graph, a, b):
    """Entanglement negativity across the A|B cut of the reduced state.

    Closed form in the single-exciton manifold:
    sqrt(a00^2 + 4*sum_{n in A, m in B} |rho_nm|^2) - a00, with a00 the
    zero-exciton weight 1 - tr(rho restricted to A+B).
    """
    _check_disjoint(a, b)
    rho = np.asarray(rho, dtype=complex)
    ia = a.indices(graph)
    ib = b.indices(graph)
    pop = np.real(np.diag(rho))
    a00 = 1.0 - float(pop[ia].sum() + pop[ib].sum())
    cross = rho[np.ix_(ia, ib)]
    s = float(np.sum(np.abs(cross) ** 2))
    return float(np.sqrt(a00 * a00 + 4.0 * s) - a00)


def concurrence(rho, graph, m, n):
    """Pairwise concurrence 2*|rho_mn| between two sites."""
    if m == n:
        raise ExcitranError("concurrence requires two distinct sites")
    i = graph.index_of(m)
    j = graph.index_of(n)
    return float(2.0 * np.abs(rho[i, j]))


def band_populations(rho, graph, grouping, basis="site"):
    """Population per named group of sites.

    basis="site": sums the site populations over each partition.
    basis="exciton": rotates into the eigenbasis and assigns each
    eigenstate's population to the partition containing its
    maximum-|component| site.
    """
    seen = set()
    for part in grouping:
        dup = seen & set(part.site_labels)
        if dup:
            raise ExcitranError(f"overlapping groups at {sorted(dup)}")
        seen |= set(part.site_labels)

    out = {part.name: 0.0 for part in grouping}
    if basis == "site":
        pop = populations(rho)
        for part in grouping:
            out[part.name] = float(pop[part.indices(graph)].sum())
        return out
    if basis != "exciton":
        raise ExcitranError(f"unknown basis {basis!r}")

    from .model import spectrum

    _, vecs = spectrum(graph)
    pop_exc = np.real(np.diag(vecs.conj().T @ np.asarray(rho, dtype=complex) @ vecs))
    labels = graph.labels
    owner = {}
    for part in grouping:
        for lab in part.site_labels:
            owner[lab] = part.name
    for j in range(graph.n_sites):
        dominant = labels[int(np.argmax(np.abs(vecs[:, j])))]
        name = owner.get(dominant)
        if name is not None:
            out[name] += float(pop_exc[j])
    return out


def _double_exp(t, y0, a1, t1, a2, t2):
    return y0 + a1 * np.exp(-t / t1) + a2 * np.exp(-t / t2)


def fit_timescales(times, values, t_init=(0.2, 2.0), max_iter=2000):
    """Fit y0 + A1*exp(-t/t1) + A2*exp(-t/t2) to a delocalization trace.

    Deterministic initialization: y0 from the last sample, timescales from
    `t_init`, amplitudes from a linear solve at those fixed timescales, then
    full nonlinear refinement. Timescales are sorted so t1 <= t2.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise ExcitranError("times and values must be 1-D arrays of equal length")
    if t.size < 10:
        raise ExcitranError(f"need at least 10 samples, got {t.size}")

    spread = float(np.max(y) - np.min(y))
    if spread < 1e-12 * max(1.0, abs(float(y[0]))):
        return TimescaleFit(
            y0=float(np.mean(y)), A1=0.0, t1=float(t_init[0]), A2=0.0,
            t2=float(t_init[1]), residual_rms=float(np.std(y)), degenerate=True,
        )

    y0_guess = float(y[-1])
    t1g, t2g = float(t_init[0]), float(t_init[1])
    basis = np.column_stack([np.exp(-t / t1g), np.exp(-t / t2g)])
    amp, *_ = np.linalg.lstsq(basis, y - y0_guess, rcond=None)
    p0 = [y0_guess, float(amp[0]), t1g, float(amp[1]), t2g]

    def residual(p):
        return _double_exp(t, *p) - y

    span = float(t[-1] - t[0])
    lb = [-np.inf, -np.inf, 1e-6, -np.inf, 1e-6]
    ub = [np.inf, np.inf, 100.0 * span, np.inf, 100.0 * span]
    p0[2] = min(max(p0[2], lb[2]), ub[4])
    p0[4] = min(max(p0[4], lb[4]), ub[4])
    result = scipy.optimize.least_squares(
        residual, p0, bounds=(lb, ub), max_nfev=max_iter, method="trf"
    )
    y0f, a1, t1, a2, t2 = result.x
    if t1 > t2:
        t1, t2 = t2, t1
        a1, a2 = a2, a1
    rms = float(np.sqrt(np.mean(result.fun**2)))
    fit = TimescaleFit(
        y0=float(y0f), A1=float(a1), t1=float(t1), A2=float(a2), t2=float(t2),
        residual_rms=rms,
    )
    if not result.success:
        raise FitConvergenceError(
            f"timescale fit did not converge: {result.message}", best=fit
        )
    return fit
