"""Transport efficiency, transfer time, parameter sweeps, and scenarios.

The efficiency of a model is the total probability ever delivered to its
traps, eta = 2 * int_0^inf tr(K rho(t)) dt, and the transfer time is the
normalized first moment tau = (2/eta) * int_0^inf t tr(K rho(t)) dt. Both
are computed either through the resolvent of the dense superoperator (two
linear solves) or by adaptive time quadrature along the propagated
trajectory; the two routes are independent and cross-check each other.
"""

import concurrent.futures
import math
from dataclasses import dataclass, field

import numpy as np

from . import liouvillian, model, observables
from .errors import ExcitranError, HorizonError
from .liouvillian import LindbladModel, TrapSpec

# Reference point for the temperature -> dephasing map: an Ohmic bath with
# reorganization energy 35 cm^-1 and cutoff 150 cm^-1 at 77 K gives
# gamma_phi = 3 ps^-1. The map is linear in T and in E_r/omega_c.
GAMMA_PHI_ANCHOR_PS = 3.0
T_ANCHOR_K = 77.0
ER_ANCHOR_CM1 = 35.0
OMEGA_C_ANCHOR_CM1 = 150.0


@dataclass(frozen=True)
class BathSpec:
    """Ohmic bath parameters feeding the temperature -> dephasing map."""

    reorganization_cm1: float = ER_ANCHOR_CM1
    cutoff_cm1: float = OMEGA_C_ANCHOR_CM1
    spectral_form: str = "ohmic"

    def __post_init__(self):
        if self.reorganization_cm1 <= 0 or self.cutoff_cm1 <= 0:
            raise ExcitranError("bath reorganization energy and cutoff must be > 0")
        if self.spectral_form != "ohmic":
            raise ExcitranError(f"unsupported spectral form {self.spectral_form!r}")


def dephasing_from_temperature(temperature_k, bath=BathSpec()):
    """Pure dephasing rate (ps^-1) for a temperature and Ohmic bath.

    Linear in temperature and in E_r/omega_c, calibrated so the reference
    bath (35 cm^-1, 150 cm^-1) gives 3 ps^-1 at 77 K (hence ~11.7 ps^-1 at
    300 K); gamma(2T) = 2*gamma(T) exactly.
    """
    if temperature_k <= 0:
        raise ExcitranError("temperature must be > 0 K")
    ratio = (bath.reorganization_cm1 / bath.cutoff_cm1) / (
        ER_ANCHOR_CM1 / OMEGA_C_ANCHOR_CM1
    )
    return GAMMA_PHI_ANCHOR_PS * (temperature_k / T_ANCHOR_K) * ratio


@dataclass(frozen=True, eq=False)
class TransportResult:
    """Efficiency and transfer time with method and residual diagnostics."""

    eta: float
    tau: float
    method: str
    residual: float
    diagnostics: dict = field(default_factory=dict)


def efficiency_resolvent(m, rho0):
    """eta and tau from two resolvent solves on the dense superoperator."""
    if m.trap.mode == "none":
        raise ExcitranError("efficiency requires a trap (trap mode is 'none')")
    K = liouvillian.trap_operator(m)
    sop = liouvillian.build_superoperator(m)
    b = np.asarray(rho0, dtype=complex).reshape(-1)
    x = liouvillian.resolvent_solve(sop, b)
    n = m.n_sites
    X = x.reshape(n, n)
    eta = float(-2.0 * np.real(np.einsum("ij,ji->", K, X)))
    y = liouvillian.resolvent_solve(sop, x)
    Y = y.reshape(n, n)
    residual = float(np.max(np.abs(sop.data @ x - b)))
    if eta <= 0.0:
        return TransportResult(eta=max(eta, 0.0), tau=math.inf, method="resolvent",
                               residual=residual)
    tau = float(2.0 * np.real(np.einsum("ij,ji->", K, Y))) / eta
    return TransportResult(eta=eta, tau=tau, method="resolvent", residual=residual)


def efficiency_quadrature(m, rho0, horizon=None, trace_tol=1e-6, rtol=1e-9, atol=1e-9):
    """eta and tau by integrating the trapping flux along the trajectory.

    Integration proceeds in geometrically growing segments until the
    residual trace drops below `trace_tol` or the horizon cap
    50*max(1/k, 1/(2*Gamma)) is reached; hitting the cap with residual
    trace above tolerance raises HorizonError. The unintegrated tail is
    bounded by the residual trace and reported in the diagnostics.
    """
    k_rate = m.trap.rate if m.trap.mode != "none" else 0.0
    scales = []
    if k_rate > 0:
        scales.append(1.0 / k_rate)
    if m.gamma_recomb > 0:
        scales.append(1.0 / (2.0 * m.gamma_recomb))
    if not scales and horizon is None:
        raise HorizonError(
            "no decay channel: trace cannot fall below tolerance", residual_trace=1.0
        )
    cap = 50.0 * max(scales) if scales else float(horizon)

    rho = np.asarray(rho0, dtype=complex)
    t = 0.0
    eta_acc = tau_acc = trace_acc = 0.0
    seg = float(horizon) if horizon is not None else min(cap, 10.0)
    residual_trace = float(np.real(np.trace(rho)))
    while residual_trace >= trace_tol:
        if t >= cap:
            raise HorizonError(
                f"horizon cap {cap:.6g} ps reached before trace < {trace_tol:g}",
                residual_trace=residual_trace,
            )
        t_next = min(t + seg, cap)
        rho, de, dt_, dtr = liouvillian.propagate_flux(m, rho, t, t_next, rtol=rtol, atol=atol)
        eta_acc += de
        tau_acc += dt_
        trace_acc += dtr
        t = t_next
        seg *= 2.0
        residual_trace = float(np.real(np.trace(rho)))

    eta = eta_acc
    tau = tau_acc / eta if eta > 0 else math.inf
    diagnostics = {
        "residual_trace": residual_trace,
        "eta_tail_bound": residual_trace,
        "tau_tail_bound": (residual_trace * t / eta) if eta > 0 else math.inf,
        "recombined": 2.0 * m.gamma_recomb * trace_acc,
        "horizon_ps": t,
    }
    return TransportResult(
        eta=float(eta), tau=float(tau), method="quadrature",
        residual=residual_trace, diagnostics=diagnostics,
    )


@dataclass(frozen=True)
class InitialState:
    """Which state the scenario starts from.

    kind is one of "highest_eigenstate", "eigenstate" (index, 0 = lowest),
    "site" (label), or "monomer_ground" (lowest eigenstate of monomer
    `monomer`, embedded in the assembly).
    """

    kind: str
    label: str = None
    monomer: int = None
    index: int = None

    def __post_init__(self):
        kinds = ("highest_eigenstate", "eigenstate", "site", "monomer_ground")
        if self.kind not in kinds:
            raise ExcitranError(f"unknown initial state kind {self.kind!r}")
        if self.kind == "eigenstate" and self.index is None:
            raise ExcitranError("initial state 'eigenstate' requires an index")
        if self.kind == "site" and self.label is None:
            raise ExcitranError("initial state 'site' requires a label")
        if self.kind == "monomer_ground" and self.monomer is None:
            raise ExcitranError("initial state 'monomer_ground' requires a monomer index")


@dataclass(frozen=True)
class ScenarioConfig:
    """A full antenna or wire setup over an oligomer of a monomer graph."""

    role: str
    oligomer: model.OligomerSpec
    initial_state: InitialState
    trap: TrapSpec
    active_sinks: tuple = ()
    gamma_phi: float = None
    temperature_k: float = None
    bath: BathSpec = BathSpec()
    gamma_recomb: float = 0.001

    def __post_init__(self):
        if self.role not in ("antenna", "wire"):
            raise ExcitranError(f"unknown scenario role {self.role!r}")
        object.__setattr__(self, "active_sinks", tuple(int(i) for i in self.active_sinks))
        n = self.oligomer.n_monomers
        for i in self.active_sinks:
            if not 0 <= i < n:
                raise ExcitranError(f"sink monomer index {i} outside 0..{n - 1}")
        if len(set(self.active_sinks)) != len(self.active_sinks):
            raise ExcitranError("duplicate sink monomer indices")
        if (self.gamma_phi is None) == (self.temperature_k is None):
            raise ExcitranError("specify exactly one of gamma_phi or temperature_k")
        if self.gamma_recomb < 0:
            raise ExcitranError("gamma_recomb must be >= 0")
        if self.trap.mode == "site_based" and not self.active_sinks:
            raise ExcitranError("site-based trapping requires at least one active sink")
        if self.role == "wire":
            ini = self.initial_state
            if ini.kind != "monomer_ground":
                raise ExcitranError(
                    "wire scenarios start from a monomer ground state "
                    "(initial state kind 'monomer_ground')"
                )
            if ini.monomer in self.active_sinks:
                raise ExcitranError(
                    f"wire scenario: sink on the injection monomer {ini.monomer}"
                )

    def resolved_gamma_phi(self):
        if self.gamma_phi is not None:
            return float(self.gamma_phi)
        return dephasing_from_temperature(self.temperature_k, self.bath)


def scenario_graph(monomer, scenario):
    """The structure the scenario runs on (plain monomer when n_monomers=1)."""
    if scenario.oligomer.n_monomers == 1:
        return monomer
    return model.assemble_oligomer(monomer, scenario.oligomer)


def _resolved_trap(monomer, scenario, graph):
    trap = scenario.trap
    if trap.mode == "none":
        return trap
    if trap.mode == "exciton_based":
        return trap
    if scenario.oligomer.n_monomers == 1:
        targets = tuple(trap.targets)
    else:
        targets = tuple(
            model.monomer_label(lab, i)
            for i in scenario.active_sinks
            for lab in trap.targets
        )
    for lab in targets:
        graph.index_of(lab)
    return TrapSpec(mode="site_based", targets=targets, rate=trap.rate)


def resolve_initial_state(monomer, scenario, graph):
    """Initial density matrix of a scenario on its assembled graph."""
    ini = scenario.initial_state
    n = graph.n_sites
    if ini.kind == "site":
        i = graph.index_of(ini.label)
        rho0 = np.zeros((n, n), dtype=complex)
        rho0[i, i] = 1.0
        return rho0
    if ini.kind in ("highest_eigenstate", "eigenstate"):
        _, vecs = model.spectrum(graph)
        idx = n - 1 if ini.kind == "highest_eigenstate" else int(ini.index)
        if not 0 <= idx < n:
            raise ExcitranError(f"eigenstate index {idx} outside 0..{n - 1}")
        v = vecs[:, idx]
        return np.outer(v, v.conj()).astype(complex)
    # monomer_ground
    k = int(ini.monomer)
    n_mono = scenario.oligomer.n_monomers
    if not 0 <= k < n_mono:
        raise ExcitranError(f"monomer index {k} outside 0..{n_mono - 1}")
    _, vecs = model.spectrum(monomer)
    g = vecs[:, 0]
    nb = monomer.n_sites
    psi = np.zeros(n, dtype=complex)
    psi[k * nb : (k + 1) * nb] = g
    return np.outer(psi, psi.conj())


def build_scenario_model(monomer, scenario, gamma_phi=None):
    """Assemble (LindbladModel, rho0) for a scenario.

    `gamma_phi` overrides the scenario's dephasing rate (used by sweeps).
    """
    graph = scenario_graph(monomer, scenario)
    trap = _resolved_trap(monomer, scenario, graph)
    gamma = scenario.resolved_gamma_phi() if gamma_phi is None else float(gamma_phi)
    m = LindbladModel(
        graph=graph, gamma_phi=gamma, gamma_recomb=scenario.gamma_recomb, trap=trap
    )
    rho0 = resolve_initial_state(monomer, scenario, graph)
    return m, rho0


@dataclass(frozen=True)
class SweepRow:
    gamma_phi: float
    eta: float = math.nan
    tau: float = math.nan
    method: str = ""
    residual: float = math.nan
    error: str = None


@dataclass(frozen=True)
class DisorderRow:
    gamma_phi: float
    eta_mean: float = math.nan
    eta_std: float = math.nan
    tau_mean: float = math.nan
    tau_std: float = math.nan
    n_realizations: int = 0
    degenerate_std: bool = False
    error: str = None


@dataclass(frozen=True, eq=False)
class SweepResult:
    """Ordered sweep rows plus the metadata needed to reproduce them."""

    rows: tuple
    meta: dict


def _pick_method(method, gamma, n_sites):
    if method != "auto":
        return method
    if gamma == 0.0:
        return "quadrature"
    return "resolvent" if n_sites <= liouvillian.MAX_SUPEROPERATOR_SITES else "quadrature"


def _run_point(m, rho0, method, rtol, atol):
    if method == "resolvent":
        return efficiency_resolvent(m, rho0)
    return efficiency_quadrature(m, rho0, rtol=rtol, atol=atol)


def _parallel_map(fn, items, threads):
    if threads <= 1:
        return [fn(x) for x in items]
    with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def dephasing_sweep(monomer, scenario, gammas, threads=1, method="auto",
                    rtol=1e-9, atol=1e-9):
    """eta and tau across a grid of dephasing rates.

    Rows are independent and may run in parallel; output order follows the
    input grid. Per-row failures are recorded in the row, not raised.
    """
    gammas = [float(g) for g in gammas]
    if not gammas:
        raise ExcitranError("gamma grid must be non-empty")
    if any(g < 0 for g in gammas):
        raise ExcitranError("dephasing rates must be >= 0")
    graph = scenario_graph(monomer, scenario)

    def run_one(gamma):
        try:
            m, rho0 = build_scenario_model(monomer, scenario, gamma_phi=gamma)
            res = _run_point(m, rho0, _pick_method(method, gamma, graph.n_sites), rtol, atol)
            return SweepRow(gamma_phi=gamma, eta=res.eta, tau=res.tau,
                            method=res.method, residual=res.residual)
        except ExcitranError as exc:
            return SweepRow(gamma_phi=gamma, error=str(exc))

    rows = _parallel_map(run_one, gammas, threads)
    meta = {"n_monomers": scenario.oligomer.n_monomers, "role": scenario.role,
            "n_sites": graph.n_sites, "method": method}
    return SweepResult(rows=tuple(rows), meta=meta)


def disorder_average(monomer, scenario, disorder, gammas, threads=1, method="auto",
                     rtol=1e-9, atol=1e-9):
    """Mean and std of eta/tau over static-disorder realizations, per gamma.

    Disorder is drawn independently for every site of the assembled
    structure; realization r of gamma row g uses the deterministic stream
    (seed, realization_index=r) regardless of scheduling.
    """
    gammas = [float(g) for g in gammas]
    if not gammas:
        raise ExcitranError("gamma grid must be non-empty")
    base_graph = scenario_graph(monomer, scenario)
    reals = range(disorder.n_realizations)

    def run_one(args):
        gamma, r = args
        try:
            graph = model.sample_disorder(base_graph, disorder, r)
            trap = _resolved_trap(monomer, scenario, graph)
            m = LindbladModel(graph=graph, gamma_phi=gamma,
                              gamma_recomb=scenario.gamma_recomb, trap=trap)
            rho0 = _initial_state_on(monomer, scenario, graph)
            res = _run_point(m, rho0, _pick_method(method, gamma, graph.n_sites), rtol, atol)
            return res.eta, res.tau, None
        except ExcitranError as exc:
            return math.nan, math.nan, str(exc)

    tasks = [(g, r) for g in gammas for r in reals]
    flat = _parallel_map(run_one, tasks, threads)

    rows = []
    nr = disorder.n_realizations
    for i, g in enumerate(gammas):
        chunk = flat[i * nr : (i + 1) * nr]
        errors = [e for _, _, e in chunk if e is not None]
        if errors:
            rows.append(DisorderRow(gamma_phi=g, n_realizations=nr, error=errors[0]))
            continue
        etas = np.array([c[0] for c in chunk])
        taus = np.array([c[1] for c in chunk])
        degenerate = nr == 1
        rows.append(
            DisorderRow(
                gamma_phi=g,
                eta_mean=float(etas.mean()),
                eta_std=0.0 if degenerate else float(etas.std(ddof=1)),
                tau_mean=float(taus.mean()),
                tau_std=0.0 if degenerate else float(taus.std(ddof=1)),
                n_realizations=nr,
                degenerate_std=degenerate,
            )
        )
    meta = {"sigma": disorder.sigma, "seed": disorder.seed,
            "n_realizations": nr, "role": scenario.role}
    return SweepResult(rows=tuple(rows), meta=meta)


def _initial_state_on(monomer, scenario, graph):
    """Initial state resolved on a (possibly disordered) assembled graph."""
    ini = scenario.initial_state
    if ini.kind == "monomer_ground":
        # the embedded ground state must come from the same disordered block
        k = int(ini.monomer)
        nb = monomer.n_sites
        sl = slice(k * nb, (k + 1) * nb) if scenario.oligomer.n_monomers > 1 else slice(0, nb)
        h_block = graph.hamiltonian_cm1()[sl, sl]
        _, v = np.linalg.eigh(h_block)
        psi = np.zeros(graph.n_sites, dtype=complex)
        psi[sl] = v[:, 0]
        return np.outer(psi, psi.conj())
    return resolve_initial_state(monomer, scenario, graph)


@dataclass(frozen=True, eq=False)
class ScenarioBundle:
    """Everything a scenario run produces: trajectory, observables, transport."""

    times: np.ndarray
    trajectory: np.ndarray
    site_populations: np.ndarray
    trace: np.ndarray
    delocalization: np.ndarray
    band_populations: dict
    exciton_band_populations: dict
    mutual_information: dict
    negativity: dict
    concurrence: dict
    fit: object
    transport: object
    graph: object
    model: object


def scenario_run(monomer, scenario, sample_times, partitions=(), mi_pairs=(),
                 negativity_pairs=(), concurrence_pairs=(), exciton_bands=False,
                 fit_delocalization=True, rtol=1e-9, atol=1e-9):
    """Propagate one scenario and compute its full observable bundle.

    `partitions` is a sequence of Partition; `mi_pairs` and
    `negativity_pairs` name partition pairs, `concurrence_pairs` name site
    label pairs. The transport functionals are computed when the scenario
    traps (resolvent when the structure is small enough).
    """
    m, rho0 = build_scenario_model(monomer, scenario)
    graph = m.graph
    times = np.asarray(sample_times, dtype=float)
    traj = liouvillian.propagate(m, rho0, times, rtol=rtol, atol=atol)

    nt = times.size
    pops = np.array([observables.populations(traj[i]) for i in range(nt)])
    trace = pops.sum(axis=1)
    deloc = np.full(nt, np.nan)
    for i in range(nt):
        if trace[i] > 1e-12:
            deloc[i] = observables.delocalization(traj[i])

    parts = {p.name: p for p in partitions}
    bands = {p.name: np.empty(nt) for p in partitions}
    for i in range(nt):
        row = observables.band_populations(traj[i], graph, list(parts.values()))
        for name, val in row.items():
            bands[name][i] = val
    exciton_band = {}
    if exciton_bands and partitions:
        exciton_band = {p.name: np.empty(nt) for p in partitions}
        for i in range(nt):
            row = observables.band_populations(
                traj[i], graph, list(parts.values()), basis="exciton"
            )
            for name, val in row.items():
                exciton_band[name][i] = val

    def _series(pairs, fn):
        out = {}
        for pa, pb in pairs:
            key = f"{pa}|{pb}"
            out[key] = np.array(
                [fn(traj[i], graph, parts[pa], parts[pb]) for i in range(nt)]
            )
        return out

    mi = _series(mi_pairs, observables.mutual_information)
    neg = _series(negativity_pairs, observables.negativity)
    conc = {}
    for la, lb in concurrence_pairs:
        conc[f"{la}|{lb}"] = np.array(
            [observables.concurrence(traj[i], graph, la, lb) for i in range(nt)]
        )

    fit = None
    if fit_delocalization and nt >= 10:
        good = np.isfinite(deloc)
        if good.sum() >= 10:
            try:
                fit = observables.fit_timescales(times[good], deloc[good])
            except ExcitranError:
                fit = None

    transport_result = None
    if m.trap.mode != "none":
        method = _pick_method("auto", m.gamma_phi, graph.n_sites)
        transport_result = _run_point(m, rho0, method, rtol, atol)

    return ScenarioBundle(
        times=times, trajectory=traj, site_populations=pops, trace=trace,
        delocalization=deloc, band_populations=bands,
        exciton_band_populations=exciton_band, mutual_information=mi,
        negativity=neg, concurrence=conc, fit=fit,
        transport=transport_result, graph=graph, model=m,
    )
