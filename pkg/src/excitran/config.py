"""Run configuration: strict JSON schema, defaults, and the resolved echo.

Unknown keys anywhere in the file are fatal, and every error names the
offending field path. A parsed configuration carries `resolved`, the fully
defaulted JSON-serializable dict that is written next to every output; a
run is reproducible from that file (plus the Hamiltonian file it points
to, whose SHA-256 is recorded).
"""

import hashlib
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import model, observables, transport
from .errors import ConfigError, ExcitranError
from .liouvillian import TrapSpec

DEFAULT_GAMMA_RECOMB = 0.001   # ps^-1
DEFAULT_TRAP_RATE = 1.0        # ps^-1
DEFAULT_GAMMA_PHI = 3.0        # ps^-1

# canonical monomer subsystems used for correlation pathways
DEFAULT_PARTITIONS = {
    "bL": ("b606", "b607"),
    "abL": ("b605", "a604"),
    "aL": ("a613", "a614"),
    "bS": ("b601", "b608", "b609"),
    "aintS": ("a602", "a603"),
    "aoutS": ("a610", "a611", "a612"),
}


@dataclass(frozen=True, eq=False)
class RunConfig:
    """A fully validated run: inputs, scenario, grids, and tolerances."""

    hamiltonian_path: str
    monomer: model.SiteGraph
    scenario: transport.ScenarioConfig
    sweep_gammas: tuple
    disorder: model.DisorderSpec
    sample_times: np.ndarray
    partitions: dict
    mi_pairs: tuple
    negativity_pairs: tuple
    concurrence_pairs: tuple
    exciton_bands: bool
    rtol: float
    atol: float
    seed: int
    method: str
    resolved: dict


def _check_keys(obj, path, allowed, required=()):
    if not isinstance(obj, dict):
        raise ConfigError("expected an object", path=path)
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown keys {unknown}", path=path)
    for key in required:
        if key not in obj:
            raise ConfigError("missing required key", path=f"{path}.{key}")


def _as_number(value, path):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {type(value).__name__}", path=path)
    if not math.isfinite(value):
        raise ConfigError("value must be finite", path=path)
    return float(value)


def _as_int(value, path):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"expected an integer, got {type(value).__name__}", path=path)
    return value


def _as_str(value, path):
    if not isinstance(value, str):
        raise ConfigError(f"expected a string, got {type(value).__name__}", path=path)
    return value


def _as_list(value, path):
    if not isinstance(value, list):
        raise ConfigError(f"expected a list, got {type(value).__name__}", path=path)
    return value


def resolve_hamiltonian_path(ref, base_dir):
    """Resolve a Hamiltonian reference: builtin:<name> or a file path."""
    if ref.startswith("builtin:"):
        name = ref.split(":", 1)[1]
        res = resources.files("excitran") / "data" / f"{name}.json"
        if not res.is_file():
            raise ConfigError(f"unknown builtin Hamiltonian {name!r}", path="hamiltonian")
        return str(res)
    p = Path(ref)
    if not p.is_absolute():
        p = Path(base_dir) / p
    return str(p)


def _parse_initial_state(value, path):
    if isinstance(value, str):
        if value != "highest_eigenstate":
            raise ConfigError(
                f"unknown initial state {value!r} (string form is 'highest_eigenstate')",
                path=path,
            )
        return transport.InitialState(kind="highest_eigenstate"), value
    _check_keys(value, path, allowed=("site", "eigenstate", "monomer_ground"))
    if len(value) != 1:
        raise ConfigError("initial state takes exactly one of site/eigenstate/monomer_ground",
                          path=path)
    if "site" in value:
        return transport.InitialState(kind="site", label=_as_str(value["site"], f"{path}.site")), value
    if "eigenstate" in value:
        idx = _as_int(value["eigenstate"], f"{path}.eigenstate")
        return transport.InitialState(kind="eigenstate", index=idx), value
    k = _as_int(value["monomer_ground"], f"{path}.monomer_ground")
    return transport.InitialState(kind="monomer_ground", monomer=k), value


def _parse_sample_times(value, path):
    if isinstance(value, list):
        times = [_as_number(v, f"{path}[{i}]") for i, v in enumerate(value)]
        if not times:
            raise ConfigError("sample_times list must be non-empty", path=path)
        return np.asarray(times, dtype=float), value
    _check_keys(value, path, allowed=("from", "to", "n"), required=("to", "n"))
    t0 = _as_number(value.get("from", 0.0), f"{path}.from")
    t1 = _as_number(value["to"], f"{path}.to")
    n = _as_int(value["n"], f"{path}.n")
    if n < 1 or t1 < t0:
        raise ConfigError("need n >= 1 and to >= from", path=path)
    echo = {"from": t0, "to": t1, "n": n}
    return np.linspace(t0, t1, n), echo


def _parse_sweep(value, path):
    if "gammas" in value:
        _check_keys(value, path, allowed=("gammas",))
        gammas = [_as_number(v, f"{path}.gammas[{i}]") for i, v in enumerate(_as_list(value["gammas"], f"{path}.gammas"))]
        if not gammas:
            raise ConfigError("gamma grid must be non-empty", path=f"{path}.gammas")
        return tuple(gammas), {"gammas": gammas}
    _check_keys(value, path, allowed=("log10_from", "log10_to", "n_points"),
                required=("log10_from", "log10_to", "n_points"))
    a = _as_number(value["log10_from"], f"{path}.log10_from")
    b = _as_number(value["log10_to"], f"{path}.log10_to")
    n = _as_int(value["n_points"], f"{path}.n_points")
    if n < 1:
        raise ConfigError("n_points must be >= 1", path=f"{path}.n_points")
    gammas = tuple(float(g) for g in np.logspace(a, b, n))
    return gammas, {"log10_from": a, "log10_to": b, "n_points": n}


TOP_KEYS = (
    "hamiltonian", "oligomer", "scenario", "trap", "gamma_phi", "temperature_k",
    "bath", "gamma_recomb", "sweep", "disorder", "sample_times", "partitions",
    "observables", "tolerances", "seed", "method",
)


def parse_config(path, seed_override=None):
    """Parse and validate a JSON run configuration file.

    Returns a RunConfig whose `resolved` dict echoes every defaulted field.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("top-level value must be an object")
    _check_keys(raw, "<config>", allowed=TOP_KEYS, required=("hamiltonian",))

    base_dir = path.parent
    ham_ref = _as_str(raw["hamiltonian"], "hamiltonian")
    ham_path = resolve_hamiltonian_path(ham_ref, base_dir)
    try:
        monomer = model.load_site_graph(ham_path)
    except (OSError, ExcitranError) as exc:
        raise ConfigError(f"cannot load Hamiltonian {ham_ref!r}: {exc}", path="hamiltonian") from exc
    ham_sha = hashlib.sha256(Path(ham_path).read_bytes()).hexdigest()

    # oligomer
    olig_raw = raw.get("oligomer", {})
    _check_keys(olig_raw, "oligomer", allowed=("n_monomers", "topology", "links"))
    links = []
    for i, entry in enumerate(_as_list(olig_raw.get("links", []), "oligomer.links")):
        entry = _as_list(entry, f"oligomer.links[{i}]")
        if len(entry) != 3:
            raise ConfigError("link must be [donor, acceptor, strength_cm1]",
                              path=f"oligomer.links[{i}]")
        links.append((
            _as_str(entry[0], f"oligomer.links[{i}][0]"),
            _as_str(entry[1], f"oligomer.links[{i}][1]"),
            _as_number(entry[2], f"oligomer.links[{i}][2]"),
        ))
    try:
        oligomer = model.OligomerSpec(
            n_monomers=_as_int(olig_raw.get("n_monomers", 1), "oligomer.n_monomers"),
            topology=_as_str(olig_raw.get("topology", "ring"), "oligomer.topology"),
            links=tuple(links),
        )
    except ExcitranError as exc:
        raise ConfigError(str(exc), path="oligomer") from exc

    # trap
    trap_raw = raw.get("trap", {})
    _check_keys(trap_raw, "trap", allowed=("mode", "targets", "rate"))
    trap_mode = _as_str(trap_raw.get("mode", "none"), "trap.mode")
    trap_rate = _as_number(trap_raw.get("rate", DEFAULT_TRAP_RATE), "trap.rate")
    raw_targets = _as_list(trap_raw.get("targets", []), "trap.targets")
    if trap_mode == "exciton_based":
        trap_targets = tuple(_as_int(t, f"trap.targets[{i}]") for i, t in enumerate(raw_targets))
    else:
        trap_targets = tuple(_as_str(t, f"trap.targets[{i}]") for i, t in enumerate(raw_targets))
    try:
        trap = TrapSpec(mode=trap_mode, targets=trap_targets, rate=trap_rate)
    except ExcitranError as exc:
        raise ConfigError(str(exc), path="trap") from exc

    # dephasing: exactly one of gamma_phi / temperature_k (default gamma_phi)
    gamma_phi = raw.get("gamma_phi")
    temperature_k = raw.get("temperature_k")
    if gamma_phi is not None and temperature_k is not None:
        raise ConfigError("specify only one of gamma_phi and temperature_k", path="gamma_phi")
    if gamma_phi is not None:
        gamma_phi = _as_number(gamma_phi, "gamma_phi")
    if temperature_k is not None:
        temperature_k = _as_number(temperature_k, "temperature_k")
    if gamma_phi is None and temperature_k is None:
        gamma_phi = DEFAULT_GAMMA_PHI

    bath_raw = raw.get("bath", {})
    _check_keys(bath_raw, "bath", allowed=("reorganization_cm1", "cutoff_cm1", "spectral_form"))
    try:
        bath = transport.BathSpec(
            reorganization_cm1=_as_number(bath_raw.get("reorganization_cm1", transport.ER_ANCHOR_CM1), "bath.reorganization_cm1"),
            cutoff_cm1=_as_number(bath_raw.get("cutoff_cm1", transport.OMEGA_C_ANCHOR_CM1), "bath.cutoff_cm1"),
            spectral_form=_as_str(bath_raw.get("spectral_form", "ohmic"), "bath.spectral_form"),
        )
    except ExcitranError as exc:
        raise ConfigError(str(exc), path="bath") from exc

    gamma_recomb = _as_number(raw.get("gamma_recomb", DEFAULT_GAMMA_RECOMB), "gamma_recomb")

    # scenario
    sc_raw = raw.get("scenario", {})
    _check_keys(sc_raw, "scenario", allowed=("role", "initial_state", "active_sinks"))
    role = _as_str(sc_raw.get("role", "antenna"), "scenario.role")
    ini_raw = sc_raw.get("initial_state", "highest_eigenstate")
    initial_state, ini_echo = _parse_initial_state(ini_raw, "scenario.initial_state")
    if "active_sinks" in sc_raw:
        sinks = tuple(
            _as_int(v, f"scenario.active_sinks[{i}]")
            for i, v in enumerate(_as_list(sc_raw["active_sinks"], "scenario.active_sinks"))
        )
    else:
        sinks = tuple(range(oligomer.n_monomers)) if trap.mode == "site_based" else ()
    try:
        scenario = transport.ScenarioConfig(
            role=role, oligomer=oligomer, initial_state=initial_state, trap=trap,
            active_sinks=sinks, gamma_phi=gamma_phi, temperature_k=temperature_k,
            bath=bath, gamma_recomb=gamma_recomb,
        )
    except ExcitranError as exc:
        raise ConfigError(str(exc), path="scenario") from exc

    # grids
    sweep_raw = raw.get("sweep", {"log10_from": -2.0, "log10_to": 2.0, "n_points": 13})
    sweep_gammas, sweep_echo = _parse_sweep(sweep_raw, "sweep")

    seed = _as_int(raw.get("seed", 0), "seed")
    if seed_override is not None:
        seed = int(seed_override)

    dis_raw = raw.get("disorder", {})
    _check_keys(dis_raw, "disorder", allowed=("sigma_cm1", "n_realizations", "seed"))
    try:
        disorder = model.DisorderSpec(
            sigma=_as_number(dis_raw.get("sigma_cm1", 60.0), "disorder.sigma_cm1"),
            n_realizations=_as_int(dis_raw.get("n_realizations", 1), "disorder.n_realizations"),
            seed=_as_int(dis_raw.get("seed", seed), "disorder.seed"),
        )
    except ExcitranError as exc:
        raise ConfigError(str(exc), path="disorder") from exc

    st_raw = raw.get("sample_times", {"from": 0.0, "to": 10.0, "n": 201})
    sample_times, st_echo = _parse_sample_times(st_raw, "sample_times")

    # partitions: default to the canonical six when every label resolves
    graph = transport.scenario_graph(monomer, scenario)
    if "partitions" in raw:
        parts_raw = raw["partitions"]
        if not isinstance(parts_raw, dict):
            raise ConfigError("expected an object of name -> label list", path="partitions")
        partitions = {}
        for name, labels in parts_raw.items():
            labels = [_as_str(v, f"partitions.{name}[{i}]") for i, v in enumerate(_as_list(labels, f"partitions.{name}"))]
            try:
                part = observables.Partition(name=name, site_labels=tuple(labels))
                for lab in labels:
                    graph.index_of(lab)
            except ExcitranError as exc:
                raise ConfigError(str(exc), path=f"partitions.{name}") from exc
            partitions[name] = part
    else:
        partitions = {}
        graph_labels = set(graph.labels)
        if all(set(v) <= graph_labels for v in DEFAULT_PARTITIONS.values()):
            partitions = {
                name: observables.Partition(name=name, site_labels=labels)
                for name, labels in DEFAULT_PARTITIONS.items()
            }

    obs_raw = raw.get("observables", {})
    _check_keys(obs_raw, "observables",
                allowed=("mutual_information", "negativity", "concurrence", "exciton_bands"))

    def _pairs(key, validate):
        out = []
        for i, pair in enumerate(_as_list(obs_raw.get(key, []), f"observables.{key}")):
            pair = _as_list(pair, f"observables.{key}[{i}]")
            if len(pair) != 2:
                raise ConfigError("expected a pair", path=f"observables.{key}[{i}]")
            a = _as_str(pair[0], f"observables.{key}[{i}][0]")
            b = _as_str(pair[1], f"observables.{key}[{i}][1]")
            validate(a, b, f"observables.{key}[{i}]")
            out.append((a, b))
        return tuple(out)

    def _check_part(a, b, p):
        for name in (a, b):
            if name not in partitions:
                raise ConfigError(f"unknown partition {name!r}", path=p)

    def _check_site(a, b, p):
        for lab in (a, b):
            try:
                graph.index_of(lab)
            except ExcitranError as exc:
                raise ConfigError(str(exc), path=p) from exc

    mi_pairs = _pairs("mutual_information", _check_part)
    negativity_pairs = _pairs("negativity", _check_part)
    concurrence_pairs = _pairs("concurrence", _check_site)
    exciton_bands = obs_raw.get("exciton_bands", False)
    if not isinstance(exciton_bands, bool):
        raise ConfigError("expected a boolean", path="observables.exciton_bands")

    tol_raw = raw.get("tolerances", {})
    _check_keys(tol_raw, "tolerances", allowed=("rtol", "atol"))
    rtol = _as_number(tol_raw.get("rtol", 1e-9), "tolerances.rtol")
    atol = _as_number(tol_raw.get("atol", 1e-9), "tolerances.atol")

    method = _as_str(raw.get("method", "auto"), "method")
    if method not in ("auto", "resolvent", "quadrature"):
        raise ConfigError(f"unknown method {method!r}", path="method")

    resolved = {
        "hamiltonian": ham_ref if ham_ref.startswith("builtin:") else str(Path(ham_path).resolve()),
        "hamiltonian_sha256": ham_sha,
        "oligomer": {
            "n_monomers": oligomer.n_monomers,
            "topology": oligomer.topology,
            "links": [list(l) for l in oligomer.links],
        },
        "scenario": {
            "role": scenario.role,
            "initial_state": ini_echo,
            "active_sinks": list(scenario.active_sinks),
        },
        "trap": {"mode": trap.mode, "targets": list(trap.targets), "rate": trap.rate},
        "gamma_phi": gamma_phi,
        "temperature_k": temperature_k,
        "resolved_gamma_phi": scenario.resolved_gamma_phi(),
        "bath": {
            "reorganization_cm1": bath.reorganization_cm1,
            "cutoff_cm1": bath.cutoff_cm1,
            "spectral_form": bath.spectral_form,
        },
        "gamma_recomb": gamma_recomb,
        "sweep": sweep_echo,
        "disorder": {
            "sigma_cm1": disorder.sigma,
            "n_realizations": disorder.n_realizations,
            "seed": disorder.seed,
        },
        "sample_times": st_echo,
        "partitions": {name: list(p.site_labels) for name, p in partitions.items()},
        "observables": {
            "mutual_information": [list(p) for p in mi_pairs],
            "negativity": [list(p) for p in negativity_pairs],
            "concurrence": [list(p) for p in concurrence_pairs],
            "exciton_bands": exciton_bands,
        },
        "tolerances": {"rtol": rtol, "atol": atol},
        "seed": seed,
        "method": method,
    }

    return RunConfig(
        hamiltonian_path=ham_path, monomer=monomer, scenario=scenario,
        sweep_gammas=sweep_gammas, disorder=disorder, sample_times=sample_times,
        partitions=partitions, mi_pairs=mi_pairs, negativity_pairs=negativity_pairs,
        concurrence_pairs=concurrence_pairs, exciton_bands=exciton_bands,
        rtol=rtol, atol=atol, seed=seed, method=method, resolved=resolved,
    )
