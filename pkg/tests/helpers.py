"""Shared toy builders for the test suite."""

import json

import numpy as np

from excitran.config import resolve_hamiltonian_path
from excitran.model import SiteGraph, SiteMeta, load_site_graph


def make_graph(energies, couplings, labels=None, types=None, layers=None):
    n = len(energies)
    labels = labels or [f"s{i+1}" for i in range(n)]
    meta = tuple(
        SiteMeta(
            label=labels[i],
            chl_type=(types[i] if types else "a"),
            layer=(layers[i] if layers else "stromal"),
        )
        for i in range(n)
    )
    return SiteGraph(energies=np.asarray(energies, float),
                     couplings=np.asarray(couplings, float), meta=meta)


def chain_graph(energies, coupling):
    n = len(energies)
    V = np.zeros((n, n))
    for i in range(n - 1):
        V[i, i + 1] = V[i + 1, i] = coupling
    return make_graph(energies, V)


def single_site_graph(energy=0.0):
    return make_graph([energy], [[0.0]])


def degenerate_dimer(v=100.0):
    return make_graph([0.0, 0.0], [[0.0, v], [v, 0.0]])


def funnel3():
    return chain_graph([200.0, 100.0, 0.0], 50.0)


def builtin_graph(name):
    return load_site_graph(resolve_hamiltonian_path(f"builtin:{name}", "."))


def random_site_graph(rng, n, energy_scale=150.0, coupling_scale=40.0):
    V = np.triu(rng.normal(0.0, coupling_scale, (n, n)), 1)
    V = V + V.T
    return make_graph(rng.normal(0.0, energy_scale, n), V)


def random_physical_state(rng, n, trace=None):
    """Random PSD matrix with the requested trace (default: uniform in (0,1])."""
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = a @ a.conj().T
    target = trace if trace is not None else rng.uniform(0.2, 1.0)
    return rho * (target / np.real(np.trace(rho)))


def write_hamiltonian(path, energies, couplings, labels=None, extra=None):
    n = len(energies)
    labels = labels or [f"s{i+1}" for i in range(n)]
    doc = {
        "sites": [{"label": lab} for lab in labels],
        "energies_cm1": list(energies),
        "couplings_cm1": [list(row) for row in couplings],
    }
    if extra:
        doc.update(extra)
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path
