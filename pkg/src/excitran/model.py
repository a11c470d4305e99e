"""Chromophore network construction: site graphs, oligomer assembly, disorder.

A `SiteGraph` is the tight-binding description of a pigment network: one
on-site energy per chromophore plus a symmetric coupling matrix, both in
cm^-1, with per-site metadata (pigment type a/b, stromal/lumenal layer,
monomer index). Graphs are immutable after construction and safe to share
across parallel workers.
"""

import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import GraphFormatError

SYMMETRY_TOL_CM1 = 1e-9

CHL_TYPES = ("a", "b")
LAYERS = ("stromal", "lumenal")


@dataclass(frozen=True)
class SiteMeta:
    """Metadata for one chromophore site."""

    label: str
    chl_type: str = "a"
    layer: str = "stromal"
    monomer_index: int = 0

    def __post_init__(self):
        if self.chl_type not in CHL_TYPES:
            raise GraphFormatError(f"unknown chl_type {self.chl_type!r}", field=self.label)
        if self.layer not in LAYERS:
            raise GraphFormatError(f"unknown layer {self.layer!r}", field=self.label)
        if self.monomer_index < 0:
            raise GraphFormatError("monomer_index must be >= 0", field=self.label)


@dataclass(frozen=True, eq=False)
class SiteGraph:
    """Labeled chromophore network with energies and couplings in cm^-1."""

    energies: np.ndarray
    couplings: np.ndarray
    meta: tuple

    def __post_init__(self):
        energies = np.asarray(self.energies, dtype=float)
        couplings = np.asarray(self.couplings, dtype=float)
        object.__setattr__(self, "energies", energies)
        object.__setattr__(self, "couplings", couplings)
        object.__setattr__(self, "meta", tuple(self.meta))
        n = energies.shape[0]
        if energies.ndim != 1:
            raise GraphFormatError("energies must be a 1-D vector")
        if couplings.shape != (n, n):
            raise GraphFormatError(
                f"couplings shape {couplings.shape} does not match {n} sites"
            )
        if len(self.meta) != n:
            raise GraphFormatError(f"{len(self.meta)} meta entries for {n} sites")
        if not np.array_equal(couplings, couplings.T):
            raise GraphFormatError("couplings must be exactly symmetric")
        if np.any(np.diag(couplings) != 0.0):
            raise GraphFormatError("coupling diagonal must be zero; energies carry the diagonal")
        if not (np.all(np.isfinite(energies)) and np.all(np.isfinite(couplings))):
            raise GraphFormatError("energies and couplings must be finite")
        labels = [m.label for m in self.meta]
        if len(set(labels)) != n:
            raise GraphFormatError("site labels must be unique")
        energies.setflags(write=False)
        couplings.setflags(write=False)
        object.__setattr__(self, "_index", {lab: i for i, lab in enumerate(labels)})

    @property
    def n_sites(self):
        return self.energies.shape[0]

    @property
    def labels(self):
        return tuple(m.label for m in self.meta)

    def index_of(self, label):
        try:
            return self._index[label]
        except KeyError:
            raise GraphFormatError(f"unknown site label {label!r}") from None

    def hamiltonian_cm1(self):
        """Full tight-binding matrix in cm^-1 (energies on the diagonal)."""
        return np.diag(self.energies) + self.couplings


@dataclass(frozen=True)
class OligomerSpec:
    """How to tile a monomer into an n-monomer ring or chain.

    Each link (donor_label, acceptor_label, strength_cm1) couples the donor
    site of monomer i to the acceptor site of monomer i+1 (mod n for rings).
    """

    n_monomers: int
    topology: str = "ring"
    links: tuple = ()

    def __post_init__(self):
        if self.n_monomers < 1:
            raise GraphFormatError("n_monomers must be >= 1")
        if self.topology not in ("ring", "chain"):
            raise GraphFormatError(f"unknown topology {self.topology!r}")
        links = tuple((str(d), str(a), float(s)) for d, a, s in self.links)
        for d, a, s in links:
            if not np.isfinite(s):
                raise GraphFormatError(f"link {d}->{a} strength must be finite")
        object.__setattr__(self, "links", links)


@dataclass(frozen=True)
class DisorderSpec:
    """Gaussian static disorder on the site energies."""

    sigma: float
    n_realizations: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise GraphFormatError("disorder sigma must be >= 0")
        if self.n_realizations < 1:
            raise GraphFormatError("n_realizations must be >= 1")


def _parse_site_entry(entry, i):
    if isinstance(entry, str):
        return {"label": entry}
    if not isinstance(entry, dict):
        raise GraphFormatError("site entry must be an object or a label string", field=f"sites[{i}]")
    known = {"label", "type", "layer"}
    unknown = set(entry) - known
    if unknown:
        raise GraphFormatError(f"unknown site keys {sorted(unknown)}", field=f"sites[{i}]")
    return entry


def load_site_graph(path):
    """Load a SiteGraph from a JSON Hamiltonian file.

    Expected schema::

        {"sites": [{"label": "b601", "type": "b", "layer": "stromal"}, ...],
         "energies_cm1": [...],
         "couplings_cm1": [[...], ...]}

    Site entries may omit ``type``/``layer`` (defaults: "a", "stromal").
    The coupling matrix must be the full symmetric matrix; asymmetry beyond
    1e-9 cm^-1 is rejected, smaller asymmetry is symmetrized exactly.
    Optional "name" and "notes" keys are ignored.
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise GraphFormatError(f"invalid JSON: {exc.msg}", line=exc.lineno) from exc
    if not isinstance(raw, dict):
        raise GraphFormatError("top-level value must be an object")
    unknown = set(raw) - {"sites", "energies_cm1", "couplings_cm1", "name", "notes"}
    if unknown:
        raise GraphFormatError(f"unknown keys {sorted(unknown)}")
    for key in ("sites", "energies_cm1", "couplings_cm1"):
        if key not in raw:
            raise GraphFormatError("missing required key", field=key)

    meta = []
    for i, entry in enumerate(raw["sites"]):
        entry = _parse_site_entry(entry, i)
        if "label" not in entry:
            raise GraphFormatError("site entry missing label", field=f"sites[{i}]")
        meta.append(
            SiteMeta(
                label=str(entry["label"]),
                chl_type=entry.get("type", "a"),
                layer=entry.get("layer", "stromal"),
            )
        )
    n = len(meta)

    energies = np.asarray(raw["energies_cm1"], dtype=float)
    if energies.shape != (n,):
        raise GraphFormatError(
            f"energies_cm1 has shape {energies.shape}, expected ({n},)", field="energies_cm1"
        )
    couplings = np.asarray(raw["couplings_cm1"], dtype=float)
    if couplings.shape != (n, n):
        raise GraphFormatError(
            f"couplings_cm1 has shape {couplings.shape}, expected ({n}, {n})",
            field="couplings_cm1",
        )
    asym = np.max(np.abs(couplings - couplings.T)) if n else 0.0
    if asym > SYMMETRY_TOL_CM1:
        i, j = np.unravel_index(np.argmax(np.abs(couplings - couplings.T)), couplings.shape)
        raise GraphFormatError(
            f"asymmetric coupling: V[{i}][{j}]={couplings[i, j]} vs V[{j}][{i}]={couplings[j, i]}",
            field="couplings_cm1",
        )
    couplings = 0.5 * (couplings + couplings.T)
    np.fill_diagonal(couplings, 0.0)
    return SiteGraph(energies=energies, couplings=couplings, meta=tuple(meta))


def monomer_label(label, monomer_index):
    """Canonical label of a monomer site inside an assembled oligomer."""
    return f"{label}_m{monomer_index}"


def assemble_oligomer(monomer, spec):
    """Tile `monomer` into an oligomer per `spec`.

    The result is block diagonal in the monomer Hamiltonian with the
    specified inter-monomer couplings added between consecutive monomers
    (wrapping around for rings). Labels are suffixed with ``_m<i>``.
    """
    for d, a, _ in spec.links:
        monomer.index_of(d)
        monomer.index_of(a)
    n = spec.n_monomers
    nb = monomer.n_sites
    total = n * nb

    energies = np.tile(monomer.energies, n)
    couplings = np.zeros((total, total))
    for i in range(n):
        sl = slice(i * nb, (i + 1) * nb)
        couplings[sl, sl] = monomer.couplings

    if n > 1:
        if spec.topology == "ring":
            pairs = [(i, (i + 1) % n) for i in range(n)]
        else:
            pairs = [(i, i + 1) for i in range(n - 1)]
        placed = {}
        for i, j in pairs:
            for d, a, s in spec.links:
                r = i * nb + monomer.index_of(d)
                c = j * nb + monomer.index_of(a)
                key = (min(r, c), max(r, c))
                if key in placed:
                    if placed[key] != s:
                        raise GraphFormatError(
                            f"conflicting values for inter-monomer coupling {d}->{a}"
                        )
                    continue
                placed[key] = s
                couplings[r, c] = s
                couplings[c, r] = s

    meta = tuple(
        replace(m, label=monomer_label(m.label, i), monomer_index=i)
        for i in range(n)
        for m in monomer.meta
    )
    return SiteGraph(energies=energies, couplings=couplings, meta=meta)


def spectrum(graph):
    """Eigenvalues (ascending, cm^-1) and orthonormal eigenvectors.

    Column j of the eigenvector matrix is the j-th eigenstate in the site
    basis; index 0 is the lowest-energy state.
    """
    return np.linalg.eigh(graph.hamiltonian_cm1())


def sample_disorder(graph, spec, realization_index):
    """Site energies perturbed by one static-disorder realization.

    Draws are Normal(0, sigma^2), deterministic per (seed, realization_index,
    site); couplings are untouched. sigma = 0 returns the graph unchanged.
    """
    if realization_index < 0 or realization_index >= spec.n_realizations:
        raise GraphFormatError(
            f"realization_index {realization_index} outside 0..{spec.n_realizations - 1}"
        )
    if spec.sigma == 0.0:
        return graph
    seq = np.random.SeedSequence(entropy=spec.seed, spawn_key=(realization_index,))
    rng = np.random.default_rng(seq)
    delta = rng.normal(0.0, spec.sigma, size=graph.n_sites)
    return SiteGraph(
        energies=graph.energies + delta,
        couplings=graph.couplings.copy(),
        meta=graph.meta,
    )
