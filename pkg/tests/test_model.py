import json

import numpy as np
import pytest

from excitran.errors import GraphFormatError
from excitran.model import (
    DisorderSpec,
    OligomerSpec,
    assemble_oligomer,
    load_site_graph,
    sample_disorder,
    spectrum,
)

from helpers import builtin_graph, degenerate_dimer, make_graph, write_hamiltonian


class TestLoadSiteGraph:
    def test_two_site_file(self, tmp_path):
        p = write_hamiltonian(tmp_path / "g.json", [0.0, 0.0], [[0, 100.0], [100.0, 0]])
        g = load_site_graph(p)
        assert g.n_sites == 2
        assert g.couplings[0][1] == 100.0
        assert g.labels == ("s1", "s2")

    def test_asymmetric_coupling_rejected(self, tmp_path):
        p = write_hamiltonian(tmp_path / "g.json", [0.0, 0.0], [[0, 100.0], [99.0, 0]])
        with pytest.raises(GraphFormatError, match="asymmetric"):
            load_site_graph(p)

    def test_lhcii_template_composition(self):
        g = builtin_graph("lhcii_monomer_template")
        assert g.n_sites == 14
        types = [m.chl_type for m in g.meta]
        assert types.count("a") == 8
        assert types.count("b") == 6
        layers = {m.label: m.layer for m in g.meta}
        assert layers["b601"] == "stromal"
        assert layers["b605"] == "lumenal"

    def test_invalid_json_reports_line(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{"sites": [,]}')
        with pytest.raises(GraphFormatError, match="line"):
            load_site_graph(p)

    def test_unknown_key_rejected(self, tmp_path):
        p = write_hamiltonian(tmp_path / "g.json", [0.0], [[0.0]], extra={"bogus": 1})
        with pytest.raises(GraphFormatError, match="bogus"):
            load_site_graph(p)

    def test_missing_key_rejected(self, tmp_path):
        p = tmp_path / "g.json"
        p.write_text(json.dumps({"sites": [{"label": "s1"}], "energies_cm1": [0.0]}))
        with pytest.raises(GraphFormatError, match="couplings_cm1"):
            load_site_graph(p)

    def test_duplicate_labels_rejected(self, tmp_path):
        p = write_hamiltonian(tmp_path / "g.json", [0.0, 0.0],
                              [[0.0, 1.0], [1.0, 0.0]], labels=["x", "x"])
        with pytest.raises(GraphFormatError, match="unique"):
            load_site_graph(p)


class TestAssembleOligomer:
    def test_chain_dimer_cross_coupling(self):
        mono = make_graph([0.0, 10.0], [[0, 5.0], [5.0, 0]])
        spec = OligomerSpec(n_monomers=2, topology="chain", links=(("s1", "s2", 42.0),))
        g = assemble_oligomer(mono, spec)
        assert g.n_sites == 4
        assert g.couplings[0][3] == 42.0
        cross = g.couplings[:2, 2:].copy()
        cross[0, 1] = 0.0
        assert np.all(cross == 0.0)
        assert g.labels == ("s1_m0", "s2_m0", "s1_m1", "s2_m1")
        assert [m.monomer_index for m in g.meta] == [0, 0, 1, 1]

    def test_ring_trimer_single_link(self):
        mono = builtin_graph("lhcii_monomer_template")
        spec = OligomerSpec(n_monomers=3, topology="ring", links=(("b601", "b609", 42.0),))
        g = assemble_oligomer(mono, spec)
        assert g.n_sites == 42
        nb = 14
        cross = g.couplings.copy()
        for i in range(3):
            cross[i * nb:(i + 1) * nb, i * nb:(i + 1) * nb] = 0.0
        nonzero = np.argwhere(np.triu(cross) != 0.0)
        assert len(nonzero) == 3
        assert np.all(cross[tuple(nonzero.T)] == 42.0)

    def test_ring_trimer_two_links(self):
        mono = builtin_graph("lhcii_monomer_template")
        spec = OligomerSpec(
            n_monomers=3, topology="ring",
            links=(("b601", "b609", 42.0), ("b601", "b608", 42.0)),
        )
        g = assemble_oligomer(mono, spec)
        nb = 14
        cross = g.couplings.copy()
        for i in range(3):
            cross[i * nb:(i + 1) * nb, i * nb:(i + 1) * nb] = 0.0
        assert len(np.argwhere(np.triu(cross) != 0.0)) == 6

    def test_monomer_blocks_preserved(self):
        mono = builtin_graph("toy_antenna6")
        spec = OligomerSpec(n_monomers=3, topology="ring",
                            links=(("b1", "b3", 42.0), ("b1", "a1", 42.0)))
        g = assemble_oligomer(mono, spec)
        h_mono = mono.hamiltonian_cm1()
        h_full = g.hamiltonian_cm1()
        nb = mono.n_sites
        for i in range(3):
            block = h_full[i * nb:(i + 1) * nb, i * nb:(i + 1) * nb]
            assert np.array_equal(block, h_mono)

    def test_unknown_link_label(self):
        mono = make_graph([0.0], [[0.0]])
        with pytest.raises(GraphFormatError, match="nope"):
            assemble_oligomer(mono, OligomerSpec(n_monomers=2, topology="chain",
                                                 links=(("nope", "s1", 1.0),)))

    def test_bad_monomer_count(self):
        with pytest.raises(GraphFormatError):
            OligomerSpec(n_monomers=0)


class TestSpectrum:
    def test_single_site(self):
        w, v = spectrum(make_graph([0.0], [[0.0]]))
        assert w[0] == 0.0
        assert v[0, 0] == 1.0

    def test_degenerate_dimer_analytic(self):
        w, v = spectrum(degenerate_dimer(100.0))
        assert np.allclose(w, [-100.0, 100.0], atol=1e-10)
        r = 1.0 / np.sqrt(2.0)
        assert np.allclose(np.abs(v), [[r, r], [r, r]], atol=1e-12)
        assert np.allclose(v.T @ v, np.eye(2), atol=1e-10)

    def test_trace_identity(self):
        rng = np.random.default_rng(3)
        from helpers import random_site_graph

        g = random_site_graph(rng, 9)
        w, _ = spectrum(g)
        assert np.isclose(w.sum(), g.energies.sum(), rtol=1e-8)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(4)
        from helpers import random_site_graph

        g = random_site_graph(rng, 6)
        perm = rng.permutation(6)
        g2 = make_graph(g.energies[perm], g.couplings[np.ix_(perm, perm)])
        w1, _ = spectrum(g)
        w2, _ = spectrum(g2)
        assert np.allclose(w1, w2, atol=1e-10)


class TestSampleDisorder:
    def test_zero_sigma_identity(self):
        g = degenerate_dimer()
        spec = DisorderSpec(sigma=0.0, n_realizations=5, seed=99)
        out = sample_disorder(g, spec, 2)
        assert np.array_equal(out.energies, g.energies)

    def test_deterministic_per_seed_and_index(self):
        g = degenerate_dimer()
        spec = DisorderSpec(sigma=25.0, n_realizations=10, seed=7)
        a = sample_disorder(g, spec, 3)
        b = sample_disorder(g, spec, 3)
        assert np.array_equal(a.energies, b.energies)
        c = sample_disorder(g, spec, 4)
        assert not np.array_equal(a.energies, c.energies)

    def test_couplings_untouched(self):
        g = degenerate_dimer()
        spec = DisorderSpec(sigma=25.0, n_realizations=2, seed=7)
        out = sample_disorder(g, spec, 0)
        assert np.array_equal(out.couplings, g.couplings)

    def test_sample_statistics(self):
        # population parameters of the sampler itself: mean eps_0, std sigma
        g = make_graph([120.0, 0.0], [[0.0, 10.0], [10.0, 0.0]])
        n_real = 10_000
        spec = DisorderSpec(sigma=50.0, n_realizations=n_real, seed=2024)
        draws = np.array(
            [sample_disorder(g, spec, r).energies[0] for r in range(n_real)]
        )
        assert abs(draws.mean() - 120.0) < 3.0 * 50.0 / np.sqrt(n_real)
        assert abs(draws.std(ddof=1) - 50.0) < 0.05 * 50.0

    def test_index_out_of_range(self):
        g = degenerate_dimer()
        spec = DisorderSpec(sigma=1.0, n_realizations=3, seed=0)
        with pytest.raises(GraphFormatError):
            sample_disorder(g, spec, 3)
