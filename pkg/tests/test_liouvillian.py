import numpy as np
import pytest

from excitran.errors import ExcitranError, GeneratorNotInvertibleError
from excitran.liouvillian import (
    LindbladModel,
    TrapSpec,
    apply_generator,
    build_superoperator,
    expm_propagate,
    propagate,
    resolvent_solve,
    trap_operator,
)
from excitran.transport import efficiency_resolvent
from excitran.units import TWO_PI_C

from helpers import (
    degenerate_dimer,
    make_graph,
    random_physical_state,
    random_site_graph,
    single_site_graph,
)


def random_model(rng, n, gamma_phi=None, gamma_recomb=None, with_trap=True):
    g = random_site_graph(rng, n)
    trap = TrapSpec(mode="none")
    if with_trap:
        trap = TrapSpec(mode="site_based",
                        targets=(g.labels[rng.integers(n)],),
                        rate=float(rng.uniform(0.2, 2.0)))
    return LindbladModel(
        graph=g,
        gamma_phi=float(rng.uniform(0.5, 10.0)) if gamma_phi is None else gamma_phi,
        gamma_recomb=float(rng.uniform(0.001, 0.1)) if gamma_recomb is None else gamma_recomb,
        trap=trap,
    )


class TestApplyGenerator:
    def test_dephasing_kills_only_coherences(self):
        g = make_graph([0.0, 0.0], [[0.0, 0.0], [0.0, 0.0]])
        m = LindbladModel(graph=g, gamma_phi=5.0)
        rho = np.array([[0.6, 0.3], [0.3, 0.4]], dtype=complex)
        d = apply_generator(m, rho)
        assert d[0, 1] == pytest.approx(-1.5, abs=1e-14)
        assert d[0, 0] == pytest.approx(0.0, abs=1e-14)

    def test_uniform_recombination_on_populations(self):
        g = make_graph([0.0, 0.0], [[0.0, 0.0], [0.0, 0.0]])
        m = LindbladModel(graph=g, gamma_recomb=0.5)
        d = apply_generator(m, np.diag([1.0, 0.0]).astype(complex))
        assert np.allclose(d, np.diag([-1.0, 0.0]), atol=1e-14)

    def test_commutator_hand_evaluated(self):
        # 2x2 coherent term: drho/dt = -i[H, rho] with H = omega_v * sigma_x
        m = LindbladModel(graph=degenerate_dimer(100.0))
        omega_v = TWO_PI_C * 100.0
        rho = np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex)
        d = apply_generator(m, rho)
        assert d[0, 0] == pytest.approx(0.0, abs=1e-12)
        assert d[0, 1] == pytest.approx(1j * omega_v, abs=1e-12)
        assert d[1, 0] == pytest.approx(-1j * omega_v, abs=1e-12)

    def test_dimension_mismatch(self):
        m = LindbladModel(graph=single_site_graph())
        with pytest.raises(ValueError):
            apply_generator(m, np.eye(2, dtype=complex))


class TestBuildSuperoperator:
    def test_scalar_case(self):
        m = LindbladModel(graph=single_site_graph(), gamma_recomb=0.001)
        sop = build_superoperator(m)
        assert sop.data.shape == (1, 1)
        assert sop.data[0, 0] == pytest.approx(-0.002, abs=1e-15)

    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
    def test_matches_matrix_free(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 7))
        m = random_model(rng, n)
        sop = build_superoperator(m)
        rho = random_physical_state(rng, n)
        lhs = (sop.data @ rho.reshape(-1)).reshape(n, n)
        rhs = apply_generator(m, rho)
        assert np.max(np.abs(lhs - rhs)) < 1e-10

    def test_pure_dephasing_spectrum(self):
        # H=0, Gamma=k=0: eigenvalues 0 (populations) and -gamma (coherences)
        n = 4
        g = make_graph([0.0] * n, np.zeros((n, n)))
        m = LindbladModel(graph=g, gamma_phi=2.5)
        w = np.linalg.eigvals(build_superoperator(m).data)
        assert np.max(w.real) <= 1e-12
        assert np.sum(np.abs(w) < 1e-12) >= n

    def test_preserves_hermiticity(self):
        rng = np.random.default_rng(11)
        m = random_model(rng, 5)
        sop = build_superoperator(m)
        rho = random_physical_state(rng, 5)
        out = (sop.data @ rho.reshape(-1)).reshape(5, 5)
        assert np.max(np.abs(out - out.conj().T)) < 1e-10

    def test_dimension_cap(self):
        n = 65
        g = make_graph(np.zeros(n), np.zeros((n, n)))
        with pytest.raises(ExcitranError, match="64"):
            build_superoperator(LindbladModel(graph=g))


class TestPropagate:
    def test_closed_form_decay(self):
        m = LindbladModel(graph=single_site_graph(), gamma_recomb=0.5)
        traj = propagate(m, np.array([[1.0 + 0j]]), [0.0, 1.0])
        assert traj[1][0, 0].real == pytest.approx(np.exp(-1.0), abs=1e-8)

    def test_rabi_oscillation(self):
        m = LindbladModel(graph=degenerate_dimer(100.0))
        omega_v = TWO_PI_C * 100.0
        period = np.pi / omega_v
        ts = np.linspace(0.0, 2.0 * period, 41)
        traj = propagate(m, np.diag([1.0, 0.0]).astype(complex), ts)
        expected = np.sin(omega_v * ts) ** 2
        assert np.max(np.abs(traj[:, 1, 1].real - expected)) < 1e-7

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_against_dense_exponential(self, seed):
        rng = np.random.default_rng(100 + seed)
        n = int(rng.integers(2, 9))
        m = random_model(rng, n)
        rho0 = random_physical_state(rng, n, trace=1.0)
        ts = np.linspace(0.0, 2.0, 9)
        a = propagate(m, rho0, ts)
        b = expm_propagate(m, rho0, ts)
        assert np.max(np.abs(a - b)) < 1e-7

    def test_trace_monotone_and_conserved(self):
        rng = np.random.default_rng(5)
        g = random_site_graph(rng, 4)
        rho0 = random_physical_state(rng, 4, trace=1.0)
        ts = np.linspace(0.0, 100.0, 26)

        open_m = LindbladModel(graph=g, gamma_phi=2.0, gamma_recomb=0.02,
                               trap=TrapSpec(mode="site_based", targets=(g.labels[0],), rate=0.5))
        traces = np.real(np.trace(propagate(open_m, rho0, ts), axis1=1, axis2=2))
        assert np.all(np.diff(traces) <= 1e-10)

        closed_m = LindbladModel(graph=g, gamma_phi=2.0)
        traces = np.real(np.trace(propagate(closed_m, rho0, ts), axis1=1, axis2=2))
        assert np.max(np.abs(traces - 1.0)) < 1e-9

    def test_positivity_along_trajectory(self):
        rng = np.random.default_rng(6)
        m = random_model(rng, 5)
        rho0 = random_physical_state(rng, 5, trace=1.0)
        traj = propagate(m, rho0, np.linspace(0.0, 10.0, 21))
        for rho in traj:
            assert np.min(np.linalg.eigvalsh(rho)) >= -1e-8

    def test_pure_dephasing_fixed_point_and_decay(self):
        n = 3
        g = make_graph([0.0] * n, np.zeros((n, n)))
        m = LindbladModel(graph=g, gamma_phi=1.7)
        diag = np.diag([0.5, 0.3, 0.2]).astype(complex)
        ts = np.linspace(0.0, 3.0, 7)
        traj = propagate(m, diag, ts)
        assert np.max(np.abs(traj - diag)) < 1e-9

        rho0 = diag.copy()
        rho0[0, 1] = rho0[1, 0] = 0.2
        traj = propagate(m, rho0, ts)
        expected = 0.2 * np.exp(-1.7 * ts)
        assert np.max(np.abs(traj[:, 0, 1].real - expected)) < 1e-8

    def test_uniform_recombination_factorizes(self):
        rng = np.random.default_rng(8)
        g = random_site_graph(rng, 4)
        rho0 = random_physical_state(rng, 4, trace=1.0)
        ts = np.linspace(0.0, 5.0, 11)
        base = propagate(LindbladModel(graph=g, gamma_phi=3.0), rho0, ts)
        gamma = 0.25
        damped = propagate(LindbladModel(graph=g, gamma_phi=3.0, gamma_recomb=gamma), rho0, ts)
        factor = np.exp(-2.0 * gamma * ts)[:, None, None]
        assert np.max(np.abs(damped - factor * base)) < 1e-8

    def test_unsorted_times_rejected(self):
        m = LindbladModel(graph=single_site_graph())
        with pytest.raises(ValueError):
            propagate(m, np.array([[1.0 + 0j]]), [1.0, 0.5])


class TestResolventSolve:
    def test_scalar_inverse(self):
        m = LindbladModel(graph=single_site_graph(), gamma_recomb=0.001)
        sop = build_superoperator(m)
        x = resolvent_solve(sop, np.array([1.0 + 0j]))
        assert x[0] == pytest.approx(-500.0, abs=1e-9)

    def test_singular_generator_detected(self):
        # trace conserved => zero eigenvalue
        m = LindbladModel(graph=degenerate_dimer(), gamma_phi=2.0)
        sop = build_superoperator(m)
        b = np.diag([1.0, 0.0]).astype(complex).reshape(-1)
        with pytest.raises(GeneratorNotInvertibleError, match="not invertible"):
            resolvent_solve(sop, b)

    def test_residual_contract(self):
        rng = np.random.default_rng(12)
        m = random_model(rng, 5)
        sop = build_superoperator(m)
        b = random_physical_state(rng, 5, trace=1.0).reshape(-1)
        x = resolvent_solve(sop, b)
        res = np.max(np.abs(sop.data @ x - b))
        assert res < 1e-9 * np.max(np.abs(b))


class TestTrapOperator:
    def test_site_and_exciton_traps_coincide_on_localized_eigenstate(self):
        # block-diagonal graph: the lowest eigenstate IS the isolated site s3
        g = make_graph([0.0, 0.0, -500.0],
                       [[0.0, 100.0, 0.0], [100.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
        site = LindbladModel(
            graph=g, gamma_phi=2.0, gamma_recomb=0.01,
            trap=TrapSpec(mode="site_based", targets=("s3",), rate=1.0),
        )
        exciton = LindbladModel(
            graph=g, gamma_phi=2.0, gamma_recomb=0.01,
            trap=TrapSpec(mode="exciton_based", targets=(0,), rate=1.0),
        )
        assert np.max(np.abs(trap_operator(site) - trap_operator(exciton))) < 1e-12

        psi = np.array([1.0, 0.0, 1.0]) / np.sqrt(2.0)
        rho0 = np.outer(psi, psi).astype(complex)
        eta_site = efficiency_resolvent(site, rho0).eta
        eta_exc = efficiency_resolvent(exciton, rho0).eta
        assert eta_site == pytest.approx(eta_exc, abs=1e-8)

    def test_exciton_index_validation(self):
        g = degenerate_dimer()
        with pytest.raises(ExcitranError):
            LindbladModel(graph=g, trap=TrapSpec(mode="exciton_based", targets=(2,), rate=1.0))

    def test_trap_requires_targets(self):
        with pytest.raises(ExcitranError):
            TrapSpec(mode="site_based", targets=(), rate=1.0)
