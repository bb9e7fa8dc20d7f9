import numpy as np
import pytest
from hypothesis import given, strategies as st

from excitonwalk.analysis import Series, msd
from excitonwalk.diffusion import (
    ChainBondData, HoppingRates, analytic_msd_dephasing, classical_hopping_rates, diffusion_coefficient,
    diffusion_coefficient_uniform, diffusion_surface, empirical_diffusion, optimal_dephasing, propagate_classical,
)
from excitonwalk.model import DecoherenceSpec, DisorderSpec, SiteMap, chain_hamiltonian
from excitonwalk.propagation import IntegratorSettings, propagate_master, site_state
from excitonwalk.units import DIMENSIONLESS as U, PHYSICAL

bond_sets = st.integers(1, 40).flatmap(lambda n: st.tuples(
    st.lists(st.floats(0.1, 3.0), min_size=n, max_size=n),
    st.lists(st.floats(-5.0, 5.0), min_size=n, max_size=n),
    st.lists(st.floats(0.05, 10.0), min_size=n, max_size=n),
))


class TestClosedForm:
    def test_ballistic_start(self):
        t = np.array([1e-4, 1e-3])
        np.testing.assert_allclose(analytic_msd_dephasing(1.3, 2.0, t), 2 * 1.3 ** 2 * t ** 2, rtol=1e-3)

    def test_diffusive_slope(self):
        t = np.array([1000.0, 1001.0])
        slope = np.diff(analytic_msd_dephasing(1.0, 3.0, t))[0]
        assert slope == pytest.approx(2 * diffusion_coefficient_uniform(1.0, 3.0, 0.0), rel=1e-12)

    def test_unit_point(self):
        assert analytic_msd_dephasing(1.0, 1.0, 1.0) == pytest.approx(4 / np.e, rel=1e-14)

    def test_physical_units(self):
        J, gamma, t = 60.0, 1 / 69, 10.0
        direct = 4 * J ** 2 / (PHYSICAL.hbar ** 2 * gamma) * (t - (1 - np.exp(-gamma * t)) / gamma)
        assert analytic_msd_dephasing(J, gamma, t, PHYSICAL) == pytest.approx(direct, rel=1e-10)

    def test_matches_master_equation(self):
        n, t = 101, np.linspace(0, 5, 51)
        traj = propagate_master(site_state(n, n // 2), chain_hamiltonian(n, 1.0), DecoherenceSpec.uniform(n, 1.0),
                                t, IntegratorSettings(0.01), U, keep_states=False)
        sim = msd(traj, SiteMap.chain(n)).values[1:]
        np.testing.assert_allclose(sim, analytic_msd_dephasing(1.0, 1.0, t[1:]), rtol=1e-6)

    def test_rejects_zero_dephasing(self):
        with pytest.raises(ValueError):
            analytic_msd_dephasing(1.0, 0.0, 1.0)


class TestRates:
    def test_resonant_unit(self):
        assert classical_hopping_rates(ChainBondData.uniform(1, 1.0, 0.0, 1.0)).rates[0] == 2

    def test_large_detuning_vanishes(self):
        assert classical_hopping_rates(ChainBondData.uniform(1, 1.0, 1e6, 1.0)).rates[0] < 1e-11

    def test_from_chain_bond_fields(self):
        h = chain_hamiltonian(4, [1.0, 2.0, 3.0], DisorderSpec.stark(0.5))
        bonds = ChainBondData.from_chain(h, [1.0, 3.0, 5.0, 7.0])
        np.testing.assert_allclose(bonds.couplings, [1, 2, 3])
        np.testing.assert_allclose(bonds.detunings, [0.5, 0.5, 0.5])
        np.testing.assert_allclose(bonds.dephasing, [2, 4, 6])

    def test_needs_dephasing(self):
        with pytest.raises(ValueError):
            classical_hopping_rates(ChainBondData.uniform(3, 1.0, 0.0, 0.0))

    def test_negative_rate_rejected(self):
        with pytest.raises(ValueError):
            HoppingRates(np.array([1.0, -1.0]))


class TestClassicalWalk:
    def test_uniform_is_stationary(self):
        traj = propagate_classical(np.full(6, 1 / 6), HoppingRates(np.full(5, 0.7)), np.linspace(0, 10, 5))
        np.testing.assert_allclose(traj.populations, 1 / 6, atol=1e-14)

    def test_two_site_relaxation(self):
        t = np.linspace(0, 3, 31)
        traj = propagate_classical([1, 0], HoppingRates(np.array([1.0])), t)
        np.testing.assert_allclose(traj.populations[:, 0], (1 + np.exp(-2 * t)) / 2, atol=1e-14)

    def test_size_mismatch(self):
        with pytest.raises(ValueError):
            propagate_classical([1, 0, 0], HoppingRates(np.array([1.0])), [0, 1])

    def test_strong_dephasing_matches_master(self):
        n, gamma = 51, 10.0
        h = chain_hamiltonian(n, 1.0, DisorderSpec.anderson(1.0, 4))
        t = np.array([0.0, 1.0, 5.0])
        master = propagate_master(site_state(n, n // 2), h, DecoherenceSpec.uniform(n, gamma), t,
                                  IntegratorSettings(0.01), U, keep_states=False)
        rates = classical_hopping_rates(ChainBondData.from_chain(h, gamma))
        walk = propagate_classical(np.eye(n)[n // 2], rates, t)
        assert np.abs(master.populations[-1] - walk.populations[-1]).sum() < 0.02


class TestDiffusionCoefficient:
    def test_uniform_reduces(self):
        bonds = ChainBondData.uniform(10, 1.5, 0.8, 2.0)
        assert diffusion_coefficient(bonds) == pytest.approx(diffusion_coefficient_uniform(1.5, 2.0, 0.64))

    def test_rate_two_everywhere(self):
        assert diffusion_coefficient(ChainBondData.uniform(7, 1.0, 0.0, 1.0)) == pytest.approx(2)

    def test_alternating_detuning(self):
        # resistances (0 + 1)/2 and (4 + 1)/2 average to 3/2
        bonds = ChainBondData(np.ones(200), np.tile([0.0, 2.0], 100), np.ones(200))
        assert diffusion_coefficient(bonds) == pytest.approx(2 / 3, rel=1e-14)

    def test_alternating_detuning_classical_slope(self):
        rates = classical_hopping_rates(ChainBondData(np.ones(400), np.tile([0.0, 2.0], 200), np.ones(400)))
        t = np.linspace(0, 1000, 201)
        walk = propagate_classical(np.eye(401)[200], rates, t)
        estimate = empirical_diffusion([msd(walk, SiteMap.chain(401, 200))], (500.0, 1000.0))
        assert estimate.value == pytest.approx(2 / 3, rel=0.01)

    def test_broken_bond(self):
        bonds = ChainBondData(np.array([1.0, 0.0, 1.0]), np.zeros(3), np.ones(3))
        assert diffusion_coefficient(bonds) == 0.0

    def test_zero_dephasing(self):
        with pytest.raises(ValueError):
            diffusion_coefficient(ChainBondData.uniform(3, 1.0, 0.0, 0.0))

    @given(bond_sets)
    def test_bracketed_by_bond_rates(self, data):
        bonds = ChainBondData(*map(np.array, data))
        k = classical_hopping_rates(bonds).rates
        d = diffusion_coefficient(bonds)
        assert k.min() * (1 - 1e-12) <= d <= k.mean() * (1 + 1e-12)


class TestUniformAndOptimum:
    def test_values(self):
        assert diffusion_coefficient_uniform(1.0, 1.0, 0.0) == 2
        assert diffusion_coefficient_uniform(1.0, 1.0, 1.0) == 1

    def test_optimal(self):
        assert optimal_dephasing(4.0) == 2.0
        assert optimal_dephasing(0.0) == 0.0

    def test_optimum_maximizes(self):
        g = np.linspace(0.1, 6, 60)
        d = diffusion_coefficient_uniform(1.0, g, 4.0)
        assert np.all(d <= diffusion_coefficient_uniform(1.0, 2.0, 4.0) + 1e-15)

    def test_no_disorder_monotone_in_dephasing(self):
        assert np.all(np.diff(diffusion_coefficient_uniform(1.0, np.linspace(0.05, 5, 100), 0.0)) < 0)

    @given(st.floats(0.05, 5.0), st.floats(0.0, 10.0))
    def test_disorder_always_hurts(self, gamma, delta_sq):
        assert diffusion_coefficient_uniform(1.0, gamma, delta_sq + 1e-3) < diffusion_coefficient_uniform(1.0, gamma, delta_sq)

    def test_surface_argmax_tracks_optimum(self):
        d = np.linspace(0.1, 4, 40)
        g = np.linspace(0.01, 5, 500)
        surface = diffusion_surface(d, g)
        assert np.abs(g[surface.argmax(axis=1)] - d).max() <= g[1] - g[0]

    def test_surface_shape(self):
        assert diffusion_surface([0.0, 1.0], [0.5, 1.0, 2.0]).shape == (2, 3)


class TestEmpirical:
    def test_exact_line(self):
        t = np.linspace(0, 10, 101)
        est = empirical_diffusion([Series(t, 2 * 0.37 * t, "msd")], (2.0, 8.0))
        assert est.value == pytest.approx(0.37, rel=1e-12)
        assert est.stderr < 1e-12

    def test_ensemble_stderr(self, rng):
        t = np.linspace(0, 10, 101)
        members = [Series(t, 2 * (1 + 0.1 * rng.standard_normal()) * t, "msd") for _ in range(30)]
        est = empirical_diffusion(members, (1.0, 10.0))
        assert est.n_members == 30 and 0 < est.stderr < 0.05
        assert abs(est.value - 1) < 4 * est.stderr

    def test_too_few_samples(self):
        t = np.linspace(0, 10, 11)
        with pytest.raises(ValueError):
            empirical_diffusion([Series(t, t, "msd")], (2.0, 5.0))

    def test_mismatched_grids(self):
        a = Series(np.linspace(0, 10, 101), np.linspace(0, 10, 101), "msd")
        b = Series(np.linspace(0, 10, 51), np.linspace(0, 10, 51), "msd")
        with pytest.raises(ValueError):
            empirical_diffusion([a, b], (0.0, 10.0))
