import numpy as np
import pytest

from sctlab import (
    Density,
    ParticleEnsemble,
    consistency_run,
    empirical_distance,
    init_ensemble,
    ks_distance,
    sample,
    step_ensemble,
)
from sctlab.particles import RNG_ALGORITHM, histogram_to_csv, positions_to_csv

TWO_PI = 2 * np.pi


class TestInit:
    def test_reproducible(self):
        a = init_ensemble(4, seed=12)
        b = init_ensemble(4, seed=12)
        assert np.array_equal(a.positions, b.positions)
        assert a.rng_algorithm == RNG_ALGORITHM

    def test_single_particle(self):
        e = init_ensemble(1, seed=0)
        assert e.positions.shape == (1,)
        assert 0.0 <= e.positions[0] < 1.0

    def test_uniform_ks(self):
        e = init_ensemble(10**5, seed=5)
        stat = ks_distance(e, Density.uniform(256))
        assert stat < 1.63 / np.sqrt(10**5)  # 1% critical value

    def test_density_sampling_ks(self):
        rho = Density(sample(lambda x: 1 + 0.4 * np.cos(TWO_PI * x), 256))
        e = init_ensemble(10**5, seed=6, initial=rho)
        assert ks_distance(e, rho) < 1.63 / np.sqrt(10**5)

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            init_ensemble(0, seed=1)
        with pytest.raises(ValueError):
            init_ensemble(4, seed=1, initial="gaussian")
        with pytest.raises(ValueError):
            ParticleEnsemble(positions=np.array([0.2, 1.0]), epsilon=0.0)


class TestStep:
    def test_uncoupled_factorization(self, doubling, sin4pi_kernel):
        # epsilon = 0: every coordinate follows its own f-orbit exactly
        e = init_ensemble(64, seed=2, epsilon=0.0)
        orbit = e.positions.copy()
        for _ in range(5):
            e = step_ensemble(e, doubling, sin4pi_kernel, mode="exact")
            orbit = doubling.apply(orbit)
            assert np.array_equal(e.positions, orbit)
        assert e.step_count == 5

    def test_single_particle_self_coupling(self, doubling, diff_sin_kernel):
        x0 = 0.3
        e = ParticleEnsemble(positions=np.array([x0]), epsilon=0.1)
        out = step_ensemble(e, doubling, diff_sin_kernel, mode="exact")
        expect = doubling.apply(x0 + 0.1 * diff_sin_kernel.h(x0, x0))
        assert out.positions[0] == pytest.approx(expect, abs=1e-14)

    def test_permutation_equivariance(self, doubling, diff_sin_kernel, rng):
        e = init_ensemble(500, seed=9, epsilon=0.05)
        perm = rng.permutation(500)
        stepped = step_ensemble(e, doubling, diff_sin_kernel, mode="exact")
        permuted = ParticleEnsemble(positions=e.positions[perm], epsilon=0.05)
        stepped_perm = step_ensemble(permuted, doubling, diff_sin_kernel, mode="exact")
        # identical up to summation order of the pairwise field
        assert np.max(np.abs(stepped_perm.positions - stepped.positions[perm])) < 1e-12

    def test_exact_vs_binned(self, doubling, diff_sin_kernel):
        e = init_ensemble(4000, seed=5, epsilon=0.05)
        a = step_ensemble(e, doubling, diff_sin_kernel, mode="exact")
        b = step_ensemble(e, doubling, diff_sin_kernel, mode="binned", n_bins=1024)
        assert np.max(np.abs(a.positions - b.positions)) < 1e-5

    def test_auto_mode_cutoff(self, doubling, sin4pi_kernel):
        small = init_ensemble(100, seed=1, epsilon=0.01)
        out = step_ensemble(small, doubling, sin4pi_kernel, mode="auto")
        exact = step_ensemble(small, doubling, sin4pi_kernel, mode="exact")
        assert np.array_equal(out.positions, exact.positions)

    def test_mode_validated(self, doubling, sin4pi_kernel):
        e = init_ensemble(10, seed=1)
        with pytest.raises(ValueError):
            step_ensemble(e, doubling, sin4pi_kernel, mode="fast")

    def test_determinism(self, doubling, sin4pi_kernel):
        runs = []
        for _ in range(2):
            e = init_ensemble(200, seed=3, epsilon=0.02)
            for _ in range(10):
                e = step_ensemble(e, doubling, sin4pi_kernel, mode="exact")
            runs.append(e.positions)
        assert np.array_equal(runs[0], runs[1])


class TestDistances:
    def test_equispaced_half_over_m(self):
        m = 500
        e = ParticleEnsemble(positions=np.arange(m) / m, epsilon=0.0)
        assert empirical_distance(e, Density.uniform(256)) <= 1 / (2 * m)

    def test_single_atom_quarter(self):
        e = ParticleEnsemble(positions=np.array([0.5]), epsilon=0.0)
        d = empirical_distance(e, Density.uniform(256))
        assert d == pytest.approx(0.25, abs=1e-3)

    def test_quantile_construction(self):
        # atoms at the quantiles of rho: distance O(1/M)
        rho = Density(sample(lambda x: 1 + 0.4 * np.cos(TWO_PI * x), 256))
        m = 1000
        u = (np.arange(m) + 0.5) / m
        table = np.linspace(0, 1, 8193)
        cdf = rho.fn.cumulative(table)
        pos = np.interp(u, cdf, table)
        e = ParticleEnsemble(positions=np.clip(pos, 0, np.nextafter(1, 0)), epsilon=0.0)
        assert empirical_distance(e, rho) <= 3.0 / m

    def test_ks_exact_small_case(self):
        e = ParticleEnsemble(positions=np.array([0.25, 0.75]), epsilon=0.0)
        # F_emp jumps to 1/2 at 0.25 and 1 at 0.75 against G(x) = x
        assert ks_distance(e, Density.uniform(256)) == pytest.approx(0.25, abs=1e-12)

    def test_rotation_shift_detected(self):
        rho = Density(sample(lambda x: 1 + 0.4 * np.cos(TWO_PI * x), 256))
        m = 2000
        e_rho = init_ensemble(m, seed=8, initial=rho)
        d_match = empirical_distance(e_rho, rho)
        d_uniform = empirical_distance(init_ensemble(m, seed=8), rho)
        assert d_match < d_uniform


class TestConsistencyRun:
    def test_uncoupled_floor(self, doubling, sin4pi_kernel):
        rep = consistency_run(
            doubling, sin4pi_kernel, 0.0, 2000, seed=4, burn_in=10, horizon=20
        )
        assert rep.mean_distance < 5.0 / np.sqrt(2000)
        assert rep.mode == "exact"
        assert len(rep.distances) == 20
        assert rep.solver_iterations == 1

    def test_zero_kernel_matches_uncoupled(self, doubling, sin4pi_kernel, zero_kernel):
        a = consistency_run(
            doubling, sin4pi_kernel, 0.0, 500, seed=4, burn_in=5, horizon=10
        )
        b = consistency_run(
            doubling, zero_kernel, 0.3, 500, seed=4, burn_in=5, horizon=10
        )
        assert a.distances == b.distances

    def test_fixed_initial_shortens_transient(self, doubling, sin4pi_kernel):
        rep = consistency_run(
            doubling, sin4pi_kernel, 0.02, 5000, seed=11, burn_in=5, horizon=10,
            initial="fixed",
        )
        assert rep.mean_distance < 5.0 / np.sqrt(5000)

    def test_report_json(self, doubling, sin4pi_kernel):
        rep = consistency_run(
            doubling, sin4pi_kernel, 0.0, 100, seed=1, burn_in=1, horizon=2
        )
        d = rep.to_json_dict()
        assert d["rng_algorithm"] == RNG_ALGORITHM
        assert d["ensemble_size"] == 100
        assert len(d["ks_values"]) == 2


class TestSnapshots:
    def test_positions_csv(self, tmp_path):
        e = init_ensemble(5, seed=2)
        path = tmp_path / "pos.csv"
        positions_to_csv(e, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "step,index,position"
        assert len(lines) == 6

    def test_histogram_csv(self, tmp_path):
        e = init_ensemble(1000, seed=2)
        path = tmp_path / "hist.csv"
        histogram_to_csv(e.positions, path, n_bins=64)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "bin_center,count"
        counts = [int(line.split(",")[1]) for line in lines[1:]]
        assert sum(counts) == 1000
