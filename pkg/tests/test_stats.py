"""Monte-Carlo harness: batches, aggregation, certificates, controls.

Replica counts here are sized for a fast development loop; the full-size
runs at the documented parameters live in the acceptance module.
"""

import math

import numpy as np
import pytest

from splitmut.model import LifespanMeasure, ModelI, ModelII, ModelParams
from splitmut import analytic as an
from splitmut import stats as stm

M21 = LifespanMeasure.exponential(2.0, 1.0)
P_II = ModelParams(M21, ModelII(1.5))
P_I = ModelParams(M21, ModelI(0.25))


@pytest.fixture(scope="module")
def batch_t3():
    cfg = stm.CollectConfig(params=P_II, t=3.0, n_replicas=6000, seed=11,
                            i_max=5, age_grid=(1.0, 2.5, 3.0), size_grid=(1, 2))
    return stm.run_batch(cfg)


@pytest.fixture(scope="module")
def batch_limits():
    t = 9.0
    ct = an.old_family_scale(P_II, t)
    cfg = stm.CollectConfig(params=P_II, t=t, n_replicas=3000, seed=22,
                            conditioned=True, age_grid=(ct, ct + 1.0),
                            age_intervals=((ct, math.inf), (ct, ct + 0.7),
                                           (ct + 0.7, ct + 1.7)))
    return stm.run_batch(cfg)


class TestBatchMechanics:
    def test_aggregation_is_index_ordered_merge(self):
        cfg = stm.CollectConfig(params=P_II, t=2.0, n_replicas=40, seed=5,
                                i_max=3, age_grid=(1.0, 2.0), size_grid=(1,))
        full = stm.run_batch(cfg)
        lo = stm._collect_range(cfg, 0, 17)
        hi = stm._collect_range(cfg, 17, 40)
        assert np.array_equal(np.concatenate([lo["z"], hi["z"]]), full.z)
        assert np.array_equal(np.concatenate([lo["spectrum"], hi["spectrum"]]),
                              full.spectrum)

    def test_threads_do_not_change_results(self):
        base = dict(params=P_II, t=2.5, n_replicas=60, seed=9, i_max=3,
                    age_grid=(1.0, 2.5), size_grid=(1, 2),
                    age_intervals=((1.0, 2.0),))
        one = stm.run_batch(stm.CollectConfig(**base, threads=1))
        two = stm.run_batch(stm.CollectConfig(**base, threads=2))
        for field in ("z", "attempts", "spectrum", "total_types", "old_counts",
                      "large_counts", "interval_counts"):
            assert np.array_equal(getattr(one, field), getattr(two, field))

    def test_conditioned_batch_counts_attempts(self):
        cfg = stm.CollectConfig(params=P_II, t=4.0, n_replicas=50, seed=7,
                                conditioned=True)
        batch = stm.run_batch(cfg)
        assert np.all(batch.z > 0)
        assert batch.total_attempts >= batch.n_replicas

    def test_unconditional_mean_se(self):
        cfg = stm.CollectConfig(params=P_II, t=2.0, n_replicas=30, seed=3,
                                conditioned=True)
        batch = stm.run_batch(cfg)
        vals = batch.z.astype(float)
        mean, se = batch.unconditional_mean_se(vals)
        n = batch.total_attempts
        assert mean == pytest.approx(vals.sum() / n)
        var = (vals**2).sum() / n - mean**2
        assert se == pytest.approx(math.sqrt(var / n))

    def test_reports_are_reproducible(self, batch_t3):
        cfg = batch_t3.config
        again = stm.run_batch(cfg)
        r1 = stm.test_geometric_marginal(batch_t3)
        r2 = stm.test_geometric_marginal(again)
        assert r1.statistic == r2.statistic and r1.p_value == r2.p_value


class TestPooledCells:
    def test_cells_partition_the_sample(self):
        rng = np.random.default_rng(0)
        values = rng.geometric(0.05, size=4000)
        obs, exp = stm._pooled_geometric_cells(values, 0.05)
        assert obs.sum() == 4000
        assert exp.sum() == pytest.approx(4000, rel=1e-9)
        assert exp.min() >= 5.0

    def test_small_support(self):
        rng = np.random.default_rng(1)
        values = rng.geometric(0.7, size=2000)
        obs, exp = stm._pooled_geometric_cells(values, 0.7)
        assert exp.min() >= 5.0
        assert obs.sum() == 2000


class TestMarginalCertificates:
    def test_geometric_pass_and_controls(self, batch_t3):
        assert stm.test_geometric_marginal(batch_t3).passed
        assert not stm.test_geometric_marginal(batch_t3, w_scale=1.2).passed
        assert not stm.test_geometric_marginal(batch_t3, w_scale=0.8).passed

    def test_extinction_mass(self, batch_t3):
        assert stm.test_extinction_mass(batch_t3).passed
        assert not stm.test_extinction_mass(batch_t3, null_scale=1.2).passed

    def test_insufficient_sample(self):
        cfg = stm.CollectConfig(params=P_II, t=2.0, n_replicas=50, seed=2)
        batch = stm.run_batch(cfg)
        with pytest.raises(stm.InsufficientSample):
            stm.test_geometric_marginal(batch)

    def test_exponential_limit_needs_supercritical(self):
        crit = ModelParams(LifespanMeasure.exponential(1, 1), ModelII(0.5))
        cfg = stm.CollectConfig(params=crit, t=2.0, n_replicas=1200, seed=2,
                                conditioned=True)
        with pytest.raises(ValueError):
            stm.test_exponential_limit(stm.run_batch(cfg))


class TestSpectrumCertificates:
    def test_expected_spectrum_pass(self, batch_t3):
        report = stm.test_expected_spectrum(batch_t3)
        assert report.passed

    def test_se_floor_for_empty_cells(self):
        cfg = stm.CollectConfig(params=P_II, t=1.5, n_replicas=400, seed=13,
                                i_max=40, age_grid=(1.5,))
        batch = stm.run_batch(cfg)
        table = stm.mc_expected_spectrum(batch)
        # sizes near 40 are never observed at t=1.5 with 400 replicas,
        # yet the z-scores stay finite thanks to the pseudo-count floor
        assert (batch.spectrum[:, -1, 0] == 0).all()
        assert np.isfinite(table["z"]).all()

    def test_degenerate_single_family_control(self):
        cfg = stm.CollectConfig(params=ModelParams(M21, ModelII(0.0)), t=3.0,
                                n_replicas=300, seed=4, conditioned=True,
                                i_max=2, age_grid=(3.0,))
        batch = stm.run_batch(cfg)
        assert np.all(batch.total_types == 1)

    def test_critical_spectrum_independent_of_horizon(self):
        params = ModelParams(LifespanMeasure.exponential(1, 1), ModelII(0.5))
        means = {}
        for t in (4.0, 6.0, 8.0):
            cfg = stm.CollectConfig(params=params, t=t, n_replicas=4000,
                                    seed=31, i_max=3, age_grid=(3.0,))
            batch = stm.run_batch(cfg)
            means[t] = [batch.unconditional_mean_se(batch.spectrum[:, i, 0])
                        for i in range(3)]
        for i in range(3):
            for ta, tb in [(4.0, 6.0), (6.0, 8.0), (4.0, 8.0)]:
                ma, sa = means[ta][i]
                mb, sb = means[tb][i]
                assert abs(ma - mb) <= 3 * math.hypot(sa, sb)

    def test_spectrum_limits(self):
        mk = lambda tt, sd: stm.run_batch(stm.CollectConfig(
            params=P_II, t=tt, n_replicas=600, seed=sd, conditioned=True,
            i_max=3, age_grid=(tt,)))
        reports = stm.test_spectrum_limits(mk(8.0, 41), mk(10.0, 42))
        for r in reports:
            assert r.passed, r.line()


class TestOldFamilyCertificates:
    def test_mean_and_geometric(self, batch_limits):
        for r in stm.test_old_families_mean(batch_limits, a_list=(0.0, 1.0)):
            assert r.passed, r.line()
            # sharp cross-check against the exact finite-horizon expectation
            exact = an.expected_old_families(
                batch_limits.config.params,
                r.details["c_t"] + float(r.name.split("=")[1].rstrip("]")),
                batch_limits.config.t)
            assert abs(r.details["mean"] - exact) <= 3.5 * r.details["se"]
        assert stm.test_old_families_geometric(batch_limits, 0.0).passed
        assert not stm.test_old_families_geometric(batch_limits, 0.0,
                                                   mass_scale=1.25).passed

    def test_age_point_process(self, batch_limits):
        reports = stm.test_age_point_process(batch_limits)
        names = {r.name for r in reports}
        assert names == {"age_point_means", "age_point_covariance"}
        for r in reports:
            assert r.passed, r.line()
        cov = next(r for r in reports if r.name == "age_point_covariance")
        # only the disjoint pair is compared
        assert list(cov.details) == ["(1,2)"]
        # positive dependence through the common mixture
        assert cov.details["(1,2)"]["cov"] > 0

    def test_half_line_reduces_to_old_family_count(self, batch_limits):
        # counts on (c_t, inf) equal O_t(c_t) replica by replica
        assert np.array_equal(batch_limits.interval_counts[:, 0],
                              batch_limits.old_counts[:, 0])


class TestLargeFamilyCertificates:
    @pytest.fixture(scope="class")
    def batch_large(self):
        params = ModelParams(LifespanMeasure.exponential(4.8, 4.0), ModelII(2.0))
        n_star = 25
        tn = an.subsequence_times(params, n_star)
        cfg = stm.CollectConfig(params=params, t=tn, n_replicas=250, seed=31,
                                conditioned=True,
                                size_grid=tuple(n_star + c for c in range(-1, 3)))
        return stm.run_batch(cfg), n_star

    def test_reports(self, batch_large):
        batch, n_star = batch_large
        reports = stm.test_large_families_II(batch, n_star)
        by_name = {r.name: r for r in reports}
        assert by_name["large_families_exact"].passed
        assert by_name["large_families_ratio"].passed
        assert by_name["large_families_ratio"].details["A_hat"] > 0
        rows = by_name["large_families_ratio"].details["ratios"]
        for c, row in rows.items():
            assert row["exact_ratio"] == pytest.approx(
                an.expected_large_family_offset_ratio(
                    batch.config.params, n_star + c, batch.config.t), rel=1e-6)

    def test_wrong_model_rejected(self, batch_t3):
        cfg = stm.CollectConfig(params=P_I, t=2.0, n_replicas=10, seed=1,
                                size_grid=(1, 2, 3))
        batch = stm.run_batch(cfg)
        with pytest.raises(ValueError):
            stm.test_large_families_II(batch, 2, c_list=(-1,))


class TestProbe:
    def test_conjecture_rows(self):
        report = stm.probe_conjecture(ModelParams(M21, ModelI(0.5)),
                                      [4.0, 5.0], 150, seed=3)
        assert report.exploratory and report.passed
        rows = report.details["rows"]
        assert [row["t"] for row in rows] == [4.0, 5.0]
        for row in rows:
            assert set(row) >= {"t", "x_t", "mean", "var", "histogram"}
            assert row["x_t"] == pytest.approx(
                an.conjecture_scale_I(ModelParams(M21, ModelI(0.5)), row["t"]))

    def test_supercritical_scale_probe(self):
        params = ModelParams(LifespanMeasure.exponential(4, 1), ModelII(1.0))
        report = stm.probe_conjecture(params, [2.0, 2.5], 150, seed=5)
        rows = report.details["rows"]
        assert rows[0]["x_t"] == pytest.approx(math.exp(2.0 * 2.0))
        assert rows[1]["x_t"] == pytest.approx(math.exp(2.0 * 2.5))
