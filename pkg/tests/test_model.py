"""Lifespan measures, mutation mechanisms and the clonal transforms."""

import math

import numpy as np
import pytest

from splitmut.model import (
    Criticality,
    LifespanMeasure,
    ModelI,
    ModelII,
    ModelParams,
    classify,
    clonal_lifespan,
    clonal_params,
    mean_offspring,
    mutation_intensity,
    params_from_config,
    parse_config_file,
)
from splitmut import analytic


def expo_tail_grid(b, d, h=1e-3, y_max=20.0):
    y = np.arange(0.0, y_max + h / 2, h)
    return LifespanMeasure.tabulated(b * np.exp(-d * y), h)


class TestLifespanMeasure:
    def test_exponential_tail(self):
        m = LifespanMeasure.exponential(2.0, 1.0)
        y = np.linspace(0, 5, 11)
        assert np.allclose(m.tail(y), 2.0 * np.exp(-y))

    def test_zero_death_rate_is_immortal(self):
        m = LifespanMeasure.exponential(3.0, 0.0)
        assert m.kind == "immortal"
        assert m.tail(7.0) == 3.0

    def test_tabulated_validation(self):
        with pytest.raises(ValueError):
            LifespanMeasure.tabulated(np.array([1.0, 2.0]), 0.1)  # increasing
        with pytest.raises(ValueError):
            LifespanMeasure.tabulated(np.array([1.0, 0.5]), -0.1)
        with pytest.raises(ValueError):
            LifespanMeasure.exponential(0.0, 1.0)
        with pytest.raises(ValueError):
            LifespanMeasure.exponential(1.0, -1.0)

    def test_tabulated_tail_constant_beyond_grid(self):
        m = LifespanMeasure.tabulated(np.array([2.0, 1.0, 0.5]), 1.0)
        assert m.tail(10.0) == 0.5
        assert m.residual_mass() == 0.5

    def test_mean_examples(self):
        assert mean_offspring(LifespanMeasure.exponential(2, 1)) == 2.0
        assert mean_offspring(LifespanMeasure.exponential(1, 1)) == 1.0
        assert mean_offspring(LifespanMeasure.immortal(1.0)) == math.inf

    def test_mean_tabulated_vs_closed_form(self):
        m = expo_tail_grid(2.0, 1.0)
        assert abs(m.mean() - 2.0) <= 1e-3

    def test_mean_infinite_with_residual(self):
        m = LifespanMeasure.tabulated(np.array([2.0, 1.5, 1.0]), 1.0)
        assert m.mean() == math.inf


class TestClassify:
    @pytest.mark.parametrize("b,d,expected", [
        (2, 1, Criticality.SUPERCRITICAL),
        (1, 1, Criticality.CRITICAL),
        (1, 2, Criticality.SUBCRITICAL),
    ])
    def test_exponential(self, b, d, expected):
        assert classify(LifespanMeasure.exponential(b, d)) is expected

    def test_immortal_supercritical(self):
        assert classify(LifespanMeasure.immortal(1.0)) is Criticality.SUPERCRITICAL


class TestMutationMechanism:
    def test_parameter_ranges(self):
        with pytest.raises(ValueError):
            ModelI(1.5)
        with pytest.raises(ValueError):
            ModelI(-0.1)
        with pytest.raises(ValueError):
            ModelII(-1.0)

    def test_mutation_intensity(self):
        m21 = LifespanMeasure.exponential(2, 1)
        assert mutation_intensity(ModelParams(m21, ModelI(0.25))) == 0.5
        assert mutation_intensity(ModelParams(m21, ModelII(1.5))) == 1.5


class TestClonalParams:
    def test_poisson_marking_example(self):
        cp = clonal_params(ModelParams(LifespanMeasure.exponential(2, 1), ModelII(1.5)))
        assert (cp.b_star, cp.d_star, cp.r_star) == (2.0, 2.5, -0.5)
        assert cp.criticality is Criticality.SUBCRITICAL

    def test_birth_mutation_example(self):
        cp = clonal_params(ModelParams(LifespanMeasure.exponential(2, 1), ModelI(0.5)))
        assert (cp.b_star, cp.d_star, cp.r_star) == (1.0, 1.0, 0.0)
        assert cp.criticality is Criticality.CRITICAL

    def test_vanishing_mutation_recovers_population(self):
        cp = clonal_params(ModelParams(LifespanMeasure.exponential(2, 1), ModelII(1e-12)))
        assert cp.b_star == 2.0
        assert abs(cp.r_star - 1.0) < 1e-10
        assert cp.criticality is Criticality.SUPERCRITICAL

    def test_rejects_tabulated(self):
        params = ModelParams(expo_tail_grid(2, 1), ModelII(1.0))
        with pytest.raises(ValueError):
            clonal_params(params)


class TestClonalLifespan:
    def test_birth_mutation_thins_tail(self):
        base = expo_tail_grid(2.0, 1.0, h=0.01, y_max=10)
        clone = clonal_lifespan(ModelParams(base, ModelI(0.25)))
        y = np.linspace(0, 8, 30)
        assert np.allclose(clone.tail(y), 0.75 * base.tail(y))

    def test_poisson_marking_tilts_tail(self):
        base = expo_tail_grid(2.0, 1.0, h=0.01, y_max=10)
        clone = clonal_lifespan(ModelParams(base, ModelII(0.7)))
        y = np.arange(0, 8.0, 0.25)  # on the grid: interpolation is exact there
        assert np.allclose(clone.tail(y), base.tail(y) * np.exp(-0.7 * y))

    def test_exponential_cases_stay_exponential(self):
        m21 = LifespanMeasure.exponential(2, 1)
        c1 = clonal_lifespan(ModelParams(m21, ModelI(0.25)))
        assert c1.kind == "exponential" and (c1.b, c1.d) == (1.5, 1.0)
        c2 = clonal_lifespan(ModelParams(m21, ModelII(1.5)))
        assert c2.kind == "exponential" and (c2.b, c2.d) == (2.0, 2.5)
        c3 = clonal_lifespan(ModelParams(LifespanMeasure.immortal(2.0), ModelII(0.5)))
        assert c3.kind == "exponential" and (c3.b, c3.d) == (2.0, 0.5)

    @pytest.mark.parametrize("measure", [
        LifespanMeasure.exponential(2.0, 1.0),
        expo_tail_grid(2.0, 1.0, h=1e-3, y_max=25.0),
    ], ids=["closed_form", "tabulated"])
    def test_birth_mutation_branching_identity(self, measure):
        # clonal mechanism: psi_p(lam) = p lam + (1-p) psi(lam)
        p = 0.3
        clone = clonal_lifespan(ModelParams(measure, ModelI(p)))
        for lam in (0.5, 1.0, 2.0, 4.0):
            lhs = analytic.psi(clone, lam)
            rhs = p * lam + (1 - p) * analytic.psi(measure, lam)
            assert abs(lhs - rhs) < 1e-9 * max(1.0, abs(rhs))

    @pytest.mark.parametrize("measure", [
        LifespanMeasure.exponential(2.0, 1.0),
        expo_tail_grid(2.0, 1.0, h=1e-3, y_max=25.0),
    ], ids=["closed_form", "tabulated"])
    def test_poisson_marking_branching_identity(self, measure):
        # clonal mechanism: psi_theta(lam) = lam psi(lam + theta)/(lam + theta)
        theta = 1.2
        clone = clonal_lifespan(ModelParams(measure, ModelII(theta)))
        for lam in (0.5, 1.0, 2.0, 4.0):
            lhs = analytic.psi(clone, lam)
            rhs = lam * analytic.psi(measure, lam + theta) / (lam + theta)
            assert abs(lhs - rhs) < 1e-7 * max(1.0, abs(rhs))

    def test_clonal_exponent_is_branching_root(self):
        # supercritical clonal process: the growth exponent from the rate
        # algebra equals the root found numerically on the clonal measure
        params = ModelParams(LifespanMeasure.exponential(2, 1), ModelII(0.4))
        cp = clonal_params(params)
        root = analytic.malthusian(clonal_lifespan(params))
        assert abs(root - cp.r_star) < 1e-10
        tab = ModelParams(expo_tail_grid(2, 1, h=1e-3, y_max=25), ModelII(0.4))
        root_tab = analytic.malthusian(clonal_lifespan(tab))
        assert abs(root_tab - cp.r_star) < 1e-8

    def test_subcritical_clonal_exponent_is_psi_zero(self):
        params = ModelParams(LifespanMeasure.exponential(2, 1), ModelII(1.5))
        cp = clonal_params(params)
        clone = clonal_lifespan(params)
        # the signed exponent is the nonzero zero of the clonal mechanism
        assert abs(analytic.psi(clone, cp.r_star)) < 1e-12
        pI = ModelParams(LifespanMeasure.exponential(2, 1), ModelI(0.75))
        cpI = clonal_params(pI)
        assert abs(analytic.psi(clonal_lifespan(pI), cpI.r_star)) < 1e-12


class TestConfig:
    def test_parse_file_and_build(self, tmp_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text("# comment\nb = 2.0\nd = 1.0\nmodel = II\ntheta = 1.5\n")
        cfg = parse_config_file(cfg_file)
        params = params_from_config(cfg)
        assert params.b == 2.0
        assert isinstance(params.mutation, ModelII)

    def test_tabulated_from_config(self, tmp_path):
        tail_file = tmp_path / "tail.txt"
        y = np.arange(0, 20, 1e-2)
        np.savetxt(tail_file, 2.0 * np.exp(-y))
        params = params_from_config({"lifespan": "tabulated",
                                     "tail_file": str(tail_file),
                                     "tail_step": 1e-2, "model": "I", "p": 0.1})
        assert params.lifespan.kind == "tabulated"
        assert abs(mean_offspring(params) - 2.0) < 1e-2

    def test_config_errors(self, tmp_path):
        with pytest.raises(ValueError):
            params_from_config({"b": 2, "d": 1, "model": "II"})  # theta missing
        with pytest.raises(ValueError):
            params_from_config({"b": 2, "d": 1, "model": "I"})  # p missing
        with pytest.raises(ValueError):
            params_from_config({"b": 2, "d": 1, "model": "X", "p": 0.1})
        bad = tmp_path / "bad.cfg"
        bad.write_text("just a line without equals\n")
        with pytest.raises(ValueError):
            parse_config_file(bad)
