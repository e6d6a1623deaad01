import math

import numpy as np
import pytest

from barlab import (
    BarParams,
    CellKind,
    ClassFit,
    DegenerateClass,
    EstimateUnavailableError,
    GwTree,
    InitialLaw,
    NoiseSpec,
    OffspringLaw,
    PopulationSample,
    ThetaEstimate,
    b_n_target,
    derive_rng,
    estimation_error,
    lse,
    regression_functionals,
    sample_tree,
    simulate_population,
)


def full_tree(law, depth):
    cells = {}
    for r in range(depth + 1):
        for lab in range(2**r, 2 ** (r + 1)):
            cells[lab] = CellKind.BOTH_ALIVE
    return GwTree.from_cells(law, depth, cells)


def mixed_fixture(theta: BarParams):
    """Handmade depth-3 tree with >= 2 cells in every division class.

    Values follow the noiseless maps exactly, so every regression recovers
    its coefficient pair exactly.
    """
    law = OffspringLaw(0.5, 0.25, 0.25)
    B, N, O, X = (CellKind.BOTH_ALIVE, CellKind.NEW_ONLY,
                  CellKind.OLD_ONLY, CellKind.NONE_ALIVE)
    cells = {1: B, 2: B, 3: B, 4: N, 5: O, 6: N, 7: O,
             8: X, 11: X, 12: X, 15: X}
    tree = GwTree.from_cells(law, 3, cells)
    new = lambda x: theta.alpha0 * x + theta.beta0
    old = lambda x: theta.alpha1 * x + theta.beta1
    newp = lambda x: theta.alpha0p * x + theta.beta0p
    oldp = lambda x: theta.alpha1p * x + theta.beta1p
    x1 = 1.0
    g1 = [new(x1), old(x1)]                               # labels 2, 3
    g2 = [new(g1[0]), old(g1[0]), new(g1[1]), old(g1[1])]  # labels 4..7
    g3 = [newp(g2[0]), oldp(g2[1]), newp(g2[2]), oldp(g2[3])]  # 8, 11, 12, 15
    values = [np.array([x1]), np.array(g1), np.array(g2), np.array(g3)]
    return tree, PopulationSample(tree, values)


class TestNoiselessRecovery:
    def test_full_tree_recovers_both_classes(self, full_law, theta_ref, no_noise):
        tree = full_tree(full_law, 3)
        sample = simulate_population(tree, theta_ref, no_noise,
                                     InitialLaw(kind="point", value=1.5),
                                     derive_rng(1))
        est = lse(sample, 2)
        assert isinstance(est.both_new, ClassFit)
        assert est.both_new.slope == pytest.approx(0.5, abs=1e-10)
        assert est.both_new.intercept == pytest.approx(1.0, abs=1e-10)
        assert est.both_old.slope == pytest.approx(0.3, abs=1e-10)
        assert est.both_old.intercept == pytest.approx(0.8, abs=1e-10)
        assert est.both_new.count == 7  # generations 0..2 of a full tree

    def test_full_tree_primed_classes_are_empty(self, full_law, theta_ref, no_noise):
        tree = full_tree(full_law, 3)
        sample = simulate_population(tree, theta_ref, no_noise,
                                     InitialLaw(kind="point", value=1.5),
                                     derive_rng(1))
        est = lse(sample, 2)
        assert isinstance(est.new_only, DegenerateClass)
        assert est.new_only.reason == "empty class"
        assert isinstance(est.old_only, DegenerateClass)
        assert not est.available
        with pytest.raises(EstimateUnavailableError, match="new_only, old_only"):
            est.as_vector()
        d = est.as_dict()
        assert d["alpha0"] == pytest.approx(0.5, abs=1e-10)
        assert d["alpha0p"] is None and d["beta1p"] is None
        assert est.class_counts() == {"both_alive": 7, "new_only": 0, "old_only": 0}

    def test_mixed_fixture_recovers_all_eight(self, theta_ref):
        tree, sample = mixed_fixture(theta_ref)
        est = lse(sample, 2)
        assert est.available
        assert est.as_vector() == pytest.approx(theta_ref.as_vector(), abs=1e-12)
        assert estimation_error(est, theta_ref) == pytest.approx(0.0, abs=1e-10)
        assert est.class_counts() == {"both_alive": 3, "new_only": 2, "old_only": 2}

    def test_root_only_design_is_degenerate(self, full_law, theta_ref, no_noise):
        tree = full_tree(full_law, 2)
        sample = simulate_population(tree, theta_ref, no_noise,
                                     InitialLaw(kind="point", value=1.5),
                                     derive_rng(2))
        est = lse(sample, 0)
        assert isinstance(est.both_new, DegenerateClass)
        assert est.both_new.reason == "singleton class"
        assert est.both_new.count == 1
        assert isinstance(est.new_only, DegenerateClass)
        assert est.new_only.reason == "empty class"

    def test_constant_mothers_have_zero_variance(self, full_law):
        tree = full_tree(full_law, 2)
        values = [np.array([1.0]), np.array([1.0, 1.0]),
                  np.array([0.3, 0.9, 0.4, 0.6])]
        est = lse(PopulationSample(tree, values), 1)
        assert isinstance(est.both_new, DegenerateClass)
        assert est.both_new.reason == "zero mother variance"
        assert est.both_new.count == 3

    def test_depth_bounds_checked(self, full_law, theta_ref, no_noise):
        tree = full_tree(full_law, 2)
        sample = simulate_population(tree, theta_ref, no_noise,
                                     InitialLaw(kind="point", value=1.5),
                                     derive_rng(3))
        with pytest.raises(ValueError):
            lse(sample, 2)
        with pytest.raises(ValueError):
            lse(sample, -1)


class TestErrorMetric:
    @staticmethod
    def _estimate_from(vec):
        fits = [ClassFit(vec[2 * i], vec[2 * i + 1], 5, 1.0) for i in range(4)]
        return ThetaEstimate(3, *fits)

    def test_exact_match_is_zero(self, theta_ref):
        est = self._estimate_from(theta_ref.as_vector())
        assert estimation_error(est, theta_ref) == 0.0

    def test_single_component_offset(self, theta_ref):
        vec = theta_ref.as_vector().copy()
        vec[0] += 0.1
        assert estimation_error(self._estimate_from(vec), theta_ref) == pytest.approx(0.1)

    def test_two_component_offsets_combine_in_quadrature(self, theta_ref):
        vec = theta_ref.as_vector().copy()
        vec[0] += 0.3
        vec[7] -= 0.4
        assert estimation_error(self._estimate_from(vec), theta_ref) == pytest.approx(0.5)


class TestEquivariance:
    def _noisy_sample(self, full_law, theta_ref, mild_noise, shift=0.0, scale=1.0):
        tree = full_tree(full_law, 4)
        sample = simulate_population(tree, theta_ref, mild_noise,
                                     InitialLaw(kind="point", value=1.5),
                                     derive_rng(17))
        values = [scale * sample.values_at(r) + shift
                  for r in range(tree.max_depth + 1)]
        return PopulationSample(tree, values)

    def test_shift_moves_intercepts_only(self, full_law, theta_ref, mild_noise):
        c = 2.75
        base = lse(self._noisy_sample(full_law, theta_ref, mild_noise), 3)
        shifted = lse(self._noisy_sample(full_law, theta_ref, mild_noise, shift=c), 3)
        for f0, f1 in zip(base.fits[:2], shifted.fits[:2]):
            assert f1.slope == pytest.approx(f0.slope, abs=1e-9)
            assert f1.intercept == pytest.approx(
                f0.intercept + c * (1.0 - f0.slope), abs=1e-9)

    def test_scale_multiplies_intercepts_only(self, full_law, theta_ref, mild_noise):
        c = -3.5
        base = lse(self._noisy_sample(full_law, theta_ref, mild_noise), 3)
        scaled = lse(self._noisy_sample(full_law, theta_ref, mild_noise, scale=c), 3)
        for f0, f1 in zip(base.fits[:2], scaled.fits[:2]):
            assert f1.slope == pytest.approx(f0.slope, abs=1e-9)
            assert f1.intercept == pytest.approx(c * f0.intercept, abs=1e-9)

    def test_classes_are_isolated(self, theta_ref):
        # perturbing an old-pole observation of an old-only cell leaves the
        # other three regressions untouched
        tree, sample = mixed_fixture(theta_ref)
        values = [sample.values_at(r).copy() for r in range(4)]
        g3_labels = tree.labels_at(3).tolist()
        values[3][g3_labels.index(11)] += 0.9
        bumped = lse(PopulationSample(tree, values), 2)
        base = lse(sample, 2)
        assert bumped.both_new == base.both_new
        assert bumped.both_old == base.both_old
        assert bumped.new_only == base.new_only
        assert bumped.old_only != base.old_only


class TestRegressionFunctionals:
    def test_noiseless_residuals_vanish(self, full_law, theta_ref, no_noise):
        tree = full_tree(full_law, 3)
        sample = simulate_population(tree, theta_ref, no_noise,
                                     InitialLaw(kind="point", value=1.5),
                                     derive_rng(5))
        fn = regression_functionals(sample, 2, theta_ref)
        assert fn.g1_bar == pytest.approx(0.0, abs=1e-12)
        assert fn.g2_bar == pytest.approx(0.0, abs=1e-12)
        assert fn.n_cells == 7 and fn.n_both == 7

    def test_constant_values_count_both_fraction(self, theta_ref):
        tree, _ = mixed_fixture(theta_ref)
        values = [np.ones(tree.labels_at(r).size) for r in range(4)]
        fn = regression_functionals(PopulationSample(tree, values), 2,
                                    BarParams(0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0))
        assert fn.n_cells == 7 and fn.n_both == 3
        assert fn.h1_bar == pytest.approx(3.0 / 7.0, rel=1e-12)
        assert fn.h2_bar == pytest.approx(3.0 / 7.0, rel=1e-12)
        assert fn.b_n == pytest.approx(0.0, abs=1e-12)

    def test_design_variance_converges_to_target(self, strong_law, theta_ref):
        noise = NoiseSpec(sigma=0.3, rho=0.2, sigma0=0.3, sigma1=0.3)
        target = b_n_target(strong_law, theta_ref, noise)
        rng = derive_rng(2024, 9)
        init = InitialLaw(kind="point", value=2.0)
        vals = []
        for _ in range(300):
            tree = sample_tree(strong_law, 11, rng)
            if tree.labels_at(10).size < 2:
                continue
            sample = simulate_population(tree, theta_ref, noise, init, rng)
            vals.append(regression_functionals(sample, 10, theta_ref).b_n)
        vals = np.asarray(vals)
        se = vals.std(ddof=1) / math.sqrt(vals.size)
        assert abs(vals.mean() - target) < 4 * se
