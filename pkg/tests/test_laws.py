import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from layerfric.laws import (
    FrictionLaw,
    MaterialLaw,
    estimate_constants,
    friction_bound,
    normal_compliance,
    stress_of_strain,
    stress_voigt,
)

HOOKE = MaterialLaw(kind="linear-isotropic", lame_lambda=1.0, lame_mu=1.0)
PERTURBED = MaterialLaw(kind="p-perturbed", lame_lambda=0.0, lame_mu=1.0, gamma=0.5)


class TestStress:
    def test_identity_strain(self):
        sigma = stress_of_strain(HOOKE, np.eye(2))
        assert_allclose(sigma, 4.0 * np.eye(2))

    def test_zero_strain_both_kinds(self):
        for law in (HOOKE, PERTURBED):
            assert_allclose(stress_of_strain(law, np.zeros((2, 2))), 0.0)

    def test_pure_shear(self):
        eps = np.array([[0.0, 0.3], [0.3, 0.0]])
        sigma = stress_of_strain(HOOKE, eps)
        assert_allclose(sigma, 2.0 * eps)

    def test_nonsymmetric_rejected(self):
        with pytest.raises(ValueError, match="symmetric"):
            stress_of_strain(HOOKE, np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_perturbed_monotonicity_sampled(self):
        """Monotonicity quotient stays above 2*mu*(1-gamma) over 10^4 pairs."""
        rng = np.random.default_rng(7)
        e1 = rng.uniform(-2, 2, size=(10_000, 3))
        e2 = rng.uniform(-2, 2, size=(10_000, 3))
        w = np.array([1.0, 1.0, 2.0])
        d = e1 - e2
        ds = stress_voigt(PERTURBED, e1) - stress_voigt(PERTURBED, e2)
        quot = (w * ds * d).sum(axis=1) / (w * d * d).sum(axis=1)
        assert quot.min() >= 2 * PERTURBED.lame_mu * (1 - PERTURBED.gamma)
        # the perturbation is the gradient of a convex potential, so the
        # sharper bound 2*mu holds as well
        assert quot.min() >= 2 * PERTURBED.lame_mu - 1e-12

    def test_voigt_matches_tensor_form(self):
        rng = np.random.default_rng(3)
        for law in (HOOKE, PERTURBED):
            comps = rng.uniform(-1, 1, size=3)
            eps = np.array([[comps[0], comps[2]], [comps[2], comps[1]]])
            sigma = stress_of_strain(law, eps)
            voigt = stress_voigt(law, comps)
            assert_allclose([sigma[0, 0], sigma[1, 1], sigma[0, 1]], voigt)

    def test_invalid_materials_rejected(self):
        with pytest.raises(ValueError):
            MaterialLaw(kind="linear-isotropic", lame_lambda=1.0, lame_mu=0.0)
        with pytest.raises(ValueError):
            MaterialLaw(kind="linear-isotropic", lame_lambda=-1.0, lame_mu=1.0)
        with pytest.raises(ValueError):
            MaterialLaw(kind="p-perturbed", lame_lambda=0.0, lame_mu=1.0, gamma=1.0)
        with pytest.raises(ValueError):
            MaterialLaw(kind="orthotropic", lame_lambda=1.0, lame_mu=1.0)


class TestNormalCompliance:
    def test_power_separation_gives_zero(self):
        law = FrictionLaw(gN_kind="power", c=2.0, m_exp=1.0)
        assert normal_compliance(law, -0.3) == 0.0

    def test_power_linear_case(self):
        law = FrictionLaw(gN_kind="power", c=2.0, m_exp=1.0)
        assert normal_compliance(law, 0.5) == 1.0

    def test_capped_saturates(self):
        law = FrictionLaw(gN_kind="capped", c=1.0, r0=0.2)
        assert normal_compliance(law, 0.5) == pytest.approx(0.2)
        assert normal_compliance(law, 0.1) == pytest.approx(0.1)
        assert normal_compliance(law, -0.1) == 0.0

    @given(r=st.floats(-10, 10), c=st.floats(0, 5), m=st.floats(1, 3))
    @settings(max_examples=50, deadline=None)
    def test_power_nonnegative(self, r, c, m):
        law = FrictionLaw(gN_kind="power", c=c, m_exp=m)
        assert normal_compliance(law, r) >= 0.0


class TestFrictionBound:
    def test_coulomb_proportional(self):
        law = FrictionLaw(gT_kind="coulomb", mu=0.4)
        assert friction_bound(law, 10.0) == pytest.approx(4.0)

    def test_modified_releases_at_high_pressure(self):
        law = FrictionLaw(gT_kind="modified-coulomb", mu=0.4, delta=0.1)
        assert friction_bound(law, 10.0) == 0.0
        assert friction_bound(law, 5.0) == pytest.approx(1.0)

    @given(s=st.floats(0, 100), mu=st.floats(0, 1), delta=st.floats(0.001, 1))
    @settings(max_examples=50, deadline=None)
    def test_modified_nonnegative_and_vanishes_past_release(self, s, mu, delta):
        law = FrictionLaw(gT_kind="modified-coulomb", mu=mu, delta=delta)
        g = friction_bound(law, s)
        assert g >= 0.0
        if s >= 1.0 / delta:
            assert g == 0.0

    def test_invalid_laws_rejected(self):
        with pytest.raises(ValueError):
            FrictionLaw(gN_kind="power", c=-1.0)
        with pytest.raises(ValueError):
            FrictionLaw(gN_kind="power", c=1.0, m_exp=0.5)
        with pytest.raises(ValueError):
            FrictionLaw(gN_kind="capped", c=1.0, r0=0.0)
        with pytest.raises(ValueError):
            FrictionLaw(gT_kind="modified-coulomb", mu=0.3, delta=0.0)
        with pytest.raises(ValueError):
            FrictionLaw(mu=-0.1)


class TestEstimateConstants:
    def test_hooke_eigenvalue_bounds(self):
        """Sampled constants bracket the Hooke tensor eigenvalues 2mu, 2mu+2lam."""
        L, M = estimate_constants(HOOKE, 20_000, (-1.0, 1.0))
        assert L <= 4.0 + 1e-9
        assert M >= 2.0 - 1e-9
        # with this many samples the estimates approach the true values
        assert L > 3.5
        assert M < 2.5

    def test_coulomb_lipschitz(self):
        law = FrictionLaw(gT_kind="coulomb", mu=0.4)
        L, _ = estimate_constants(law, 1000, (0.0, 50.0), part="tangential")
        assert_allclose(L, 0.4)

    def test_quadratic_compliance_lipschitz(self):
        R = 3.0
        law = FrictionLaw(gN_kind="power", c=1.5, m_exp=2.0)
        L, M = estimate_constants(law, 20_000, (0.0, R))
        true_L = 2 * law.c * R
        assert L <= true_L
        assert L > 0.97 * true_L
        assert M >= 0.0

    def test_perturbed_material_monotone(self):
        _, M = estimate_constants(PERTURBED, 5000, (-2.0, 2.0))
        assert M > 0.0

    def test_fresh_samples_respect_estimated_lipschitz(self):
        """Quotients from an independent draw stay near the converged L."""
        law = FrictionLaw(gN_kind="power", c=2.0, m_exp=2.0)
        L, _ = estimate_constants(law, 5000, (0.0, 1.0), seed=1)
        rng = np.random.default_rng(2)
        x1 = rng.uniform(0, 1, 1000)
        x2 = rng.uniform(0, 1, 1000)
        quot = np.abs(normal_compliance(law, x1) - normal_compliance(law, x2)) / np.abs(
            x1 - x2
        )
        assert quot.max() <= 1.1 * L

    def test_deterministic_given_seed(self):
        a = estimate_constants(HOOKE, 500, (-1.0, 1.0), seed=42)
        b = estimate_constants(HOOKE, 500, (-1.0, 1.0), seed=42)
        assert a == b

    def test_empty_box_rejected(self):
        with pytest.raises(ValueError, match="empty sampling box"):
            estimate_constants(HOOKE, 100, (1.0, 1.0))

    def test_too_few_samples_rejected(self):
        with pytest.raises(ValueError):
            estimate_constants(HOOKE, 1, (0.0, 1.0))
