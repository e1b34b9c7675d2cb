import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from junctionflow import (
    Hamiltonian,
    InitialData,
    JunctionModel,
    ModelError,
    flux_branches,
    flux_eval,
    hamiltonian_eval,
    lagrangian,
    u0_eval,
)


def numeric_conjugate(H, alpha, n=100_000):
    """Brute sup over a dense p-grid; the independent oracle for L."""
    p = np.linspace(-H.R, 0.0, n)
    return float(np.max(alpha * p - H.value(p)))


class TestHamiltonianEval:
    def test_quadratic_interior(self, quad):
        assert hamiltonian_eval(quad, -0.5) == pytest.approx(-0.25, abs=1e-15)

    def test_boundary_zeros(self, quad):
        assert hamiltonian_eval(quad, 0.0) == 0.0
        assert hamiltonian_eval(quad, -1.0) == pytest.approx(0.0, abs=1e-12)

    def test_domain_error(self, quad):
        with pytest.raises(ModelError):
            hamiltonian_eval(quad, 0.1)
        with pytest.raises(ModelError):
            hamiltonian_eval(quad, -1.1)
        # within tolerance is clipped, not rejected
        hamiltonian_eval(quad, 1e-10)

    def test_cached_shape(self, quad):
        assert quad.p_hat == -0.5
        assert quad.h_min == -0.25
        assert quad.dh0 == 1.0 and quad.dhr == -1.0


class TestFlux:
    def test_values(self, quad):
        assert flux_eval(quad, 0.5) == pytest.approx(0.25)
        assert flux_eval(quad, 0.0) == 0.0
        assert flux_eval(quad, 0.9) == pytest.approx(0.09)

    def test_branches(self, quad):
        assert flux_branches(quad, 0.9) == pytest.approx((0.25, 0.09))
        assert flux_branches(quad, 0.5) == pytest.approx((0.25, 0.25))
        assert flux_branches(quad, 0.1) == pytest.approx((0.09, 0.25))

    def test_flux_is_reflected_hamiltonian(self, quad):
        rho = np.linspace(0.0, 1.0, 257)
        assert np.abs(flux_eval(quad, rho) + quad.value(-rho)).max() <= 1e-12

    def test_branch_monotonicity(self, quad):
        rho = np.linspace(0.0, 1.0, 129)
        fp, fm = flux_branches(quad, rho)
        assert np.all(np.diff(fp) >= -1e-12)
        assert np.all(np.diff(fm) <= 1e-12)


class TestLagrangian:
    def test_examples_against_numeric_sup(self, quad):
        assert lagrangian(quad, 0.0) == pytest.approx(0.25, abs=1e-12)
        for alpha, expect in [(1.0, 0.0), (-2.0, 2.0)]:
            assert lagrangian(quad, alpha) == pytest.approx(expect, abs=1e-9)
            assert lagrangian(quad, alpha) == pytest.approx(
                numeric_conjugate(quad, alpha), abs=1e-9
            )

    def test_piecewise_structure(self, quad):
        assert lagrangian(quad, 2.0) == 0.0
        assert lagrangian(quad, 1.0) == 0.0
        assert lagrangian(quad, -3.0) == pytest.approx(3.0)

    @given(st.floats(-4.0, 4.0))
    @settings(max_examples=60, deadline=None)
    def test_matches_numeric_sup(self, alpha):
        H = Hamiltonian(R=1.0)
        assert lagrangian(H, alpha) == pytest.approx(numeric_conjugate(H, alpha), abs=1e-9)

    @given(st.floats(-1.0, 0.0), st.floats(-3.0, 3.0))
    @settings(max_examples=80, deadline=None)
    def test_fenchel_inequality(self, p, alpha):
        H = Hamiltonian(R=1.0)
        assert alpha * p <= lagrangian(H, alpha) + hamiltonian_eval(H, p) + 1e-10

    @given(st.floats(-3.0, 3.0), st.floats(-3.0, 3.0))
    @settings(max_examples=80, deadline=None)
    def test_convexity_midpoint(self, a, b):
        H = Hamiltonian(R=1.0)
        mid = lagrangian(H, 0.5 * (a + b))
        assert mid <= 0.5 * (lagrangian(H, a) + lagrangian(H, b)) + 1e-12


class TestTabulated:
    @pytest.fixture(scope="class")
    def tab(self):
        p = np.linspace(-1.0, 0.0, 21)
        return Hamiltonian(
            R=1.0, kind="tabulated", samples=tuple(zip(p, p * (p + 1.0)))
        )

    def test_reproduces_quadratic(self, tab, quad):
        p = np.linspace(-1.0, 0.0, 301)
        assert np.abs(tab.value(p) - quad.value(p)).max() <= 2e-3

    def test_shape_cache(self, tab):
        assert -1.0 < tab.p_hat < 0.0
        assert tab.h_min < 0.0
        assert tab.dhr < 0.0 < tab.dh0

    def test_conjugate_matches_numeric(self, tab):
        for alpha in (-2.0, -0.7, 0.0, 0.4, 1.5):
            assert lagrangian(tab, alpha) == pytest.approx(
                numeric_conjugate(tab, alpha), abs=1e-6
            )

    def test_rejects_nonconvex(self):
        p = np.linspace(-1.0, 0.0, 9)
        h = -np.sin(np.pi * p)  # concave bump on [-1, 0]
        with pytest.raises(ModelError):
            Hamiltonian(R=1.0, kind="tabulated", samples=tuple(zip(p, h)))

    def test_rejects_nonzero_endpoints(self):
        p = np.linspace(-1.0, 0.0, 9)
        h = p * (p + 1.0) + 0.01
        with pytest.raises(ModelError):
            Hamiltonian(R=1.0, kind="tabulated", samples=tuple(zip(p, h)))


class TestJunctionModel:
    def test_a0_is_max_of_minima(self, quad):
        other = Hamiltonian(R=1.0, kappa=0.5)
        m = JunctionModel(quad, other)
        assert m.A0 == pytest.approx(-0.125)

    def test_equal_minima_flag(self, quad):
        JunctionModel(quad, quad, equal_minima=True)
        other = Hamiltonian(R=1.0, kappa=0.5)
        with pytest.raises(ModelError):
            JunctionModel(quad, other, equal_minima=True)


class TestInitialData:
    def test_linear(self):
        u = InitialData((), (-0.8,), capacities=(1.0, 1.0))
        assert u0_eval(u, 0.5) == pytest.approx(-0.4)
        assert u0_eval(u, 0.0) == 0.0

    def test_piecewise_accumulation(self):
        u = InitialData((-1.0,), (-0.8, -0.2), capacities=(1.0, 1.0))
        # direct sum oracle: u0(-1) = 0.2, then slope -0.8 leftwards
        assert u0_eval(u, -1.0) == pytest.approx(0.2)
        assert u0_eval(u, -2.0) == pytest.approx(1.0)
        assert u0_eval(u, 0.0) == 0.0

    def test_slope_bounds_enforced(self):
        with pytest.raises(ModelError):
            InitialData((), (0.0,), capacities=(1.0, 1.0))
        with pytest.raises(ModelError):
            InitialData((), (-1.0,), capacities=(1.0, 1.0))
        with pytest.raises(ModelError):
            InitialData((), (-1.0 + 1e-12,), capacities=(1.0, 1.0))
        # explicit opt-in admits boundary slopes
        InitialData((), (0.0,), capacities=(1.0, 1.0), allow_boundary_slopes=True)

    def test_per_side_bounds(self):
        # slope fine on the right (R=2) but too steep for the left line (R=1)
        InitialData((0.0,), (-0.5, -1.5), capacities=(1.0, 2.0))
        with pytest.raises(ModelError):
            InitialData((0.0,), (-1.5, -0.5), capacities=(1.0, 2.0))

    def test_from_samples_roundtrip(self):
        xs = np.linspace(-2.0, 2.0, 41)
        us = -0.8 * xs + 0.3
        data, offset = InitialData.from_samples(xs, us, (1.0, 1.0))
        assert offset == pytest.approx(0.3)
        probe = np.linspace(-1.9, 1.9, 17)
        assert np.abs(data.eval(probe) + offset - (-0.8 * probe + 0.3)).max() <= 1e-12
