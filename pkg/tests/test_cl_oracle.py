import numpy as np
import pytest

from junctionflow import Control, ModelError, SolverError
from junctionflow.cl_oracle import (
    DensityField,
    GermElement,
    cross_check,
    godunov_flux,
    junction_flux,
    make_grid,
    solve_cl,
)

from conftest import T_HORIZON


def centers(faces):
    return 0.5 * (faces[:-1] + faces[1:])


class TestGodunovFlux:
    def test_shock_configuration(self, quad):
        assert godunov_flux(quad, 0.9, 0.1) == pytest.approx(0.25)

    def test_consistency(self, quad):
        for rho in (0.0, 0.3, 0.5, 0.9):
            assert godunov_flux(quad, rho, rho) == pytest.approx(quad.flux(rho), abs=1e-15)

    def test_transonic_vacuum(self, quad):
        assert godunov_flux(quad, 0.0, 1.0) == pytest.approx(0.0)

    def test_riemann_oracle(self, quad):
        # exhaustive min/max over the fan, the textbook Godunov definition
        rng = np.random.default_rng(2)
        grid = np.linspace(0.0, 1.0, 2001)
        for _ in range(40):
            rl, rr = rng.uniform(0.0, 1.0, 2)
            inside = grid[(grid >= min(rl, rr)) & (grid <= max(rl, rr))]
            between = np.concatenate([[rl, rr], inside])
            expect = quad.flux(between).min() if rl <= rr else quad.flux(between).max()
            assert godunov_flux(quad, rl, rr) == pytest.approx(expect, abs=1e-9)


class TestJunctionFlux:
    def test_red_light(self, model):
        assert junction_flux(model, 0.5, 0.5, 0.0) == pytest.approx(0.0)

    def test_capacity(self, model):
        assert junction_flux(model, 0.5, 0.5, model.A0) == pytest.approx(0.25)

    def test_limited(self, model):
        assert junction_flux(model, 0.9, 0.1, -0.09) == pytest.approx(0.09)

    def test_limiter_domain(self, model):
        with pytest.raises(ModelError):
            junction_flux(model, 0.5, 0.5, -0.5)


class TestGermElement:
    def test_stationary_member(self, model):
        assert GermElement(0.9, 0.1, -0.09).is_member(model)

    def test_non_member(self, model):
        assert not GermElement(0.9, 0.4, -0.09).is_member(model)

    def test_free_flow_member(self, model):
        assert GermElement(0.3, 0.3, model.A0).is_member(model)
        assert GermElement(0.5, 0.5, model.A0).is_member(model)


class TestMakeGrid:
    def test_face_at_zero(self):
        faces = make_grid(-2.0, 2.0, 100)
        assert 0.0 in faces
        assert len(faces) == 101

    def test_rejects_misaligned(self):
        with pytest.raises(SolverError):
            make_grid(-1.0, 2.0, 100)  # no face lands on 0
        with pytest.raises(SolverError):
            make_grid(1.0, 2.0, 10)


class TestSolveCL:
    def test_vacuum_stationary(self, model):
        faces = make_grid(-1.0, 1.0, 40)
        rho0 = np.zeros(40)
        out = solve_cl(model, rho0, faces, Control((0.0, 2.0), (0.0,)), np.linspace(0, 2, 5))
        assert np.abs(out.rho).max() == 0.0

    def test_germ_state_stationary(self, model):
        faces = make_grid(-1.0, 1.0, 100)
        rho0 = np.where(centers(faces) < 0, 0.9, 0.1)
        out = solve_cl(model, rho0, faces, Control((0.0, 2.0), (-0.09,)), np.linspace(0, 2, 9))
        assert np.abs(out.rho - rho0[:, None]).max() <= 1e-10
        assert out.mass_balance_error <= 1e-12

    def test_red_light_queue(self, model):
        faces = make_grid(-1.0, 1.0, 100)
        rho0 = np.where(centers(faces) < 0, 0.3, 0.0)
        out = solve_cl(model, rho0, faces, Control((0.0, 2.0), (0.0,)), np.array([0.0, 2.0]))
        iz = 50
        # queue saturates behind a backward shock; the exit line stays empty
        assert np.abs(out.rho[iz - 3 : iz, -1] - 1.0).max() <= 1e-6
        assert np.abs(out.rho[iz:, -1]).max() <= 1e-12
        shock_cells = np.where(out.rho[:iz, -1] > 0.65)[0]
        x_shock = centers(faces)[shock_cells[0]]
        assert x_shock == pytest.approx(-0.3 * 2.0, abs=0.06)  # Rankine-Hugoniot speed -0.3

    def test_max_principle_and_conservation(self, model, u0):
        faces = make_grid(-2.0, 2.0, 80)
        u_faces = u0.eval(faces)
        rho0 = (u_faces[:-1] - u_faces[1:]) / np.diff(faces)
        A = Control((0.0, 3.0, 6.0), (0.0, -0.25))
        out = solve_cl(model, rho0, faces, A, np.linspace(0, 6, 7))
        assert out.rho.min() >= -1e-12
        assert out.rho.max() <= 1.0 + 1e-12
        assert out.mass_balance_error <= 1e-12

    def test_cfl_validation(self, model):
        faces = make_grid(-1.0, 1.0, 10)
        with pytest.raises(SolverError):
            solve_cl(model, np.zeros(10), faces, Control((0.0, 1.0), (0.0,)),
                     np.array([0.0, 1.0]), cfl=1.5)


class TestCrossCheck:
    def test_free_flow_exact(self, model, u0, free_flow):
        faces = make_grid(-2.0, 2.0, 80)
        rep = cross_check(model, u0, free_flow, faces, np.linspace(0, 2, 5))
        assert rep["l1_density_error"] <= 1e-12

    def test_canonical_switching_refines(self, model, u0, switching):
        times = np.linspace(0.0, T_HORIZON, 13)
        errs = {}
        for cells in (100, 200):
            faces = make_grid(-8.0, 8.0, cells)
            errs[cells] = cross_check(model, u0, switching, faces, times)["l1_density_error"]
        assert errs[200] < errs[100] * 1.2  # decreasing within slack
        assert errs[200] <= 0.05

    def test_vacuum(self, model, blocked):
        from junctionflow import InitialData

        flat = InitialData((), (0.0,), capacities=(1.0, 1.0), allow_boundary_slopes=True)
        faces = make_grid(-1.0, 1.0, 40)
        rep = cross_check(model, flat, blocked, faces, np.linspace(0, 1, 3))
        assert rep["l1_density_error"] == pytest.approx(0.0, abs=1e-15)

    def test_csv_export(self, model, u0, switching, tmp_path):
        faces = make_grid(-1.0, 1.0, 20)
        rep = cross_check(model, u0, switching, faces, np.linspace(0, 1, 3))
        path = tmp_path / "rho.csv"
        rep["density"].write_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "x,t,rho"
        assert len(lines) == 1 + 20 * 3
