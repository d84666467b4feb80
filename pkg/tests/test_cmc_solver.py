import math

import numpy as np
import pytest

from grwlab.cmc_solver import (SolverConfig, band_limited_field, perturbed_slice,
                               quadratic_certificate, relax_flow, residual, slice_curvature,
                               slice_distance, solve_newton)
from grwlab.errors import PreconditionError
from grwlab.fiber import FiberGrid
from grwlab.graph_geometry import GraphFunction, geometry
from grwlab.identities import C_CAL, verify_laplacian_G
from grwlab.warping import cosh_warping, exp_warping, static_warping

ANCHORED = SolverConfig(mode="slice-anchored", anchor_t=0.0)


def test_residual_on_slices():
    g = FiberGrid.torus(16)
    f = cosh_warping()
    u = GraphFunction.slice(g, 0.4)
    assert np.max(np.abs(residual(f, u, math.tanh(0.4)))) < 1e-15
    np.testing.assert_allclose(residual(f, u, 0.0), math.tanh(0.4), rtol=1e-14)


def test_static_residual_is_curve_curvature():
    g = FiberGrid.torus(128)
    x, _ = g.mesh()
    eps, k = 0.05, 2 * math.pi
    u = GraphFunction(g, eps * np.sin(k * x))
    up, upp = eps * k * np.cos(k * x), -eps * k * k * np.sin(k * x)
    exact = 0.5 * upp / (1 - up ** 2) ** 1.5
    assert np.max(np.abs(residual(static_warping(), u, 0.0) - exact)) < 2e-3


def test_exact_slice_input():
    g = FiberGrid.torus(32)
    f = cosh_warping()
    res = solve_newton(f, GraphFunction.slice(g, 0.3), math.tanh(0.3))
    assert res.converged and res.iterations <= 1 and res.slice_distance < 1e-12


def test_steady_state_perturbation_collapses_to_slice():
    g = FiberGrid.torus(64)
    x, y = g.mesh()
    u0 = GraphFunction(g, 0.05 * np.sin(2 * math.pi * x) * np.sin(2 * math.pi * y))
    res = solve_newton(exp_warping(), u0, 1.0, ANCHORED)
    assert res.converged
    assert res.slice_distance < 1e-8 and abs(res.c - 1.0) < 1e-8
    assert res.umbilicity_defect < 1e-8


def test_fixed_c_mode_finds_matching_slice():
    g = FiberGrid.torus(32)
    f = cosh_warping()
    u0 = perturbed_slice(f, g, 0.2, seed=4, target_margin=0.2)
    res = solve_newton(f, u0, math.tanh(0.5), SolverConfig(flow_max_iters=0))
    assert res.converged
    assert res.slice_distance < 1e-8
    assert float(g.mean(res.u.values)) == pytest.approx(0.5, abs=1e-8)


def test_maximal_solution_satisfies_identity():
    f = static_warping()
    g = FiberGrid.torus(64)
    res = solve_newton(f, perturbed_slice(f, g, 0.0, seed=2, target_margin=0.3), 0.0,
                       SolverConfig(mode="slice-anchored"))
    assert res.converged
    assert verify_laplacian_G(f, res.u).residual_max < C_CAL * g.h ** 2


@pytest.mark.parametrize("prec", ["compact-lu", "diagonal"])
def test_preconditioners_agree(prec):
    g = FiberGrid.torus(32)
    f = exp_warping()
    u0 = perturbed_slice(f, g, 0.0, seed=1, target_margin=0.3)
    res = solve_newton(f, u0, 1.0, SolverConfig(mode="slice-anchored", anchor_t=0.0,
                                                preconditioner=prec))
    assert res.converged and res.slice_distance < 1e-8


def test_sphere_solve():
    g = FiberGrid.sphere(16)
    f = cosh_warping()
    u0 = perturbed_slice(f, g, 0.5, seed=0, target_margin=0.3, l_min=2, even_only=True)
    res = solve_newton(f, u0, math.tanh(0.5))
    assert res.converged
    assert res.slice_distance < 100 * C_CAL * g.h ** 2


def test_margin_cap_respected_and_history_shape():
    g = FiberGrid.torus(48)
    f = exp_warping()
    res = solve_newton(f, perturbed_slice(f, g, 0.0, seed=7, target_margin=0.45), 1.0, ANCHORED)
    assert res.converged
    assert all(h["margin"] <= 0.9 for h in res.history)
    assert [h["iteration"] for h in res.history] == list(range(len(res.history)))
    cert = res.certificate
    assert not cert["vacuous"] and cert["constant"] is not None


def test_initial_margin_above_cap_is_rejected():
    g = FiberGrid.torus(32)
    f = static_warping()
    u0 = perturbed_slice(f, g, 0.0, seed=0, target_margin=0.95)
    with pytest.raises(PreconditionError):
        solve_newton(f, u0, 0.0)


def test_iteration_cap_reports_status():
    g = FiberGrid.torus(32)
    f = exp_warping()
    u0 = perturbed_slice(f, g, 0.0, seed=0, target_margin=0.4)
    res = solve_newton(f, u0, 1.0, SolverConfig(mode="slice-anchored", max_newton_iters=1,
                                                flow_max_iters=0))
    assert res.status == "max-iters" and res.iterations == 1


def test_histories_are_bitwise_reproducible():
    g = FiberGrid.torus(32)
    f = exp_warping()
    runs = [solve_newton(f, perturbed_slice(f, g, 0.0, seed=3), 1.0, ANCHORED) for _ in range(2)]
    assert runs[0].history == runs[1].history
    assert runs[0].u.digest() == runs[1].u.digest()


def test_flow_keeps_slices_and_reduces_residual():
    g = FiberGrid.torus(32)
    f = exp_warping()
    s = GraphFunction.slice(g, 0.2)
    out, iters, hist = relax_flow(f, s, 1.0, ANCHORED, anchor_t=0.2)
    assert iters == 0 and np.array_equal(out.values, s.values)
    u0 = perturbed_slice(f, g, 0.0, seed=5, target_margin=0.3)
    _, _, hist = relax_flow(f, u0, 1.0, SolverConfig(mode="slice-anchored", flow_max_iters=60))
    assert all(b <= a * (1 + 1e-12) for a, b in zip(hist, hist[1:]))
    assert hist[-1] < hist[0]


def test_flow_moves_low_slice_upward():
    # f = cosh: f'/f = tanh increases, so a slice with H < c rises
    g = FiberGrid.torus(16)
    out, _, _ = relax_flow(cosh_warping(), GraphFunction.slice(g, 0.0), 0.3,
                           SolverConfig(flow_max_iters=5, flow_pretol=1e-12))
    assert out.values.min() > 0.0


def test_quadratic_certificate():
    cert = quadratic_certificate([1.0, 1e-2, 1e-4, 1e-8, 1e-16], 1e-10)
    assert cert["constant"] == pytest.approx(1.0) and cert["pairs"] == 2
    assert quadratic_certificate([1.0, 0.5], 1e-10)["vacuous"]


def test_band_limited_field_properties():
    t = FiberGrid.torus(32)
    p = band_limited_field(t, 3)
    assert np.max(np.abs(p)) == pytest.approx(1.0)
    assert abs(t.mean(p)) < 1e-12
    s = FiberGrid.sphere(16)
    q = band_limited_field(s, 3, l_min=2, even_only=True)
    antipode = np.roll(q[::-1], s.shape[1] // 2, axis=1)
    np.testing.assert_allclose(q, antipode, atol=1e-12)
    assert not np.array_equal(band_limited_field(t, 1), band_limited_field(t, 2))


def test_perturbed_slice_hits_target_margin():
    g = FiberGrid.sphere(16)
    f = cosh_warping()
    u = perturbed_slice(f, g, 0.3, seed=9, target_margin=0.45)
    assert geometry(f, u).margin == pytest.approx(0.45, rel=1e-8)


def test_slice_helpers():
    assert slice_curvature(cosh_warping(), 0.5) == pytest.approx(math.tanh(0.5))
    g = FiberGrid.torus(8)
    assert slice_distance(g, np.full(g.shape, 2.0)) == 0.0


def test_config_validation():
    for bad in ({"lambda_cap": 1.0}, {"mode": "free"}, {"residual_tol": 0.0},
                {"preconditioner": "ilu"}, {"max_linear_iters": 0}):
        with pytest.raises(ValueError):
            SolverConfig(**bad)
    assert SolverConfig().tolerance(3.0) == pytest.approx(3e-10)
