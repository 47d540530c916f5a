import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_bvp

from meanflow.checks import smooth_random_field
from meanflow.equation import mean_field_operator, residual
from meanflow.errors import ConfigError, NoConvergence
from meanflow.mesh import build_mesh, integrate, mean
from meanflow.stationary import NewtonConfig, gauge_align, jacobian_apply, newton_solve, solve, zero_mean
from meanflow.symmetry import build_group, invariance_error, symmetrize

AREA = 4 * np.pi ** 2


def periodic_profile(rho, a=0.5):
    """Zero-mean solution for f = 1 + a cos(x) from an independent BVP solve in x.

    States: u, u', I = int_0^x f e^u, J = int_0^x u. Unknown parameter: the
    full weighted mass S = 2 pi I(2 pi).
    """
    def fun(x, y, p):
        u, du, _, _ = y
        f = 1 + a * np.cos(x)
        return np.vstack([du, -rho * (f * np.exp(u) / p[0] - 1 / AREA), f * np.exp(u), u])

    def bc(y0, y1, p):
        return np.array([y0[0] - y1[0], y0[2], y1[2] - p[0] / (2 * np.pi), y0[3], y1[3]])

    x = np.linspace(0, 2 * np.pi, 401)
    guess = np.zeros((4, x.size))
    guess[2] = x
    sol = solve_bvp(fun, bc, x, guess, p=[AREA], tol=1e-10, max_nodes=100000)
    assert sol.status == 0
    return sol.sol


@pytest.mark.parametrize("rho", [-10.0, 4 * np.pi])
def test_matches_independent_profile(torus64, rho):
    x = torus64.node_coords[0]
    res = solve(torus64, NewtonConfig(rho), 1 + 0.5 * np.cos(x), np.zeros(torus64.shape))
    assert res.residual <= 1e-10
    assert np.max(np.abs(res.u - periodic_profile(rho)(x)[0])) <= 1e-9


@pytest.mark.parametrize("rho", [-10.0, 4 * np.pi, 6 * np.pi])
def test_constant_weight_gives_zero(torus32, rho):
    u = newton_solve(torus32, NewtonConfig(rho), np.ones(torus32.shape), np.zeros(torus32.shape))
    assert np.max(np.abs(u)) <= 1e-12


def test_negative_rho_from_rough_start(torus32, rng):
    f = np.exp(0.3 * smooth_random_field(torus32, rng))
    res = solve(torus32, NewtonConfig(-10.0), f, 2 * smooth_random_field(torus32, rng))
    assert res.residual <= 1e-10
    assert abs(mean(torus32, res.u)) <= 1e-12
    assert len(res.history) == 8 and res.history[-1][0] == -10.0


def test_sphere_zonal_solution(sphere16):
    theta = sphere16.node_coords[0]
    f = 1 + 0.3 * np.cos(theta) ** 2
    res = solve(sphere16, NewtonConfig(4 * np.pi), f, np.zeros(sphere16.shape))
    assert res.residual <= 1e-10
    # zonal weight, zonal solution
    assert np.max(np.ptp(res.u, axis=1)) <= 1e-10


@pytest.mark.parametrize("mesh_name", ["torus32", "sphere16"])
def test_jacobian_against_central_difference(mesh_name, request, rng):
    mesh = request.getfixturevalue(mesh_name)
    f = np.exp(0.3 * smooth_random_field(mesh, rng))
    for _ in range(5):
        w, v = smooth_random_field(mesh, rng), smooth_random_field(mesh, rng)
        eps = 1e-6
        fd = (mean_field_operator(mesh, 7.0, f, w + eps * v)
              - mean_field_operator(mesh, 7.0, f, w - eps * v)) / (2 * eps)
        jv = jacobian_apply(mesh, 7.0, f, w, v)
        assert np.max(np.abs(fd - jv)) <= 1e-5 * np.max(np.abs(jv))


def test_jacobian_kills_constants(torus32, rng):
    f = np.exp(0.3 * smooth_random_field(torus32, rng))
    w = smooth_random_field(torus32, rng)
    assert np.max(np.abs(jacobian_apply(torus32, 9.0, f, w, np.ones(torus32.shape)))) <= 1e-12


def test_gauge_align_examples(torus16):
    u = np.zeros(torus16.shape)
    assert np.allclose(gauge_align(torus16, u, 1.0), -np.log(AREA), atol=1e-14)
    assert np.allclose(gauge_align(torus16, u, AREA), 0.0, atol=1e-14)
    with pytest.raises(ValueError):
        gauge_align(torus16, u, 0.0)


@given(st.floats(-600, 600), st.floats(1e-3, 1e3))
def test_gauge_align_hits_target(c, target):
    mesh = build_mesh("torus", 16)
    u = 0.5 * np.cos(mesh.node_coords[0]) + c
    v = gauge_align(mesh, u, target)
    assert integrate(mesh, np.exp(v)) == pytest.approx(target, rel=1e-12)
    assert np.ptp(v - u) <= 1e-9


def test_iterates_stay_invariant(torus32):
    g = build_group(torus32, ["shift(16,0)", "flip_x", "flip_y"])
    x, y = torus32.node_coords
    f = 1 + 0.4 * np.cos(2 * x) * np.cos(y)
    u0 = 0.3 * np.cos(2 * x) + 0.2 * np.cos(2 * y)
    assert invariance_error(g, f) <= 1e-14 and invariance_error(g, u0) <= 1e-14
    res = solve(torus32, NewtonConfig(6 * np.pi), f, u0)
    assert res.residual <= 1e-10
    assert invariance_error(g, res.u) <= 1e-12
    assert np.max(np.abs(symmetrize(g, res.u) - res.u)) <= 1e-12


def test_no_convergence_carries_state(torus32):
    f = 1 + 0.5 * np.cos(torus32.node_coords[0])
    cfg = NewtonConfig(4 * np.pi, rho_continuation_steps=1, max_iters=1, newton_tol=1e-14)
    with pytest.raises(NoConvergence) as info:
        solve(torus32, cfg, f, np.zeros(torus32.shape))
    assert info.value.iterations == 1
    assert info.value.residual > 1e-14


def test_solution_residual_matches_equation_module(torus32):
    f = 1 + 0.5 * np.cos(torus32.node_coords[0])
    res = solve(torus32, NewtonConfig(3.0), f, np.zeros(torus32.shape))
    assert res.residual == residual(torus32, 3.0, f, res.u)
    assert np.allclose(zero_mean(torus32, res.u), res.u, atol=1e-15)


@pytest.mark.parametrize("kw", [dict(rho_continuation_steps=0), dict(newton_tol=0.0),
                                dict(linear_tol=-1.0), dict(max_iters=0), dict(damping=1.0)])
def test_config_rejects_bad_values(kw):
    with pytest.raises(ConfigError):
        NewtonConfig(1.0, **kw)


def test_rejects_non_positive_weight(torus16):
    with pytest.raises(ConfigError):
        solve(torus16, NewtonConfig(1.0), np.zeros(torus16.shape), np.zeros(torus16.shape))
