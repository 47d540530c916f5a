import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from meanflow.errors import ConfigError
from meanflow.mesh import build_mesh, geodesic_distance, integrate
from meanflow.symmetry import (
    ball_measure,
    build_group,
    concentration_ball,
    invariance_error,
    min_orbit_cardinality,
    orbit,
    separated_orbit_points,
    split_generators,
    symmetrize,
    trivial_group,
)


def test_split_generators():
    assert split_generators("shift(32,0), flip_x") == ["shift(32,0)", "flip_x"]
    assert split_generators("") == []


def test_half_shift_group(torus64):
    g = build_group(torus64, ["shift(32,0)"])
    assert g.order == 2 and min_orbit_cardinality(g) == 2
    o = orbit(g, torus64.node(0, 0))
    assert set(o) == {torus64.node(0, 0), torus64.node(0, 32)}


def test_antipodal_group(sphere64):
    g = build_group(sphere64, "antipodal")
    assert g.order == 2 and g.k_min == 2


def test_product_shift_group_brute_force():
    mesh = build_mesh("torus", 60)
    g = build_group(mesh, ["shift(20,0)", "shift(0,30)"])
    assert g.order == 6
    # brute force: the group is {(20a, 30b)} acting freely
    shifts = {(20 * a % 60, 30 * b % 60) for a in range(3) for b in range(2)}
    assert len(shifts) == 6
    assert g.k_min == 6


def test_cap_and_bad_specs(torus16, sphere16):
    with pytest.raises(ConfigError, match="group too large"):
        build_group(torus16, ["shift(1,0)", "shift(0,1)"], cap=100)
    with pytest.raises(ConfigError):
        build_group(torus16, ["antipodal"])
    with pytest.raises(ConfigError):
        build_group(sphere16, ["flip_x"])
    with pytest.raises(ConfigError):
        build_group(torus16, ["shift(1)"])
    with pytest.raises(ConfigError):
        build_group(torus16, ["shift(a,b)"])


def test_swap_needs_square_grid():
    mesh = build_mesh("sphere", (16, 32))
    with pytest.raises(ConfigError):
        build_group(mesh, ["swap_xy"])


GROUPS = [
    ("torus", 16, ["flip_x", "swap_xy"]),
    ("torus", 16, ["shift(4,0)", "flip_y"]),
    ("torus", 16, ["shift(8,8)"]),
    ("sphere", (8, 16), ["antipodal"]),
    ("sphere", (8, 16), ["rot_phi(4)", "flip_theta"]),
    ("sphere", (8, 16), ["rot_phi(2)", "antipodal"]),
]


@pytest.mark.parametrize("kind,res,gens", GROUPS)
def test_group_axioms(kind, res, gens):
    mesh = build_mesh(kind, res)
    g = build_group(mesh, gens)
    elems = {e.tobytes() for e in g.elements}
    n = mesh.n_nodes
    assert np.array_equal(g.elements[0], np.arange(n))
    for a in g.elements:
        assert np.array_equal(np.sort(a), np.arange(n))
        inv = np.empty(n, dtype=a.dtype)
        inv[a] = np.arange(n)
        assert inv.tobytes() in elems
        for b in g.elements:
            assert a[b].tobytes() in elems
        assert np.array_equal(mesh.quad_weights.ravel()[a], mesh.quad_weights.ravel())


@pytest.mark.parametrize("kind,res,gens", GROUPS)
def test_orbits_partition_nodes(kind, res, gens):
    mesh = build_mesh(kind, res)
    g = build_group(mesh, gens)
    seen = set()
    total = 0
    for node in range(mesh.n_nodes):
        o = tuple(orbit(g, node))
        assert g.order % len(o) == 0
        if o not in seen:
            seen.add(o)
            total += len(o)
    assert total == mesh.n_nodes
    assert g.k_min == min(len(o) for o in seen)


def test_identity_orbit(torus16):
    g = trivial_group(torus16)
    assert list(orbit(g, 7)) == [7] and g.k_min == 1


def test_symmetrize_examples(torus32, rng):
    g = build_group(torus32, ["flip_x"])
    x = torus32.node_coords[0]
    assert np.max(np.abs(symmetrize(g, np.sin(x)))) <= 1e-15
    inv = np.cos(x)
    assert np.max(np.abs(symmetrize(g, inv) - inv)) <= 1e-15
    u = rng.normal(size=torus32.shape)
    assert integrate(torus32, symmetrize(g, u)) == pytest.approx(integrate(torus32, u), abs=1e-12)


@pytest.mark.parametrize("kind,res,gens", GROUPS)
def test_symmetrize_is_exact_linear_projection(kind, res, gens):
    mesh = build_mesh(kind, res)
    g = build_group(mesh, gens)
    rng = np.random.default_rng(3)
    u, v = rng.normal(size=(2, *mesh.shape))
    s = symmetrize(g, u)
    assert invariance_error(g, s) == 0.0
    # averaging k equal numbers can move the last bit
    assert np.max(np.abs(symmetrize(g, s) - s)) <= 1e-15
    assert np.allclose(symmetrize(g, 2 * u - 3 * v), 2 * s - 3 * symmetrize(g, v), atol=1e-13)
    assert integrate(mesh, s) == pytest.approx(integrate(mesh, u), abs=1e-12)
    # agrees with the definition as a group average
    avg = u.ravel()[g.elements].mean(axis=0).reshape(mesh.shape)
    assert np.allclose(s, avg, atol=1e-14)


def test_separated_points_half_shift(torus64):
    g = build_group(torus64, ["shift(32,0)"])
    pts, delta = separated_orbit_points(g, torus64.node(3, 5), 2)
    assert delta == pytest.approx(np.pi)
    assert torus64.node(3, 5) in pts


def test_separated_points_antipodal(sphere64):
    g = build_group(sphere64, ["antipodal"])
    _, delta = separated_orbit_points(g, sphere64.node(0, 0), 2)
    assert abs(delta - np.pi) <= np.pi / 64


def test_separated_points_exhaustive_oracle():
    mesh = build_mesh("torus", 60)
    g = build_group(mesh, ["shift(20,0)", "shift(0,30)"])
    node = mesh.node(1, 2)
    pts, delta = separated_orbit_points(g, node, 3)
    orb = orbit(g, node)
    best = max(
        min(geodesic_distance(mesh, a, b) for a, b in itertools.combinations(c, 2))
        for c in itertools.combinations(orb, 3) if node in c
    )
    assert delta == best
    assert len(set(pts)) == 3 and node in pts


def test_separated_points_greedy_is_valid_certificate(torus32):
    g = build_group(torus32, ["shift(4,0)", "shift(0,4)"])  # orbits of 64 points
    pts, delta = separated_orbit_points(g, 0, 4)
    assert len(set(pts)) == 4 and delta > 0
    pairwise = [geodesic_distance(torus32, a, b) for a, b in itertools.combinations(pts, 2)]
    assert min(pairwise) == delta


def test_separated_points_orbit_too_small(torus16):
    g = build_group(torus16, ["shift(8,0)"])
    with pytest.raises(ConfigError, match="2 points"):
        separated_orbit_points(g, 0, 3)


def test_concentration_ball_uniform(torus32):
    r = np.pi / 2
    _, frac = concentration_ball(torus32, np.zeros(torus32.shape), r)
    assert frac == pytest.approx(ball_measure(torus32, 0, r) / torus32.volume, rel=1e-12)


def test_concentration_ball_finds_bump(torus64):
    from meanflow.mesh import distances_from

    p = torus64.node(40, 10)
    u = -200 * distances_from(torus64, p) ** 2
    centre, frac = concentration_ball(torus64, u, 0.3)
    assert geodesic_distance(torus64, centre, p) <= 0.3
    assert frac > 0.99


def test_concentration_ball_radius_checked(torus16):
    for r in (0.0, -1.0, np.pi, 4.0):
        with pytest.raises(ConfigError):
            concentration_ball(torus16, np.zeros(torus16.shape), r)


@given(st.floats(0.05, 3.1), st.floats(0.05, 3.1))
def test_concentration_fraction_monotone(r1, r2):
    mesh = build_mesh("sphere", (8, 16))
    u = np.random.default_rng(11).normal(size=mesh.shape)
    lo, hi = sorted((r1, r2))
    assert concentration_ball(mesh, u, lo)[1] <= concentration_ball(mesh, u, hi)[1]
