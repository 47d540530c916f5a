"""Finite isometry groups acting on mesh nodes by exact permutations."""

from __future__ import annotations

import itertools
import re
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .mesh import MeshGeometry, MeshKind, ball_sums, distances_from, geodesic_distance

DEFAULT_CAP = 4096
EXHAUSTIVE_LIMIT = 12

_GEN_RE = re.compile(r"^\s*([a-z_]+)\s*(?:\(([^()]*)\))?\s*$")
_TORUS_GENS = {"shift": 2, "flip_x": 0, "flip_y": 0, "swap_xy": 0}
_SPHERE_GENS = {"rot_phi": 1, "flip_theta": 0, "antipodal": 0}


@dataclass(frozen=True, eq=False)
class GroupAction:
    """A finite group of node permutations.

    ``elements[g, i]`` is the image of node ``i`` under element ``g``; row 0 is
    the identity.
    """

    mesh: MeshGeometry
    generators: tuple  # ((name, permutation), ...)
    elements: np.ndarray
    orbit_label: np.ndarray = field(repr=False)
    orbit_size: np.ndarray = field(repr=False)

    @property
    def order(self):
        return self.elements.shape[0]

    @property
    def k_min(self):
        return int(self.orbit_size.min())

    def __repr__(self):
        names = ", ".join(name for name, _ in self.generators) or "identity"
        return f"GroupAction({self.mesh!r}, <{names}>, order={self.order}, k_min={self.k_min})"


def split_generators(text):
    """Split ``"shift(32,0), flip_x"`` at top-level commas."""
    parts, depth, cur = [], 0, ""
    for ch in text:
        if ch == "," and depth == 0:
            parts.append(cur)
            cur = ""
            continue
        depth += (ch == "(") - (ch == ")")
        cur += ch
    parts.append(cur)
    return [p.strip() for p in parts if p.strip()]


def generator_permutation(mesh: MeshGeometry, spec: str) -> np.ndarray:
    """Permutation of flat node indices for one catalogue generator."""
    m = _GEN_RE.match(spec)
    if m is None:
        raise ConfigError(f"malformed generator {spec!r}")
    name, argtext = m.group(1), m.group(2)
    catalogue = _TORUS_GENS if mesh.kind is MeshKind.TORUS else _SPHERE_GENS
    if name not in catalogue:
        raise ConfigError(
            f"generator {name!r} is not available on a {mesh.kind.value} mesh "
            f"(choose from {', '.join(catalogue)})")
    try:
        args = [int(a) for a in argtext.split(",")] if argtext and argtext.strip() else []
    except ValueError:
        raise ConfigError(f"generator {spec!r} needs integer arguments") from None
    if len(args) != catalogue[name]:
        raise ConfigError(f"generator {name!r} takes {catalogue[name]} integer argument(s)")

    n0, n1 = mesh.shape
    a, b = np.meshgrid(np.arange(n0), np.arange(n1), indexing="ij")
    if name == "shift":
        p, q = args
        a, b = (a + q) % n0, (b + p) % n1
    elif name == "flip_x":
        b = (-b) % n1
    elif name == "flip_y":
        a = (-a) % n0
    elif name == "swap_xy":
        if n0 != n1:
            raise ConfigError("swap_xy needs a square grid")
        a, b = b, a
    elif name == "rot_phi":
        b = (b + args[0]) % n1
    elif name == "flip_theta":
        a = n0 - 1 - a
    elif name == "antipodal":
        a, b = n0 - 1 - a, (b + n1 // 2) % n1
    return np.ravel_multi_index((a, b), mesh.shape).ravel()


def build_group(mesh: MeshGeometry, generator_specs=(), cap=DEFAULT_CAP) -> GroupAction:
    """Close the given generators under composition (breadth first)."""
    if isinstance(generator_specs, str):
        generator_specs = split_generators(generator_specs)
    gens = tuple((spec.strip(), generator_permutation(mesh, spec)) for spec in generator_specs)

    identity = np.arange(mesh.n_nodes)
    seen = {identity.tobytes()}
    elements = [identity]
    queue = deque([identity])
    while queue:
        g = queue.popleft()
        for _, s in gens:
            h = s[g]
            key = h.tobytes()
            if key in seen:
                continue
            if len(elements) >= cap:
                raise ConfigError(f"group too large: closure exceeds cap of {cap} elements")
            seen.add(key)
            elements.append(h)
            queue.append(h)

    elements = np.array(elements)
    w = mesh.quad_weights.ravel()
    if any(not np.array_equal(w[e], w) for e in elements):
        raise ConfigError("group element does not preserve quadrature weights")

    label = elements.min(axis=0)
    size = np.bincount(label, minlength=mesh.n_nodes)[label]
    for arr in (elements, label, size):
        arr.setflags(write=False)
    return GroupAction(mesh, gens, elements, label, size)


def trivial_group(mesh: MeshGeometry) -> GroupAction:
    return build_group(mesh, ())


def orbit(group: GroupAction, node) -> np.ndarray:
    """Sorted node indices of the orbit of ``node``."""
    return np.unique(group.elements[:, int(node)])


def min_orbit_cardinality(group: GroupAction) -> int:
    return group.k_min


def symmetrize(group: GroupAction, u) -> np.ndarray:
    """Average ``u`` over the group.

    Computed as an orbit mean broadcast back to every orbit member, so the
    result is invariant bit for bit.
    """
    u = group.mesh.check(u)
    label = group.orbit_label
    sums = np.bincount(label, weights=u.ravel(), minlength=label.size)
    return (sums[label] / group.orbit_size).reshape(group.mesh.shape)


def invariance_error(group: GroupAction, u) -> float:
    """max over group elements and nodes of |u(sigma x) - u(x)|."""
    flat = group.mesh.check(u).ravel()
    return float(np.max(np.abs(flat[group.elements] - flat[None, :])))


def is_invariant(group: GroupAction, u, tol=1e-12) -> bool:
    return invariance_error(group, u) <= tol


def separated_orbit_points(group: GroupAction, node, k):
    """Pick ``k`` points of the orbit of ``node`` (including it) that are far apart.

    Returns ``(points, delta)`` where ``delta`` is the smallest pairwise
    geodesic distance among the points. For orbits of at most 12 points the
    max-min choice is found exhaustively; larger orbits use greedy
    farthest-point selection, in which case ``delta`` is only a lower bound
    on the optimum.
    """
    node = int(node)
    pts = orbit(group, node)
    if k < 1 or len(pts) < k:
        raise ConfigError(f"orbit of node {node} has {len(pts)} points, fewer than k={k}")
    mesh = group.mesh
    dist = np.array([[geodesic_distance(mesh, p, q) for q in pts] for p in pts])
    start = int(np.searchsorted(pts, node))
    if k == 1:
        return np.array([node]), np.inf

    if len(pts) <= EXHAUSTIVE_LIMIT:
        others = [i for i in range(len(pts)) if i != start]
        best, best_delta = None, -1.0
        for combo in itertools.combinations(others, k - 1):
            idx = (start, *combo)
            delta = min(dist[i, j] for i, j in itertools.combinations(idx, 2))
            if delta > best_delta:
                best, best_delta = idx, delta
        chosen = list(best)
    else:
        chosen = [start]
        nearest = dist[start].copy()
        for _ in range(k - 1):
            nxt = int(np.argmax(nearest))
            chosen.append(nxt)
            nearest = np.minimum(nearest, dist[nxt])
        best_delta = min(dist[i, j] for i, j in itertools.combinations(chosen, 2))
    return pts[chosen], float(best_delta)


def concentration_ball(mesh: MeshGeometry, u, r):
    """Centre node maximising the share of ``exp(u)`` inside a geodesic ball of radius ``r``.

    Returns ``(centre, fraction)``.
    """
    if not 0 < r < mesh.injectivity_radius:
        raise ConfigError(
            f"ball radius must lie in (0, {mesh.injectivity_radius}), got {r!r}")
    u = mesh.check(u)
    density = np.exp(u - u.max()) * mesh.quad_weights
    sums = ball_sums(mesh, density, r)
    centre = int(np.argmax(sums))
    return centre, float(sums.ravel()[centre] / density.sum())


def ball_measure(mesh: MeshGeometry, node, r) -> float:
    """Quadrature area of the geodesic ball of radius ``r`` about ``node``."""
    return float(mesh.quad_weights[distances_from(mesh, node) <= r].sum())
