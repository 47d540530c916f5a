"""Discrete surfaces: the flat square torus and the unit sphere.

Fields are plain ``numpy`` arrays shaped like ``mesh.shape``:

* torus: ``(N, N)`` indexed ``[iy, ix]`` with ``x = ix*h``, ``y = iy*h``, ``h = 2*pi/N``
* sphere: ``(n_theta, n_phi)`` indexed ``[j, i]`` with cell-centred colatitude
  ``theta_j = (j + 1/2)*pi/n_theta`` and longitude ``phi_i = 2*pi*i/n_phi``

Nodes are also addressed by their flat (C-order) index.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


DENSE_SPECTRAL_MAX = 128


class MeshKind(str, enum.Enum):
    TORUS = "torus"
    SPHERE = "sphere"


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MeshGeometry:
    """Immutable discrete surface with quadrature and metric data."""

    kind: MeshKind
    resolution: tuple
    shape: tuple
    node_coords: tuple  # (x, y) or (theta, phi), each shaped like the grid
    quad_weights: np.ndarray
    volume: float
    injectivity_radius: float
    lambda1: float
    lambda_op_max: float
    # operator tables, private
    _tables: dict = field(repr=False, default_factory=dict)

    @property
    def n_nodes(self):
        return self.shape[0] * self.shape[1]

    @property
    def coord_names(self):
        return ("x", "y") if self.kind is MeshKind.TORUS else ("theta", "phi")

    @property
    def key(self):
        """Hashable identity of the discretisation."""
        return (self.kind.value, *self.resolution)

    def check(self, u, name="field"):
        u = np.asarray(u, dtype=float)
        if u.shape != self.shape:
            raise ValueError(f"{name} has shape {u.shape}, mesh expects {self.shape}")
        return u

    def coords(self):
        """Coordinates as a name -> array mapping (for expression evaluation)."""
        return dict(zip(self.coord_names, self.node_coords))

    def grid_index(self, node):
        return np.unravel_index(int(node), self.shape)

    def node(self, a, b):
        """Flat node index from grid indices ``(iy, ix)`` or ``(j, i)``; periodic directions wrap."""
        if self.kind is MeshKind.TORUS:
            a %= self.shape[0]
        return int(np.ravel_multi_index((a, b % self.shape[1]), self.shape))

    def __repr__(self):
        return f"MeshGeometry({self.kind.value}, {self.resolution})"


def _half_mirror(first_half, sign=1.0):
    return np.concatenate([first_half, sign * first_half[::-1]])


def build_mesh(kind, resolution) -> MeshGeometry:
    """Build a torus (``resolution=N``) or sphere (``resolution=(n_theta, n_phi)``)."""
    kind = MeshKind(kind.value if isinstance(kind, MeshKind) else str(kind).lower())
    if kind is MeshKind.TORUS:
        n = int(np.atleast_1d(resolution)[0])
        if n < 8 or n % 2:
            raise ConfigError(f"torus resolution N must be even and >= 8, got {resolution!r}")
        return _build_torus(n)
    try:
        nt, nph = (int(v) for v in resolution)
    except (TypeError, ValueError):
        raise ConfigError(f"sphere resolution must be (n_theta, n_phi), got {resolution!r}") from None
    if nt < 8 or nt % 2 or nph < 8 or nph % 2:
        raise ConfigError(
            f"sphere resolution needs n_theta and n_phi even and >= 8, got ({nt}, {nph})")
    return _build_sphere(nt, nph)


def _build_torus(n):
    h = 2.0 * np.pi / n
    xs = np.arange(n) * h
    x, y = np.meshgrid(xs, xs)
    weights = np.full((n, n), h * h)
    ky = np.fft.fftfreq(n, d=1.0 / n)
    kx = np.fft.rfftfreq(n, d=1.0 / n)
    k2 = ky[:, None] ** 2 + kx[None, :] ** 2
    # multiplicity of each rfft column in the full spectrum
    mult = np.full(kx.shape, 2.0)
    mult[0] = 1.0
    mult[-1] = 1.0
    tables = {"h": h, "k2": _frozen(k2), "mult": _frozen(mult)}
    if n <= DENSE_SPECTRAL_MAX:
        # the same Fourier multiplier as a symmetric circulant matrix; faster than
        # FFT round trips on small grids
        col = np.fft.irfft(-kx ** 2, n=n)
        col = 0.5 * (col + np.roll(col[::-1], 1))
        tables["d2"] = _frozen(col[(np.arange(n)[None, :] - np.arange(n)[:, None]) % n])
    return MeshGeometry(
        kind=MeshKind.TORUS,
        resolution=(n,),
        shape=(n, n),
        node_coords=(_frozen(x), _frozen(y)),
        quad_weights=_frozen(weights),
        volume=(2.0 * np.pi) ** 2,
        injectivity_radius=np.pi,
        lambda1=1.0,
        lambda_op_max=2.0 * (n // 2) ** 2,
        _tables=tables,
    )


def _build_sphere(nt, nph):
    dth = np.pi / nt
    dph = 2.0 * np.pi / nph
    half = nt // 2
    centres = (np.arange(half) + 0.5) * dth
    # built mirror-symmetric so that theta -> pi - theta maps weights exactly
    sin_c = _half_mirror(np.sin(centres))
    cos_c = _half_mirror(np.cos(centres), sign=-1.0)
    faces = np.sin(np.arange(half) * dth)
    sin_f = np.concatenate([faces, [1.0], faces[::-1]])
    sin_f[0] = sin_f[-1] = 0.0

    theta_1d = (np.arange(nt) + 0.5) * dth
    phi_1d = np.arange(nph) * dph
    theta, phi = np.meshgrid(theta_1d, phi_1d, indexing="ij")
    weights = np.repeat((sin_c * dth * dph)[:, None], nph, axis=1)
    volume = float(weights.sum())

    # Gershgorin bound on the operator spectrum
    diag = (sin_f[1:] + sin_f[:-1]) / (sin_c * dth ** 2) + 2.0 / (sin_c ** 2 * dph ** 2)
    lam_max = float(np.max(2.0 * diag))

    d = np.arange(nph)
    d = np.minimum(d, nph - d)
    tables = {
        "dtheta": dth,
        "dphi": dph,
        "sin_c": _frozen(sin_c),
        "cos_c": _frozen(cos_c),
        "sin_f": _frozen(sin_f),
        # haversine of longitude gaps, indexed by (i1 - i2) mod n_phi
        "hav_phi": _frozen(np.sin(0.5 * d * dph) ** 2),
        "hav_theta": _frozen(np.sin(0.5 * np.arange(nt) * dth) ** 2),
    }
    return MeshGeometry(
        kind=MeshKind.SPHERE,
        resolution=(nt, nph),
        shape=(nt, nph),
        node_coords=(_frozen(theta), _frozen(phi)),
        quad_weights=_frozen(weights),
        volume=volume,
        injectivity_radius=np.pi,
        lambda1=2.0,
        lambda_op_max=lam_max,
        _tables=tables,
    )


# ---------------------------------------------------------------------------
# operators


def laplacian(mesh: MeshGeometry, u) -> np.ndarray:
    """Laplace-Beltrami operator.

    Spectral on the torus; conservative second-order flux form on the sphere
    with zero flux through the poles.
    """
    u = mesh.check(u)
    t = mesh._tables
    if mesh.kind is MeshKind.TORUS:
        if "d2" in t:
            d2 = t["d2"]
            return d2 @ u + u @ d2
        return np.fft.irfft2(-t["k2"] * np.fft.rfft2(u), s=mesh.shape)

    dth, dph = t["dtheta"], t["dphi"]
    sin_c, sin_f = t["sin_c"], t["sin_f"]
    flux = np.zeros((mesh.shape[0] + 1, mesh.shape[1]))
    flux[1:-1] = sin_f[1:-1, None] * (u[1:] - u[:-1])
    out = (flux[1:] - flux[:-1]) / (sin_c[:, None] * dth ** 2)
    lon = (np.roll(u, -1, axis=1) + np.roll(u, 1, axis=1)) - 2.0 * u
    out += lon / (sin_c[:, None] ** 2 * dph ** 2)
    return out


def integrate(mesh: MeshGeometry, u) -> float:
    u = mesh.check(u)
    return float(np.sum(u * mesh.quad_weights))


def mean(mesh: MeshGeometry, u) -> float:
    return integrate(mesh, u) / mesh.volume


def dirichlet_energy(mesh: MeshGeometry, u) -> float:
    """Return the full (not halved) Dirichlet integral of ``u``.

    Uses Parseval on the torus and face fluxes on the sphere, both
    consistent with :func:`laplacian` so that the result equals
    ``-integrate(u * laplacian(u))`` up to roundoff.
    """
    u = mesh.check(u)
    t = mesh._tables
    if mesh.kind is MeshKind.TORUS:
        n = mesh.shape[0]
        spec = np.abs(np.fft.rfft2(u)) ** 2
        return float(t["h"] ** 2 / n ** 2 * np.sum(t["mult"][None, :] * t["k2"] * spec))

    dth, dph = t["dtheta"], t["dphi"]
    sin_c, sin_f = t["sin_c"], t["sin_f"]
    dtheta_u = u[1:] - u[:-1]
    merid = np.sum(sin_f[1:-1, None] * dtheta_u ** 2) * dph / dth
    dphi_u = np.roll(u, -1, axis=1) - u
    zonal = np.sum(dphi_u ** 2 / sin_c[:, None]) * dth / dph
    return float(merid + zonal)


# ---------------------------------------------------------------------------
# metric


def distances_from(mesh: MeshGeometry, node) -> np.ndarray:
    """Geodesic distance from ``node`` to every node, shaped like the grid."""
    a, b = mesh.grid_index(node)
    rows = np.arange(mesh.shape[0])
    cols = np.arange(mesh.shape[1])
    return _pair_distance(mesh, a, b, rows[:, None], cols[None, :])


def geodesic_distance(mesh: MeshGeometry, i, j) -> float:
    a1, b1 = mesh.grid_index(i)
    a2, b2 = mesh.grid_index(j)
    return float(_pair_distance(mesh, a1, b1, a2, b2))


def _pair_distance(mesh, a1, b1, a2, b2):
    # integer index gaps keep every grid symmetry an exact isometry
    t = mesh._tables
    if mesh.kind is MeshKind.TORUS:
        n = mesh.shape[0]
        dy = np.abs(a1 - a2) % n
        dx = np.abs(b1 - b2) % n
        dy = np.minimum(dy, n - dy)
        dx = np.minimum(dx, n - dx)
        return t["h"] * np.hypot(dx, dy)
    nph = mesh.shape[1]
    sin_c = t["sin_c"]
    hav = t["hav_theta"][np.abs(a1 - a2)] + (sin_c[a1] * sin_c[a2]) * t["hav_phi"][(b1 - b2) % nph]
    return 2.0 * np.arcsin(np.sqrt(np.clip(hav, 0.0, 1.0)))


def _cyclic(a, k, axis):
    """``np.roll(a, -k, axis)`` without the bookkeeping overhead."""
    k %= a.shape[axis]
    if k == 0:
        return a
    if axis == 0:
        return np.concatenate((a[k:], a[:k]), axis=0)
    return np.concatenate((a[:, k:], a[:, :k]), axis=1)


def ball_sums(mesh: MeshGeometry, m, r) -> np.ndarray:
    """For every centre node c, the sum of ``m`` over nodes within distance ``r`` of c.

    Summation order is fixed and only nonnegative terms are added for
    larger ``r``, so for nonnegative ``m`` the result is monotone in ``r``
    bit for bit.
    """
    m = mesh.check(m)
    if mesh.kind is MeshKind.TORUS:
        n = mesh.shape[0]
        h = mesh._tables["h"]
        # a torus ball is a stack of row intervals |dx| <= half_width[dy]
        dys = np.arange(-(n // 2) + 1, n // 2)
        widths = {}
        for dy in dys:
            dx2 = (r / h) ** 2 - dy * dy
            if dx2 >= 0:
                widths[int(dy)] = min(int(np.floor(np.sqrt(dx2) + 1e-12)), n // 2 - 1)
        # boundary nodes: include exactly those with h*hypot(dx, dy) <= r
        for dy, w in widths.items():
            while w + 1 < n // 2 and h * np.hypot(w + 1, dy) <= r:
                w += 1
            while w >= 0 and h * np.hypot(w, dy) > r:
                w -= 1
            widths[dy] = w
        rows = [m]
        acc = m
        for d in range(1, max(widths.values(), default=0) + 1):
            acc = acc + (_cyclic(m, d, 1) + _cyclic(m, -d, 1))
            rows.append(acc)
        out = np.zeros(mesh.shape)
        for dy, w in sorted(widths.items(), key=lambda kv: (abs(kv[0]), kv[0])):
            if w >= 0:
                out = out + _cyclic(rows[w], dy, 0)
        return out

    nt, nph = mesh.shape
    key = ("ball_masks", float(r))
    masks = mesh._tables.get(key)
    if masks is None:
        masks = np.empty((nt, nt, nph))
        for j in range(nt):
            masks[j] = distances_from(mesh, mesh.node(j, 0)) <= r
        mesh._tables[key] = _frozen(masks)
    idx = (np.arange(nph)[:, None] + np.arange(nph)[None, :]) % nph
    shifted = m[:, idx].transpose(1, 0, 2)  # [i, j', d] = m[j', i + d]
    return np.einsum("ijd,kjd->ki", shifted, masks)
