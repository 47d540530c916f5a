"""Numerical self-checks run by ``meanflow verify`` and by the test suite.

Each check returns a :class:`CheckResult` holding the measured error and
the tolerance it is held to.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import fieldexpr
from .errors import MeanflowError
from .equation import energy, mean_field_operator, rhs
from .flow import FlowConfig, run, stability_ceiling
from .mesh import MeshGeometry, MeshKind, integrate, laplacian
from .stationary import jacobian_apply
from .symmetry import build_group, symmetrize

FD_EPS = 1e-6
FD_RTOL = 1e-5
SELF_ADJOINT_TOL = 1e-10
SPECTRAL_TOL = 1e-10
SPHERE_OPERATOR_TOL = 5e-3  # at 64 x 128, scaled with the square of the spacing
EQUIVARIANCE_TOL = 1e-10
DISSIPATION_RTOL = 1e-2
DISSIPATION_CFL = 0.09  # a tenth of the default safety factor


@dataclass(frozen=True)
class CheckResult:
    name: str
    error: float
    tol: float

    @property
    def passed(self):
        return bool(self.error <= self.tol)

    def line(self):
        flag = "PASS" if self.passed else "FAIL"
        return f"{self.name:24s} {flag}  error {self.error:.3e}  tol {self.tol:.1e}"


def smooth_random_field(mesh: MeshGeometry, rng, modes=4, amplitude=0.5):
    """Random combination of low trigonometric modes."""
    a, b = mesh.node_coords
    u = np.zeros(mesh.shape)
    for m in range(modes):
        for n in range(-modes + 1, modes):
            c = rng.normal(scale=amplitude / (1 + m * m + n * n))
            phase = rng.uniform(0, 2 * np.pi)
            if mesh.kind is MeshKind.TORUS:
                u += c * np.cos(m * a + n * b + phase)
            else:
                u += c * np.cos(m * a + phase) * np.cos(n * b + phase)
    return u


def corrupt_quadrature(mesh: MeshGeometry, rng, level=1e-2) -> MeshGeometry:
    """Copy of ``mesh`` with perturbed quadrature weights (test hook)."""
    w = mesh.quad_weights * (1.0 + level * rng.uniform(-1, 1, mesh.shape))
    w.setflags(write=False)
    return replace(mesh, quad_weights=w)


def self_adjointness(mesh, rng, pairs=5) -> CheckResult:
    worst = 0.0
    for _ in range(pairs):
        u = smooth_random_field(mesh, rng, modes=6)
        v = smooth_random_field(mesh, rng, modes=6)
        a = integrate(mesh, v * laplacian(mesh, u))
        b = integrate(mesh, u * laplacian(mesh, v))
        scale = max(abs(a), abs(b), 1.0)
        worst = max(worst, abs(a - b) / scale)
    return CheckResult("self-adjointness", worst, SELF_ADJOINT_TOL)


def spectral_exactness(mesh) -> CheckResult:
    """Torus: every Fourier mode below Nyquist. Sphere: the first zonal harmonic."""
    if mesh.kind is MeshKind.TORUS:
        x, y = mesh.node_coords
        n = mesh.shape[0]
        worst = 0.0
        for m in range(n // 2):
            for k in range(-(n // 2) + 1, n // 2):
                phi = np.cos(m * x + k * y)
                err = np.max(np.abs(laplacian(mesh, phi) + (m * m + k * k) * phi))
                worst = max(worst, err / max(1.0, m * m + k * k))
        return CheckResult("spectral exactness", worst, SPECTRAL_TOL)
    c = np.cos(mesh.node_coords[0])
    err = float(np.max(np.abs(laplacian(mesh, c) + 2.0 * c)))
    tol = SPHERE_OPERATOR_TOL * max(1.0, (64.0 / mesh.shape[0]) ** 2)
    return CheckResult("sphere harmonic", err, tol)


def gradient_consistency(mesh, rho, f, rng, pairs=20) -> CheckResult:
    """Central difference of the energy against -int F v."""
    worst = 0.0
    for _ in range(pairs):
        u = smooth_random_field(mesh, rng)
        v = smooth_random_field(mesh, rng)
        fd = (energy(mesh, rho, f, u + FD_EPS * v) - energy(mesh, rho, f, u - FD_EPS * v)) / (2 * FD_EPS)
        exact = -integrate(mesh, mean_field_operator(mesh, rho, f, u) * v)
        worst = max(worst, abs(fd - exact) / max(abs(exact), 1e-3))
    return CheckResult("energy gradient", worst, FD_RTOL)


def jacobian_consistency(mesh, rho, f, rng, pairs=20) -> CheckResult:
    worst = 0.0
    for _ in range(pairs):
        w = smooth_random_field(mesh, rng)
        v = smooth_random_field(mesh, rng)
        fd = (mean_field_operator(mesh, rho, f, w + FD_EPS * v)
              - mean_field_operator(mesh, rho, f, w - FD_EPS * v)) / (2 * FD_EPS)
        jv = jacobian_apply(mesh, rho, f, w, v)
        worst = max(worst, float(np.max(np.abs(fd - jv)) / np.max(np.abs(jv))))
    return CheckResult("Newton Jacobian", worst, FD_RTOL)


def default_generators(mesh):
    if mesh.kind is MeshKind.TORUS:
        return [f"shift({mesh.shape[0] // 2},0)", "flip_x", "swap_xy"]
    return ["antipodal", f"rot_phi({mesh.shape[1] // 4})", "flip_theta"]


def equivariance(mesh, rho, f, rng, group=None) -> CheckResult:
    """Laplacian and flow velocity commute with the group permutations.

    ``f`` is symmetrised first so that the velocity check is meaningful.
    """
    group = group or build_group(mesh, default_generators(mesh))
    fs = symmetrize(group, f)
    worst = 0.0
    for _ in range(3):
        u = smooth_random_field(mesh, rng)
        ops = (lambda a: laplacian(mesh, a), lambda a: rhs(mesh, rho, fs, a))
        for op in ops:
            base = op(u).ravel()
            scale = max(1.0, float(np.max(np.abs(base))))
            for perm in group.elements[1:]:
                moved = op(u.ravel()[perm].reshape(mesh.shape)).ravel()
                worst = max(worst, float(np.max(np.abs(moved - base[perm]))) / scale)
    return CheckResult("equivariance", worst, EQUIVARIANCE_TOL)


def three_point_derivative(t, e):
    """Second-order derivative of samples ``e(t)`` at the interior points."""
    t, e = np.asarray(t, float), np.asarray(e, float)
    h1 = t[1:-1] - t[:-2]
    h2 = t[2:] - t[1:-1]
    return (-h2 / (h1 * (h1 + h2)) * e[:-2]
            + (h2 - h1) / (h1 * h2) * e[1:-1]
            + h1 / (h2 * (h1 + h2)) * e[2:])


def dissipation_mismatch(t, energy_series, y, middle=0.8):
    """Max relative gap between dE/dt and -y over the middle of a series."""
    dedt = three_point_derivative(t, energy_series)
    yi = np.asarray(y, float)[1:-1]
    n = dedt.size
    lo = int(round(n * (1 - middle) / 2))
    hi = max(lo + 1, n - lo)
    return float(np.max(np.abs(dedt[lo:hi] + yi[lo:hi]) / np.abs(yi[lo:hi])))


def dissipation_identity(mesh, rho, f_expr, u0_expr=None, steps=400) -> CheckResult:
    """Short run at a tenth of the stability ceiling with a record at every step."""
    if u0_expr is None:
        u0_expr = "0.5*cos(x) + 0.3*sin(2*y)" if mesh.kind is MeshKind.TORUS else "0.5*cos(theta)"
    u0 = fieldexpr.materialize(u0_expr, mesh)
    t_end = steps * stability_ceiling(mesh, u0, DISSIPATION_CFL)
    cfg = FlowConfig(mesh, rho, f_expr, u0, dt_init=1.0, dt_max=1.0, cfl_safety=DISSIPATION_CFL,
                     residual_tol=1e-14, t_max=t_end, record_every=1)
    res = run(cfg)
    t = [r.t for r in res.series]
    e = [r.energy for r in res.series]
    y = [r.dissipation for r in res.series]
    return CheckResult("dissipation identity", dissipation_mismatch(t, e, y), DISSIPATION_RTOL)


def _guarded(name, tol, fn):
    # a check that cannot even be evaluated counts as failed
    try:
        return fn()
    except (MeanflowError, FloatingPointError) as exc:
        return CheckResult(f"{name} ({type(exc).__name__})", float("inf"), tol)


def run_all(mesh, rho, f_expr, group=None, seed=0):
    """Every check at this resolution, in a fixed order."""
    rng = np.random.default_rng(seed)
    f = fieldexpr.materialize(f_expr, mesh)
    fieldexpr.validate_positive(f)
    return [
        _guarded("self-adjointness", SELF_ADJOINT_TOL, lambda: self_adjointness(mesh, rng)),
        _guarded("spectral exactness", SPECTRAL_TOL, lambda: spectral_exactness(mesh)),
        _guarded("energy gradient", FD_RTOL, lambda: gradient_consistency(mesh, rho, f, rng)),
        _guarded("Newton Jacobian", FD_RTOL, lambda: jacobian_consistency(mesh, rho, f, rng)),
        _guarded("equivariance", EQUIVARIANCE_TOL, lambda: equivariance(mesh, rho, f, rng, group)),
        _guarded("dissipation identity", DISSIPATION_RTOL,
                 lambda: dissipation_identity(mesh, rho, f_expr)),
    ]
