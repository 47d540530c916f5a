"""The mean field operator, its energy and the flow velocity.

All integrals use the mesh quadrature and the discrete volume ``mesh.volume``.
"""

import numpy as np

from .errors import BlowupError
from .mesh import MeshGeometry, dirichlet_energy, integrate, laplacian

EXP_GUARD = 700.0


def _guard(u):
    if not np.all(np.abs(u) <= EXP_GUARD):
        raise BlowupError(f"|u| exceeds {EXP_GUARD:g} (max |u| = {np.nanmax(np.abs(u)):.4g})")


def weighted_mass(mesh: MeshGeometry, f, u) -> float:
    """Integral of f*exp(u)."""
    _guard(u)
    return integrate(mesh, f * np.exp(u))


def mean_field_operator(mesh: MeshGeometry, rho, f, u, lap=None) -> np.ndarray:
    """Left-hand side of  Lap u + rho*(f e^u / int f e^u - 1/|M|) = 0."""
    u = mesh.check(u)
    if lap is None:
        lap = laplacian(mesh, u)
    _guard(u)
    fe = f * np.exp(u)
    return lap + rho * (fe / integrate(mesh, fe) - 1.0 / mesh.volume)


def residual(mesh: MeshGeometry, rho, f, u) -> float:
    """L2 norm of the mean field operator."""
    op = mean_field_operator(mesh, rho, f, u)
    return float(np.sqrt(integrate(mesh, op * op)))


def rhs(mesh: MeshGeometry, rho, f, u) -> np.ndarray:
    """Time derivative of u along the flow d/dt e^u = mean field operator."""
    u = mesh.check(u)
    _guard(u)
    lap = laplacian(mesh, u)
    return np.exp(-u) * (lap - rho / mesh.volume) + rho * f / integrate(mesh, f * np.exp(u))


def energy(mesh: MeshGeometry, rho, f, u) -> float:
    """E_f(u) = 1/2 int|grad u|^2 + rho/|M| int u - rho log int f e^u."""
    u = mesh.check(u)
    return (0.5 * dirichlet_energy(mesh, u)
            + rho / mesh.volume * integrate(mesh, u)
            - rho * np.log(weighted_mass(mesh, f, u)))
