"""Scalar functionals recorded along a flow, Moser-Trudinger probes and bubbles."""

from __future__ import annotations

from dataclasses import astuple, dataclass, fields

import numpy as np

from .equation import energy, residual, rhs
from .mesh import MeshGeometry, dirichlet_energy, distances_from, integrate, laplacian, mean
from .symmetry import GroupAction, concentration_ball

__all__ = [
    "CSV_COLUMNS",
    "DiagnosticsRecord",
    "decay_rate",
    "dissipation",
    "energy",
    "l2_h1_distance",
    "make_bubble",
    "mt_functional",
    "sobolev_record",
    "symmetrize_mass",
]


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    mass: float
    energy: float
    dissipation: float
    residual: float
    mean: float
    h1: float
    h2: float
    umin: float
    umax: float
    mtgap: float
    confrac: float

    def as_row(self):
        return astuple(self)


CSV_COLUMNS = tuple(f.name for f in fields(DiagnosticsRecord))


def dissipation(mesh: MeshGeometry, u, u_dot) -> float:
    """y = int (du/dt)^2 e^u dV."""
    u = mesh.check(u)
    u_dot = mesh.check(u_dot, "u_dot")
    with np.errstate(over="ignore"):  # an exploding state reports inf
        return integrate(mesh, u_dot ** 2 * np.exp(u))


def log_mean_exp_integral(mesh: MeshGeometry, u) -> float:
    """log int e^{u - mean(u)} dV, evaluated without overflow."""
    u = mesh.check(u)
    top = float(u.max())
    return top - mean(mesh, u) + float(np.log(integrate(mesh, np.exp(u - top))))


def mt_functional(mesh: MeshGeometry, u, k=1):
    """Moser-Trudinger probe with the constant 1/(16 k pi).

    Returns ``(lhs, dirichlet, gap)`` with ``lhs = log int e^{u-ubar}``,
    ``dirichlet = int |grad u|^2`` and ``gap = lhs - dirichlet/(16 k pi)``.
    Nothing is asserted; the inequality says ``gap <= eps*dirichlet + C``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    lhs = log_mean_exp_integral(mesh, u)
    d = dirichlet_energy(mesh, u)
    return lhs, d, lhs - d / (16.0 * k * np.pi)


def make_bubble(mesh: MeshGeometry, center, lam) -> np.ndarray:
    """Concentration profile log(lam^2 / (1 + lam^2 d^2)^2) with zero mean.

    ``d`` is the geodesic distance to ``center``; the scale is ``1/lam``.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    d = distances_from(mesh, center)
    u = 2.0 * np.log(lam) - 2.0 * np.log1p((lam * d) ** 2)
    return u - mean(mesh, u)


def symmetrize_mass(group: GroupAction, u) -> np.ndarray:
    """G-invariant field whose exponential is the group average of e^u.

    Applied to a single bubble this gives one bubble at every orbit point,
    each carrying an equal share of the mass.
    """
    flat = group.mesh.check(u).ravel()
    vals = flat[group.elements]
    top = vals.max(axis=0)
    out = top + np.log(np.mean(np.exp(vals - top), axis=0))
    # orbit average keeps the result invariant bit for bit
    label = group.orbit_label
    out = np.bincount(label, weights=out, minlength=label.size)[label] / group.orbit_size
    return out.reshape(group.mesh.shape)


def sobolev_record(mesh: MeshGeometry, rho, f, state, k=1, radius=None) -> DiagnosticsRecord:
    """Evaluate every recorded quantity on ``state`` (needs ``state.t`` and ``state.u``)."""
    u = mesh.check(state.u)
    if radius is None:
        radius = mesh.injectivity_radius / 4.0
    lap = laplacian(mesh, u)
    u_dot = rhs(mesh, rho, f, u)
    _, _, gap = mt_functional(mesh, u, k)
    _, frac = concentration_ball(mesh, u, radius)
    return DiagnosticsRecord(
        t=float(state.t),
        mass=integrate(mesh, np.exp(u)),
        energy=energy(mesh, rho, f, u),
        dissipation=dissipation(mesh, u, u_dot),
        residual=residual(mesh, rho, f, u),
        mean=mean(mesh, u),
        h1=dirichlet_energy(mesh, u),
        h2=integrate(mesh, lap * lap),
        umin=float(u.min()),
        umax=float(u.max()),
        mtgap=gap,
        confrac=frac,
    )


def decay_rate(t, y, tail=0.5):
    """Least-squares exponent c in y ~ exp(-c t) over the last ``tail`` of a series.

    Purely descriptive: nothing in the theory fixes a rate. Returns nan when
    fewer than three positive samples are available.
    """
    t, y = np.asarray(t, float), np.asarray(y, float)
    start = int(len(t) * (1.0 - tail))
    t, y = t[start:], y[start:]
    keep = y > 0
    if keep.sum() < 3:
        return float("nan")
    slope = np.polyfit(t[keep], np.log(y[keep]), 1)[0]
    return float(-slope)


def l2_h1_distance(mesh: MeshGeometry, u, v):
    """(L2 norm, H1 seminorm) of u - v."""
    d = mesh.check(u) - mesh.check(v)
    return float(np.sqrt(integrate(mesh, d * d))), float(np.sqrt(dirichlet_energy(mesh, d)))
