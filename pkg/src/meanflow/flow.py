"""Explicit time integration of the volume-form gradient flow.

The evolution ``d/dt e^u = Lap u + rho*(f e^u / int f e^u - 1/|M|)`` is
advanced in ``u`` with classical RK4, an optional additive mass projection
and optional symmetrisation, and a step controller that rejects steps
raising the energy.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from . import fieldexpr
from .diagnostics import DiagnosticsRecord, sobolev_record
from .equation import EXP_GUARD, energy, residual, rhs
from .errors import BlowupError, ConfigError, StepUnderflow
from .mesh import MeshGeometry, integrate, laplacian
from .symmetry import GroupAction, build_group, invariance_error, symmetrize

__all__ = [
    "Flow",
    "FlowConfig",
    "FlowResult",
    "FlowState",
    "FlowStatus",
    "energy",
    "residual",
    "rhs",
    "run",
    "stability_ceiling",
    "step",
]

log = logging.getLogger(__name__)

RK4_REAL_AXIS = 2.8
GROWTH = 1.2
GROW_AFTER = 10
ENERGY_SLACK = 1e-10
MASS_DRIFT_MAX = 1e-6


class FlowStatus(str, enum.Enum):
    CONVERGED = "Converged"
    MAX_TIME = "MaxTimeReached"
    UNDERFLOW = "StepUnderflow"
    BLOWUP = "Blowup"


@dataclass(frozen=True)
class FlowConfig:
    mesh: MeshGeometry
    rho: float
    f_expr: object = "1"  # expression text, FieldExpr or array
    u0_expr: object = "0"
    group: object = None  # generator text/list, GroupAction or None
    dt_init: float = 1e-4
    dt_min: float = 1e-10
    dt_max: float = 1.0
    cfl_safety: float = 0.9
    residual_tol: float = 1e-8
    t_max: float = 100.0
    record_every: int = 50
    snapshot_every: int = 0
    symmetrize_each_step: bool = False
    mass_project_each_step: bool = True


@dataclass(frozen=True)
class FlowState:
    t: float
    u: np.ndarray
    dt: float
    a0: float
    step_count: int = 0
    reject_count: int = 0
    streak: int = 0
    energy: float = float("nan")
    cache: object = field(default=None, repr=False, compare=False)


@dataclass
class FlowResult:
    status: FlowStatus
    final_state: FlowState
    series: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    final_residual: float = float("nan")
    energy_violations: int = 0
    max_mass_deviation: float = 0.0
    max_invariance_error: float = 0.0


class _Eval(NamedTuple):
    u: np.ndarray
    lap: np.ndarray
    eu: np.ndarray
    mass: float
    s: float  # int f e^u


def stability_ceiling(mesh: MeshGeometry, u, cfl_safety) -> float:
    """Largest RK4-stable step for the worst-case mobility max e^{-u}."""
    return cfl_safety * RK4_REAL_AXIS / (mesh.lambda_op_max * float(np.exp(-np.min(u))))


def _field(value, mesh, name):
    if isinstance(value, np.ndarray):
        return mesh.check(value, name).copy()
    return fieldexpr.materialize(value, mesh)


class Flow:
    """A :class:`FlowConfig` with its fields materialised and validated."""

    def __init__(self, config: FlowConfig):
        c = config
        if not c.residual_tol > 0:
            raise ConfigError("residual_tol must be > 0")
        if not 0 < c.dt_min <= c.dt_init <= c.dt_max:
            raise ConfigError(
                f"need 0 < dt_min <= dt_init <= dt_max, got {c.dt_min}, {c.dt_init}, {c.dt_max}")
        if not 0 < c.cfl_safety <= 1:
            raise ConfigError("cfl_safety must lie in (0, 1]")
        if not c.t_max > 0:
            raise ConfigError("t_max must be > 0")
        if c.record_every < 1:
            raise ConfigError("record_every must be >= 1")
        self.config = c
        self.mesh = c.mesh
        self.rho = float(c.rho)
        self.f = _field(c.f_expr, self.mesh, "f")
        fieldexpr.validate_positive(self.f)
        self.u0 = _field(c.u0_expr, self.mesh, "u0")
        if isinstance(c.group, GroupAction):
            self.group = c.group
        elif c.group:
            self.group = build_group(self.mesh, c.group)
        else:
            self.group = None
        self.k = self.group.k_min if self.group is not None else 1

    # -- single evaluations ---------------------------------------------
    def rhs(self, u):
        return rhs(self.mesh, self.rho, self.f, u)

    def energy(self, u):
        return energy(self.mesh, self.rho, self.f, u)

    def residual(self, u):
        return residual(self.mesh, self.rho, self.f, u)

    def mass(self, u):
        return integrate(self.mesh, np.exp(u))

    def record(self, state) -> DiagnosticsRecord:
        return sobolev_record(self.mesh, self.rho, self.f, state, k=self.k)

    # Fast path used while stepping: one Laplacian and one exponential per
    # state, shared by the velocity, energy, residual and mass.
    def _sum(self, a):
        return float(np.sum(a * self.mesh.quad_weights))

    def _evaluate(self, u):
        if not np.all(np.abs(u) <= EXP_GUARD):
            raise BlowupError("|u| exceeds the overflow guard")
        eu = np.exp(u)
        return _Eval(u, laplacian(self.mesh, u), eu, self._sum(eu), self._sum(self.f * eu))

    def _velocity(self, ev):
        return (ev.lap - self.rho / self.mesh.volume) / ev.eu + (self.rho / ev.s) * self.f

    def _energy(self, ev):
        return (-0.5 * self._sum(ev.u * ev.lap)
                + self.rho / self.mesh.volume * self._sum(ev.u)
                - self.rho * np.log(ev.s))

    def _residual(self, ev):
        op = ev.lap + self.rho * (self.f * ev.eu / ev.s - 1.0 / self.mesh.volume)
        return float(np.sqrt(self._sum(op * op)))

    def _cached(self, state):
        if state.cache is None or state.cache.u is not state.u:
            return self._evaluate(state.u)
        return state.cache

    def initial_state(self) -> FlowState:
        u = self.u0.copy()
        if self.config.symmetrize_each_step and self.group is not None:
            u = symmetrize(self.group, u)
        ev = self._evaluate(u)
        dt = max(self.config.dt_min, min(self.config.dt_init, self.ceiling(u)))
        return FlowState(t=0.0, u=u, dt=dt, a0=ev.mass, energy=self._energy(ev), cache=ev)

    def ceiling(self, u):
        return stability_ceiling(self.mesh, u, self.config.cfl_safety)

    # -- stepping --------------------------------------------------------
    def rk4(self, ev, dt):
        u = ev.u
        k1 = self._velocity(ev)
        k2 = self._velocity(self._evaluate(u + 0.5 * dt * k1))
        k3 = self._velocity(self._evaluate(u + 0.5 * dt * k2))
        k4 = self._velocity(self._evaluate(u + dt * k3))
        return u + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def _attempt(self, state, ev, dt):
        """One trial step: ``(evaluation, E_new)`` if accepted, else the rejection reason."""
        c = self.config
        try:
            u_new = self.rk4(ev, dt)
            if not np.all(np.isfinite(u_new)):
                return "overflow"
            new = self._evaluate(u_new)
        except BlowupError:
            return "overflow"
        if abs(new.mass - ev.mass) > MASS_DRIFT_MAX * ev.mass:
            return "mass drift"
        changed = False
        if c.mass_project_each_step:
            u_new = u_new + np.log(state.a0 / new.mass)
            changed = True
        if c.symmetrize_each_step and self.group is not None:
            u_new = symmetrize(self.group, u_new)
            changed = True
        if changed:
            try:
                new = self._evaluate(u_new)
            except BlowupError:
                return "overflow"
        e_new = self._energy(new)
        if not np.isfinite(e_new) or e_new > state.energy + ENERGY_SLACK * (1.0 + abs(state.energy)):
            return "energy increase"
        return new, e_new

    def step(self, state: FlowState) -> FlowState:
        """Advance by one accepted step, halving dt on every rejection."""
        c = self.config
        ev = self._cached(state)
        dt = max(c.dt_min, min(state.dt, c.dt_max, self.ceiling(state.u)))
        rejects = 0
        while True:
            trial = self._attempt(state, ev, dt)
            if not isinstance(trial, str):
                break
            rejects += 1
            dt *= 0.5
            if dt < c.dt_min:
                msg = f"dt fell below dt_min={c.dt_min:g} at t={state.t:.6g} ({trial})"
                if trial == "overflow":
                    raise BlowupError(msg)
                raise StepUnderflow(msg)
        new, e_new = trial
        streak = 0 if rejects else state.streak + 1
        next_dt = dt
        if streak >= GROW_AFTER:
            streak = 0
            next_dt = min(dt * GROWTH, c.dt_max, self.ceiling(new.u))
        return FlowState(
            t=state.t + dt,
            u=new.u,
            dt=next_dt,
            a0=state.a0,
            step_count=state.step_count + 1,
            reject_count=state.reject_count + rejects,
            streak=streak,
            energy=e_new,
            cache=new,
        )

    # -- driver ----------------------------------------------------------
    def run(self) -> FlowResult:
        c = self.config
        state = self.initial_state()
        result = FlowResult(status=FlowStatus.MAX_TIME, final_state=state)
        recorded_at = -1

        def record(s):
            nonlocal recorded_at
            result.series.append(self.record(s))
            recorded_at = s.step_count
            result.max_mass_deviation = max(result.max_mass_deviation,
                                            abs(self.mass(s.u) - s.a0) / s.a0)
            if self.group is not None:
                result.max_invariance_error = max(result.max_invariance_error,
                                                  invariance_error(self.group, s.u))

        record(state)
        result.snapshots.append((state.t, state.u))
        snapped_at = 0
        res = self._residual(self._cached(state))
        while res > c.residual_tol:
            if state.t >= c.t_max:
                result.status = FlowStatus.MAX_TIME
                break
            try:
                new = self.step(state)
            except StepUnderflow as exc:
                log.info("%s", exc)
                result.status = FlowStatus.UNDERFLOW
                break
            except BlowupError as exc:
                log.info("%s", exc)
                result.status = FlowStatus.BLOWUP
                break
            if new.energy > state.energy + ENERGY_SLACK * (1.0 + abs(state.energy)):
                result.energy_violations += 1
            state = new
            if state.step_count % c.record_every == 0:
                record(state)
            if c.snapshot_every and state.step_count % c.snapshot_every == 0:
                result.snapshots.append((state.t, state.u))
                snapped_at = state.step_count
            res = self._residual(state.cache)
        else:
            result.status = FlowStatus.CONVERGED

        if recorded_at != state.step_count:
            record(state)
        if snapped_at != state.step_count:
            result.snapshots.append((state.t, state.u))
        result.final_state = state
        result.final_residual = self.residual(state.u)
        return result


def step(state: FlowState, config: FlowConfig) -> FlowState:
    return Flow(config).step(state)


def run(config: FlowConfig) -> FlowResult:
    return Flow(config).run()


def with_updates(config: FlowConfig, **changes) -> FlowConfig:
    return replace(config, **changes)
