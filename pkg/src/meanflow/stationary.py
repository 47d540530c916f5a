"""Damped Newton-Krylov solver for the stationary mean field equation.

Iterates live in the zero-mean gauge. The Jacobian is applied matrix free
and the linear systems are solved with GMRES, preconditioned by the exact
inverse Laplacian on the torus and by its diagonal on the sphere.
Continuation ramps rho from 0 up to the target.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .equation import EXP_GUARD, mean_field_operator, residual
from .errors import BlowupError, ConfigError, NoConvergence
from .mesh import MeshGeometry, MeshKind, integrate, laplacian, mean

log = logging.getLogger(__name__)

MIN_STEP = 1.0 / 1024
SUFFICIENT_DECREASE = 1e-4


@dataclass(frozen=True)
class NewtonConfig:
    rho_target: float
    rho_continuation_steps: int = 8
    newton_tol: float = 1e-10
    max_iters: int = 50
    damping: float = 0.5  # backtracking factor
    linear_tol: float = 1e-10
    linear_maxiter: int = 200

    def __post_init__(self):
        if self.rho_continuation_steps < 1:
            raise ConfigError("rho_continuation_steps must be >= 1")
        if not (self.newton_tol > 0 and self.linear_tol > 0):
            raise ConfigError("newton_tol and linear_tol must be > 0")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if not 0 < self.damping < 1:
            raise ConfigError("damping must lie in (0, 1)")


@dataclass
class NewtonResult:
    u: np.ndarray
    residual: float
    iterations: int  # Newton iterations summed over the continuation
    linear_iterations: int = 0
    history: list = field(default_factory=list)  # (rho, iterations, residual) per stage


def gauge_align(mesh: MeshGeometry, u, target_mass) -> np.ndarray:
    """Shift ``u`` by a constant so that int e^u = target_mass."""
    if not target_mass > 0:
        raise ValueError("target_mass must be positive")
    u = mesh.check(u)
    top = float(u.max())
    return u + (np.log(target_mass) - top - np.log(integrate(mesh, np.exp(u - top))))


def zero_mean(mesh: MeshGeometry, u) -> np.ndarray:
    return u - mean(mesh, u)


def jacobian_apply(mesh: MeshGeometry, rho, f, w, v) -> np.ndarray:
    """Linearisation of the mean field operator at ``w`` applied to ``v``."""
    few = f * np.exp(w)
    s = integrate(mesh, few)
    return laplacian(mesh, v) + rho * (few * v / s - few * integrate(mesh, few * v) / s ** 2)


class _Preconditioner:
    def __init__(self, mesh):
        self.mesh = mesh
        if mesh.kind is MeshKind.TORUS:
            k2 = np.array(mesh._tables["k2"])
            k2[0, 0] = 1.0
            self.inv_k2 = 1.0 / k2
            self.inv_k2[0, 0] = 0.0
        else:
            t = mesh._tables
            sin_c, sin_f = t["sin_c"], t["sin_f"]
            diag = ((sin_f[1:] + sin_f[:-1]) / (sin_c * t["dtheta"] ** 2)
                    + 2.0 / (sin_c ** 2 * t["dphi"] ** 2))
            self.inv_diag = np.repeat((-1.0 / diag)[:, None], mesh.shape[1], axis=1)

    def __call__(self, r):
        r = r.reshape(self.mesh.shape)
        if self.mesh.kind is MeshKind.TORUS:
            z = np.fft.irfft2(-self.inv_k2 * np.fft.rfft2(r), s=self.mesh.shape)
        else:
            z = zero_mean(self.mesh, self.inv_diag * r)
        return z.ravel()


def _newton_stage(mesh, rho, f, w, cfg, precond, stats):
    def op(u):
        if not np.all(np.abs(u) <= EXP_GUARD):
            raise BlowupError("Newton iterate left the exponential range")
        return mean_field_operator(mesh, rho, f, u)

    def norm(a):
        return float(np.sqrt(integrate(mesh, a * a)))

    F = op(w)
    res = norm(F)
    for it in range(cfg.max_iters + 1):
        if res <= cfg.newton_tol:
            return w, res, it
        if it == cfg.max_iters:
            break
        shape = mesh.shape

        def matvec(v, w=w):
            v = zero_mean(mesh, v.reshape(shape))
            return jacobian_apply(mesh, rho, f, w, v).ravel()

        n = mesh.n_nodes
        A = LinearOperator((n, n), matvec=matvec, dtype=float)
        M = LinearOperator((n, n), matvec=precond, dtype=float)
        counter = [0]
        # no point solving far below what the outer tolerance needs; near
        # roundoff a tighter request only stalls
        rtol = min(0.1, max(cfg.linear_tol, 1e-2 * cfg.newton_tol / res))
        delta, info = gmres(A, -F.ravel(), M=M, rtol=rtol, atol=0.0,
                            restart=min(n, 60), maxiter=cfg.linear_maxiter,
                            callback=lambda _: counter.__setitem__(0, counter[0] + 1),
                            callback_type="pr_norm")
        stats["linear"] += counter[0]
        if info < 0:
            raise NoConvergence("GMRES breakdown", res, it)
        delta = zero_mean(mesh, delta.reshape(shape))

        alpha = 1.0
        while True:
            trial = w + alpha * delta
            try:
                F_new = op(trial)
                res_new = norm(F_new)
            except BlowupError:
                res_new = np.inf
            if res_new <= (1.0 - SUFFICIENT_DECREASE * alpha) * res:
                break
            alpha *= cfg.damping
            if alpha < MIN_STEP:
                raise NoConvergence(f"line search failed at rho={rho:.6g}", res, it)
        w, F, res = zero_mean(mesh, trial), F_new, res_new
        log.debug("rho=%.6g it=%d alpha=%.3g residual=%.3e", rho, it + 1, alpha, res)
    raise NoConvergence(f"max_iters={cfg.max_iters} reached at rho={rho:.6g}", res, cfg.max_iters)


def solve(mesh: MeshGeometry, config: NewtonConfig, f, u_init) -> NewtonResult:
    """Newton with continuation; returns the zero-mean solution and statistics."""
    f = mesh.check(f, "f")
    if not np.all(f > 0):
        raise ConfigError("f must be strictly positive")
    u_init = mesh.check(u_init, "u_init")
    if not np.all(np.isfinite(u_init)):
        raise ConfigError("u_init must be finite")

    precond = _Preconditioner(mesh)
    stats = {"linear": 0}
    w = zero_mean(mesh, u_init)
    total = 0
    history = []
    n = config.rho_continuation_steps
    for j in range(1, n + 1):
        rho = config.rho_target * j / n
        w, res, its = _newton_stage(mesh, rho, f, w, config, precond, stats)
        total += its
        history.append((rho, its, res))
    return NewtonResult(w, residual(mesh, config.rho_target, f, w), total, stats["linear"], history)


def newton_solve(mesh: MeshGeometry, config: NewtonConfig, f, u_init) -> np.ndarray:
    return solve(mesh, config, f, u_init).u
