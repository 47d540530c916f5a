"""Experiment configuration files.

The format is line oriented::

    preset = subcritical_baseline     # optional, top of file

    [mesh]
    kind = torus
    resolution = 64                   # or "32, 64" for a sphere

    [flow]
    rho = 4*pi
    f = 1 + 0.5*cos(x)

Blank lines and ``#`` comments are ignored, values may be wrapped in
quotes, and any key not listed in :data:`KEYS` is an error. Numeric values
accept constant expressions such as ``12*pi``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fieldexpr
from .errors import ConfigError, MeanflowError
from .flow import Flow, FlowConfig
from .mesh import MeshGeometry, build_mesh
from .stationary import NewtonConfig
from .symmetry import build_group, invariance_error, split_generators

OUTPUT_ENV = "MEANFLOW_OUTPUT"
INVARIANCE_TOL = 1e-12


def _bool(text):
    low = text.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected true or false, got {text!r}")


def _real(text):
    return float(fieldexpr.evaluate_constant(text))


def _int(text):
    value = _real(text)
    if value != int(value):
        raise ValueError(f"expected an integer, got {text!r}")
    return int(value)


def _expr(text):
    fieldexpr.parse_expr(text)
    return text


def _resolution(text):
    parts = [p for p in text.replace(",", " ").split() if p]
    if not 1 <= len(parts) <= 2:
        raise ValueError(f"expected 'N' or 'n_theta, n_phi', got {text!r}")
    return tuple(int(p) for p in parts)


# (section, key) -> (parser, default, help)
KEYS = {
    ("", "preset"): (str, None, "one of subcritical_baseline, torus_translation, sphere_even"),
    ("mesh", "kind"): (str, "torus", "torus or sphere"),
    ("mesh", "resolution"): (_resolution, (64,), "N for the torus, 'n_theta, n_phi' for the sphere"),
    ("flow", "rho"): (_real, None, "the parameter rho (required)"),
    ("flow", "f"): (_expr, "1", "positive weight function"),
    ("flow", "u0"): (_expr, "0", "initial datum"),
    ("flow", "dt_init"): (_real, 1e-4, "first time step"),
    ("flow", "dt_min"): (_real, 1e-10, "rejections below this end the run"),
    ("flow", "dt_max"): (_real, 1.0, "largest time step"),
    ("flow", "cfl_safety"): (_real, 0.9, "fraction of the RK4 stability limit"),
    ("flow", "residual_tol"): (_real, 1e-8, "convergence threshold on the residual"),
    ("flow", "t_max"): (_real, 100.0, "final time"),
    ("flow", "record_every"): (_int, 50, "accepted steps between series rows"),
    ("flow", "snapshot_every"): (_int, 0, "accepted steps between snapshots (0: first and last only)"),
    ("flow", "symmetrize_each_step"): (_bool, False, "project onto invariant fields after each step"),
    ("flow", "mass_project_each_step"): (_bool, True, "restore the initial mass after each step"),
    ("group", "generators"): (str, "", "comma separated generators, e.g. shift(32,0), flip_x"),
    ("newton", "rho_continuation_steps"): (_int, 8, "continuation stages from rho = 0"),
    ("newton", "newton_tol"): (_real, 1e-10, "residual threshold"),
    ("newton", "max_iters"): (_int, 50, "Newton iterations per stage"),
    ("newton", "damping"): (_real, 0.5, "backtracking factor"),
    ("newton", "linear_tol"): (_real, 1e-10, "GMRES relative tolerance"),
    ("output", "dir"): (str, "meanflow_out", "output directory (overridden by $MEANFLOW_OUTPUT)"),
}

PRESETS = {
    "subcritical_baseline": {
        ("mesh", "kind"): "torus",
        ("mesh", "resolution"): (64,),
        ("flow", "rho"): 4 * np.pi,
        ("flow", "f"): "1 + 0.5*cos(x)",
        ("flow", "u0"): "0",
        ("flow", "dt_init"): 1e-3,
        ("flow", "residual_tol"): 1e-9,
        ("flow", "record_every"): 200,
    },
    # the grid translations make every orbit the whole grid, so only
    # constants are invariant and any rho is admissible
    "torus_translation": {
        ("mesh", "kind"): "torus",
        ("mesh", "resolution"): (32,),
        ("flow", "rho"): 40 * np.pi,
        ("flow", "f"): "1",
        ("flow", "u0"): "0",
        ("group", "generators"): "shift(1,0), shift(0,1)",
    },
    "sphere_even": {
        ("mesh", "kind"): "sphere",
        ("mesh", "resolution"): (16, 32),
        ("flow", "rho"): 12 * np.pi,
        ("flow", "f"): "1 + 0.3*cos(theta)^2",
        ("flow", "u0"): "0.2*cos(2*theta)",
        ("flow", "dt_init"): 1e-4,
        ("flow", "record_every"): 500,
        ("group", "generators"): "antipodal",
    },
}


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=dict)  # (section, key) -> parsed value
    source: str = "<memory>"
    mesh: MeshGeometry = field(default=None, repr=False)
    group: object = field(default=None, repr=False)

    def get(self, section, key):
        return self.values.get((section, key), KEYS[(section, key)][1])

    @property
    def preset(self):
        return self.get("", "preset")

    @property
    def rho(self):
        return self.get("flow", "rho")

    @property
    def output_dir(self) -> Path:
        return Path(os.environ.get(OUTPUT_ENV) or self.get("output", "dir"))

    def flow_config(self, **overrides) -> FlowConfig:
        kw = {
            "mesh": self.mesh,
            "rho": self.rho,
            "f_expr": self.get("flow", "f"),
            "u0_expr": self.get("flow", "u0"),
            "group": self.group,
        }
        for key in ("dt_init", "dt_min", "dt_max", "cfl_safety", "residual_tol", "t_max",
                    "record_every", "snapshot_every", "symmetrize_each_step",
                    "mass_project_each_step"):
            kw[key] = self.get("flow", key)
        kw.update(overrides)
        return FlowConfig(**kw)

    def newton_config(self) -> NewtonConfig:
        return NewtonConfig(
            rho_target=self.rho,
            **{k: self.get("newton", k) for s, k in KEYS if s == "newton"},
        )


def parse_text(text, source="<string>") -> ExperimentConfig:
    """Parse and validate configuration text."""
    explicit = {}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}, line {lineno}"
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"{where}: malformed section header {line!r}")
            section = line[1:-1].strip().lower()
            if section not in {s for s, _ in KEYS if s}:
                raise ConfigError(f"{where}: unknown section [{section}]")
            continue
        key, eq, value = line.partition("=")
        key, value = key.strip().lower(), value.strip()
        if not eq or not key:
            raise ConfigError(f"{where}: expected 'key = value', got {line!r}")
        if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
            value = value[1:-1]
        if (section, key) not in KEYS:
            name = f"[{section}] {key}" if section else key
            raise ConfigError(f"{where}: unknown key {name!r}")
        if (section, key) in explicit:
            raise ConfigError(f"{where}: duplicate key {key!r}")
        parser = KEYS[(section, key)][0]
        try:
            explicit[(section, key)] = parser(value)
        except (ValueError, MeanflowError) as exc:
            raise ConfigError(f"{where}: bad value for {key!r}: {exc}") from None

    values = {}
    preset = explicit.get(("", "preset"))
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"{source}: unknown preset {preset!r} (choose from {', '.join(PRESETS)})")
        values.update(PRESETS[preset])
    values.update(explicit)
    cfg = ExperimentConfig(values=values, source=source)
    validate(cfg)
    return cfg


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_text(text, str(path))


def validate(cfg: ExperimentConfig):
    """Semantic checks; fills in ``cfg.mesh`` and ``cfg.group``."""
    if cfg.rho is None:
        raise ConfigError(f"{cfg.source}: [flow] rho is required")
    res = cfg.get("mesh", "resolution")
    kind = cfg.get("mesh", "kind").lower()
    if kind == "torus" and len(res) != 1:
        raise ConfigError(f"{cfg.source}: torus resolution takes a single N")
    if kind == "sphere" and len(res) != 2:
        raise ConfigError(f"{cfg.source}: sphere resolution takes 'n_theta, n_phi'")
    try:
        cfg.mesh = build_mesh(kind, res[0] if kind == "torus" else res)
    except ValueError as exc:
        raise ConfigError(f"{cfg.source}: {exc}") from None
    try:
        f = fieldexpr.materialize(cfg.get("flow", "f"), cfg.mesh)
        fieldexpr.validate_positive(f)
        u0 = fieldexpr.materialize(cfg.get("flow", "u0"), cfg.mesh)
    except MeanflowError as exc:
        raise ConfigError(f"{cfg.source}: {exc}") from None

    gens = split_generators(cfg.get("group", "generators"))
    if cfg.preset == "sphere_even" and "antipodal" not in gens:
        raise ConfigError(f"{cfg.source}: preset sphere_even needs the antipodal generator")
    cfg.group = build_group(cfg.mesh, gens) if gens else None
    if cfg.group is not None:
        for name, field_ in (("f", f), ("u0", u0)):
            err = invariance_error(cfg.group, field_)
            if err > INVARIANCE_TOL:
                raise ConfigError(
                    f"{cfg.source}: {name} is not invariant under the group "
                    f"(symmetrisation distance {err:.3g})")
    # constructing these runs their own range checks
    Flow(cfg.flow_config())
    cfg.newton_config()
    return cfg


def describe_keys() -> str:
    """Plain text table of every key with its default."""
    lines = []
    for (section, key), (_, default, text) in KEYS.items():
        name = f"[{section}] {key}" if section else key
        lines.append(f"{name:32s} default {default!r:16s} {text}")
    return "\n".join(lines)
