"""Experiment configuration: parsing, validation and model construction."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli

from . import expr
from .grid import GridSpec
from .mapcalc import MapField
from .structure import ModelSpec
from .target import embedded_sphere_2, flat_torus, webster_metric

MODEL_KINDS = ("heisenberg", "heisenberg_rescaled")
TARGET_VARIANTS = ("flat_torus", "sphere", "webster")
BUILTIN_MAPS = ("projection", "identity", "constant")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    kind: str = "heisenberg"
    n: int = 1
    dims: tuple = (32, 32, 32)
    scheme: str = "spectral"
    conformal_factor: str | None = None
    target: str = "flat_torus"
    target_dim: int = 2
    map_builtin: str | None = "projection"
    map_components: list | None = None
    map_lift: list | None = None
    map_value: list | None = None
    flow: dict = field(default_factory=dict)
    jet: dict = field(default_factory=dict)
    check: dict = field(default_factory=dict)
    gradcheck: dict = field(default_factory=dict)
    suite: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return 2 * self.n + 1

    def grid(self, refine: int = 0) -> GridSpec:
        dims = tuple(int(k) * 2 ** refine for k in self.dims)
        return GridSpec(dims, scheme=self.scheme)

    def conformal(self, spec: GridSpec) -> np.ndarray | None:
        if self.conformal_factor is None:
            return None
        return expr.eval_on_grid(self.conformal_factor, spec)

    def model(self, spec: GridSpec) -> ModelSpec:
        if self.kind == "heisenberg_rescaled":
            return ModelSpec(self.kind, spec, self.n, self.conformal(spec))
        return ModelSpec("heisenberg", spec, self.n)

    def build_target(self):
        if self.target == "flat_torus":
            return flat_torus(self.target_dim)
        if self.target == "sphere":
            return embedded_sphere_2()
        return webster_metric("heisenberg")

    def build_map(self, spec: GridSpec) -> MapField:
        target = self.build_target()
        zeros = np.zeros((target.dim,) + spec.dims)
        if self.map_builtin == "projection":
            lift = np.zeros((target.dim, spec.ndim))
            lift[0, 0] = lift[1, 1] = 1
            return MapField(target, zeros, lift)
        if self.map_builtin == "identity":
            return MapField(target, zeros, np.eye(spec.ndim))
        if self.map_builtin == "constant":
            if self.map_value is not None:
                vals = np.asarray(self.map_value, dtype=float)
            elif target.ambient:
                vals = np.array([0.0, 0.0, 1.0])
            else:
                vals = np.zeros(target.dim)
            if target.ambient:
                vals = vals / np.linalg.norm(vals)
            return MapField(target, vals.reshape((-1,) + (1,) * spec.ndim) + zeros)
        values = np.stack([expr.eval_on_grid(c, spec) for c in self.map_components])
        if target.ambient:
            values = values / np.sqrt(np.sum(values * values, axis=0))
        lift = None if self.map_lift is None else np.asarray(self.map_lift, dtype=float)
        return MapField(target, values, lift)


def _get(table, key, typ, default, section):
    if key not in table:
        return default
    val = table[key]
    ok = isinstance(val, typ) and not (typ in (int, float) and isinstance(val, bool))
    if typ is float and isinstance(val, int) and not isinstance(val, bool):
        val, ok = float(val), True
    if not ok:
        raise ConfigError(f"[{section}] {key}: expected {typ.__name__}, got {type(val).__name__}")
    return val


def _check_expr(src, where, axes):
    try:
        node = expr.parse(src)
    except expr.ParseError as e:
        raise ConfigError(f"{where}: {e}") from e
    unknown = expr.variables(node) - set(axes)
    if unknown:
        raise ConfigError(f"{where}: unknown variable(s) {sorted(unknown)}")


def parse_config(text: str) -> ExperimentConfig:
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as e:
        raise ConfigError(f"config syntax error: {e}") from e
    known = {"conformal_factor", "model", "target", "map", "flow", "jet", "check", "gradcheck", "suite"}
    extra = set(raw) - known
    if extra:
        raise ConfigError(f"unknown section(s) or key(s): {sorted(extra)}")
    cfg = ExperimentConfig()
    model = raw.get("model", {})
    cfg.kind = _get(model, "kind", str, cfg.kind, "model")
    if cfg.kind not in MODEL_KINDS:
        raise ConfigError(f"[model] kind must be one of {MODEL_KINDS}")
    cfg.n = _get(model, "n", int, 1, "model")
    if cfg.n < 1:
        raise ConfigError("[model] n must be positive")
    dims = _get(model, "dims", list, [32] * cfg.d, "model")
    if len(dims) != cfg.d or not all(isinstance(k, int) and k >= 8 for k in dims):
        raise ConfigError(f"[model] dims must list {cfg.d} integers >= 8 for n = {cfg.n}")
    cfg.dims = tuple(dims)
    cfg.scheme = _get(model, "scheme", str, "spectral", "model")
    if cfg.scheme not in ("spectral", "fd4"):
        raise ConfigError("[model] scheme must be 'spectral' or 'fd4'")
    cfg.conformal_factor = _get(raw, "conformal_factor", str, None, "top level")
    cfg.conformal_factor = _get(model, "conformal_factor", str, cfg.conformal_factor, "model")
    axes = GridSpec(cfg.dims).names
    if cfg.conformal_factor is not None:
        _check_expr(cfg.conformal_factor, "conformal_factor", axes)
        if cfg.n != 1:
            raise ConfigError("conformal rescaling is defined for n = 1 only")
    if cfg.kind == "heisenberg_rescaled" and cfg.conformal_factor is None:
        raise ConfigError("heisenberg_rescaled needs a conformal_factor")

    target = raw.get("target", {})
    cfg.target = _get(target, "variant", str, "flat_torus", "target")
    if cfg.target not in TARGET_VARIANTS:
        raise ConfigError(f"[target] variant must be one of {TARGET_VARIANTS}")
    default_dim = {"flat_torus": 2, "sphere": 2, "webster": 3}[cfg.target]
    cfg.target_dim = _get(target, "dim", int, default_dim, "target")
    if cfg.target != "flat_torus" and cfg.target_dim != default_dim:
        raise ConfigError(f"[target] {cfg.target} has dimension {default_dim}")
    if cfg.target_dim < 1:
        raise ConfigError("[target] dim must be positive")
    ncomp = 3 if cfg.target == "sphere" else cfg.target_dim

    mp = raw.get("map", {})
    cfg.map_builtin = _get(mp, "builtin", str, None, "map")
    cfg.map_components = _get(mp, "components", list, None, "map")
    cfg.map_lift = _get(mp, "lift", list, None, "map")
    cfg.map_value = _get(mp, "value", list, None, "map")
    if (cfg.map_builtin is None) == (cfg.map_components is None):
        raise ConfigError("[map] give exactly one of 'builtin' or 'components'")
    if cfg.map_builtin is not None:
        if cfg.map_builtin not in BUILTIN_MAPS:
            raise ConfigError(f"[map] builtin must be one of {BUILTIN_MAPS}")
        if cfg.map_builtin == "projection" and (cfg.target != "flat_torus" or cfg.target_dim != 2):
            raise ConfigError("[map] projection maps into the two-dimensional flat torus")
        if cfg.map_builtin == "identity" and (cfg.target == "sphere" or ncomp != cfg.d):
            raise ConfigError("[map] identity needs a target of the source dimension")
        if cfg.map_value is not None and len(cfg.map_value) != ncomp:
            raise ConfigError(f"[map] value has {len(cfg.map_value)} entries, target needs {ncomp}")
    else:
        if len(cfg.map_components) != ncomp:
            raise ConfigError(
                f"[map] {len(cfg.map_components)} components given, target needs {ncomp}")
        for i, c in enumerate(cfg.map_components):
            if not isinstance(c, str):
                raise ConfigError("[map] components must be expression strings")
            _check_expr(c, f"[map] component {i}", axes)
        if cfg.map_lift is not None:
            lift = np.asarray(cfg.map_lift)
            if lift.shape != (ncomp, cfg.d) or not np.all(lift == np.round(lift)):
                raise ConfigError(f"[map] lift must be an integer {ncomp}x{cfg.d} matrix")
            if cfg.target != "flat_torus" and np.any(lift):
                raise ConfigError("[map] lift is only meaningful for flat torus targets")

    for name in ("flow", "jet", "check", "gradcheck", "suite"):
        sec = raw.get(name, {})
        if not isinstance(sec, dict):
            raise ConfigError(f"[{name}] must be a section")
        setattr(cfg, name, dict(sec))
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return parse_config(text)
