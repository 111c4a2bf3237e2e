"""Analytic ensemble families with closed-form fields and z-gradients.

Two families cover parameter dimensionalities 1 and 2:

* ``vortex-street-toy`` (d=2): unit horizontal background flow plus a
  Lamb-Oseen-style vortex whose center starts at (z1, z2) and advects
  downstream with the mean flow.  Tangential speed
  v(r) = (r/r_c) * exp(1 - (r/r_c)^2) with r_c = 0.15 in normalized
  coordinates, so the kernel is smooth everywhere including r = 0.
* ``viscosity-decay-toy`` (d=1): Taylor-Green vortex field scaled by
  sqrt(2) and damped by exp(-z * t); z is the decay rate.

Every downstream accuracy claim can be checked against these exactly.
"""

from dataclasses import dataclass

import numpy as np

from .ensemble import (
    DomainSpec,
    EnsembleDataset,
    ParameterSpace,
    init_dataset,
    load_manifest,
    write_member,
)
from .errors import ConfigError, RangeError

FAMILIES = ("vortex-street-toy", "viscosity-decay-toy")
VORTEX_CORE_RADIUS = 0.15  # normalized units


def family_dim(family: str) -> int:
    if family == "vortex-street-toy":
        return 2
    if family == "viscosity-decay-toy":
        return 1
    raise ConfigError(f"unknown family {family!r}")


@dataclass(frozen=True)
class AnalyticFamilyConfig:
    family: str
    space: ParameterSpace
    domain: DomainSpec
    seed: int = 0

    def __post_init__(self):
        if self.space.dim != family_dim(self.family):
            raise ConfigError(
                f"{self.family} needs d={family_dim(self.family)}, got {self.space.dim}"
            )
        if not self.domain.has_time:
            raise ConfigError("analytic families are time-dependent")
        if self.domain.output_dim != 2:
            raise ConfigError("analytic families produce 2-component velocity fields")


def default_config(family: str, seed: int = 0, resolution=None) -> AnalyticFamilyConfig:
    """Desk-scale defaults: small grids, O(1) field magnitudes."""
    if family == "vortex-street-toy":
        space = ParameterSpace([0.4, 0.3], [1.0, 0.7], ("cx", "cy"))
        domain = DomainSpec(
            resolution=resolution or (16, 32, 48),
            bounds=((0.0, 1.0), (0.0, 1.0), (0.0, 2.0)),
            output_dim=2,
        )
    elif family == "viscosity-decay-toy":
        space = ParameterSpace([0.0], [3.0], ("nu",))
        domain = DomainSpec(
            resolution=resolution or (16, 32, 32),
            bounds=((0.0, 1.0), (0.0, 1.0), (0.0, 1.0)),
            output_dim=2,
        )
    else:
        raise ConfigError(f"unknown family {family!r}")
    return AnalyticFamilyConfig(family=family, space=space, domain=domain, seed=seed)


def _check_inside(config: AnalyticFamilyConfig, x: np.ndarray, z: np.ndarray) -> None:
    lo = np.array([b[0] for b in config.domain.bounds])
    hi = np.array([b[1] for b in config.domain.bounds])
    if np.any(x < lo) or np.any(x > hi):
        raise RangeError("domain point outside bounds")
    if not np.all(config.space.contains(z)):
        raise RangeError("parameter outside box")


def _vortex_terms(config, x, z):
    """Normalized displacement from the advected center, plus kernel amp."""
    dom = config.domain
    u = dom.normalize_coords(x)  # (N, 3) in (t, y, x) order
    t_phys = x[:, 0]
    t_lo = dom.bounds[0][0]
    (y_lo, y_hi), (x_lo, x_hi) = dom.bounds[1], dom.bounds[2]
    cx = z[0] + (t_phys - t_lo)  # center rides the unit background flow
    cy = z[1]
    cx_n = 2.0 * (cx - x_lo) / (x_hi - x_lo) - 1.0
    cy_n = 2.0 * (cy - y_lo) / (y_hi - y_lo) - 1.0
    dx = u[:, 2] - cx_n
    dy = u[:, 1] - cy_n
    rc = VORTEX_CORE_RADIUS
    amp = (1.0 / rc) * np.exp(1.0 - (dx * dx + dy * dy) / (rc * rc))
    sx = 2.0 / (x_hi - x_lo)  # d(center_n)/dz per axis
    sy = 2.0 / (y_hi - y_lo)
    return dx, dy, amp, sx, sy


def _taylor_green(config, x):
    u = config.domain.normalize_coords(x)
    xs, ys = u[:, 2], u[:, 1]
    base = np.stack(
        [np.sin(np.pi * xs) * np.cos(np.pi * ys), -np.cos(np.pi * xs) * np.sin(np.pi * ys)],
        axis=1,
    )
    return np.sqrt(2.0) * base


def eval_analytic_field(config: AnalyticFamilyConfig, x, z) -> np.ndarray:
    """Ground-truth field at physical points x (N, m) for parameter z (d,)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    z = np.asarray(z, dtype=np.float64)
    _check_inside(config, x, z)
    if config.family == "vortex-street-toy":
        dx, dy, amp, _, _ = _vortex_terms(config, x, z)
        out = np.empty((x.shape[0], 2))
        out[:, 0] = 1.0 - amp * dy
        out[:, 1] = amp * dx
        return out
    dx_t = x[:, 0] - config.domain.bounds[0][0]
    return np.exp(-z[0] * dx_t)[:, None] * _taylor_green(config, x)


def eval_analytic_grad(config: AnalyticFamilyConfig, x, z) -> np.ndarray:
    """d(field)/dz, shape (N, n, d); closed form, C-infinity in z."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    z = np.asarray(z, dtype=np.float64)
    _check_inside(config, x, z)
    if config.family == "vortex-street-toy":
        dx, dy, amp, sx, sy = _vortex_terms(config, x, z)
        rc2 = VORTEX_CORE_RADIUS**2
        g = np.empty((x.shape[0], 2, 2))
        g[:, 0, 0] = -2.0 * amp * dx * dy * sx / rc2
        g[:, 0, 1] = amp * sy * (1.0 - 2.0 * dy * dy / rc2)
        g[:, 1, 0] = amp * sx * (2.0 * dx * dx / rc2 - 1.0)
        g[:, 1, 1] = 2.0 * amp * dx * dy * sy / rc2
        return g
    dt = x[:, 0] - config.domain.bounds[0][0]
    decay = np.exp(-z[0] * dt)
    return (-dt * decay)[:, None, None] * _taylor_green(config, x)[:, :, None]


def eval_on_grid(config: AnalyticFamilyConfig, z) -> np.ndarray:
    """Field sampled on the full storage grid, shape resolution + (2,)."""
    dom = config.domain
    pts = dom.denormalize_coords(dom.grid_coords_normalized())
    vals = eval_analytic_field(config, pts, z)
    return vals.reshape(dom.field_shape)


def generate_ensemble(
    config: AnalyticFamilyConfig,
    n_train: int,
    n_test: int,
    train_path: str,
    test_path: str,
) -> tuple[EnsembleDataset, EnsembleDataset]:
    """Sample parameters uniformly (seeded), write train/test directories."""
    if n_train < 1 or n_test < 1:
        raise ConfigError("need n_train >= 1 and n_test >= 1")
    rng = np.random.default_rng(config.seed)
    lo, hi = config.space.lower, config.space.upper
    draws = rng.uniform(lo, hi, size=(n_train + n_test, config.space.dim))
    for path, zs in ((train_path, draws[:n_train]), (test_path, draws[n_train:])):
        init_dataset(path, config.space, config.domain)
        for z in zs:
            write_member(path, z, eval_on_grid(config, z).astype(np.float32))
    return load_manifest(train_path), load_manifest(test_path)
