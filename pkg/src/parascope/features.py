"""Feature specification and the stochastic feature likelihood.

A feature is the field over a circular spatial region at one time slice,
anchored to a reference parameter vector z_ref.  The likelihood energy is
-d_X(z, z_ref)/C where d_X averages output-vector distances over K points
drawn uniformly on the disc-box intersection; points are redrawn on every
gradient evaluation, so the HMC energy is a fresh Monte Carlo estimate
each leapfrog step.  All geometry is in normalized [-1, 1] units and all
returned log densities are unnormalized.
"""

from dataclasses import dataclass, field

import numpy as np

from . import siren
from .errors import NumericalError, ValidationError

DEFAULT_TOLERANCE = 1.0 / 15.0
DEFAULT_K = 30


@dataclass
class FeatureSpec:
    center: tuple  # (x, y), normalized spatial units
    radius: float
    time: float  # normalized
    z_ref: np.ndarray  # normalized parameter vector
    C: float = DEFAULT_TOLERANCE
    K: int = DEFAULT_K
    label: int = 0

    def __post_init__(self):
        self.center = (float(self.center[0]), float(self.center[1]))
        self.radius = float(self.radius)
        self.time = float(self.time)
        self.z_ref = np.asarray(self.z_ref, dtype=np.float64).reshape(-1)
        self.C = float(self.C)
        self.K = int(self.K)
        self.label = int(self.label)

    def problems(self, dim: int | None = None) -> dict:
        """Field-keyed validation messages; empty when the spec is usable."""
        out = {}
        if self.radius < 0:
            out["radius"] = "radius must be >= 0"
        else:
            cx, cy = self.center
            gap = np.hypot(max(abs(cx) - 1.0, 0.0), max(abs(cy) - 1.0, 0.0))
            if gap > self.radius:
                out["center"] = "disc does not intersect the spatial box"
        if not -1.0 <= self.time <= 1.0:
            out["time"] = "time outside normalized range [-1, 1]"
        if self.C <= 0:
            out["C"] = "tolerance C must be > 0"
        if self.K < 1:
            out["K"] = "need K >= 1 sample points"
        if self.label < 0:
            out["label"] = "label must be a small nonnegative integer"
        if dim is not None and self.z_ref.size != dim:
            out["z_ref"] = f"expected {dim} components, got {self.z_ref.size}"
        if not np.all(np.isfinite(self.z_ref)):
            out["z_ref"] = "z_ref must be finite"
        return out

    def validate(self, dim: int | None = None) -> None:
        problems = self.problems(dim)
        if problems:
            raise ValidationError(problems)

    def to_dict(self) -> dict:
        return {
            "center": [self.center[0], self.center[1]],
            "radius": self.radius,
            "time": self.time,
            "z_ref": self.z_ref.tolist(),
            "C": self.C,
            "K": self.K,
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FeatureSpec":
        missing = [k for k in ("center", "radius", "time", "z_ref") if k not in doc]
        if missing:
            raise ValidationError({k: "missing" for k in missing})
        try:
            return cls(
                center=tuple(doc["center"]),
                radius=doc["radius"],
                time=doc["time"],
                z_ref=doc["z_ref"],
                C=doc.get("C", DEFAULT_TOLERANCE),
                K=doc.get("K", DEFAULT_K),
                label=doc.get("label", 0),
            )
        except (TypeError, ValueError, IndexError) as e:
            raise ValidationError({"spec": f"malformed feature spec: {e}"}) from e


def sample_region(spec: FeatureSpec, rng) -> np.ndarray:
    """K points uniform on disc-intersect-box, as (K, 3) rows (t, y, x)."""
    spec.validate()
    cx, cy = spec.center
    out = np.empty((spec.K, 3))
    out[:, 0] = spec.time
    if spec.radius == 0.0:
        out[:, 1] = cy
        out[:, 2] = cx
        return out
    got = 0
    for _ in range(1000):
        need = spec.K - got
        xs = rng.uniform(cx - spec.radius, cx + spec.radius, size=4 * need)
        ys = rng.uniform(cy - spec.radius, cy + spec.radius, size=4 * need)
        keep = ((xs - cx) ** 2 + (ys - cy) ** 2 <= spec.radius**2) & (
            (np.abs(xs) <= 1.0) & (np.abs(ys) <= 1.0)
        )
        xs, ys = xs[keep][:need], ys[keep][:need]
        out[got : got + xs.size, 1] = ys
        out[got : got + xs.size, 2] = xs
        got += xs.size
        if got == spec.K:
            return out
    raise NumericalError("disc-box intersection too thin to sample")


def _batched_outputs(model, z, spec: FeatureSpec, points, need_cache=False):
    """Forward at every (point, chain) pair plus the reference side."""
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    B = z.shape[0]
    K = points.shape[0]
    coords = np.tile(points, (B, 1))
    params = np.repeat(z, K, axis=0)
    if need_cache:
        y, cache = siren.forward_cached(model, coords, params)
    else:
        y, cache = siren.forward(model, coords, params), None
    y_ref = siren.forward(model, points, spec.z_ref)
    resid = y - np.tile(y_ref, (B, 1))
    return resid, cache, B, K


def feature_distance(model, z, spec: FeatureSpec, points) -> float:
    """d_X = (1/K) sum_k |f(x_k, z) - f(x_k, z_ref)| for one z."""
    points = np.asarray(points, dtype=np.float64)
    if points.size == 0:
        raise ValidationError({"points": "need at least one sample point"})
    resid, _, _, K = _batched_outputs(model, z, spec, points)
    return float(np.linalg.norm(resid, axis=1).mean())


def log_likelihood_and_grad(model, z, spec: FeatureSpec, rng, points=None):
    """(-d_X/C, gradient w.r.t. z, points); batched over rows of z.

    Fresh points are drawn unless a fixed set is supplied (finite-
    difference checks need the energy held still).  Zero-norm residuals
    contribute subgradient 0.
    """
    if points is None:
        points = sample_region(spec, rng)
    z_arr = np.asarray(z, dtype=np.float64)
    single = z_arr.ndim == 1
    resid, cache, B, K = _batched_outputs(model, z_arr, spec, points, need_cache=True)
    norms = np.linalg.norm(resid, axis=1)
    value = -norms.reshape(B, K).mean(axis=1) / spec.C
    unit = np.zeros_like(resid)
    nz = norms > 0.0
    unit[nz] = resid[nz] / norms[nz, None]
    out_grad = -unit / (spec.C * K)
    grad = siren.grad_z_from_cache(model, cache, out_grad).reshape(B, K, -1).sum(axis=1)
    if single:
        return float(value[0]), grad[0], points
    return value, grad, points


def log_likelihood_value(model, z, spec: FeatureSpec, points):
    """Energy only (no backward pass), batched; used for MH bookkeeping."""
    z_arr = np.asarray(z, dtype=np.float64)
    resid, _, B, K = _batched_outputs(model, z_arr, spec, points)
    value = -np.linalg.norm(resid, axis=1).reshape(B, K).mean(axis=1) / spec.C
    return float(value[0]) if z_arr.ndim == 1 else value
