"""Error-aware prior over normalized parameter space.

Each training configuration z_i carries a Fisher information matrix
F_i = (1/M) J^T J estimated from the surrogate Jacobian at M random
domain points; the prior is a kernel density whose exponent combines the
Euclidean distance (bandwidth sigma_s) with the squared Mahalanobis
distance under F_i (bandwidth sigma_f), so mass concentrates where the
surrogate is trustworthy.  All z here are in normalized [-1, 1]^d units.
"""

import io
import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from . import kernels, siren
from .errors import ConfigError, FormatError, NumericalError

PRIOR_MAGIC = b"PSFM"
PRIOR_VERSION = 1

DEFAULT_FIM_SAMPLES = 1 << 15  # paper-scale 2^20 accepted, desk default smaller


@dataclass
class FimEntry:
    z: np.ndarray  # normalized d-vector
    F: np.ndarray  # (d, d) symmetric PSD
    m_samples: int

    def validate(self) -> None:
        if not np.allclose(self.F, self.F.T, atol=1e-10):
            raise NumericalError("FIM not symmetric")
        eigs = np.linalg.eigvalsh(self.F)
        if eigs.min() < -1e-8:
            raise NumericalError(f"FIM not PSD (min eigenvalue {eigs.min():.2e})")


@dataclass
class PriorModel:
    entries: list
    sigma_s: float
    sigma_f: float

    def __post_init__(self):
        if not self.entries:
            raise ConfigError("prior needs at least one entry")
        if self.sigma_s <= 0 or self.sigma_f <= 0:
            raise ConfigError("bandwidths must be positive")
        self._centers = np.ascontiguousarray([e.z for e in self.entries], dtype=np.float64)
        self._fims = np.ascontiguousarray([e.F for e in self.entries], dtype=np.float64)

    @property
    def centers(self) -> np.ndarray:
        return self._centers

    @property
    def fims(self) -> np.ndarray:
        return self._fims

    @property
    def dim(self) -> int:
        return self._centers.shape[1]


def _jacobian(model, coords, z) -> np.ndarray:
    """Models may supply their own exact Jacobian (e.g. analytic test
    fields); the surrogate path is the default."""
    jac_fn = getattr(model, "jacobian", None)
    if jac_fn is not None:
        return np.asarray(jac_fn(coords, z), dtype=np.float64)
    return siren.jacobian_wrt_params(model, coords, z)


def compute_fim(model, z, m_samples: int = DEFAULT_FIM_SAMPLES, seed: int = 0) -> FimEntry:
    """F = (1/M) J^T J from M uniform domain points; symmetrized."""
    z = np.asarray(z, dtype=np.float64)
    if m_samples < 1:
        raise ConfigError("m_samples must be >= 1")
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-1.0, 1.0, size=(m_samples, model.domain.m))
    jac = _jacobian(model, pts, z)
    if not np.all(np.isfinite(jac)):
        raise NumericalError("non-finite Jacobian in FIM estimation")
    fim = jac.T @ jac / m_samples
    fim = 0.5 * (fim + fim.T)
    return FimEntry(z=z, F=fim, m_samples=m_samples)


def fim_distance(z, entry: FimEntry) -> float:
    """Squared Mahalanobis distance (z - z_i)^T F (z - z_i)."""
    dz = np.asarray(z, dtype=np.float64) - entry.z
    return float(dz @ entry.F @ dz)


def select_bandwidths(entries) -> tuple:
    """sigma_s = 6 x mean nearest-neighbor Euclidean distance;
    sigma_f^2 = mean nearest-neighbor squared Mahalanobis distance,
    each entry's own F measuring distances to the other points."""
    n = len(entries)
    if n < 2:
        raise ConfigError("bandwidth selection needs at least 2 entries")
    zs = np.array([e.z for e in entries])
    diff = zs[:, None, :] - zs[None, :, :]
    eucl = np.linalg.norm(diff, axis=2)
    np.fill_diagonal(eucl, np.inf)
    sigma_s = 6.0 * float(np.mean(eucl.min(axis=1)))
    nn_fim = np.empty(n)
    for i, e in enumerate(entries):
        dz = zs - e.z
        q = np.einsum("nd,de,ne->n", dz, e.F, dz)
        q[i] = np.inf
        nn_fim[i] = q.min()
    sigma_f_sq = float(np.mean(nn_fim))
    return sigma_s, np.sqrt(sigma_f_sq)


def build_prior(model, dataset, m_samples: int = DEFAULT_FIM_SAMPLES, seed: int = 0) -> PriorModel:
    """FIM per training member (normalized z), then bandwidths."""
    entries = []
    for i, member in enumerate(dataset.members):
        z_n = dataset.space.normalize(member.z)
        entries.append(compute_fim(model, z_n, m_samples, seed=seed + i))
    sigma_s, sigma_f = select_bandwidths(entries)
    return PriorModel(entries=entries, sigma_s=sigma_s, sigma_f=sigma_f)


def log_prior_and_grad(prior: PriorModel, z):
    """Unnormalized log density and gradient; batched over rows of z.

    log p(z) = logsumexp_i( -|z-z_i|^2/sigma_s^2 - D2_FIM(z,z_i)/sigma_f^2 )
    with max-subtraction; the gradient is the softmax-weighted sum of the
    per-term gradients.  Scalar input returns scalar value, (d,) gradient.
    """
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    zb = np.ascontiguousarray(np.atleast_2d(z))
    logp, grad = kernels.kde_log_density_grad(
        zb,
        prior.centers,
        prior.fims,
        1.0 / prior.sigma_s**2,
        1.0 / prior.sigma_f**2,
    )
    if single:
        return float(logp[0]), grad[0]
    return logp, grad


# ---------------------------------------------------------------------------
# artifact file


def save_prior(prior: PriorModel, path: str) -> None:
    d = prior.dim
    n = len(prior.entries)
    m_samples = prior.entries[0].m_samples
    buf = io.BytesIO()
    buf.write(PRIOR_MAGIC)
    buf.write(struct.pack("<IIIIdd", PRIOR_VERSION, n, d, m_samples, prior.sigma_s, prior.sigma_f))
    for e in prior.entries:
        buf.write(np.ascontiguousarray(e.z, dtype="<f8").tobytes())
        buf.write(np.ascontiguousarray(e.F, dtype="<f8").tobytes())
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(buf.getvalue())
    os.replace(tmp, path)


def load_prior(path: str) -> PriorModel:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != PRIOR_MAGIC:
        raise FormatError("not a prior artifact file")
    head = struct.Struct("<IIIIdd")
    if len(raw) < 4 + head.size:
        raise FormatError("prior file truncated")
    version, n, d, m_samples, sigma_s, sigma_f = head.unpack_from(raw, 4)
    if version != PRIOR_VERSION:
        raise FormatError(f"unsupported prior version {version}")
    rec = d * 8 + d * d * 8
    if len(raw) != 4 + head.size + n * rec:
        raise FormatError("prior file truncated")
    off = 4 + head.size
    entries = []
    for _ in range(n):
        z = np.frombuffer(raw, dtype="<f8", count=d, offset=off).copy()
        off += d * 8
        fim = np.frombuffer(raw, dtype="<f8", count=d * d, offset=off).reshape(d, d).copy()
        off += d * d * 8
        entries.append(FimEntry(z=z, F=fim, m_samples=m_samples))
    return PriorModel(entries=entries, sigma_s=sigma_s, sigma_f=sigma_f)
