"""Quantitative evaluation: generalization PSNR, sparsification curves,
split-R-hat convergence, MMD against long-run references, and normalized
feature-distance (NLL) distributions.

All estimators are pure functions of their inputs; report writers emit
JSON plus CSV so external tooling can plot without importing this
package.
"""

import csv
import json
import os
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from . import features, kernels, siren
from .errors import ConfigError, ShapeError
from .hmc import run_chains

DEFAULT_FRACTIONS = tuple(np.round(np.arange(0.0, 0.95, 0.05), 2))
MMD_SUBSAMPLE_CAP = 8192


# ------------------------------------------------------------------ psnr


def psnr(pred, truth, extent: float) -> float:
    """Peak signal-to-noise ratio 20*log10(extent / RMSE) in dB.

    RMSE of zero returns the +inf sentinel rather than raising.
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ShapeError(f"shape mismatch {pred.shape} vs {truth.shape}")
    if extent <= 0:
        raise ConfigError("extent must be > 0")
    rmse = float(np.sqrt(np.mean((pred - truth) ** 2)))
    if rmse == 0.0:
        return float("inf")
    return 20.0 * np.log10(extent / rmse)


def dataset_extent(dataset) -> float:
    """max - min over every ground-truth component value in the dataset."""
    lo, hi = np.inf, -np.inf
    for member in dataset.members:
        fld = dataset.load_field(member.id)
        lo = min(lo, float(fld.min()))
        hi = max(hi, float(fld.max()))
    if not np.isfinite(hi - lo) or hi <= lo:
        raise ConfigError("degenerate dataset extent")
    return hi - lo


def held_out_metrics(model, dataset, extent: float | None = None):
    """Per-member (psnr, rmse) of the surrogate against stored fields."""
    if dataset.count == 0:
        raise ConfigError("dataset is empty")
    if extent is None:
        extent = dataset_extent(dataset)
    coords = dataset.domain.grid_coords_normalized()
    psnrs, rmses = [], []
    for member in dataset.members:
        truth = dataset.load_field(member.id).reshape(-1, dataset.domain.output_dim)
        z_n = dataset.space.normalize(member.z)
        pred = siren.forward(model, coords, z_n)
        rmse = float(np.sqrt(np.mean((pred - truth.astype(np.float64)) ** 2)))
        rmses.append(rmse)
        psnrs.append(float("inf") if rmse == 0 else 20.0 * np.log10(extent / rmse))
    return np.asarray(psnrs), np.asarray(rmses)


# -------------------------------------------------------- sparsification


@dataclass
class SparsificationCurve:
    fractions: list[float]
    mean_psnr: list[float]
    mean_rmse: list[float]
    scorer_name: str = ""

    def __post_init__(self):
        if not (len(self.fractions) == len(self.mean_psnr) == len(self.mean_rmse)):
            raise ConfigError("curve lists must have equal length")
        if np.any(np.diff(self.fractions) <= 0):
            raise ConfigError("fractions must be strictly increasing")

    def to_dict(self) -> dict:
        return {
            "scorer": self.scorer_name,
            "fractions": list(self.fractions),
            "mean_psnr": list(self.mean_psnr),
            "mean_rmse": list(self.mean_rmse),
        }


def sparsification(
    scorer,
    test,
    model,
    fractions=DEFAULT_FRACTIONS,
    extent: float | None = None,
    scorer_name: str = "",
) -> SparsificationCurve:
    """Drop the lowest-scoring floor(phi*count) members per fraction and
    average PSNR/RMSE over the survivors.

    Ties in the score keep member order (stable sort).  Fractions that
    would remove every member are skipped.
    """
    if test.count == 0:
        raise ConfigError("test dataset is empty")
    member_psnr, member_rmse = held_out_metrics(model, test, extent)
    z_norm = test.space.normalize(test.parameters())
    scores = np.asarray([float(scorer(z)) for z in z_norm])
    order = np.argsort(scores, kind="stable")  # ascending; ties by member index
    n = test.count
    kept_fracs, kept_psnr, kept_rmse = [], [], []
    for phi in fractions:
        drop = int(np.floor(phi * n))
        keep = order[drop:]
        if keep.size == 0:
            continue
        kept_fracs.append(float(phi))
        kept_psnr.append(float(member_psnr[keep].mean()))
        kept_rmse.append(float(member_rmse[keep].mean()))
    return SparsificationCurve(kept_fracs, kept_psnr, kept_rmse, scorer_name)


def fim_kde_scorer(prior):
    """Error-aware KDE log prior as an uncertainty score (higher = safer)."""
    from .prior import log_prior_and_grad

    def score(z):
        value, _ = log_prior_and_grad(prior, np.asarray(z, dtype=np.float64))
        return float(value)

    return score


def param_kde_scorer(prior):
    """Parameter-only KDE baseline: spatial kernel term, no curvature term."""
    centers = prior.centers
    inv_ss2 = 1.0 / prior.sigma_s**2

    def score(z):
        diff = centers - np.asarray(z, dtype=np.float64)[None, :]
        expo = -(diff**2).sum(axis=1) * inv_ss2
        m = expo.max()
        return float(m + np.log(np.exp(expo - m).sum()))

    return score


def oracle_scorer(model, dataset, extent: float | None = None):
    """Scores each member by its actual reconstruction PSNR (test only)."""
    member_psnr, _ = held_out_metrics(model, dataset, extent)
    table = {
        dataset.space.normalize(m.z).tobytes(): float(p)
        for m, p in zip(dataset.members, member_psnr)
    }

    def score(z):
        return table[np.asarray(z, dtype=np.float64).tobytes()]

    return score


# ------------------------------------------------------------ split R-hat


def split_rhat(chains) -> float:
    """Gelman-Rubin potential scale reduction with split chains.

    chains: (m, n) per-chain utility traces.  Returns NaN when the
    within-half variance is zero (constant traces carry no signal).
    """
    chains = np.atleast_2d(np.asarray(chains, dtype=np.float64))
    m, n = chains.shape
    if m < 2:
        raise ConfigError("need at least 2 chains")
    if n < 4:
        raise ConfigError("need at least 4 draws per chain")
    half = n // 2
    halves = np.concatenate([chains[:, :half], chains[:, half : 2 * half]], axis=0)
    w = halves.var(axis=1, ddof=1).mean()
    if w == 0.0:
        return float("nan")
    b = half * halves.mean(axis=1).var(ddof=1)
    var_plus = ((half - 1) * w + b) / half
    return float(np.sqrt(var_plus / w))


@dataclass
class RhatReport:
    values: np.ndarray
    bin_edges: np.ndarray
    counts: np.ndarray
    n_features: int
    n_positions: int

    def fraction_below(self, threshold: float) -> float:
        return float((self.values < threshold).mean())

    def to_dict(self) -> dict:
        return {
            "n_features": self.n_features,
            "n_positions": self.n_positions,
            "values": self.values.tolist(),
            "bin_edges": self.bin_edges.tolist(),
            "counts": self.counts.tolist(),
        }


def _chain_trace_matrix(samples):
    """(chains, draws, d) for chains present at every emission step."""
    steps = np.unique(samples.step_index)
    present = None
    for s in steps:
        ids = set(samples.chain_id[samples.step_index == s].tolist())
        present = ids if present is None else (present & ids)
    if not present:
        return np.empty((0, len(steps), samples.dim))
    keep = sorted(present)
    index = {c: i for i, c in enumerate(keep)}
    out = np.empty((len(keep), len(steps), samples.dim))
    for si, s in enumerate(steps):
        rows = samples.step_index == s
        for cid, z in zip(samples.chain_id[rows], samples.z[rows]):
            if cid in present:
                out[index[cid], si] = z
    return out


def rhat_report(
    model, prior, test, cfg, n_features: int = 6, n_positions: int = 16, seed: int = 0
) -> RhatReport:
    """R-hat over surrogate-output utilities for randomly drawn features.

    Each feature gets a random reference configuration from the test set
    and a random disc at a random time slice, spanning the workload from
    strongly informative regions (transient structure early in the
    window) to prior-led ones; utilities are the surrogate components at
    ``n_positions`` random fixed locations.
    """
    if cfg.n_chains < 2:
        raise ConfigError("R-hat needs at least 2 chains")
    rng = np.random.default_rng(seed)
    positions = rng.uniform(-1.0, 1.0, size=(n_positions, model.domain.m))
    values = []
    for i in range(n_features):
        member = test.members[int(rng.integers(test.count))]
        z_ref = test.space.normalize(member.z)
        spec = features.FeatureSpec(
            center=tuple(rng.uniform(-0.6, 0.6, size=2)),
            radius=float(rng.uniform(0.2, 0.35)),
            time=float(rng.uniform(-1.0, 1.0)),
            z_ref=z_ref,
            label=0,
        )
        out = run_chains(cfg, prior, model, spec, keep_outside=True)
        traces = _chain_trace_matrix(out)
        if traces.shape[0] < 2 or traces.shape[1] < 4:
            continue
        n_chains, n_draws, _ = traces.shape
        z_flat = model.space.normalize(traces.reshape(-1, traces.shape[2]))
        util = np.stack([siren.forward(model, positions, z) for z in z_flat])
        util = util.reshape(n_chains, n_draws, -1)
        for u in range(util.shape[2]):
            values.append(split_rhat(util[:, :, u]))
    values = np.asarray([v for v in values if np.isfinite(v)])
    counts, edges = np.histogram(values, bins=30) if values.size else (np.zeros(30, dtype=np.int64), np.linspace(1, 2, 31))
    return RhatReport(values, edges, counts, n_features, n_positions)


# ------------------------------------------------------------------- mmd


def _strided_cap(x, cap):
    if x.shape[0] <= cap:
        return x
    return x[:: x.shape[0] // cap + 1]


def mmd(set_a, set_b, bandwidth="median") -> float:
    """Biased-estimator maximum mean discrepancy with a Gaussian kernel.

    ``bandwidth="median"`` uses the median pairwise distance of the
    pooled set.  Sets larger than MMD_SUBSAMPLE_CAP are thinned with an
    even stride first.  The two arguments are canonicalized internally
    so mmd(A, B) == mmd(B, A) bit-for-bit.
    """
    a = np.atleast_2d(np.asarray(set_a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(set_b, dtype=np.float64))
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ConfigError("both sample sets must be nonempty")
    a = np.ascontiguousarray(_strided_cap(a, MMD_SUBSAMPLE_CAP))
    b = np.ascontiguousarray(_strided_cap(b, MMD_SUBSAMPLE_CAP))
    if (a.shape[0], a.tobytes()) > (b.shape[0], b.tobytes()):
        a, b = b, a  # symmetry: identical arithmetic for either call order
    if bandwidth == "median":
        pooled = _strided_cap(np.concatenate([a, b], axis=0), 2048)
        h = float(np.median(pdist(pooled)))
        if h <= 0.0:
            h = 1.0
    else:
        h = float(bandwidth)
        if h <= 0:
            raise ConfigError("bandwidth must be > 0")
    inv_2h2 = 1.0 / (2.0 * h * h)
    k_aa = kernels.gaussian_kernel_mean(a, a, inv_2h2)
    k_bb = kernels.gaussian_kernel_mean(b, b, inv_2h2)
    k_ab = kernels.gaussian_kernel_mean(a, b, inv_2h2)
    return float(np.sqrt(max(0.0, k_aa + k_bb - 2.0 * k_ab)))


# ------------------------------------------------------------------- nll


def mean_vector_norm(dataset) -> float:
    """Average output-vector 2-norm over every grid point in the dataset."""
    total, count = 0.0, 0
    for member in dataset.members:
        fld = dataset.load_field(member.id).reshape(-1, dataset.domain.output_dim)
        total += float(np.linalg.norm(fld.astype(np.float64), axis=1).sum())
        count += fld.shape[0]
    if count == 0:
        raise ConfigError("dataset is empty")
    return total / count


def nll_distribution(
    samples,
    model,
    spec,
    norm_scale: float,
    n_points: int = 1000,
    bins: int = 50,
    seed: int = 0,
    max_samples: int | None = None,
    chunk: int = 64,
):
    """Normalized feature distances for each sample on one fixed disc quadrature.

    Returns (values, counts, edges); values are d_X divided by
    ``norm_scale`` (the ensemble's mean vector norm).
    """
    z = getattr(samples, "z", samples)
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    if z.shape[0] == 0:
        raise ConfigError("no samples")
    if max_samples is not None:
        z = _strided_cap(z, max_samples)
    if norm_scale <= 0:
        raise ConfigError("norm_scale must be > 0")
    rng = np.random.default_rng(seed)
    qspec = features.FeatureSpec(
        center=spec.center, radius=spec.radius, time=spec.time,
        z_ref=spec.z_ref, C=spec.C, K=n_points, label=spec.label,
    )
    points = features.sample_region(qspec, rng)
    z_n = model.space.normalize(z)
    vals = []
    for start in range(0, z_n.shape[0], chunk):
        ll = features.log_likelihood_value(model, z_n[start : start + chunk], qspec, points)
        vals.append(np.atleast_1d(ll) * (-qspec.C))  # back to raw distances
    values = np.concatenate(vals) / norm_scale
    top = max(float(values.max()), 1e-12)
    counts, edges = np.histogram(values, bins=bins, range=(0.0, top))
    return values, counts, edges


# ---------------------------------------------------------------- reports


def write_report(prefix, payload: dict, rows: list[dict]):
    """Emit <prefix>.json and <prefix>.csv; returns both paths."""
    parent = os.path.dirname(prefix)
    if parent:
        os.makedirs(parent, exist_ok=True)
    json_path = f"{prefix}.json"
    csv_path = f"{prefix}.csv"
    with open(json_path, "w") as fh:
        json.dump(payload, fh, indent=2)
    with open(csv_path, "w", newline="") as fh:
        if rows:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)
    return json_path, csv_path
