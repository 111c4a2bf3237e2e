"""Aggregation of sample sets into displayable density grids.

Everything here is a pure function of the sample multiset, so grids can
be recomputed on every stream batch, and counts binned per batch sum to
the counts of the full set.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

DEFAULT_RESOLUTION = 32


@dataclass
class HeatmapGrid:
    dim_pair: tuple[int, int]
    resolution: int
    counts: np.ndarray  # (res, res) int64; (res,) for the 1-D case
    extent: np.ndarray  # (2, 2) rows [lo, hi]; (1, 2) for the 1-D case

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_wire(self) -> dict:
        return {
            "pair": [int(self.dim_pair[0]), int(self.dim_pair[1])],
            "resolution": int(self.resolution),
            "extent": self.extent.tolist(),
            "counts": self.counts.tolist(),
        }

    @classmethod
    def from_wire(cls, payload: dict) -> "HeatmapGrid":
        return cls(
            dim_pair=tuple(payload["pair"]),
            resolution=int(payload["resolution"]),
            counts=np.asarray(payload["counts"], dtype=np.int64),
            extent=np.asarray(payload["extent"], dtype=np.float64),
        )


def _sample_array(samples) -> np.ndarray:
    z = getattr(samples, "z", samples)
    return np.atleast_2d(np.asarray(z, dtype=np.float64))


def bin_samples(samples, space, dim_pair, resolution: int = DEFAULT_RESOLUTION) -> HeatmapGrid:
    """Uniform 2-D histogram of the (j, k) sample coordinates over the box.

    Samples on the upper box boundary land in the last bin; rows outside
    the box are dropped, so the counts sum to the in-box sample count.
    """
    if resolution < 2:
        raise ConfigError("heatmap resolution must be >= 2")
    j, k = dim_pair
    z = _sample_array(samples)
    lo, hi = space.lower, space.upper
    counts, _, _ = np.histogram2d(
        z[:, j], z[:, k], bins=resolution, range=[[lo[j], hi[j]], [lo[k], hi[k]]]
    )
    extent = np.array([[lo[j], hi[j]], [lo[k], hi[k]]])
    return HeatmapGrid((int(j), int(k)), resolution, counts.astype(np.int64), extent)


def bin_samples_1d(samples, space, axis: int = 0, resolution: int = DEFAULT_RESOLUTION) -> HeatmapGrid:
    if resolution < 2:
        raise ConfigError("histogram resolution must be >= 2")
    z = _sample_array(samples)
    lo, hi = float(space.lower[axis]), float(space.upper[axis])
    counts, _ = np.histogram(z[:, axis], bins=resolution, range=(lo, hi))
    return HeatmapGrid(
        (int(axis), int(axis)), resolution, counts.astype(np.int64), np.array([[lo, hi]])
    )


def marginal_matrix(samples, space, resolution: int = DEFAULT_RESOLUTION) -> list[HeatmapGrid]:
    """One grid per unordered parameter pair, in lexicographic (j < k) order.

    A 1-D parameter space degenerates to a single 1-D histogram.
    """
    d = space.dim
    if d == 1:
        return [bin_samples_1d(samples, space, 0, resolution)]
    return [
        bin_samples(samples, space, pair, resolution)
        for pair in itertools.combinations(range(d), 2)
    ]


def compare_densities(samples_a, samples_b, space, dim_pair, resolution: int = DEFAULT_RESOLUTION):
    """Per-grid max-normalized densities for two posteriors, each in [0, 1].

    Normalizing each grid by its own peak sidesteps the two posteriors'
    unrelated normalizing constants; composition into a bivariate color
    map is the display layer's job.
    """
    a = _sample_array(samples_a)
    b = _sample_array(samples_b)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ConfigError("both sample sets must be nonempty")
    out = []
    for z in (a, b):
        grid = bin_samples(z, space, dim_pair, resolution)
        peak = grid.counts.max()
        out.append(grid.counts / peak if peak > 0 else grid.counts.astype(np.float64))
    return out[0], out[1]
