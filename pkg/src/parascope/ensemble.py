"""Parameter space, field domain, and the on-disk ensemble format.

An ensemble directory holds one ``manifest.json`` plus one raw float32
binary per member, little-endian, row-major in (t, y, x, component) order
so that time-slice reads are contiguous.  All numerics inside the package
run on coordinates normalized to [-1, 1]; physical units appear only at
the I/O boundary.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np
from filelock import FileLock

from .errors import FormatError, IoError, NotFound, RangeError

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1


@dataclass(frozen=True)
class ParameterSpace:
    """A d-dimensional box of simulation parameters."""

    lower: np.ndarray
    upper: np.ndarray
    names: tuple[str, ...] = ()

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=np.float64)
        hi = np.asarray(self.upper, dtype=np.float64)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if not self.names:
            object.__setattr__(self, "names", tuple(f"z{i}" for i in range(lo.size)))
        object.__setattr__(self, "names", tuple(self.names))
        if lo.ndim != 1 or lo.shape != hi.shape or len(self.names) != lo.size:
            raise FormatError("parameter space dims disagree")
        if lo.size == 0:
            raise FormatError("parameter space must have dim >= 1")
        if not np.all(lo < hi):
            raise FormatError("parameter lower bounds must be < upper bounds")

    @property
    def dim(self) -> int:
        return self.lower.size

    def normalize(self, z):
        """Map physical parameters into the unit cube [-1, 1]^d."""
        z = np.asarray(z, dtype=np.float64)
        return 2.0 * (z - self.lower) / (self.upper - self.lower) - 1.0

    def denormalize(self, u):
        u = np.asarray(u, dtype=np.float64)
        return self.lower + (u + 1.0) * 0.5 * (self.upper - self.lower)

    def contains(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        return np.all((z >= self.lower) & (z <= self.upper), axis=-1)

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "names": list(self.names),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ParameterSpace":
        space = cls(d["lower"], d["upper"], d["names"])
        if "dim" in d and int(d["dim"]) != space.dim:
            raise FormatError("declared dim disagrees with bounds")
        return space


@dataclass(frozen=True)
class DomainSpec:
    """The field domain: 2 spatial axes, optional time, n output components.

    ``resolution`` and ``bounds`` are per-axis in (t, y, x) order when time
    is present, (y, x) otherwise, matching member file layout.
    """

    resolution: tuple[int, ...]
    bounds: tuple[tuple[float, float], ...]
    output_dim: int
    has_time: bool = True
    spatial_dims: int = 2

    def __post_init__(self):
        object.__setattr__(self, "resolution", tuple(int(r) for r in self.resolution))
        object.__setattr__(
            self, "bounds", tuple((float(a), float(b)) for a, b in self.bounds)
        )
        if self.spatial_dims != 2:
            raise FormatError("only 2 spatial dimensions are supported")
        m = self.spatial_dims + (1 if self.has_time else 0)
        if len(self.resolution) != m or len(self.bounds) != m:
            raise FormatError("resolution/bounds must cover every axis")
        if any(r < 1 for r in self.resolution):
            raise FormatError("axis resolutions must be >= 1")
        if any(a >= b for a, b in self.bounds):
            raise FormatError("axis bounds must be increasing")
        if self.output_dim < 1:
            raise FormatError("output_dim must be >= 1")

    @property
    def m(self) -> int:
        return self.spatial_dims + (1 if self.has_time else 0)

    @property
    def axes(self) -> tuple[str, ...]:
        return ("t", "y", "x") if self.has_time else ("y", "x")

    @property
    def field_shape(self) -> tuple[int, ...]:
        return self.resolution + (self.output_dim,)

    def normalize_coords(self, coords):
        """Physical (t, y, x) coordinates to [-1, 1]^m."""
        coords = np.asarray(coords, dtype=np.float64)
        lo = np.array([b[0] for b in self.bounds])
        hi = np.array([b[1] for b in self.bounds])
        return 2.0 * (coords - lo) / (hi - lo) - 1.0

    def denormalize_coords(self, u):
        u = np.asarray(u, dtype=np.float64)
        lo = np.array([b[0] for b in self.bounds])
        hi = np.array([b[1] for b in self.bounds])
        return lo + (u + 1.0) * 0.5 * (hi - lo)

    def grid_axes_normalized(self) -> list[np.ndarray]:
        """Per-axis normalized sample positions of the storage grid."""
        out = []
        for r in self.resolution:
            if r == 1:
                out.append(np.zeros(1))
            else:
                out.append(np.linspace(-1.0, 1.0, r))
        return out

    def grid_coords_normalized(self) -> np.ndarray:
        """All grid points as an (prod(resolution), m) array, storage order."""
        axes = self.grid_axes_normalized()
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=1)

    def to_dict(self) -> dict:
        return {
            "axes": list(self.axes),
            "resolution": list(self.resolution),
            "bounds": [list(b) for b in self.bounds],
            "output_dim": self.output_dim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DomainSpec":
        axes = tuple(d.get("axes", ("t", "y", "x")))
        if axes not in (("t", "y", "x"), ("y", "x")):
            raise FormatError(f"unsupported axis list {axes!r}")
        return cls(
            resolution=d["resolution"],
            bounds=d["bounds"],
            output_dim=int(d["output_dim"]),
            has_time=axes[0] == "t",
        )


@dataclass
class Member:
    id: int
    z: np.ndarray
    file: str


@dataclass
class EnsembleDataset:
    """Header view of an ensemble directory; field arrays load lazily."""

    path: str
    space: ParameterSpace
    domain: DomainSpec
    members: list[Member] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.members)

    def member_path(self, member_id: int) -> str:
        for m in self.members:
            if m.id == member_id:
                return os.path.join(self.path, m.file)
        raise NotFound(f"member {member_id} not in manifest")

    def load_field(self, member_id: int) -> np.ndarray:
        """Full field array of one member, shape resolution + (n,)."""
        raw = np.fromfile(self.member_path(member_id), dtype="<f4")
        expected = int(np.prod(self.domain.field_shape))
        if raw.size != expected:
            raise FormatError(
                f"member {member_id} holds {raw.size} values, expected {expected}"
            )
        return raw.reshape(self.domain.field_shape)

    def read_member_slice(self, member_id: int, time_index: int) -> np.ndarray:
        """One spatial (y, x, n) slice without touching other time steps."""
        if not self.domain.has_time:
            raise RangeError("domain has no time axis")
        nt = self.domain.resolution[0]
        if not 0 <= time_index < nt:
            raise RangeError(f"time_index {time_index} outside [0, {nt})")
        ny, nx = self.domain.resolution[1:]
        n = self.domain.output_dim
        count = ny * nx * n
        offset = time_index * count * 4
        with open(self.member_path(member_id), "rb") as f:
            f.seek(offset)
            raw = np.fromfile(f, dtype="<f4", count=count)
        if raw.size != count:
            raise FormatError(f"member {member_id} file truncated")
        return raw.reshape(ny, nx, n)

    def parameters(self) -> np.ndarray:
        """(N, d) physical parameter vectors in member order."""
        return np.array([m.z for m in self.members], dtype=np.float64)


def _manifest_paths(dataset_path: str) -> tuple[str, str]:
    manifest = os.path.join(dataset_path, MANIFEST_NAME)
    return manifest, manifest + ".lock"


def init_dataset(path: str, space: ParameterSpace, domain: DomainSpec) -> EnsembleDataset:
    """Create an empty ensemble directory with a fresh manifest."""
    os.makedirs(path, exist_ok=True)
    ds = EnsembleDataset(path=path, space=space, domain=domain)
    _write_manifest(ds)
    return ds


def _write_manifest(ds: EnsembleDataset) -> None:
    manifest, _ = _manifest_paths(ds.path)
    doc = {
        "version": MANIFEST_VERSION,
        "parameter_space": ds.space.to_dict(),
        "domain": ds.domain.to_dict(),
        "members": [
            {"id": m.id, "z": np.asarray(m.z).tolist(), "file": m.file}
            for m in ds.members
        ],
    }
    tmp = manifest + ".tmp"
    try:
        with open(tmp, "w") as f:
            json.dump(doc, f, indent=1)
        os.replace(tmp, manifest)
    except OSError as e:
        raise IoError(f"manifest write failed: {e}") from e


def load_manifest(path: str) -> EnsembleDataset:
    """Validate and load an ensemble header; bulk arrays stay on disk."""
    manifest, _ = _manifest_paths(path)
    if not os.path.isfile(manifest):
        raise NotFound(f"no {MANIFEST_NAME} under {path}")
    with open(manifest) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise FormatError(f"manifest is not valid JSON: {e}") from e
    if doc.get("version") != MANIFEST_VERSION:
        raise FormatError(f"unsupported manifest version {doc.get('version')!r}")
    space = ParameterSpace.from_dict(doc["parameter_space"])
    domain = DomainSpec.from_dict(doc["domain"])
    ds = EnsembleDataset(path=path, space=space, domain=domain)
    expected_bytes = int(np.prod(domain.field_shape)) * 4
    for rec in doc["members"]:
        z = np.asarray(rec["z"], dtype=np.float64)
        if z.shape != (space.dim,):
            raise FormatError(
                f"member {rec['id']}: z has length {z.size}, expected {space.dim}"
            )
        if not space.contains(z):
            raise FormatError(f"member {rec['id']}: z outside parameter box")
        fpath = os.path.join(path, rec["file"])
        if not os.path.isfile(fpath):
            raise FormatError(f"member {rec['id']}: file {rec['file']} missing")
        size = os.path.getsize(fpath)
        if size != expected_bytes:
            raise FormatError(
                f"member {rec['id']}: file is {size} bytes, expected {expected_bytes}"
            )
        ds.members.append(Member(id=int(rec["id"]), z=z, file=rec["file"]))
    return ds


def write_member(dataset_path: str, z, fld) -> int:
    """Append one member; the manifest update is atomic and lock-guarded."""
    manifest, lock = _manifest_paths(dataset_path)
    z = np.asarray(z, dtype=np.float64)
    fld = np.asarray(fld)
    with FileLock(lock):
        ds = load_manifest(dataset_path)
        if z.shape != (ds.space.dim,) or not ds.space.contains(z):
            raise FormatError("z outside parameter box or wrong length")
        if fld.shape != ds.domain.field_shape:
            raise FormatError(
                f"field shape {fld.shape} != {ds.domain.field_shape}"
            )
        if not np.all(np.isfinite(fld)):
            raise FormatError("field contains non-finite values")
        member_id = max((m.id for m in ds.members), default=-1) + 1
        fname = f"member_{member_id:05d}.f32"
        fpath = os.path.join(dataset_path, fname)
        try:
            fld.astype("<f4").tofile(fpath)
        except OSError as e:
            raise IoError(f"member write failed: {e}") from e
        ds.members.append(Member(id=member_id, z=z, file=fname))
        _write_manifest(ds)
    return member_id
