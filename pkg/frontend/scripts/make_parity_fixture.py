"""Generate the client/server binning parity fixture.

Streams of sample batches are drawn for three parameter boxes (d = 1, 2,
3) and the reference counts are produced by the server's own binning
code, so the TypeScript accumulator can be checked for exact integer
parity.  Awkward values (box corners, points exactly on interior bin
edges, out-of-box rows) are mixed in deliberately.

Run from the repository root:
    python3 frontend/scripts/make_parity_fixture.py
"""

import json
import pathlib
import sys

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[2] / "src"))

from parascope.binning import marginal_matrix
from parascope.ensemble import ParameterSpace

OUT = pathlib.Path(__file__).resolve().parents[1] / "test" / "fixtures" / "parity.json"

CASES = [
    ("viscosity-like-1d", ParameterSpace([0.0], [3.0], ("nu",)), 25),
    ("vortex-like-2d", ParameterSpace([0.4, 0.3], [1.0, 0.7], ("cx", "cy")), 32),
    ("cube-3d", ParameterSpace([-1.0, 0.0, 2.0], [1.0, 5.0, 2.5], ("a", "b", "c")), 8),
]


def awkward_rows(space, resolution, rng):
    """Rows on corners, exact interior edges, and just outside the box."""
    lo, hi = space.lower, space.upper
    d = lo.size
    rows = [lo.copy(), hi.copy(), (lo + hi) / 2]
    # exact interior bin edges, as the server computes them
    for axis in range(d):
        edges = np.linspace(lo[axis], hi[axis], resolution + 1)
        for e in (edges[1], edges[resolution // 2], edges[-2]):
            r = lo + rng.uniform(0.1, 0.9, size=d) * (hi - lo)
            r[axis] = e
            rows.append(r)
    # out-of-box rows, dropped by both sides
    rows.append(hi + 0.01 * (hi - lo))
    rows.append(lo - 0.01 * (hi - lo))
    r = (lo + hi) / 2
    r[0] = np.nan
    rows.append(r)
    return rows


def main() -> None:
    rng = np.random.default_rng(20240817)
    fixture = {"cases": []}
    for name, space, resolution in CASES:
        lo, hi = space.lower, space.upper
        d = lo.size
        batches = []
        for _ in range(20):
            n = int(rng.integers(5, 40))
            block = lo + rng.uniform(-0.05, 1.05, size=(n, d)) * (hi - lo)
            batches.append(block.tolist())
        batches.append([list(map(float, r)) for r in awkward_rows(space, resolution, rng)])
        merged = np.concatenate([np.asarray(b) for b in batches])
        inside = np.all((merged >= lo) & (merged <= hi), axis=1)
        grids = marginal_matrix(merged[inside], space, resolution)
        # strict JSON has no NaN literal; tests decode null back to NaN
        wire_batches = [
            [[None if v != v else v for v in row] for row in batch] for batch in batches
        ]
        fixture["cases"].append(
            {
                "name": name,
                "box": {"lower": lo.tolist(), "upper": hi.tolist()},
                "resolution": resolution,
                "batches": wire_batches,
                "expected": {
                    "label": 0,
                    "count": int(inside.sum()),
                    "accept_rate": 1.0,
                    "grids": [g.to_wire() for g in grids],
                },
            }
        )
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(fixture))
    sizes = [len(c["batches"]) for c in fixture["cases"]]
    print(f"wrote {OUT} ({OUT.stat().st_size} bytes, batches per case: {sizes})")


if __name__ == "__main__":
    main()
