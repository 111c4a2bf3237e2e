/** Client-side histogram accumulation with bit-exact server parity.
 *
 * The server bins with uniform edges over the physical parameter box,
 * drops out-of-box rows, and counts the upper boundary into the last
 * bin.  The functions here reproduce its arithmetic operation for
 * operation (both sides compute in IEEE-754 binary64), so counts
 * accumulated from streamed batches equal a server-side snapshot of the
 * same samples exactly, integer for integer.
 */

import type { MarginalsResponse, ParameterBox, WireGrid } from "./types.js";
import { boxDim } from "./types.js";

/** Uniform bin edges: edges[i] = lo + i * ((hi - lo) / n), last pinned to hi. */
export function binEdges(lo: number, hi: number, n: number): Float64Array {
  if (!(n >= 2)) throw new Error("resolution must be >= 2");
  if (!(hi > lo)) throw new Error("bin range must have hi > lo");
  const step = (hi - lo) / n;
  const edges = new Float64Array(n + 1);
  for (let i = 0; i < n; i++) edges[i] = i * step + lo;
  edges[n] = hi;
  return edges;
}

/**
 * Bin index of x: the i with edges[i] <= x < edges[i+1], the top edge
 * counting into the last bin.  Returns -1 for out-of-range or NaN.
 */
export function binIndex(x: number, edges: Float64Array): number {
  const n = edges.length - 1;
  if (!(x >= edges[0] && x <= edges[n])) return -1;
  if (x === edges[n]) return n - 1;
  // first index with edges[m] > x, minus one
  let a = 0;
  let b = n + 1;
  while (a < b) {
    const m = (a + b) >> 1;
    if (x < edges[m]) b = m;
    else a = m + 1;
  }
  return a - 1;
}

/** Unordered dimension pairs in lexicographic order; [[0, 0]] when d = 1. */
export function dimPairs(d: number): Array<[number, number]> {
  if (d === 1) return [[0, 0]];
  const pairs: Array<[number, number]> = [];
  for (let j = 0; j < d; j++) for (let k = j + 1; k < d; k++) pairs.push([j, k]);
  return pairs;
}

export interface GridState {
  pair: [number, number];
  resolution: number;
  /** Row-major (resolution x resolution) counts, or length-resolution in 1-D. */
  counts: Int32Array;
  edgesJ: Float64Array;
  edgesK: Float64Array;
}

/** Accumulates streamed sample batches into all pairwise marginal grids. */
export class MarginalAccumulator {
  readonly box: ParameterBox;
  readonly resolution: number;
  readonly grids: GridState[];
  private totalRows = 0;

  constructor(box: ParameterBox, resolution: number) {
    const d = boxDim(box);
    this.box = box;
    this.resolution = resolution;
    this.grids = dimPairs(d).map(([j, k]) => ({
      pair: [j, k] as [number, number],
      resolution,
      counts: new Int32Array(j === k ? resolution : resolution * resolution),
      edgesJ: binEdges(box.lower[j], box.upper[j], resolution),
      edgesK: binEdges(box.lower[k], box.upper[k], resolution),
    }));
  }

  get count(): number {
    return this.totalRows;
  }

  addBatch(samples: number[][]): void {
    const res = this.resolution;
    const { lower, upper } = this.box;
    const d = lower.length;
    for (const row of samples) {
      // mirror the stream contract: a row leaves the set when any
      // coordinate leaves the box (NaN counts as outside)
      let inside = row.length >= d;
      for (let i = 0; inside && i < d; i++) {
        if (!(row[i] >= lower[i] && row[i] <= upper[i])) inside = false;
      }
      if (!inside) continue;
      for (const g of this.grids) {
        const [j, k] = g.pair;
        if (j === k) {
          const a = binIndex(row[j], g.edgesJ);
          if (a >= 0) g.counts[a] += 1;
          continue;
        }
        const a = binIndex(row[j], g.edgesJ);
        const b = binIndex(row[k], g.edgesK);
        if (a >= 0 && b >= 0) g.counts[a * res + b] += 1;
      }
      this.totalRows += 1;
    }
  }

  reset(): void {
    for (const g of this.grids) g.counts.fill(0);
    this.totalRows = 0;
  }

  /** Replace local counts with a server snapshot (stream resync). */
  resync(snapshot: MarginalsResponse): void {
    if (snapshot.grids.length !== this.grids.length) {
      throw new Error("snapshot grid layout does not match the parameter box");
    }
    for (let i = 0; i < this.grids.length; i++) {
      const g = this.grids[i];
      const wire = snapshot.grids[i];
      if (wire.pair[0] !== g.pair[0] || wire.pair[1] !== g.pair[1] || wire.resolution !== g.resolution) {
        throw new Error("snapshot grid layout does not match the parameter box");
      }
      g.counts.set(flattenCounts(wire.counts));
    }
    this.totalRows = snapshot.count;
  }

  /** Wire-shaped grids, directly comparable with a GET /marginals payload. */
  toWire(): WireGrid[] {
    return this.grids.map((g) => ({
      pair: [g.pair[0], g.pair[1]],
      resolution: g.resolution,
      extent:
        g.pair[0] === g.pair[1]
          ? [[this.box.lower[g.pair[0]], this.box.upper[g.pair[0]]]]
          : [
              [this.box.lower[g.pair[0]], this.box.upper[g.pair[0]]],
              [this.box.lower[g.pair[1]], this.box.upper[g.pair[1]]],
            ],
      counts:
        g.pair[0] === g.pair[1]
          ? Array.from(g.counts)
          : chunkRows(g.counts, g.resolution),
    }));
  }
}

function flattenCounts(counts: number[][] | number[]): number[] {
  if (counts.length === 0) return [];
  return Array.isArray(counts[0]) ? (counts as number[][]).flat() : (counts as number[]);
}

function chunkRows(flat: Int32Array, res: number): number[][] {
  const rows: number[][] = [];
  for (let a = 0; a < res; a++) rows.push(Array.from(flat.subarray(a * res, (a + 1) * res)));
  return rows;
}

/** Physical bin-center value along one grid axis. */
export function binCenter(edges: Float64Array, i: number): number {
  return (edges[i] + edges[i + 1]) / 2;
}

/** Per-grid max-normalized densities in [0, 1] (peak of each grid = 1). */
export function normalizeCounts(counts: Int32Array): Float64Array {
  let peak = 0;
  for (const c of counts) if (c > peak) peak = c;
  const out = new Float64Array(counts.length);
  if (peak > 0) for (let i = 0; i < counts.length; i++) out[i] = counts[i] / peak;
  return out;
}
