/** Progressive matrix of pairwise marginal heatmaps.
 *
 * Streams accumulate into client-side bins (bit-compatible with the
 * server's counts); redraws are coalesced to at most one per animation
 * frame.  Hovering a bin browses the field at that bin's configuration;
 * clicking re-anchors the reference.
 */

import { MarginalAccumulator, binCenter, binIndex, normalizeCounts } from "./binning.js";
import { composeBivariate, cssColor, monoGreen, type Rgb } from "./colors.js";
import type { ParameterBox, SampleBatch } from "./types.js";

export interface CellHighlight {
  gridIndex: number;
  bin: [number, number];
  color: "black" | "red";
}

export interface GridRenderModel {
  pair: [number, number];
  resolution: number;
  /** Row-major CSS colors, indexed [jBin][kBin] ([bin] in 1-D). */
  cells: string[];
  highlights: CellHighlight[];
}

export type FrameScheduler = (cb: () => void) => void;

export interface HeatmapCallbacks {
  /** Repaint request, coalesced to one per frame. */
  onRedraw: (models: GridRenderModel[]) => void;
}

export class HeatmapMatrix {
  readonly accumulators: [MarginalAccumulator, MarginalAccumulator];
  comparisonMode = false;
  private readonly schedule: FrameScheduler;
  private readonly callbacks: HeatmapCallbacks;
  private framePending = false;
  redrawCount = 0;

  constructor(
    box: ParameterBox,
    resolution: number,
    callbacks: HeatmapCallbacks,
    schedule: FrameScheduler = (cb) =>
      typeof requestAnimationFrame === "function" ? requestAnimationFrame(() => cb()) : cb(),
  ) {
    this.accumulators = [
      new MarginalAccumulator(box, resolution),
      new MarginalAccumulator(box, resolution),
    ];
    this.callbacks = callbacks;
    this.schedule = schedule;
  }

  /** Accumulate one streamed batch and coalesce a redraw. */
  ingest(batch: SampleBatch): void {
    const acc = this.accumulators[batch.label === 1 ? 1 : 0];
    acc.addBatch(batch.samples);
    if (this.framePending) return;
    this.framePending = true;
    this.schedule(() => {
      this.framePending = false;
      this.redrawCount += 1;
      this.callbacks.onRedraw(this.render());
    });
  }

  /** Replace one label's counts from a server snapshot (resync). */
  resync(label: number, snapshot: Parameters<MarginalAccumulator["resync"]>[0]): void {
    this.accumulators[label === 1 ? 1 : 0].resync(snapshot);
  }

  /**
   * Full configuration for a bin: displayed dimensions take the bin's
   * center values, all others stay at the reference anchor.
   */
  binZ(gridIndex: number, bin: [number, number], reference: number[]): number[] {
    const g = this.accumulators[0].grids[gridIndex];
    if (!g) throw new Error(`no grid at index ${gridIndex}`);
    const z = [...reference];
    const [j, k] = g.pair;
    z[j] = binCenter(g.edgesJ, bin[0]);
    if (k !== j) z[k] = binCenter(g.edgesK, bin[1]);
    return z;
  }

  /** Render model for every grid; comparison composes both labels. */
  render(reference: number[] | null = null, selected: number[] | null = null): GridRenderModel[] {
    const [acc0, acc1] = this.accumulators;
    return acc0.grids.map((g, gi) => {
      const a = normalizeCounts(g.counts);
      const b = this.comparisonMode ? normalizeCounts(acc1.grids[gi].counts) : null;
      const cells = new Array<string>(a.length);
      for (let i = 0; i < a.length; i++) {
        const color: Rgb = b ? composeBivariate(a[i], b[i]) : monoGreen(a[i]);
        cells[i] = cssColor(color);
      }
      const highlights: CellHighlight[] = [];
      const mark = (z: number[] | null, color: "black" | "red") => {
        if (!z) return;
        const [j, k] = g.pair;
        const bj = binIndex(z[j], g.edgesJ);
        const bk = j === k ? bj : binIndex(z[k], g.edgesK);
        if (bj >= 0 && bk >= 0) highlights.push({ gridIndex: gi, bin: [bj, bk], color });
      };
      mark(reference, "black");
      mark(selected, "red");
      return { pair: g.pair, resolution: g.resolution, cells, highlights };
    });
  }
}
