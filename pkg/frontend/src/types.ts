/** Wire types for the posterior-exploration server's JSON endpoints. */

/** Feature widget payload for POST /session/{id}/feature. */
export interface FeatureSpecWire {
  /** Disc center in normalized spatial units (x, y), each in [-1, 1]. */
  center: [number, number];
  radius: number;
  /** Normalized time in [-1, 1]. */
  time: number;
  /** Reference configuration in normalized parameter units. */
  z_ref: number[];
  /** Comparison slot: 0 (green) or 1 (blue). */
  label: number;
}

/** Response of POST /session/{id}/field. */
export interface FieldResponse {
  resolution: number;
  /** resolution x resolution rows of output vectors, indexed [y][x]. */
  vectors: number[][][];
}

/** One pairwise (or 1-D) histogram grid as served by GET /marginals. */
export interface WireGrid {
  /** Parameter dimensions (j, k); j === k marks the 1-D case. */
  pair: [number, number];
  resolution: number;
  /** Physical axis ranges, rows of [lo, hi] (one row in the 1-D case). */
  extent: number[][];
  /** Integer counts; number[][] indexed [jBin][kBin], or number[] in 1-D. */
  counts: number[][] | number[];
}

export interface MarginalsResponse {
  label: number;
  count: number;
  accept_rate: number;
  grids: WireGrid[];
}

export interface VarianceResponse {
  label: number;
  resolution: number;
  time: number;
  /** resolution x resolution scalar map, indexed [y][x]. */
  values: number[][];
}

/** Streamed sample batch (the sampler's sink schema). */
export interface SampleBatch {
  phase: "sampling";
  step: number;
  accept_rate: number;
  label: number;
  /** Rows of physical-unit parameter vectors. */
  samples: number[][];
}

export interface BurninEvent {
  event: "burnin";
  step: number;
}

export interface DoneEvent {
  event: "done";
  label: number;
}

export interface CancelledEvent {
  event: "cancelled";
}

export interface ErrorEvent {
  event: "error";
  label: number;
  message: string;
}

export type StreamMessage = SampleBatch | BurninEvent | DoneEvent | CancelledEvent | ErrorEvent;

export function isSampleBatch(msg: StreamMessage): msg is SampleBatch {
  return (msg as SampleBatch).phase === "sampling";
}

/** Parameter box of the served model (client-side mirror). */
export interface ParameterBox {
  lower: number[];
  upper: number[];
}

export function boxDim(box: ParameterBox): number {
  if (box.lower.length !== box.upper.length || box.lower.length === 0) {
    throw new Error("parameter box needs matching, nonempty bounds");
  }
  return box.lower.length;
}
