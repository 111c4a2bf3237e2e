/** Central view state: session, anchor/selected configurations, feature
 * widgets, hover target, and per-label stream phase.
 */

import type { FeatureSpecWire } from "./types.js";

export type StreamPhase = "idle" | "burn_in" | "streaming" | "done" | "failed";

export interface WidgetGeometry {
  /** Disc center in normalized spatial units, kept inside [-1, 1]^2. */
  center: [number, number];
  radius: number;
  /** Normalized time slice the feature reads. */
  time: number;
  /** Comparison slot: 0 renders green, 1 renders blue. */
  label: 0 | 1;
}

export interface HoverTarget {
  /** Grid index into the marginal matrix. */
  gridIndex: number;
  /** Bin indices along the grid's two axes (equal in the 1-D case). */
  bin: [number, number];
}

export const MIN_RADIUS = 0.02;
export const MAX_RADIUS = 1.0;

/** Clamp widget geometry inside the normalized spatial extent. */
export function clampGeometry(geom: WidgetGeometry): WidgetGeometry {
  const radius = Math.min(MAX_RADIUS, Math.max(MIN_RADIUS, geom.radius));
  const clampCoord = (c: number) => Math.min(1, Math.max(-1, c));
  return {
    center: [clampCoord(geom.center[0]), clampCoord(geom.center[1])],
    radius,
    time: Math.min(1, Math.max(-1, geom.time)),
    label: geom.label,
  };
}

export class ViewState {
  sessionId: string | null = null;
  /** Anchor configuration z-hat, physical units. */
  reference: number[];
  /** Configuration shown in the browsing view, physical units. */
  selected: number[];
  activeTime = 0;
  widgets = new Map<0 | 1, WidgetGeometry>();
  hover: HoverTarget | null = null;
  phase: Record<number, StreamPhase> = { 0: "idle", 1: "idle" };
  comparisonMode = false;

  constructor(reference: number[]) {
    this.reference = [...reference];
    this.selected = [...reference];
  }

  setWidget(geom: WidgetGeometry): WidgetGeometry {
    const clamped = clampGeometry(geom);
    this.widgets.set(geom.label, clamped);
    return clamped;
  }

  /** Re-anchor on a configuration; widgets keep their geometry. */
  setReference(z: number[]): void {
    this.reference = [...z];
  }

  setSelected(z: number[]): void {
    this.selected = [...z];
  }

  featurePayload(label: 0 | 1, zRefNormalized: number[]): FeatureSpecWire {
    const w = this.widgets.get(label);
    if (!w) throw new Error(`no widget for label ${label}`);
    return {
      center: [w.center[0], w.center[1]],
      radius: w.radius,
      time: w.time,
      z_ref: [...zRefNormalized],
      label,
    };
  }
}
