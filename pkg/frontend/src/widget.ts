/** Draggable circular feature widget over the reference field view.
 *
 * Pointer interactions mutate geometry locally; the (single) feature
 * submission fires on drag-end only, never mid-drag.  Dragging the disc
 * interior moves the center; dragging near the rim resizes.
 */

import { clampGeometry, type WidgetGeometry } from "./state.js";

export type DragMode = "move" | "resize";

export interface WidgetCallbacks {
  /** Fired once per completed drag with the final geometry. */
  onSubmit: (geom: WidgetGeometry) => void;
  /** Fired on every geometry change, for live redraws. */
  onGeometry?: (geom: WidgetGeometry) => void;
}

/** Distance band around the rim (in normalized units) that grabs resize. */
const RIM_BAND = 0.08;

export class FeatureWidget {
  geometry: WidgetGeometry;
  private callbacks: WidgetCallbacks;
  private drag: { mode: DragMode; offset: [number, number] } | null = null;
  private moved = false;

  constructor(geometry: WidgetGeometry, callbacks: WidgetCallbacks) {
    this.geometry = clampGeometry(geometry);
    this.callbacks = callbacks;
  }

  get dragging(): boolean {
    return this.drag !== null;
  }

  /** Begin a drag at a point in normalized view coordinates. */
  pointerDown(x: number, y: number): boolean {
    const [cx, cy] = this.geometry.center;
    const dist = Math.hypot(x - cx, y - cy);
    if (dist > this.geometry.radius + RIM_BAND) return false;
    const mode: DragMode = Math.abs(dist - this.geometry.radius) <= RIM_BAND ? "resize" : "move";
    this.drag = { mode, offset: [x - cx, y - cy] };
    this.moved = false;
    return true;
  }

  pointerMove(x: number, y: number): void {
    if (!this.drag) return;
    let next: WidgetGeometry;
    if (this.drag.mode === "move") {
      next = clampGeometry({
        ...this.geometry,
        center: [x - this.drag.offset[0], y - this.drag.offset[1]],
      });
    } else {
      const [cx, cy] = this.geometry.center;
      next = clampGeometry({ ...this.geometry, radius: Math.hypot(x - cx, y - cy) });
    }
    if (
      next.center[0] !== this.geometry.center[0] ||
      next.center[1] !== this.geometry.center[1] ||
      next.radius !== this.geometry.radius
    ) {
      this.moved = true;
      this.geometry = next;
      this.callbacks.onGeometry?.(this.geometry);
    }
  }

  /** End the drag; submits the feature exactly once if anything moved. */
  pointerUp(x: number, y: number): void {
    if (!this.drag) return;
    this.pointerMove(x, y);
    const submit = this.moved;
    this.drag = null;
    this.moved = false;
    if (submit) this.callbacks.onSubmit(this.geometry);
  }

  /** Drag aborted (pointer left the view); no submission. */
  cancel(): void {
    this.drag = null;
    this.moved = false;
  }
}
