/** Vector-glyph field view: arrows on a regular grid with an optional
 * scalar background (e.g. an output-variance map behind the reference
 * view).  Rendering is split into a pure layout step that produces the
 * canvas state and a small painter over a minimal 2-D context, so view
 * logic is testable without a browser canvas.
 */

import { scalarColor, cssColor } from "./colors.js";
import type { FieldResponse, VarianceResponse } from "./types.js";

export interface Arrow {
  /** Cell center in unit square coordinates (0..1, x right, y down). */
  x: number;
  y: number;
  /** Unit direction of the vector. */
  dx: number;
  dy: number;
  /** Length in unit-square units, capped at one grid cell. */
  len: number;
}

export interface BackgroundCell {
  x: number;
  y: number;
  size: number;
  color: string;
}

export interface GlyphViewState {
  resolution: number;
  arrows: Arrow[];
  background: BackgroundCell[] | null;
  /** Render problem, when the last payload could not be displayed. */
  error: string | null;
}

function payloadShapeError(field: FieldResponse): string | null {
  const res = field.resolution;
  if (!Array.isArray(field.vectors) || field.vectors.length !== res) {
    return `field payload has ${field.vectors?.length ?? 0} rows, expected ${res}`;
  }
  for (const row of field.vectors) {
    if (!Array.isArray(row) || row.length !== res) {
      return `field payload has a row of ${row?.length ?? 0} cells, expected ${res}`;
    }
    for (const v of row) {
      if (!Array.isArray(v) || v.length < 2) return "field vectors need 2 components";
    }
  }
  return null;
}

/** Lay out arrows and background cells for one field payload. */
export function layoutGlyphs(
  field: FieldResponse,
  variance: VarianceResponse | null = null,
): GlyphViewState {
  const shapeProblem = payloadShapeError(field);
  if (shapeProblem) throw new Error(shapeProblem);
  const res = field.resolution;
  const cell = 1 / res;
  let maxMag = 0;
  for (const row of field.vectors) {
    for (const v of row) {
      const m = Math.hypot(v[0], v[1]);
      if (m > maxMag) maxMag = m;
    }
  }
  const arrows: Arrow[] = [];
  for (let iy = 0; iy < res; iy++) {
    for (let ix = 0; ix < res; ix++) {
      const v = field.vectors[iy][ix];
      const mag = Math.hypot(v[0], v[1]);
      arrows.push({
        x: (ix + 0.5) * cell,
        y: (iy + 0.5) * cell,
        dx: mag > 0 ? v[0] / mag : 0,
        dy: mag > 0 ? v[1] / mag : 0,
        // length proportional to magnitude, the largest filling one cell
        len: maxMag > 0 ? (mag / maxMag) * cell : 0,
      });
    }
  }

  let background: BackgroundCell[] | null = null;
  if (variance) {
    const vres = variance.resolution;
    if (!Array.isArray(variance.values) || variance.values.length !== vres) {
      throw new Error(`variance payload has ${variance.values?.length ?? 0} rows, expected ${vres}`);
    }
    let vmax = 0;
    for (const row of variance.values) for (const v of row) if (v > vmax) vmax = v;
    const vcell = 1 / vres;
    background = [];
    for (let iy = 0; iy < vres; iy++) {
      for (let ix = 0; ix < vres; ix++) {
        const vnorm = vmax > 0 ? variance.values[iy][ix] / vmax : 0;
        background.push({
          x: ix * vcell,
          y: iy * vcell,
          size: vcell,
          color: cssColor(scalarColor(vnorm)),
        });
      }
    }
  }

  return { resolution: res, arrows, background, error: null };
}

/** Holds the last good layout; bad payloads raise a banner and keep it. */
export class GlyphView {
  state: GlyphViewState = { resolution: 0, arrows: [], background: null, error: null };

  update(field: FieldResponse, variance: VarianceResponse | null = null): GlyphViewState {
    try {
      this.state = layoutGlyphs(field, variance);
    } catch (err) {
      this.state = { ...this.state, error: err instanceof Error ? err.message : String(err) };
    }
    return this.state;
  }
}

/** Minimal subset of CanvasRenderingContext2D the painter needs. */
export interface Context2dLike {
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  fillRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  stroke(): void;
  fillText(text: string, x: number, y: number): void;
}

export function paintGlyphView(state: GlyphViewState, ctx: Context2dLike, sizePx: number): void {
  ctx.fillStyle = "#ffffff";
  ctx.fillRect(0, 0, sizePx, sizePx);
  if (state.background) {
    for (const cell of state.background) {
      ctx.fillStyle = cell.color;
      ctx.fillRect(cell.x * sizePx, cell.y * sizePx, cell.size * sizePx + 1, cell.size * sizePx + 1);
    }
  }
  ctx.strokeStyle = "#1a1a1a";
  ctx.lineWidth = 1;
  for (const a of state.arrows) {
    const half = (a.len * sizePx) / 2;
    const cx = a.x * sizePx;
    const cy = a.y * sizePx;
    const tipX = cx + a.dx * half;
    const tipY = cy + a.dy * half;
    ctx.beginPath();
    ctx.moveTo(cx - a.dx * half, cy - a.dy * half);
    ctx.lineTo(tipX, tipY);
    // two short barbs mark the head
    const bx = -a.dx * 0.35 * half;
    const by = -a.dy * 0.35 * half;
    ctx.moveTo(tipX, tipY);
    ctx.lineTo(tipX + bx - by * 0.6, tipY + by + bx * 0.6);
    ctx.moveTo(tipX, tipY);
    ctx.lineTo(tipX + bx + by * 0.6, tipY + by - bx * 0.6);
    ctx.stroke();
  }
  if (state.error) {
    ctx.fillStyle = "#b00020";
    ctx.fillText(state.error, 8, 16);
  }
}
