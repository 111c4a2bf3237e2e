/** Browser entry: binds the controller to the page's canvases and
 * pointer events.  All interaction logic lives in the imported modules;
 * this file only translates DOM events into controller calls.
 */

import { App, type AppConfig } from "./app.js";
import { SessionClient } from "./client.js";
import { paintGlyphView, type Context2dLike } from "./glyphs.js";
import type { GridRenderModel } from "./heatmaps.js";

interface PageConfig extends AppConfig {
  serverUrl: string;
}

declare global {
  interface Window {
    PARASCOPE_CONFIG?: PageConfig;
  }
}

function canvasAndCtx(id: string): [HTMLCanvasElement, CanvasRenderingContext2D] {
  const canvas = document.getElementById(id) as HTMLCanvasElement | null;
  if (!canvas) throw new Error(`missing canvas #${id}`);
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error(`no 2d context on #${id}`);
  return [canvas, ctx];
}

function drawHeatmaps(models: GridRenderModel[], canvas: HTMLCanvasElement, ctx: CanvasRenderingContext2D): void {
  const n = models.length;
  const cols = Math.ceil(Math.sqrt(n));
  const tile = Math.floor(canvas.width / cols);
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  models.forEach((m, i) => {
    const ox = (i % cols) * tile;
    const oy = Math.floor(i / cols) * tile;
    const res = m.resolution;
    const cell = (tile - 8) / res;
    const oneD = m.pair[0] === m.pair[1];
    for (let a = 0; a < res; a++) {
      for (let b = 0; b < (oneD ? 1 : res); b++) {
        ctx.fillStyle = m.cells[oneD ? a : a * res + b];
        ctx.fillRect(ox + 4 + a * cell, oy + 4 + b * cell, cell + 1, oneD ? tile - 8 : cell + 1);
      }
    }
    for (const h of m.highlights) {
      ctx.strokeStyle = h.color;
      ctx.lineWidth = 2;
      ctx.strokeRect(ox + 4 + h.bin[0] * cell, oy + 4 + (oneD ? 0 : h.bin[1] * cell), cell, oneD ? tile - 8 : cell);
    }
  });
}

export async function start(): Promise<void> {
  const config = window.PARASCOPE_CONFIG;
  if (!config) throw new Error("window.PARASCOPE_CONFIG missing");
  const client = new SessionClient(config.serverUrl);
  await client.createSession();

  const [refCanvas, refCtx] = canvasAndCtx("reference-view");
  const [selCanvas, selCtx] = canvasAndCtx("selected-view");
  const [heatCanvas, heatCtx] = canvasAndCtx("heatmap-matrix");

  const app = new App(client, config, {
    onHeatmaps: (models) => drawHeatmaps(models, heatCanvas, heatCtx),
    onReferenceView: (view) => paintGlyphView(view.state, refCtx as Context2dLike, refCanvas.width),
    onSelectedView: (view) => paintGlyphView(view.state, selCtx as Context2dLike, selCanvas.width),
  });

  client.openStream({
    onMessage: (msg) => app.handleStreamMessage(msg),
    onResync: (snapshot) => app.handleResync(snapshot),
  });

  const widget = app.addWidget({ center: [0, 0], radius: 0.3, time: 0, label: 0 });
  const toView = (ev: PointerEvent): [number, number] => {
    const r = refCanvas.getBoundingClientRect();
    return [(2 * (ev.clientX - r.left)) / r.width - 1, (2 * (ev.clientY - r.top)) / r.height - 1];
  };
  refCanvas.addEventListener("pointerdown", (ev) => {
    const [x, y] = toView(ev);
    if (widget.pointerDown(x, y)) refCanvas.setPointerCapture(ev.pointerId);
  });
  refCanvas.addEventListener("pointermove", (ev) => {
    const [x, y] = toView(ev);
    widget.pointerMove(x, y);
    if (widget.dragging) void app.refreshReference();
  });
  refCanvas.addEventListener("pointerup", (ev) => {
    const [x, y] = toView(ev);
    widget.pointerUp(x, y);
  });

  const binFromEvent = (ev: MouseEvent): { grid: number; bin: [number, number] } | null => {
    const r = heatCanvas.getBoundingClientRect();
    const models = app.renderHeatmaps();
    const cols = Math.ceil(Math.sqrt(models.length));
    const tile = Math.floor(heatCanvas.width / cols);
    const px = ((ev.clientX - r.left) * heatCanvas.width) / r.width;
    const py = ((ev.clientY - r.top) * heatCanvas.height) / r.height;
    const grid = Math.floor(px / tile) + Math.floor(py / tile) * cols;
    if (grid >= models.length) return null;
    const res = models[grid].resolution;
    const cell = (tile - 8) / res;
    const a = Math.floor((px - (grid % cols) * tile - 4) / cell);
    const b = Math.floor((py - Math.floor(grid / cols) * tile - 4) / cell);
    if (a < 0 || a >= res || b < 0 || b >= res) return null;
    return { grid, bin: models[grid].pair[0] === models[grid].pair[1] ? [a, a] : [a, b] };
  };
  heatCanvas.addEventListener("mousemove", (ev) => {
    const hit = binFromEvent(ev);
    if (hit) app.hoverBin(hit.grid, hit.bin);
  });
  heatCanvas.addEventListener("click", (ev) => {
    const hit = binFromEvent(ev);
    if (hit) app.clickBin(hit.grid, hit.bin);
  });

  const compareToggle = document.getElementById("comparison-toggle") as HTMLInputElement | null;
  compareToggle?.addEventListener("change", () => app.setComparisonMode(compareToggle.checked));

  await app.refreshReference();
}

if (typeof window !== "undefined" && window.PARASCOPE_CONFIG) {
  void start();
}
