/** Application controller: wires the session client, view state, glyph
 * views, feature widgets, and the progressive heatmap matrix.
 *
 * Interaction contract:
 *  - drag-end on a feature widget submits that feature exactly once;
 *  - hovering a heatmap bin browses the field at the bin-center
 *    configuration (other dimensions pinned at the reference anchor),
 *    debounced at 50 ms with last-write-wins on responses;
 *  - clicking a bin re-anchors the reference; widgets keep geometry;
 *  - a finished run fetches the output-variance map as the reference
 *    view's background.
 */

import { SessionClient } from "./client.js";
import { GlyphView } from "./glyphs.js";
import { HeatmapMatrix, type FrameScheduler, type GridRenderModel } from "./heatmaps.js";
import { ViewState, type WidgetGeometry } from "./state.js";
import { FeatureWidget } from "./widget.js";
import type {
  FieldResponse,
  MarginalsResponse,
  ParameterBox,
  StreamMessage,
  VarianceResponse,
} from "./types.js";
import { isSampleBatch } from "./types.js";

export const HOVER_DEBOUNCE_MS = 50;

export interface AppConfig {
  box: ParameterBox;
  /** Initial anchor configuration, physical units. */
  reference: number[];
  heatmapResolution?: number;
  glyphResolution?: number;
}

export interface AppCallbacks {
  onHeatmaps?: (models: GridRenderModel[]) => void;
  onReferenceView?: (view: GlyphView) => void;
  onSelectedView?: (view: GlyphView) => void;
  onPhase?: (label: number, phase: string) => void;
}

interface TimerDeps {
  setTimer?: (cb: () => void, ms: number) => unknown;
  clearTimer?: (handle: unknown) => void;
  schedule?: FrameScheduler;
}

export class App {
  readonly state: ViewState;
  readonly heatmaps: HeatmapMatrix;
  readonly referenceView = new GlyphView();
  readonly selectedView = new GlyphView();
  readonly widgets = new Map<0 | 1, FeatureWidget>();
  submissions = 0;

  private readonly client: SessionClient;
  private readonly config: Required<AppConfig>;
  private readonly callbacks: AppCallbacks;
  private readonly setTimer: (cb: () => void, ms: number) => unknown;
  private readonly clearTimer: (handle: unknown) => void;
  private hoverTimer: unknown = null;
  private selectSeq = 0;
  private referenceField: FieldResponse | null = null;
  private referenceVariance: VarianceResponse | null = null;

  constructor(
    client: SessionClient,
    config: AppConfig,
    callbacks: AppCallbacks = {},
    timers: TimerDeps = {},
  ) {
    this.client = client;
    this.config = {
      box: config.box,
      reference: config.reference,
      heatmapResolution: config.heatmapResolution ?? 32,
      glyphResolution: config.glyphResolution ?? 32,
    };
    this.callbacks = callbacks;
    this.setTimer = timers.setTimer ?? ((cb, ms) => setTimeout(cb, ms));
    this.clearTimer = timers.clearTimer ?? ((h) => clearTimeout(h as Parameters<typeof clearTimeout>[0]));
    this.state = new ViewState(config.reference);
    this.heatmaps = new HeatmapMatrix(
      config.box,
      this.config.heatmapResolution,
      { onRedraw: (models) => this.callbacks.onHeatmaps?.(models) },
      timers.schedule,
    );
  }

  /** Normalized parameter coordinates of a physical configuration. */
  normalize(z: number[]): number[] {
    const { lower, upper } = this.config.box;
    return z.map((v, i) => (2 * (v - lower[i])) / (upper[i] - lower[i]) - 1);
  }

  addWidget(geometry: WidgetGeometry): FeatureWidget {
    const clamped = this.state.setWidget(geometry);
    const widget = new FeatureWidget(clamped, {
      onSubmit: (geom) => void this.submitWidget(geom),
      onGeometry: (geom) => this.state.setWidget(geom),
    });
    this.widgets.set(geometry.label, widget);
    return widget;
  }

  async submitWidget(geom: WidgetGeometry): Promise<void> {
    this.state.setWidget(geom);
    const payload = this.state.featurePayload(geom.label, this.normalize(this.state.reference));
    this.submissions += 1;
    this.state.phase[geom.label] = "burn_in";
    this.callbacks.onPhase?.(geom.label, "burn_in");
    await this.client.submitFeature(payload);
  }

  handleStreamMessage(msg: StreamMessage): void {
    if (isSampleBatch(msg)) {
      this.state.phase[msg.label] = "streaming";
      this.heatmaps.ingest(msg);
      return;
    }
    switch (msg.event) {
      case "burnin":
        return;
      case "done":
        this.state.phase[msg.label] = "done";
        this.callbacks.onPhase?.(msg.label, "done");
        void this.fetchVariance(msg.label);
        return;
      case "cancelled":
        return;
      case "error":
        this.state.phase[msg.label] = "failed";
        this.callbacks.onPhase?.(msg.label, "failed");
        return;
    }
  }

  handleResync(snapshot: MarginalsResponse): void {
    this.heatmaps.resync(snapshot.label, snapshot);
  }

  /** Hover a heatmap bin: debounced browse of that bin's configuration. */
  hoverBin(gridIndex: number, bin: [number, number]): void {
    this.state.hover = { gridIndex, bin };
    if (this.hoverTimer !== null) this.clearTimer(this.hoverTimer);
    this.hoverTimer = this.setTimer(() => {
      this.hoverTimer = null;
      const z = this.heatmaps.binZ(gridIndex, bin, this.state.reference);
      void this.browse(z);
    }, HOVER_DEBOUNCE_MS);
  }

  /** Click a heatmap bin: the bin configuration becomes the anchor. */
  clickBin(gridIndex: number, bin: [number, number]): void {
    const z = this.heatmaps.binZ(gridIndex, bin, this.state.reference);
    this.state.setReference(z);
    void this.refreshReference();
  }

  /** Fetch the field at z into the selected view; stale replies lose. */
  async browse(z: number[]): Promise<void> {
    this.state.setSelected(z);
    const seq = ++this.selectSeq;
    const field = await this.client.evalField(z, this.state.activeTime, this.config.glyphResolution);
    if (seq !== this.selectSeq) return;
    this.selectedView.update(field);
    this.callbacks.onSelectedView?.(this.selectedView);
  }

  async refreshReference(): Promise<void> {
    this.referenceField = await this.client.evalField(
      this.state.reference,
      this.state.activeTime,
      this.config.glyphResolution,
    );
    this.referenceView.update(this.referenceField, this.referenceVariance);
    this.callbacks.onReferenceView?.(this.referenceView);
  }

  private async fetchVariance(label: number): Promise<void> {
    this.referenceVariance = await this.client.variance(
      label,
      this.config.glyphResolution,
      this.state.activeTime,
    );
    if (this.referenceField) {
      this.referenceView.update(this.referenceField, this.referenceVariance);
      this.callbacks.onReferenceView?.(this.referenceView);
    }
  }

  setComparisonMode(on: boolean): void {
    this.state.comparisonMode = on;
    this.heatmaps.comparisonMode = on;
    this.callbacks.onHeatmaps?.(this.heatmaps.render(this.state.reference, this.state.selected));
  }

  renderHeatmaps(): GridRenderModel[] {
    return this.heatmaps.render(this.state.reference, this.state.selected);
  }
}
