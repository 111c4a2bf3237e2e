/** HTTP + stream client for the posterior-exploration server.
 *
 * Request/response endpoints go over fetch; per-session streams arrive
 * on a persistent socket.  A dropped socket triggers a marginals resync
 * (server counts replace the client's) before reconnecting, so the
 * progressive view never double-counts or misses batches.
 */

import type {
  FeatureSpecWire,
  FieldResponse,
  MarginalsResponse,
  StreamMessage,
  VarianceResponse,
} from "./types.js";
import { isSampleBatch } from "./types.js";

export interface WebSocketLike {
  onmessage: ((ev: { data: string }) => void) | null;
  onclose: ((ev: unknown) => void) | null;
  onerror: ((ev: unknown) => void) | null;
  onopen: ((ev: unknown) => void) | null;
  close(): void;
}

export interface FetchResponseLike {
  ok: boolean;
  status: number;
  json(): Promise<unknown>;
  text(): Promise<string>;
}

export type FetchLike = (url: string, init?: Record<string, unknown>) => Promise<FetchResponseLike>;

export interface ClientDeps {
  fetchFn?: FetchLike;
  wsFactory?: (url: string) => WebSocketLike;
  /** Delay runner for reconnect backoff; injectable for tests. */
  delay?: (ms: number) => Promise<void>;
}

export interface StreamHandlers {
  onMessage: (msg: StreamMessage) => void;
  /** Server snapshot replacing local state after a dropped socket. */
  onResync?: (snapshot: MarginalsResponse) => void;
  onReconnect?: () => void;
}

export interface StreamHandle {
  close(): void;
}

const RECONNECT_DELAY_MS = 250;

export class SessionClient {
  readonly baseUrl: string;
  sessionId: string | null = null;
  private readonly fetchFn: FetchLike;
  private readonly wsFactory: (url: string) => WebSocketLike;
  private readonly delay: (ms: number) => Promise<void>;
  /** Labels with submitted features, the ones worth resyncing. */
  private readonly activeLabels = new Set<number>();

  constructor(baseUrl: string, deps: ClientDeps = {}) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    this.fetchFn = deps.fetchFn ?? (fetch as unknown as FetchLike);
    this.wsFactory =
      deps.wsFactory ??
      ((url: string) => new WebSocket(url) as unknown as WebSocketLike);
    this.delay = deps.delay ?? ((ms) => new Promise((resolve) => setTimeout(resolve, ms)));
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const res = await this.fetchFn(`${this.baseUrl}${path}`, {
      method,
      headers: { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!res.ok) {
      const detail = await res.text().catch(() => "");
      throw new Error(`${method} ${path} failed with ${res.status}: ${detail}`);
    }
    return (await res.json()) as T;
  }

  private sid(): string {
    if (!this.sessionId) throw new Error("no session: call createSession first");
    return this.sessionId;
  }

  async createSession(): Promise<string> {
    const out = await this.request<{ id: string }>("POST", "/session");
    this.sessionId = out.id;
    return out.id;
  }

  async evalField(z: number[], time: number, resolution = 32): Promise<FieldResponse> {
    return this.request("POST", `/session/${this.sid()}/field`, { z, time, resolution });
  }

  async submitFeature(spec: FeatureSpecWire): Promise<{ run: number; label: number }> {
    const out = await this.request<{ run: number; label: number }>(
      "POST",
      `/session/${this.sid()}/feature`,
      spec,
    );
    this.activeLabels.add(spec.label);
    return out;
  }

  async marginals(label: number, res = 32): Promise<MarginalsResponse> {
    return this.request("GET", `/session/${this.sid()}/marginals?label=${label}&res=${res}`);
  }

  async variance(label: number, res = 32, time = 0): Promise<VarianceResponse> {
    return this.request(
      "GET",
      `/session/${this.sid()}/variance?label=${label}&res=${res}&time=${time}`,
    );
  }

  streamUrl(): string {
    const ws = this.baseUrl.replace(/^http/, "ws");
    return `${ws}/session/${this.sid()}/stream`;
  }

  /** Open the session stream; reconnects (after a resync) until closed. */
  openStream(handlers: StreamHandlers, resolution = 32): StreamHandle {
    let closed = false;
    let socket: WebSocketLike | null = null;

    const connect = () => {
      if (closed) return;
      socket = this.wsFactory(this.streamUrl());
      socket.onmessage = (ev) => {
        const msg = JSON.parse(ev.data) as StreamMessage;
        if (isSampleBatch(msg)) this.activeLabels.add(msg.label);
        handlers.onMessage(msg);
      };
      socket.onclose = () => {
        if (closed) return;
        void this.recover(handlers, resolution).then(() => {
          if (closed) return;
          handlers.onReconnect?.();
          connect();
        });
      };
      socket.onerror = () => {
        /* close always follows an errored socket */
      };
    };

    connect();
    return {
      close: () => {
        closed = true;
        socket?.close();
      },
    };
  }

  private async recover(handlers: StreamHandlers, resolution: number): Promise<void> {
    await this.delay(RECONNECT_DELAY_MS);
    for (const label of this.activeLabels) {
      try {
        const snapshot = await this.marginals(label, resolution);
        handlers.onResync?.(snapshot);
      } catch {
        // no samples accumulated yet for this label: nothing to resync
      }
    }
  }
}
