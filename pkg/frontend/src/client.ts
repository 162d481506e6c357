// Typed client for the control service. Talks only to the documented
// endpoints: /state, /command, /telemetry, /plan, /log, /transitions, /access.

import type {
  AccessPreview,
  CommandResponse,
  PlanDoc,
  ProcedureEvent,
  TelemetryFrame,
  TransitionTable,
} from "./types.js";

export async function* ndjsonLines(
  body: ReadableStream<Uint8Array>,
): AsyncGenerator<unknown> {
  const reader = body.getReader();
  const decoder = new TextDecoder();
  let buffer = "";
  try {
    for (;;) {
      const { done, value } = await reader.read();
      if (done) break;
      buffer += decoder.decode(value, { stream: true });
      let nl;
      while ((nl = buffer.indexOf("\n")) >= 0) {
        const line = buffer.slice(0, nl).trim();
        buffer = buffer.slice(nl + 1);
        if (line) yield JSON.parse(line);
      }
    }
  } finally {
    reader.releaseLock();
  }
}

export class ServiceClient {
  private nextId = 1;

  constructor(readonly base: string) {}

  private async getJson<T>(path: string): Promise<T> {
    const res = await fetch(this.base + path);
    if (!res.ok && res.status !== 404) {
      throw new Error(`GET ${path} -> ${res.status}`);
    }
    return (await res.json()) as T;
  }

  async state(): Promise<TelemetryFrame> {
    return this.getJson<TelemetryFrame>("/state");
  }

  async command(cmd: string, args: Record<string, unknown> = {}): Promise<CommandResponse> {
    const res = await fetch(this.base + "/command", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ id: this.nextId++, cmd, args }),
    });
    if (res.status === 400) {
      const err = (await res.json()) as { error: string };
      throw new Error(`malformed command: ${err.error}`);
    }
    return (await res.json()) as CommandResponse;
  }

  async plan(): Promise<PlanDoc | null> {
    const res = await fetch(this.base + "/plan");
    if (res.status === 404) return null;
    return (await res.json()) as PlanDoc;
  }

  async transitions(): Promise<TransitionTable> {
    return this.getJson<TransitionTable>("/transitions");
  }

  async log(): Promise<ProcedureEvent[]> {
    const res = await fetch(this.base + "/log");
    const text = await res.text();
    return text
      .split("\n")
      .filter((l) => l.trim())
      .map((l) => JSON.parse(l) as ProcedureEvent);
  }

  async accessPreview(x: number, y: number, z: number, minClearance = 0.5): Promise<AccessPreview> {
    const q = `x=${x}&y=${y}&z=${z}&min_clearance=${minClearance}`;
    return this.getJson<AccessPreview>(`/access?${q}`);
  }

  /**
   * Subscribe to the telemetry stream. Returns a stop function. onError is
   * called once when the stream drops (disconnection handling is the
   * caller's job).
   */
  telemetry(onFrame: (f: TelemetryFrame) => void, onError?: (e: unknown) => void): () => void {
    const controller = new AbortController();
    (async () => {
      try {
        const res = await fetch(this.base + "/telemetry", { signal: controller.signal });
        if (!res.body) throw new Error("no stream body");
        for await (const line of ndjsonLines(res.body)) {
          onFrame(line as TelemetryFrame);
        }
        onError?.(new Error("telemetry stream ended"));
      } catch (e) {
        if (!controller.signal.aborted) onError?.(e);
      }
    })();
    return () => controller.abort();
  }
}
