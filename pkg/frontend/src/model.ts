// Console view model. Holds no authoritative procedure state: everything
// derives from service responses and telemetry frames. Its one hard rule:
// never enable a command the transition table would reject in the phase the
// operator is currently shown.

import type {
  AccessPreview,
  PlanDoc,
  ProcedureEvent,
  TelemetryFrame,
  TransitionTable,
} from "./types.js";

export type NeedleStatus = "pending" | "active" | "done" | "aborted";

export interface PendingCommand {
  cmd: string;
  sentAtTick: number;
  responded: boolean;
}

const LOG_TAIL = 14;

// Commands that also need a client-side precondition beyond the phase row.
// These only ever *further restrict* the table, never widen it.
const EXTRA_GUARDS: Record<string, (m: ConsoleViewModel) => boolean> = {
  select_needle: (m) => m.pendingNeedles().length > 0,
  go_position: (m) => m.selectedNeedle !== null,
  confirm_seed: (m) => m.frame !== null && m.seedsRemaining() > 0,
};

export class ConsoleViewModel {
  table: TransitionTable | null = null;
  frame: TelemetryFrame | null = null;
  plan: PlanDoc | null = null;
  connected = false;
  pending: PendingCommand | null = null;
  selectedNeedle: string | null = null;
  events: ProcedureEvent[] = [];
  lastError: string | null = null;
  preview: AccessPreview | null = null;
  previewTarget: [number, number, number] | null = null;
  droppedFrames = 0;

  applyFrame(f: TelemetryFrame): void {
    this.frame = f;
    this.connected = true;
    if (typeof f.dropped === "number") this.droppedFrames = f.dropped;
    if (f.needle_id) this.selectedNeedle = f.needle_id;
    // A pending command clears once its response arrived AND a newer frame
    // has been displayed, so the operator always sees the effect.
    if (this.pending && this.pending.responded && f.tick > this.pending.sentAtTick) {
      this.pending = null;
    }
  }

  markDisconnected(): void {
    this.connected = false;
  }

  appendEvents(events: ProcedureEvent[]): void {
    for (const ev of events) {
      const last = this.events[this.events.length - 1];
      if (!last || ev.seq > last.seq) this.events.push(ev);
    }
    if (this.events.length > 200) this.events = this.events.slice(-200);
  }

  logTail(): ProcedureEvent[] {
    return this.events.slice(-LOG_TAIL);
  }

  needleStatuses(): Map<string, NeedleStatus> {
    const out = new Map<string, NeedleStatus>();
    for (const n of this.plan?.needles ?? []) out.set(n.id, "pending");
    for (const ev of this.events) {
      if (ev.kind === "needle_summary") {
        out.set(String(ev.data["needle"]), "done");
      }
      if (ev.kind === "rehome") {
        // a rehome aborts whatever needle was active
        const active = this.frame?.needle_id;
        if (active && out.get(active) === "pending") out.set(active, "aborted");
      }
    }
    const active = this.frame?.needle_id;
    if (active && out.get(active) === "pending") out.set(active, "active");
    return out;
  }

  pendingNeedles(): string[] {
    const statuses = this.needleStatuses();
    return [...statuses.entries()]
      .filter(([, s]) => s === "pending" || s === "active")
      .map(([id]) => id);
  }

  seedsRemaining(): number {
    const id = this.frame?.needle_id;
    if (!id) return 0;
    const task = this.plan?.needles?.find((n) => n.id === id);
    if (!task) return 0;
    const placed = this.events.filter(
      (e) => e.kind === "seed" && e.data["needle"] === id,
    ).length;
    return (task.seeds?.length ?? 0) - placed;
  }

  /** Commands whose buttons may be enabled right now. Always a subset of the
   * transition table's accept row for the displayed phase. */
  enabledCommands(): string[] {
    if (!this.connected || !this.table || !this.frame || this.pending) return [];
    const row = this.table.accept[this.frame.phase] ?? [];
    return row.filter((cmd) => {
      const guard = EXTRA_GUARDS[cmd];
      return guard ? guard(this) : true;
    });
  }

  canSubmit(cmd: string): boolean {
    return this.enabledCommands().includes(cmd);
  }

  /** Idempotence guard: a second click while one command is in flight is
   * ignored. Returns false when the submission must not go out. */
  beginCommand(cmd: string): boolean {
    if (this.pending) return false;
    if (!this.canSubmit(cmd)) return false;
    this.pending = { cmd, sentAtTick: this.frame?.tick ?? 0, responded: false };
    this.lastError = null;
    return true;
  }

  completeCommand(ok: boolean, reason?: string): void {
    if (this.pending) this.pending.responded = true;
    if (!ok) this.lastError = reason ?? "rejected";
  }

  abortCommand(transportError: string): void {
    // Transport failure: re-enable input, surface a retry prompt, never
    // silently resubmit.
    this.pending = null;
    this.lastError = `transport failure: ${transportError} (retry manually)`;
  }

  setPreview(target: [number, number, number], preview: AccessPreview): void {
    this.previewTarget = target;
    this.preview = preview;
  }

  clearPreview(): void {
    this.preview = null;
    this.previewTarget = null;
  }

  safetyTripped(): boolean {
    return this.frame?.engagement === "TRIPPED";
  }
}
