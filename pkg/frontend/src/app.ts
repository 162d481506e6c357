// Console bootstrap: one ordered update queue drives the view model; all
// rendering happens from the model. Command buttons are generated from the
// service's transition table, so nothing can be clicked that the table
// rejects in the displayed phase.

import { ServiceClient } from "./client.js";
import { ConsoleViewModel } from "./model.js";
import { drawFaceView, drawForceGauge, drawSagittalView } from "./views.js";
import type { TelemetryFrame } from "./types.js";

const COMMAND_ARG_PROMPTS: Record<string, () => Record<string, unknown> | null> = {
  select_needle: () => {
    const id = window.prompt("Needle id to select:");
    return id ? { id } : null;
  },
  set_threshold: () => {
    const v = window.prompt("Release threshold (N):", "8.0");
    return v ? { newtons: Number(v) } : null;
  },
  apply_shift: () => {
    const v = window.prompt("Shift dx,dy,dz (mm):", "0,0,0");
    if (!v) return null;
    const parts = v.split(",").map(Number);
    return parts.length === 3 && parts.every((c) => isFinite(c)) ? { offset: parts } : null;
  },
  manual_retract: () => {
    const v = window.prompt("Manual retract (mm):", "10");
    return v ? { mm: Number(v) } : null;
  },
  go_insert: () => ({}),
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

export function startConsole(base: string): void {
  const client = new ServiceClient(base);
  const model = new ConsoleViewModel();

  const faceCanvas = el<HTMLCanvasElement>("face-view");
  const sagittalCanvas = el<HTMLCanvasElement>("sagittal-view");
  const gaugeCanvas = el<HTMLCanvasElement>("force-gauge");
  const phaseEl = el<HTMLDivElement>("phase");
  const buttonsEl = el<HTMLDivElement>("buttons");
  const logEl = el<HTMLPreElement>("log-tail");
  const bannerEl = el<HTMLDivElement>("banner");
  const safetyEl = el<HTMLDivElement>("safety-banner");
  const statusEl = el<HTMLDivElement>("status-line");

  const buttons = new Map<string, HTMLButtonElement>();
  const safetyButtons = new Map<string, HTMLButtonElement>();

  // Serialized update queue: telemetry frames and command responses merge
  // through here so the model never sees interleaved partial updates.
  const queue: Array<() => Promise<void> | void> = [];
  let draining = false;
  function enqueue(task: () => Promise<void> | void): void {
    queue.push(task);
    if (!draining) void drain();
  }
  async function drain(): Promise<void> {
    draining = true;
    while (queue.length) {
      await queue.shift()!();
    }
    draining = false;
    render();
  }

  function buildButtons(commands: string[]): void {
    buttonsEl.innerHTML = "";
    for (const cmd of commands) {
      const b = document.createElement("button");
      b.textContent = cmd;
      b.id = `cmd-${cmd}`;
      if (cmd === "e_stop") b.classList.add("estop");
      b.addEventListener("click", () => submit(cmd));
      buttons.set(cmd, b);
      buttonsEl.appendChild(b);
    }
    // Recovery controls duplicated inside the full-screen safety banner.
    const safetyButtonsEl = el<HTMLDivElement>("safety-buttons");
    safetyButtonsEl.innerHTML = "";
    for (const cmd of ["manual_retract", "rehome", "e_stop"]) {
      const b = document.createElement("button");
      b.textContent = cmd;
      b.addEventListener("click", () => submit(cmd));
      safetyButtons.set(cmd, b);
      safetyButtonsEl.appendChild(b);
    }
  }

  function submit(cmd: string): void {
    enqueue(async () => {
      const argsFn = COMMAND_ARG_PROMPTS[cmd];
      const args = argsFn ? argsFn() : {};
      if (args === null) return; // operator cancelled the prompt
      if (!model.beginCommand(cmd)) return; // duplicate or illegal: ignored
      render();
      try {
        const res = await client.command(cmd, args);
        model.completeCommand(res.ok, res.reason);
      } catch (e) {
        model.abortCommand(String(e));
      }
      // refresh the log tail so the operator sees the command recorded
      try {
        model.appendEvents(await client.log());
      } catch {
        /* log refresh is cosmetic */
      }
    });
  }

  function render(): void {
    const f = model.frame;
    phaseEl.textContent = f ? f.phase : "–";
    phaseEl.dataset.phase = f?.phase ?? "";
    bannerEl.style.display = model.connected ? "none" : "block";

    if (model.safetyTripped() && f) {
      safetyEl.style.display = "flex";
      el<HTMLSpanElement>("trip-force").textContent =
        f.trip_force != null ? `${f.trip_force.toFixed(2)} N` : "?";
      const enabledNow = new Set(model.enabledCommands());
      for (const [cmd, b] of safetyButtons) b.disabled = !enabledNow.has(cmd);
      el<HTMLSpanElement>("safety-d-ins").textContent = `${f.joints.d_ins.toFixed(2)} mm`;
    } else {
      safetyEl.style.display = "none";
    }

    const enabled = new Set(model.enabledCommands());
    for (const [cmd, b] of buttons) b.disabled = !enabled.has(cmd);

    statusEl.textContent = [
      f ? `t=${f.sim_time.toFixed(2)}s` : "",
      f?.needle_id ? `needle ${f.needle_id}` : "",
      f ? `hub ${f.hub}` : "",
      model.droppedFrames ? `dropped ${model.droppedFrames}` : "",
      model.pending ? `pending: ${model.pending.cmd}` : "",
      model.lastError ? `rejected: ${model.lastError}` : "",
    ]
      .filter(Boolean)
      .join("  ·  ");

    drawFaceView(faceCanvas, model);
    drawSagittalView(sagittalCanvas, model);
    drawForceGauge(gaugeCanvas, model);
    logEl.textContent = model
      .logTail()
      .map((ev) => `${ev.t.toFixed(3)}  ${ev.kind}  ${JSON.stringify(ev.data)}`)
      .join("\n");
  }

  // What-if preview: click a face-view point to ask the planner for an
  // inclined path to that template position at the default plan depth.
  faceCanvas.addEventListener("click", (e) => {
    const rect = faceCanvas.getBoundingClientRect();
    const scale = Math.min(faceCanvas.width, faceCanvas.height) / 116;
    const x = (e.clientX - rect.left - faceCanvas.width / 2) / scale;
    const y = -(e.clientY - rect.top - faceCanvas.height / 2) / scale;
    const depth = 60;
    enqueue(async () => {
      try {
        const preview = await client.accessPreview(x, y, depth);
        model.setPreview([x, y, depth], preview);
        el<HTMLDivElement>("preview-line").textContent = preview.ok
          ? `access: inclination ${preview.inclination!.toFixed(2)} deg, clearance ${
              preview.clearance == null ? "unobstructed" : preview.clearance.toFixed(2) + " mm"
            }`
          : `no access: ${preview.reason}`;
      } catch {
        model.clearPreview();
      }
    });
  });

  enqueue(async () => {
    model.table = await client.transitions();
    buildButtons(model.table.commands);
    model.plan = await client.plan();
    model.appendEvents(await client.log());
    const frame = await client.state();
    model.applyFrame(frame);
  });

  client.telemetry(
    (f: TelemetryFrame) => enqueue(async () => {
      model.applyFrame(f);
      if (f.phase === "PLAN_LOADED" && !model.plan) {
        model.plan = await client.plan();
      }
    }),
    () => enqueue(() => model.markDisconnected()),
  );
}

declare global {
  interface Window {
    startConsole: typeof startConsole;
  }
}

if (typeof window !== "undefined") {
  window.startConsole = startConsole;
}
