// End-to-end test against a live control service: the console client drives
// a complete single-needle procedure using only the documented endpoints,
// and the enablement rule is property-checked over every streamed phase.

import { spawn, type ChildProcess } from "node:child_process";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ServiceClient } from "../src/client.js";
import { ConsoleViewModel } from "../src/model.js";
import type { TelemetryFrame, TransitionTable } from "../src/types.js";

const PLAN = {
  version: 1,
  needles: [
    {
      id: "n1",
      target: { grid: [6, 6] },
      depth: 10.0,
      profile: { speed: 10.0, rotation: { mode: "continuous", omega: 10.0 } },
      seeds: [{ offset_from_tip: 0.0 }],
    },
  ],
};

let proc: ChildProcess;
let client: ServiceClient;

function startService(): Promise<string> {
  return new Promise((resolve, reject) => {
    proc = spawn(
      "python3",
      ["-m", "brachysim", "serve", "--port", "0", "--time-scale", "50"],
      { stdio: ["ignore", "pipe", "pipe"] },
    );
    let buf = "";
    proc.stdout!.on("data", (chunk: Buffer) => {
      buf += chunk.toString();
      const m = buf.match(/listening on (http:\/\/127\.0\.0\.1:\d+)/);
      if (m) resolve(m[1]);
    });
    proc.stderr!.on("data", (chunk: Buffer) => {
      buf += chunk.toString();
    });
    proc.on("exit", (code) => reject(new Error(`service exited early (${code}): ${buf}`)));
    setTimeout(() => reject(new Error(`service did not start: ${buf}`)), 15000);
  });
}

async function waitPhase(phase: string, timeoutMs = 20000): Promise<TelemetryFrame> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    const f = await client.state();
    if (f.phase === phase) return f;
    if (Date.now() > deadline) throw new Error(`phase ${phase} not reached; at ${f.phase}`);
    await new Promise((r) => setTimeout(r, 25));
  }
}

beforeAll(async () => {
  const base = await startService();
  client = new ServiceClient(base);
}, 30000);

afterAll(() => {
  proc?.kill();
});

describe("live service integration", () => {
  it("completes a full single-needle procedure end-to-end", { timeout: 60000 }, async () => {
    const model = new ConsoleViewModel();
    model.table = await client.transitions();

    const phasesSeen: string[] = [];
    const framesSeen: TelemetryFrame[] = [];
    const stop = client.telemetry((f) => {
      framesSeen.push(f);
      if (phasesSeen[phasesSeen.length - 1] !== f.phase) phasesSeen.push(f.phase);
      model.applyFrame(f);
    });

    const send = async (cmd: string, args: Record<string, unknown> = {}) => {
      const res = await client.command(cmd, args);
      expect(res.ok, `${cmd} rejected: ${res.reason}`).toBe(true);
      return res;
    };

    expect((await client.state()).phase).toBe("IDLE");
    expect(await client.plan()).toBeNull();

    await send("load_plan", { plan: PLAN });
    expect((await client.plan())?.needles?.[0].id).toBe("n1");

    await send("select_needle", { id: "n1" });
    await send("go_position");
    await waitPhase("PREPOSITIONED");
    await send("go_insert");
    await waitPhase("AT_DEPTH");
    await send("release_hub");
    await send("confirm_seed");
    await send("clamp_hub");
    await send("retract");
    await waitPhase("NEEDLE_DONE");
    await send("next_needle");
    const final = await waitPhase("COMPLETE");
    // let the stream consumer catch up to the final phase before stopping
    const deadline = Date.now() + 5000;
    while (!phasesSeen.includes("COMPLETE") && Date.now() < deadline) {
      await new Promise((r) => setTimeout(r, 20));
    }
    stop();

    expect(final.engagement).toBe("ENGAGED");
    expect(final.joints.d_ins).toBe(0);

    // The stream must have shown the canonical mid-procedure phases.
    for (const phase of ["INSERTING", "RETRACTING", "COMPLETE"]) {
      expect(phasesSeen, `never streamed ${phase}`).toContain(phase);
    }
    // Monotone per-connection frame counters.
    const counters = framesSeen.map((f) => f.frame!);
    for (let i = 1; i < counters.length; i++) {
      expect(counters[i]).toBeGreaterThan(counters[i - 1]);
    }
    // Hub is never open while inserting on any streamed frame.
    for (const f of framesSeen) {
      expect(f.hub === "OPEN" && f.phase === "INSERTING").toBe(false);
    }

    // The procedure left a replayable log with the seed placement recorded.
    const log = await client.log();
    expect(log.some((e) => e.kind === "seed")).toBe(true);
    expect(log.some((e) => e.kind === "puncture")).toBe(true);
    const seqs = log.map((e) => e.seq);
    expect(seqs).toEqual([...seqs].sort((a, b) => a - b));
  });

  it("never enables a command the table rejects, over all streamed phases", { timeout: 30000 }, async () => {
    const table: TransitionTable = await client.transitions();
    const model = new ConsoleViewModel();
    model.table = table;
    model.plan = await client.plan();

    const violations: string[] = [];
    const stop = client.telemetry((f) => {
      model.applyFrame(f);
      const allowed = new Set(table.accept[f.phase] ?? []);
      for (const cmd of model.enabledCommands()) {
        if (!allowed.has(cmd)) violations.push(`${cmd} enabled in ${f.phase}`);
      }
    });

    // Drive some phase churn while the property is being checked.
    await client.command("reset");
    await client.command("load_plan", { plan: PLAN });
    await client.command("select_needle", { id: "n1" });
    await client.command("go_position");
    await waitPhase("PREPOSITIONED");
    await client.command("e_stop");
    await waitPhase("EMERGENCY_MANUAL");
    await client.command("rehome");
    await new Promise((r) => setTimeout(r, 300));
    stop();

    expect(violations).toEqual([]);
  });

  it("mirrors controller rejections verbatim", async () => {
    await client.command("reset");
    const res = await client.command("release_hub");
    expect(res.ok).toBe(false);
    expect(res.reason).toContain("not legal in phase");
  });

  it("provides access previews through the planner endpoint", async () => {
    await client.command("reset");
    const clear = await client.accessPreview(0, 0, 60);
    expect(clear.ok).toBe(true);
    expect(clear.inclination).toBe(0);
  });
});
