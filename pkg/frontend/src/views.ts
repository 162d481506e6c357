// Canvas renderers for the two 2D views plus the force gauge. Pure drawing:
// all state comes in via the view model.

import type { ConsoleViewModel } from "./model.js";

const GRID_HOLES = 13;
const GRID_PITCH_MM = 5;

function holeXY(col: number, row: number): [number, number] {
  return [-30 + col * GRID_PITCH_MM, -30 + row * GRID_PITCH_MM];
}

/** Face view: the 13x13 template grid seen along the needle axis. */
export function drawFaceView(canvas: HTMLCanvasElement, m: ConsoleViewModel): void {
  const ctx = canvas.getContext("2d")!;
  const w = canvas.width;
  const h = canvas.height;
  ctx.clearRect(0, 0, w, h);
  ctx.fillStyle = "#10151c";
  ctx.fillRect(0, 0, w, h);

  // template coords: x,y in [-55, 55] mm
  const scale = Math.min(w, h) / 116;
  const toPx = (x: number, y: number): [number, number] => [w / 2 + x * scale, h / 2 - y * scale];

  ctx.strokeStyle = "#2a3442";
  ctx.strokeRect(...toPx(-52.5, 52.5), 105 * scale, 105 * scale);

  const statuses = m.needleStatuses();
  const colors: Record<string, string> = {
    pending: "#d9a23c",
    active: "#4cc3ff",
    done: "#51c878",
    aborted: "#d14b4b",
  };
  const needleAt = new Map<string, string>();
  for (const n of m.plan?.needles ?? []) {
    const g = n.target.grid;
    if (g) needleAt.set(`${g[0]},${g[1]}`, n.id);
  }

  for (let col = 0; col < GRID_HOLES; col++) {
    for (let row = 0; row < GRID_HOLES; row++) {
      const [x, y] = holeXY(col, row);
      const [px, py] = toPx(x, y);
      const id = needleAt.get(`${col},${row}`);
      ctx.beginPath();
      ctx.arc(px, py, id ? 4 : 1.5, 0, Math.PI * 2);
      if (id) {
        ctx.fillStyle = colors[statuses.get(id) ?? "pending"];
        ctx.fill();
      } else {
        ctx.fillStyle = "#3a4656";
        ctx.fill();
      }
    }
  }

  // live entry marker
  if (m.frame) {
    const [px, py] = toPx(m.frame.pose.entry_x, m.frame.pose.entry_y);
    ctx.strokeStyle = "#4cc3ff";
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    ctx.moveTo(px - 7, py);
    ctx.lineTo(px + 7, py);
    ctx.moveTo(px, py - 7);
    ctx.lineTo(px, py + 7);
    ctx.stroke();
  }
}

/** Sagittal view: y (up) against z (into the patient). */
export function drawSagittalView(canvas: HTMLCanvasElement, m: ConsoleViewModel): void {
  const ctx = canvas.getContext("2d")!;
  const w = canvas.width;
  const h = canvas.height;
  ctx.clearRect(0, 0, w, h);
  ctx.fillStyle = "#10151c";
  ctx.fillRect(0, 0, w, h);

  // z in [-25, 160], y in [-60, 60]
  const sx = w / 185;
  const sy = h / 124;
  const s = Math.min(sx, sy);
  const toPx = (z: number, y: number): [number, number] => [(z + 25) * s + 4, h / 2 - y * s];

  // template plane
  ctx.strokeStyle = "#2a3442";
  ctx.beginPath();
  ctx.moveTo(...toPx(0, -58));
  ctx.lineTo(...toPx(0, 58));
  ctx.stroke();
  ctx.fillStyle = "#5a6878";
  ctx.font = "10px sans-serif";
  ctx.fillText("template", toPx(0, 56)[0] + 3, toPx(0, 56)[1]);

  // arch capsules (circle cross-sections in the y-z plane)
  for (const cap of m.plan?.obstacles?.arch ?? []) {
    const [pz, py] = toPx(cap.a[2], cap.a[1]);
    ctx.beginPath();
    ctx.arc(pz, py, cap.radius * s, 0, Math.PI * 2);
    ctx.fillStyle = "rgba(209, 75, 75, 0.35)";
    ctx.fill();
    ctx.strokeStyle = "#d14b4b";
    ctx.stroke();
  }

  // bone surfaces
  for (const bone of m.plan?.obstacles?.bone ?? []) {
    ctx.strokeStyle = "#c9c2a6";
    ctx.setLineDash([4, 3]);
    ctx.beginPath();
    ctx.moveTo(...toPx(bone.depth, -50));
    ctx.lineTo(...toPx(bone.depth, 50));
    ctx.stroke();
    ctx.setLineDash([]);
  }

  const f = m.frame;
  if (f) {
    // prostate disc: sits at the active needle's planned depth, pushed
    // forward by the live displacement
    const task = m.plan?.needles?.find((n) => n.id === f.needle_id);
    const baseZ = task ? task.depth : 60;
    const [cz, cy] = toPx(baseZ + f.prostate_displacement, f.tip[1]);
    ctx.beginPath();
    ctx.arc(cz, cy, 18 * s, 0, Math.PI * 2);
    ctx.fillStyle = "rgba(76, 140, 255, 0.18)";
    ctx.fill();
    ctx.strokeStyle = "#4c8cff";
    ctx.stroke();

    // needle line from the guide exit through the tip
    const entryY = f.pose.entry_y;
    const tipY = f.tip[1];
    const tipZ = f.tip[2];
    ctx.strokeStyle = f.engagement === "TRIPPED" ? "#d14b4b" : "#e8eef4";
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    ctx.moveTo(...toPx(-20, entryY - (tipY - entryY) * (20 / Math.max(tipZ, 1e-6))));
    ctx.lineTo(...toPx(tipZ, tipY));
    ctx.stroke();
    ctx.beginPath();
    ctx.arc(...toPx(tipZ, tipY), 3, 0, Math.PI * 2);
    ctx.fillStyle = "#4cc3ff";
    ctx.fill();
  }

  // what-if access preview: dashed line entry -> target
  if (m.preview?.ok && m.preview.pose && m.previewTarget) {
    const p = m.preview.pose;
    const t = m.previewTarget;
    ctx.strokeStyle = "#d9a23c";
    ctx.setLineDash([6, 4]);
    ctx.beginPath();
    ctx.moveTo(...toPx(0, p.entry_y));
    ctx.lineTo(...toPx(t[2], t[1]));
    ctx.stroke();
    ctx.setLineDash([]);
  }
}

/** Horizontal force gauge with the release threshold marked. */
export function drawForceGauge(canvas: HTMLCanvasElement, m: ConsoleViewModel): void {
  const ctx = canvas.getContext("2d")!;
  const w = canvas.width;
  const h = canvas.height;
  ctx.clearRect(0, 0, w, h);
  ctx.fillStyle = "#10151c";
  ctx.fillRect(0, 0, w, h);
  const f = m.frame;
  if (!f) return;

  const fullScale = Math.max(10, f.release_threshold * 1.25);
  const toPx = (newtons: number) => (newtons / fullScale) * (w - 20) + 10;

  ctx.fillStyle = "#2a3442";
  ctx.fillRect(10, h / 2 - 8, w - 20, 16);

  const force = Math.min(f.axial_force, fullScale);
  ctx.fillStyle = f.axial_force > f.release_threshold ? "#d14b4b" : "#4cc3ff";
  ctx.fillRect(10, h / 2 - 8, toPx(force) - 10, 16);

  // peak tick
  ctx.strokeStyle = "#e8eef4";
  ctx.beginPath();
  ctx.moveTo(toPx(Math.min(f.peak_force, fullScale)), h / 2 - 10);
  ctx.lineTo(toPx(Math.min(f.peak_force, fullScale)), h / 2 + 10);
  ctx.stroke();

  // release threshold marker
  ctx.strokeStyle = "#d14b4b";
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.moveTo(toPx(f.release_threshold), h / 2 - 14);
  ctx.lineTo(toPx(f.release_threshold), h / 2 + 14);
  ctx.stroke();
  ctx.lineWidth = 1;

  ctx.fillStyle = "#a8b4c0";
  ctx.font = "11px sans-serif";
  ctx.fillText(`${f.axial_force.toFixed(2)} N (peak ${f.peak_force.toFixed(2)} N)`, 10, h / 2 - 18);
  ctx.fillText(`release ${f.release_threshold.toFixed(1)} N`, toPx(f.release_threshold) - 40, h - 4);
}
