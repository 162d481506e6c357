// Wire types mirroring the control service's documented JSON shapes.

export interface Joints {
  xf: number;
  yf: number;
  xr: number;
  yr: number;
  z_pre: number;
  d_ins: number;
  theta: number;
}

export interface Pose {
  entry_x: number;
  entry_y: number;
  pitch: number;
  yaw: number;
}

export interface TelemetryFrame {
  tick: number;
  sim_time: number;
  phase: string;
  joints: Joints;
  pose: Pose;
  tip: [number, number, number];
  tip_depth: number;
  axial_force: number;
  peak_force: number;
  prostate_displacement: number;
  engagement: "ENGAGED" | "TRIPPED";
  trip_force: number | null;
  release_threshold: number;
  hub: "CLAMPED" | "OPEN";
  needle_id: string | null;
  punctured: boolean;
  // stream-only fields
  frame?: number;
  dropped?: number;
}

export interface CommandResponse {
  id: unknown;
  ok: boolean;
  reason?: string;
}

export interface TransitionTable {
  description: string;
  phases: string[];
  commands: string[];
  accept: Record<string, string[]>;
  reject_reasons: Record<string, string>;
}

export interface CapsuleDoc {
  a: [number, number, number];
  b: [number, number, number];
  radius: number;
}

export interface NeedleDoc {
  id: string;
  target: { grid?: [number, number]; entry?: [number, number]; pitch?: number; yaw?: number; access?: string };
  depth: number;
  profile?: { speed?: number; rotation?: { mode: string; omega?: number; step?: number } };
  seeds?: { offset_from_tip: number }[];
}

export interface PlanDoc {
  version: number;
  needles?: NeedleDoc[];
  obstacles?: { arch?: CapsuleDoc[]; bone?: { depth: number }[] };
  metadata?: { applied_shift?: [number, number, number] };
}

export interface ProcedureEvent {
  seq: number;
  t: number;
  kind: string;
  data: Record<string, unknown>;
}

export interface AccessPreview {
  ok: boolean;
  reason?: string;
  pose?: Pose;
  inclination?: number;
  clearance?: number | null;
}
