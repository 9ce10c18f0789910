/**
 * Wire types for the gateway's NDJSON protocol (version 1) and a tolerant
 * line parser. Unknown message kinds are surfaced as `unknown` rather than
 * thrown away, so a newer gateway does not crash an older console.
 */

export const PROTOCOL_VERSION = 1;

export interface AgentRow {
  id: number;
  east: number;
  north: number;
  altitude: number;
  airspeed: number;
  course: number;
  mode: string;
  battery: number;
  group: number | null;
  role: string | null;
  link_age: number | null;
  formation_error: number | null;
}

export interface Alert {
  rule: "link" | "formation" | "failsafe" | "battery";
  severity: "warning" | "critical";
  agent: number;
}

export interface Snapshot {
  kind: "snapshot";
  t: number;
  agents: AgentRow[];
  mpe: number | null;
  ampe_running: number | null;
  alerts: Alert[];
}

export interface AlertMessage extends Alert {
  kind: "alert";
  t: number;
}

export type CommandStatus = "pending" | "sent" | "acked" | "failed";

export interface CommandStatusMessage {
  kind: "command_status";
  workflow: number;
  index: number;
  command: string;
  status: CommandStatus;
  t: number;
}

export type WorkflowState = "active" | "paused" | "completed" | "aborted";

export interface WorkflowStatusMessage {
  kind: "workflow_status";
  workflow: number;
  state: WorkflowState;
  t: number;
}

export interface ErrorMessage {
  kind: "error";
  detail: string;
}

export type ServerMessage =
  | Snapshot
  | AlertMessage
  | CommandStatusMessage
  | WorkflowStatusMessage
  | ErrorMessage;

export type ParseResult =
  | { ok: true; message: ServerMessage }
  | { ok: false; reason: string };

const KINDS = new Set([
  "snapshot",
  "alert",
  "command_status",
  "workflow_status",
  "error",
]);

/** Parse one NDJSON line from the gateway. */
export function parseLine(line: string): ParseResult {
  let raw: unknown;
  try {
    raw = JSON.parse(line);
  } catch (e) {
    return { ok: false, reason: `not JSON: ${String(e)}` };
  }
  if (typeof raw !== "object" || raw === null) {
    return { ok: false, reason: "not an object" };
  }
  const msg = raw as Record<string, unknown>;
  if (typeof msg.kind !== "string" || !KINDS.has(msg.kind)) {
    return { ok: false, reason: `unknown kind: ${String(msg.kind)}` };
  }
  if (msg.kind === "snapshot" && !Array.isArray(msg.agents)) {
    return { ok: false, reason: "snapshot without agents" };
  }
  return { ok: true, message: msg as unknown as ServerMessage };
}

/** Accumulates socket chunks and yields complete lines. */
export class LineSplitter {
  private buffer = "";

  push(chunk: string): string[] {
    this.buffer += chunk;
    const lines = this.buffer.split("\n");
    this.buffer = lines.pop() ?? "";
    return lines.filter((l) => l.length > 0);
  }
}

export const PATTERNS = ["line", "triangle", "vee", "two_columns"] as const;
export type Pattern = (typeof PATTERNS)[number];

export const COMMAND_NAMES = [
  "launch",
  "formation",
  "tracking",
  "rtl",
  "land",
  "failsafe",
] as const;
export type CommandName = (typeof COMMAND_NAMES)[number];

export interface CommandEntry {
  name: CommandName;
  pattern?: Pattern;
  arg?: number;
  value?: number;
}

export interface WorkflowSubmission {
  kind: "workflow";
  commands: CommandEntry[];
  failsafe: "abort_queue" | "rtl_all";
}
