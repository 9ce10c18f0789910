/**
 * Console-side state: the latest snapshot, per-agent staleness, the alert
 * list sorted for display, a running formation-error series for charting,
 * and workflow statuses mirrored verbatim from gateway messages (the
 * console never infers a status on its own).
 */

import {
  Alert,
  AgentRow,
  CommandStatus,
  ServerMessage,
  Snapshot,
  WorkflowState,
} from "./protocol.js";

export const STALE_AFTER_S = 3.0;

export interface AgentGlyph extends AgentRow {
  stale: boolean;
}

export interface MapViewModel {
  t: number;
  glyphs: AgentGlyph[];
  groupHulls: Map<number, AgentGlyph[]>;
}

export interface WorkflowView {
  workflow: number;
  state: WorkflowState;
  statuses: Map<number, { command: string; status: CommandStatus }>;
}

const SEVERITY_ORDER: Record<Alert["severity"], number> = {
  critical: 0,
  warning: 1,
};

export class SwarmStore {
  snapshot: Snapshot | null = null;
  ampeSeries: Array<{ t: number; ampe: number }> = [];
  workflows = new Map<number, WorkflowView>();
  errors: string[] = [];

  apply(message: ServerMessage): void {
    switch (message.kind) {
      case "snapshot":
        this.snapshot = message;
        if (message.ampe_running !== null) {
          this.ampeSeries.push({ t: message.t, ampe: message.ampe_running });
        }
        break;
      case "command_status": {
        const wf = this.workflow(message.workflow);
        wf.statuses.set(message.index, {
          command: message.command,
          status: message.status,
        });
        break;
      }
      case "workflow_status": {
        const wf = this.workflow(message.workflow);
        wf.state = message.state;
        break;
      }
      case "error":
        this.errors.push(message.detail);
        break;
      case "alert":
        // alerts also ride in every snapshot; the edge message needs no
        // separate bookkeeping here
        break;
    }
  }

  private workflow(id: number): WorkflowView {
    let wf = this.workflows.get(id);
    if (!wf) {
      wf = { workflow: id, state: "active", statuses: new Map() };
      this.workflows.set(id, wf);
    }
    return wf;
  }

  /** Map glyphs with staleness flags and per-group hull membership. */
  mapView(): MapViewModel | null {
    if (!this.snapshot) return null;
    const glyphs = this.snapshot.agents.map((a) => ({
      ...a,
      stale: a.link_age !== null && a.link_age > STALE_AFTER_S,
    }));
    const hulls = new Map<number, AgentGlyph[]>();
    for (const g of glyphs) {
      if (g.group === null) continue;
      const members = hulls.get(g.group) ?? [];
      members.push(g);
      hulls.set(g.group, members);
    }
    return { t: this.snapshot.t, glyphs, groupHulls: hulls };
  }

  /** Alerts sorted critical first, then by agent id, for the alert panel. */
  sortedAlerts(): Alert[] {
    if (!this.snapshot) return [];
    return [...this.snapshot.alerts].sort(
      (a, b) =>
        SEVERITY_ORDER[a.severity] - SEVERITY_ORDER[b.severity] ||
        a.agent - b.agent,
    );
  }
}
