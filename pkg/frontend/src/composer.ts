/**
 * Workflow composer: an ordered list of high-level commands the operator
 * assembles before submitting. Submission order always equals displayed
 * order, and a gateway rejection leaves the queue untouched so the
 * operator can fix and resubmit.
 */

import {
  COMMAND_NAMES,
  CommandEntry,
  CommandName,
  PATTERNS,
  Pattern,
  WorkflowSubmission,
} from "./protocol.js";

export class WorkflowComposer {
  private entries: CommandEntry[] = [];
  failsafe: "abort_queue" | "rtl_all" = "abort_queue";

  get commands(): readonly CommandEntry[] {
    return this.entries;
  }

  add(name: CommandName, options: Omit<CommandEntry, "name"> = {}): void {
    if (!COMMAND_NAMES.includes(name)) {
      throw new Error(`unknown command: ${name}`);
    }
    if (options.pattern && !PATTERNS.includes(options.pattern as Pattern)) {
      throw new Error(`unknown pattern: ${options.pattern}`);
    }
    this.entries.push({ name, ...options });
  }

  remove(index: number): void {
    if (index < 0 || index >= this.entries.length) {
      throw new Error(`no entry at ${index}`);
    }
    this.entries.splice(index, 1);
  }

  /** Drag-reorder: move the entry at `from` so it sits at `to`. */
  move(from: number, to: number): void {
    const n = this.entries.length;
    if (from < 0 || from >= n || to < 0 || to >= n) {
      throw new Error(`move out of range: ${from} -> ${to}`);
    }
    const [entry] = this.entries.splice(from, 1);
    this.entries.splice(to, 0, entry);
  }

  clear(): void {
    this.entries = [];
  }

  /** Build the submission message; the queue itself is left intact. */
  toSubmission(): WorkflowSubmission {
    if (this.entries.length === 0) {
      throw new Error("empty workflow");
    }
    return {
      kind: "workflow",
      commands: this.entries.map((e) => ({ ...e })),
      failsafe: this.failsafe,
    };
  }
}
