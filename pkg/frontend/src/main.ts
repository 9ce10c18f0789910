/**
 * Live operator console. Connects to a running gateway, renders the map
 * and panels on every snapshot, and (optionally) submits a workflow given
 * on the command line:
 *
 *   ts-node --esm src/main.ts [host] [port] [command ...]
 *
 * e.g.  ts-node --esm src/main.ts 127.0.0.1 8808 launch formation:vee land
 */

import { GatewayConnection } from "./connection.js";
import { WorkflowComposer } from "./composer.js";
import { CommandName, Pattern } from "./protocol.js";
import { renderAgents, renderAlerts, renderMap } from "./render.js";
import { SwarmStore } from "./store.js";

const host = process.argv[2] ?? "127.0.0.1";
const port = Number(process.argv[3] ?? 8808);
const commandArgs = process.argv.slice(4);

const store = new SwarmStore();

function redraw(): void {
  const out =
    renderMap(store) +
    "\n" +
    renderAgents(store) +
    "\n" +
    renderAlerts(store) +
    renderWorkflows();
  process.stdout.write("\x1b[2J\x1b[H" + out);
}

function renderWorkflows(): string {
  const lines: string[] = [];
  for (const wf of store.workflows.values()) {
    lines.push(`workflow ${wf.workflow}: ${wf.state}`);
    for (const [index, s] of [...wf.statuses.entries()].sort(
      (a, b) => a[0] - b[0],
    )) {
      lines.push(`  ${index}. ${s.command}: ${s.status}`);
    }
  }
  return lines.length ? lines.join("\n") + "\n" : "";
}

const connection = new GatewayConnection(host, port, {
  onMessage: (message) => {
    store.apply(message);
    if (message.kind === "snapshot") redraw();
  },
  onStatus: (status) => {
    if (status !== "connected") {
      process.stdout.write(`\n[connection ${status}]\n`);
    }
  },
});

connection
  .connect()
  .then(() => {
    if (commandArgs.length === 0) return;
    const composer = new WorkflowComposer();
    for (const arg of commandArgs) {
      const [name, pattern] = arg.split(":");
      composer.add(name as CommandName, pattern ? { pattern: pattern as Pattern } : {});
    }
    connection.submit(composer.toSubmission());
  })
  .catch((err) => {
    console.error(`cannot reach gateway at ${host}:${port}: ${err}`);
    process.exit(1);
  });
