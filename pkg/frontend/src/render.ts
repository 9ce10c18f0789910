/**
 * Terminal renderer: an ASCII map plus agent and alert tables built purely
 * from the store. Positions are taken from the latest snapshot verbatim;
 * stale agents render lowercase.
 */

import { SwarmStore } from "./store.js";

const MAP_COLS = 60;
const MAP_ROWS = 20;

export function renderMap(store: SwarmStore): string {
  const view = store.mapView();
  if (!view || view.glyphs.length === 0) return "(no snapshot yet)\n";

  const xs = view.glyphs.map((g) => g.east);
  const ys = view.glyphs.map((g) => g.north);
  const minX = Math.min(...xs) - 50;
  const maxX = Math.max(...xs) + 50;
  const minY = Math.min(...ys) - 50;
  const maxY = Math.max(...ys) + 50;

  const grid: string[][] = Array.from({ length: MAP_ROWS }, () =>
    Array(MAP_COLS).fill("."),
  );
  for (const g of view.glyphs) {
    const col = Math.round(((g.east - minX) / (maxX - minX)) * (MAP_COLS - 1));
    const row = Math.round(((maxY - g.north) / (maxY - minY)) * (MAP_ROWS - 1));
    const label =
      g.group === null ? "?" : String.fromCharCode(65 + (g.group % 26));
    grid[row][col] = g.stale ? label.toLowerCase() : label;
  }
  const header = `t = ${view.t.toFixed(1)} s   east ${minX.toFixed(0)}..${maxX.toFixed(0)} m\n`;
  return header + grid.map((row) => row.join("")).join("\n") + "\n";
}

export function renderAgents(store: SwarmStore): string {
  const view = store.mapView();
  if (!view) return "";
  const lines = ["  id  mode      battery  link   slot err"];
  for (const g of view.glyphs) {
    lines.push(
      `  ${String(g.id).padStart(2)}  ` +
        `${g.mode.padEnd(8)}  ` +
        `${(g.battery * 100).toFixed(0).padStart(5)}%  ` +
        `${g.link_age === null ? "  -- " : g.link_age.toFixed(1).padStart(4) + "s"}` +
        `${g.stale ? "!" : " "} ` +
        `${g.formation_error === null ? "    --" : g.formation_error.toFixed(1).padStart(6)}`,
    );
  }
  return lines.join("\n") + "\n";
}

export function renderAlerts(store: SwarmStore): string {
  const alerts = store.sortedAlerts();
  if (alerts.length === 0) return "alerts: none\n";
  return (
    "alerts:\n" +
    alerts
      .map((a) => `  [${a.severity.toUpperCase()}] ${a.rule} on agent ${a.agent}`)
      .join("\n") +
    "\n"
  );
}
