/**
 * TCP connection to the gateway: splits the NDJSON stream into parsed
 * messages, exposes a typed event callback, and reconnects with capped
 * exponential backoff after a drop.
 */

import * as net from "node:net";

import {
  LineSplitter,
  parseLine,
  ServerMessage,
  WorkflowSubmission,
} from "./protocol.js";

export interface ConnectionEvents {
  onMessage: (message: ServerMessage) => void;
  onStatus?: (status: "connected" | "disconnected" | "reconnecting") => void;
  onParseError?: (reason: string, line: string) => void;
}

export class GatewayConnection {
  private socket: net.Socket | null = null;
  private splitter = new LineSplitter();
  private closed = false;
  private backoffMs = 250;

  constructor(
    private host: string,
    private port: number,
    private events: ConnectionEvents,
    private maxBackoffMs = 5000,
  ) {}

  connect(): Promise<void> {
    return new Promise((resolve, reject) => {
      const socket = net.createConnection(this.port, this.host);
      socket.setEncoding("utf8");
      socket.once("connect", () => {
        this.socket = socket;
        this.backoffMs = 250;
        this.events.onStatus?.("connected");
        resolve();
      });
      socket.once("error", (err) => {
        if (!this.socket) reject(err);
      });
      socket.on("data", (chunk: string) => {
        for (const line of this.splitter.push(chunk)) {
          const parsed = parseLine(line);
          if (parsed.ok) {
            this.events.onMessage(parsed.message);
          } else {
            this.events.onParseError?.(parsed.reason, line);
          }
        }
      });
      socket.on("close", () => {
        this.socket = null;
        if (this.closed) return;
        this.events.onStatus?.("disconnected");
        this.scheduleReconnect();
      });
    });
  }

  private scheduleReconnect(): void {
    const delay = this.backoffMs;
    this.backoffMs = Math.min(this.backoffMs * 2, this.maxBackoffMs);
    setTimeout(() => {
      if (this.closed) return;
      this.events.onStatus?.("reconnecting");
      this.connect().catch(() => this.scheduleReconnect());
    }, delay);
  }

  submit(workflow: WorkflowSubmission): void {
    if (!this.socket) {
      throw new Error("not connected");
    }
    this.socket.write(JSON.stringify(workflow) + "\n");
  }

  sendRaw(line: string): void {
    if (!this.socket) {
      throw new Error("not connected");
    }
    this.socket.write(line + "\n");
  }

  close(): void {
    this.closed = true;
    this.socket?.end();
    this.socket = null;
  }
}
