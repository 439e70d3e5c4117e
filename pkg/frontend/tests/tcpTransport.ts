/**
 * Node-only transport speaking the same wire schema over TCP JSON
 * lines; used by the e2e harness to drive the real server with the real
 * client core. Reconnection is manual so tests can force disconnects.
 */

import * as net from "node:net";

import type { Transport } from "../src/transport.js";

export class TcpLineTransport implements Transport {
  private socket: net.Socket | null = null;
  private buffer = "";
  private messageHandler: (text: string) => void = () => {};
  private openHandler: () => void = () => {};
  private closeHandler: () => void = () => {};

  constructor(private readonly host: string, private readonly port: number) {}

  connect(): Promise<void> {
    return new Promise((resolve, reject) => {
      const socket = net.createConnection(this.port, this.host);
      socket.setNoDelay(true);
      this.socket = socket;
      this.buffer = ""; // a torn line from the old socket is garbage
      socket.once("connect", () => {
        this.openHandler();
        resolve();
      });
      socket.once("error", reject);
      socket.on("data", (chunk) => {
        if (this.socket !== socket) return; // superseded socket
        this.buffer += chunk.toString("utf-8");
        let idx;
        while ((idx = this.buffer.indexOf("\n")) >= 0) {
          const line = this.buffer.slice(0, idx);
          this.buffer = this.buffer.slice(idx + 1);
          if (line.trim()) this.messageHandler(line);
        }
      });
      socket.on("close", () => {
        if (this.socket === socket) this.closeHandler();
      });
    });
  }

  /** Forced mid-run disconnect (simulates a dropped connection). The
   * close is reported synchronously so callers can rely on the session
   * having dropped its view before reconnecting. */
  destroy(): void {
    const socket = this.socket;
    this.socket = null;
    socket?.destroy();
    this.closeHandler();
  }

  send(text: string): void {
    this.socket?.write(text + "\n");
  }

  onMessage(handler: (text: string) => void): void {
    this.messageHandler = handler;
  }
  onOpen(handler: () => void): void {
    this.openHandler = handler;
  }
  onClose(handler: () => void): void {
    this.closeHandler = handler;
  }

  close(): void {
    this.socket?.end();
  }
}
