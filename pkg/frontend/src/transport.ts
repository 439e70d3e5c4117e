/**
 * Transport abstraction plus the browser websocket implementation.
 *
 * `ReconnectingSocket` reopens the websocket automatically with
 * exponential backoff (1 s doubling to 30 s, reset on success) and
 * reports connectivity transitions; the session layer re-greets the
 * server on every (re)connect and rebuilds its view from the resync.
 */

export interface Transport {
  send(text: string): void;
  onMessage(handler: (text: string) => void): void;
  onOpen(handler: () => void): void;
  onClose(handler: () => void): void;
  close(): void;
}

export class ReconnectingSocket implements Transport {
  private socket: WebSocket | null = null;
  private messageHandler: (text: string) => void = () => {};
  private openHandler: () => void = () => {};
  private closeHandler: () => void = () => {};
  private backoffMs = 1000;
  private closedByUser = false;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(private readonly url: string) {}

  connect(): void {
    this.closedByUser = false;
    this.open();
  }

  private open(): void {
    const socket = new WebSocket(this.url);
    this.socket = socket;
    socket.onopen = () => {
      this.backoffMs = 1000;
      this.openHandler();
    };
    socket.onmessage = (event) => {
      if (this.socket === socket) this.messageHandler(String(event.data));
    };
    socket.onclose = () => {
      if (this.socket !== socket) return; // superseded socket: stale event
      this.closeHandler();
      if (!this.closedByUser) this.scheduleReopen();
    };
    socket.onerror = () => {
      socket.close();
    };
  }

  private scheduleReopen(): void {
    if (this.timer) return;
    this.timer = setTimeout(() => {
      this.timer = null;
      this.open();
    }, this.backoffMs);
    this.backoffMs = Math.min(this.backoffMs * 2, 30_000);
  }

  send(text: string): void {
    if (this.socket && this.socket.readyState === WebSocket.OPEN) {
      this.socket.send(text);
    }
    // otherwise drop: the session layer resyncs state on reconnect,
    // and in-flight actions are discarded by design
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
    this.closedByUser = true;
    if (this.timer) clearTimeout(this.timer);
    this.socket?.close();
  }
}
