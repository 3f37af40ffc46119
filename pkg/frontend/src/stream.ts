// Reconnecting event stream client.
//
// The server promises dense, strictly increasing frame indices starting at
// the requested `since`. This client keeps one cursor, the number of frames
// accepted so far, and uses it for every (re)connect, so the buffer it feeds
// stays gap free and duplicate free no matter how often the socket drops:
//
//   frame.index <  cursor   replayed history, drop it
//   frame.index == cursor   accept, advance
//   frame.index >  cursor   the server skipped ahead (for example after a
//                           4408 slow-subscriber close), reconnect from the
//                           cursor rather than guess at the missing frames
//
// Everything observable routes through the two callbacks; the client holds
// no transcript state of its own.

import type { Frame } from "./types.js";

/** Structural subset of WebSocket the client needs; tests inject doubles. */
export interface SocketLike {
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  close(code?: number, reason?: string): void;
}

export interface StreamOptions {
  /** Open a socket replaying from frame index `since`. */
  connect: (since: number) => SocketLike;
  onFrame: (frame: Frame) => void;
  onConnection: (open: boolean) => void;
  /** Delay before a reconnect attempt. Tests set 0. */
  reconnectDelayMs?: number;
}

export class EventStream {
  private readonly options: StreamOptions;
  private cursor = 0;
  private socket: SocketLike | null = null;
  private stopped = false;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(options: StreamOptions) {
    this.options = options;
  }

  /** Frames accepted so far; also the next index expected. */
  get seen(): number {
    return this.cursor;
  }

  start(): void {
    this.stopped = false;
    this.open();
  }

  stop(): void {
    this.stopped = true;
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
    const socket = this.socket;
    this.socket = null;
    if (socket) {
      socket.onclose = null;
      socket.close();
    }
  }

  private open(): void {
    const socket = this.options.connect(this.cursor);
    this.socket = socket;
    socket.onopen = () => {
      if (socket === this.socket) this.options.onConnection(true);
    };
    socket.onmessage = (ev) => {
      if (socket !== this.socket) return;
      this.handleMessage(String(ev.data));
    };
    socket.onclose = () => {
      if (socket !== this.socket) return;
      this.socket = null;
      this.options.onConnection(false);
      this.scheduleReconnect();
    };
  }

  private handleMessage(raw: string): void {
    let frame: Frame;
    try {
      frame = JSON.parse(raw) as Frame;
    } catch {
      this.resync();
      return;
    }
    if (typeof frame.index !== "number" || frame.event === undefined) {
      this.resync();
      return;
    }
    if (frame.index < this.cursor) return;
    if (frame.index > this.cursor) {
      this.resync();
      return;
    }
    this.cursor += 1;
    this.options.onFrame(frame);
  }

  /** Drop the current socket and reconnect from the cursor. */
  private resync(): void {
    const socket = this.socket;
    this.socket = null;
    if (socket) {
      socket.onclose = null;
      socket.close();
    }
    this.options.onConnection(false);
    this.scheduleReconnect();
  }

  private scheduleReconnect(): void {
    if (this.stopped || this.timer !== null) return;
    const delay = this.options.reconnectDelayMs ?? 1000;
    this.timer = setTimeout(() => {
      this.timer = null;
      if (!this.stopped) this.open();
    }, delay);
  }
}
