import { describe, expect, it } from "vitest";

import { EventStream } from "../src/stream.js";
import type { Frame } from "../src/types.js";
import { FakeSocket, flush } from "./doubles.js";
import { message, resetIds } from "./events.js";

function frame(index: number): Frame {
  return { index, event: message("user", `event ${index}`) };
}

interface Harness {
  stream: EventStream;
  sockets: FakeSocket[];
  sinces: number[];
  frames: Frame[];
  connections: boolean[];
}

function harness(): Harness {
  resetIds();
  const sockets: FakeSocket[] = [];
  const sinces: number[] = [];
  const frames: Frame[] = [];
  const connections: boolean[] = [];
  const stream = new EventStream({
    connect: (since) => {
      sinces.push(since);
      const socket = new FakeSocket(`fake://events?since=${since}`);
      sockets.push(socket);
      return socket;
    },
    onFrame: (f) => frames.push(f),
    onConnection: (open) => connections.push(open),
    reconnectDelayMs: 0,
  });
  return { stream, sockets, sinces, frames, connections };
}

describe("EventStream", () => {
  it("accepts dense frames and advances the cursor", () => {
    const h = harness();
    h.stream.start();
    const socket = h.sockets[0]!;
    socket.serverOpen();
    socket.deliver(frame(0));
    socket.deliver(frame(1));
    socket.deliver(frame(2));
    expect(h.frames.map((f) => f.index)).toEqual([0, 1, 2]);
    expect(h.stream.seen).toBe(3);
  });

  it("drops replayed duplicates", () => {
    const h = harness();
    h.stream.start();
    const socket = h.sockets[0]!;
    socket.serverOpen();
    socket.deliver(frame(0));
    socket.deliver(frame(0));
    socket.deliver(frame(1));
    expect(h.frames.map((f) => f.index)).toEqual([0, 1]);
  });

  it("reconnects from the cursor after a server-side close", async () => {
    const h = harness();
    h.stream.start();
    const first = h.sockets[0]!;
    first.serverOpen();
    first.deliver(frame(0));
    first.deliver(frame(1));
    first.serverClose();
    await flush();
    expect(h.sinces).toEqual([0, 2]);
    const second = h.sockets[1]!;
    second.serverOpen();
    second.deliver(frame(2));
    expect(h.frames.map((f) => f.index)).toEqual([0, 1, 2]);
    expect(h.connections).toEqual([true, false, true]);
  });

  it("treats a gap as desync and resyncs from the cursor", async () => {
    const h = harness();
    h.stream.start();
    const first = h.sockets[0]!;
    first.serverOpen();
    first.deliver(frame(0));
    first.deliver(frame(5));
    expect(first.closed).toBe(true);
    await flush();
    expect(h.sinces).toEqual([0, 1]);
    expect(h.frames.map((f) => f.index)).toEqual([0]);
  });

  it("resyncs on malformed frames", async () => {
    const h = harness();
    h.stream.start();
    const first = h.sockets[0]!;
    first.serverOpen();
    first.deliverRaw("not json");
    expect(first.closed).toBe(true);
    await flush();
    expect(h.sinces).toEqual([0, 0]);
  });

  it("stop() closes the socket and cancels reconnects", async () => {
    const h = harness();
    h.stream.start();
    const first = h.sockets[0]!;
    first.serverOpen();
    h.stream.stop();
    expect(first.closed).toBe(true);
    await flush();
    expect(h.sockets).toHaveLength(1);
  });

  it("ignores frames from a socket it already abandoned", async () => {
    const h = harness();
    h.stream.start();
    const first = h.sockets[0]!;
    first.serverOpen();
    first.deliver(frame(0));
    first.serverClose();
    first.deliver(frame(1));
    await flush();
    expect(h.frames.map((f) => f.index)).toEqual([0]);
    expect(h.sinces).toEqual([0, 1]);
  });
});
