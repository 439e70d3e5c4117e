import { describe, expect, it } from "vitest";

import { ExperimentClient, type ViewSink } from "../src/session.js";
import { ManualClock } from "../src/timing.js";
import type { Transport } from "../src/transport.js";
import type {
  FramePayload,
  ObservationPayload,
  QuestionPayload,
  TranscriptEntry,
} from "../src/protocol.js";

class FakeTransport implements Transport {
  sent: Array<Record<string, unknown>> = [];
  private messageHandler: (text: string) => void = () => {};
  private openHandler: () => void = () => {};
  private closeHandler: () => void = () => {};

  send(text: string): void {
    this.sent.push(JSON.parse(text));
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
  close(): void {}

  // test controls
  open(): void {
    this.openHandler();
  }
  drop(): void {
    this.closeHandler();
  }
  deliver(type: string, payload: unknown, seq = 1): void {
    this.messageHandler(JSON.stringify({ type, session: "s1", seq, payload }));
  }
}

interface Event {
  kind: string;
  at: number;
  detail?: unknown;
}

class RecordingSink implements ViewSink {
  events: Event[] = [];
  constructor(private clock: ManualClock, private paintCost = 2) {}

  paintObservation(obs: ObservationPayload, envKind: string): number {
    this.clock.advance(this.paintCost);
    const at = this.clock.nowMs();
    this.events.push({ kind: "paint", at, detail: { grid: obs.grid, envKind } });
    return at;
  }
  showInstruction(body: string): void {
    this.events.push({ kind: "instruction", at: this.clock.nowMs(), detail: body });
  }
  showForm(form: QuestionPayload[], issues?: string[]): void {
    this.events.push({ kind: "form", at: this.clock.nowMs(), detail: issues ?? [] });
  }
  showComplete(): void {
    this.events.push({ kind: "complete", at: this.clock.nowMs() });
  }
  showTranscript(entries: TranscriptEntry[]): void {
    this.events.push({ kind: "transcript", at: this.clock.nowMs(), detail: entries });
  }
  appendChat(entry: TranscriptEntry): void {
    this.events.push({ kind: "chat", at: this.clock.nowMs(), detail: entry });
  }
  showStatus(status: string): void {
    this.events.push({ kind: `status:${status}`, at: this.clock.nowMs() });
  }
  showUpgradeNotice(message: string): void {
    this.events.push({ kind: "upgrade", at: this.clock.nowMs(), detail: message });
  }

  ofKind(kind: string): Event[] {
    return this.events.filter((e) => e.kind === kind);
  }
}

function obs(agentCol: number): ObservationPayload {
  return { grid: [[agentCol === 0 ? 3 : 0, agentCol === 1 ? 3 : 0]], overlay: null, legal: [false, false, true, true, true] };
}

function frame(id: number, agentCol: number): FramePayload {
  const successors: FramePayload["successors"] = {};
  for (let a = 0; a < 5; a++) {
    const nextCol = a === 3 ? Math.min(agentCol + 1, 1) : a === 2 ? Math.max(agentCol - 1, 0) : agentCol;
    successors[String(a)] = {
      observation: obs(nextCol),
      reward: a === 3 && agentCol === 0 ? 1 : 0,
      done: false,
    };
  }
  return {
    frame_id: id,
    stage_index: 1,
    episode: 0,
    step: id,
    observation: obs(agentCol),
    successors,
  };
}

function setup() {
  const transport = new FakeTransport();
  const clock = new ManualClock();
  const sink = new RecordingSink(clock);
  const client = new ExperimentClient(transport, sink, clock);
  transport.open();
  transport.deliver("session", {
    session_id: "s1", experiment_id: "e", experiment_version: 3,
    title: "", consent: "", heartbeat_interval_ms: 15000, protocol_version: 1,
  });
  return { transport, clock, sink, client };
}

function deliverEnvResync(transport: FakeTransport, id = 0, col = 0): void {
  transport.deliver("resync", {
    stage_index: 1, episode: 0, successes: 0, phase: "interacting",
    view: { kind: "environment", env: "gridnav", chat_enabled: true },
    frame: frame(id, col), transcript: [],
  });
}

describe("handshake", () => {
  it("greets with stored session id and protocol version", () => {
    const { transport } = setup();
    expect(transport.sent[0]).toMatchObject({
      type: "hello",
      payload: { session_id: null, protocol_version: 1 },
    });
  });

  it("re-greets with the issued id and experiment version after reconnect", () => {
    const { transport } = setup();
    transport.drop();
    transport.open();
    const hello = transport.sent.at(-1)!;
    expect(hello).toMatchObject({
      type: "hello",
      session: "s1",
      payload: { session_id: "s1", experiment_version: 3 },
    });
  });
});

describe("instruction stage", () => {
  it("renders and continues on Enter", () => {
    const { transport, sink, client } = setup();
    transport.deliver("resync", {
      stage_index: 0, episode: 0, successes: 0, phase: "showing",
      view: { kind: "instruction", body: "read me" }, frame: null, transcript: [],
    });
    expect(sink.ofKind("instruction")).toHaveLength(1);
    client.keydown("Enter");
    expect(transport.sent.at(-1)).toMatchObject({
      type: "action", payload: { kind: "continue" },
    });
  });
});

describe("environment stage", () => {
  it("paints the successor locally before the action message is sent", () => {
    const { transport, sink, client, clock } = setup();
    deliverEnvResync(transport);
    expect(sink.ofKind("paint")).toHaveLength(1); // initial observation
    const sentBefore = transport.sent.length;
    client.keydown("ArrowRight");
    const paints = sink.ofKind("paint");
    expect(paints).toHaveLength(2); // successor painted
    const actionMsg = transport.sent.at(-1)!;
    expect(transport.sent.length).toBe(sentBefore + 1);
    // the paint event time precedes the moment the message was sent
    expect(paints[1].at).toBeLessThanOrEqual(clock.nowMs());
    expect(actionMsg).toMatchObject({
      type: "action",
      payload: { kind: "env", frame_id: 0, action: 3 },
    });
    const payload = (actionMsg as any).payload;
    expect(payload.t2).toBeGreaterThanOrEqual(payload.t1);
    expect(payload.t1).toBe(paints[0].at); // t1 is the previous paint
  });

  it("locks input until env_ack and ignores keypresses while locked", () => {
    const { transport, sink, client } = setup();
    deliverEnvResync(transport);
    client.keydown("ArrowRight");
    const paintsAfterFirst = sink.ofKind("paint").length;
    const sentAfterFirst = transport.sent.length;
    client.keydown("ArrowRight"); // locked: ignored, no queuing
    expect(sink.ofKind("paint").length).toBe(paintsAfterFirst);
    expect(transport.sent.length).toBe(sentAfterFirst);
    transport.deliver("env_ack", {
      frame_id: 0, action: 3, reward: 0, done: false,
      episode_end: null, next_frame: frame(1, 1), stage_done: false,
    });
    expect(client.cache.frameId).toBe(1);
    client.keydown("ArrowLeft");
    expect(transport.sent.at(-1)).toMatchObject({
      type: "action", payload: { frame_id: 1, action: 2 },
    });
  });

  it("ignores masked-illegal and unbound keys entirely", () => {
    const { transport, sink, client } = setup();
    deliverEnvResync(transport);
    const paints = sink.ofKind("paint").length;
    const sent = transport.sent.length;
    client.keydown("ArrowUp"); // legal[0] is false
    client.keydown("z"); // unbound
    expect(sink.ofKind("paint").length).toBe(paints);
    expect(transport.sent.length).toBe(sent);
    expect(client.lock.isLocked).toBe(false);
  });

  it("drops the cache on disconnect so keypresses wait for the resync", () => {
    const { transport, sink, client } = setup();
    deliverEnvResync(transport);
    client.keydown("ArrowRight"); // in flight
    transport.drop();
    expect(client.cache.frameId).toBeNull();
    expect(client.lock.isLocked).toBe(false);
    const paints = sink.ofKind("paint").length;
    client.keydown("ArrowRight"); // nothing cached: ignored
    expect(sink.ofKind("paint").length).toBe(paints);
    transport.open(); // reconnect: greet, then resync restores the view
    deliverEnvResync(transport, 1, 1);
    expect(client.cache.frameId).toBe(1);
    client.keydown("ArrowLeft");
    expect(transport.sent.at(-1)).toMatchObject({
      type: "action", payload: { frame_id: 1, action: 2 },
    });
  });

  it("discards the pending action and unlocks on resync", () => {
    const { transport, client } = setup();
    deliverEnvResync(transport);
    client.keydown("ArrowRight");
    expect(client.lock.isLocked).toBe(true);
    deliverEnvResync(transport, 0, 0); // server never saw the action
    expect(client.lock.isLocked).toBe(false);
    expect(client.cache.frameId).toBe(0);
    client.keydown("ArrowRight"); // can act again immediately
    expect(client.lock.isLocked).toBe(true);
  });

  it("clears the cache on a stage-ending ack so no input races the transition", () => {
    const { transport, sink, client } = setup();
    deliverEnvResync(transport);
    client.keydown("ArrowRight");
    transport.deliver("env_ack", {
      frame_id: 0, action: 3, reward: 1, done: true,
      episode_end: { episode: 0, return: 1, success: true },
      next_frame: null, stage_done: true,
    });
    expect(client.cache.frameId).toBeNull();
    const paints = sink.ofKind("paint").length;
    client.keydown("ArrowRight"); // nothing cached: ignored
    expect(sink.ofKind("paint").length).toBe(paints);
  });

  it("repaints when an episode ends and a new one begins", () => {
    const { transport, sink, client } = setup();
    deliverEnvResync(transport);
    client.keydown("ArrowRight");
    transport.deliver("env_ack", {
      frame_id: 0, action: 3, reward: 1, done: true,
      episode_end: { episode: 0, return: 1, success: true },
      next_frame: frame(1, 0), stage_done: false,
    });
    // successor paint at keydown + fresh-episode paint
    expect(sink.ofKind("paint")).toHaveLength(3);
    expect(client.cache.frameId).toBe(1);
  });
});

describe("errors and resilience", () => {
  it("blocks on upgrade_required", () => {
    const { transport, sink } = setup();
    transport.deliver("error", { code: "upgrade_required", message: "stale build" });
    expect(sink.ofKind("upgrade")).toHaveLength(1);
  });

  it("unlocks and surfaces saving backpressure", () => {
    const { transport, sink, client } = setup();
    deliverEnvResync(transport);
    client.keydown("ArrowRight");
    transport.deliver("error", { code: "saving", message: "backlog" });
    expect(client.lock.isLocked).toBe(false);
    expect(sink.ofKind("status:saving")).toHaveLength(1);
  });

  it("relays feedback validation issues", () => {
    const { transport, sink, client } = setup();
    transport.deliver("feedback_form", {
      stage_index: 2,
      form: [{ id: "fun", prompt: "?", input: { kind: "likert", min: 1, max: 5 } }],
    });
    client.submitFeedback({ fun: 9 });
    transport.deliver("error", { code: "invalid_feedback", message: "bad", questions: ["fun"] });
    const forms = sink.ofKind("form");
    expect(forms.at(-1)!.detail).toEqual(["fun"]);
  });
});

describe("chat", () => {
  it("appends both sides of an exchange", () => {
    const { transport, sink, client } = setup();
    deliverEnvResync(transport);
    client.sendChat("where is the goal?");
    expect(transport.sent.at(-1)).toMatchObject({ type: "chat_user" });
    transport.deliver("chat_assistant", { text: "row 0, column 1", unavailable: false });
    const chats = sink.ofKind("chat");
    expect(chats).toHaveLength(2);
    expect((chats[0].detail as TranscriptEntry).role).toBe("user");
    expect((chats[1].detail as TranscriptEntry).role).toBe("assistant");
  });
});
