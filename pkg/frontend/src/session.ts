/**
 * The client session state machine.
 *
 * Drives one participant through an experiment: greets the server
 * (re-using a stored session id across reconnects), mirrors the current
 * stage view, caches speculative frames, paints the chosen successor at
 * keydown before anything touches the network, stamps t1 (paint) and t2
 * (keydown) from one monotonic clock, and resynchronizes wholesale
 * whenever the server says so. At most one action is in flight; a
 * resync discards it.
 */

import { ClientFrameCache } from "./frameCache.js";
import { BINDINGS, CONTINUE_KEY, InputBinding, InputLock } from "./input.js";
import type { MonotonicClock } from "./timing.js";
import type { Transport } from "./transport.js";
import {
  PROTOCOL_VERSION,
  encodeClientMessage,
  parseServerMessage,
  type ClientMessageBody,
  type FramePayload,
  type ObservationPayload,
  type QuestionPayload,
  type ServerMessage,
  type StageView,
  type TranscriptEntry,
} from "./protocol.js";

export interface ViewSink {
  /** Paint a tile grid; returns the paint timestamp (t1) from the
   * client's monotonic clock. Tile ids are scoped by `envKind`. */
  paintObservation(obs: ObservationPayload, envKind: string): number;
  showInstruction(body: string): void;
  showForm(form: QuestionPayload[], issues?: string[]): void;
  showComplete(): void;
  showTranscript(entries: TranscriptEntry[]): void;
  appendChat(entry: TranscriptEntry): void;
  showStatus(status: "connected" | "reconnecting" | "saving" | "idle"): void;
  showUpgradeNotice(message: string): void;
}

export interface SessionStorage {
  getSessionId(): string | null;
  setSessionId(id: string): void;
  getExperimentVersion(): number | null;
  setExperimentVersion(version: number): void;
}

export class MemorySessionStorage implements SessionStorage {
  private id: string | null = null;
  private version: number | null = null;

  getSessionId() { return this.id; }
  setSessionId(id: string) { this.id = id; }
  getExperimentVersion() { return this.version; }
  setExperimentVersion(version: number) { this.version = version; }
}

type Phase = "connecting" | "instruction" | "environment" | "feedback" | "complete" | "blocked";

export class ExperimentClient {
  readonly cache = new ClientFrameCache();
  readonly lock = new InputLock();
  phase: Phase = "connecting";
  private seq = 0;
  private sessionId: string | null;
  private binding: InputBinding | null = null;
  private t1: number | null = null; // paint time of the frame on screen
  private envKind: string | null = null;
  chatEnabled = false;

  constructor(
    private readonly transport: Transport,
    private readonly sink: ViewSink,
    private readonly clock: MonotonicClock,
    private readonly storage: SessionStorage = new MemorySessionStorage(),
  ) {
    this.sessionId = storage.getSessionId();
    transport.onMessage((text) => this.onMessage(text));
    transport.onOpen(() => this.greet());
    transport.onClose(() => {
      // nothing can be delivered reliably until the resync rebuilds the
      // view: drop the cache so keypresses are ignored, not misdirected
      this.cache.clear();
      this.t1 = null;
      this.lock.release();
      this.sink.showStatus("reconnecting");
    });
  }

  private send(body: ClientMessageBody): void {
    this.seq += 1;
    this.transport.send(encodeClientMessage(body, this.sessionId, this.seq));
  }

  private greet(): void {
    // a fresh connection knows nothing until the resync arrives
    this.cache.clear();
    this.t1 = null;
    this.lock.release();
    this.seq = 0;
    const version = this.storage.getExperimentVersion();
    this.send({
      type: "hello",
      payload: {
        session_id: this.sessionId,
        protocol_version: PROTOCOL_VERSION,
        ...(version !== null ? { experiment_version: version } : {}),
      },
    });
    this.sink.showStatus("connected");
  }

  // --- inbound ---

  private onMessage(text: string): void {
    const msg = parseServerMessage(text);
    if (!msg) return;
    this.dispatch(msg);
  }

  private dispatch(msg: ServerMessage): void {
    switch (msg.type) {
      case "session": {
        this.sessionId = msg.payload.session_id;
        this.storage.setSessionId(msg.payload.session_id);
        this.storage.setExperimentVersion(msg.payload.experiment_version);
        break;
      }
      case "resync":
        this.onResync(msg.payload.view, msg.payload.frame, msg.payload.transcript);
        break;
      case "stage_show":
        this.onView(msg.payload.view);
        break;
      case "feedback_form":
        this.phase = "feedback";
        this.sink.showForm(msg.payload.form);
        break;
      case "env_frame":
        this.enterEnvironment(msg.payload);
        break;
      case "env_ack": {
        this.lock.release();
        const next = msg.payload.next_frame;
        if (next) {
          this.cache.load(next);
          if (msg.payload.episode_end) {
            // a fresh episode: its first observation is new information
            this.t1 = this.sink.paintObservation(next.observation, this.envKind ?? "gridnav");
          }
        } else {
          // stage over (or transition pending): nothing to act on until
          // the next view message arrives
          this.cache.clear();
          this.t1 = null;
        }
        break;
      }
      case "stage_done":
        this.cache.clear();
        this.t1 = null;
        break;
      case "chat_assistant":
        this.sink.appendChat({ role: "assistant", ...msg.payload });
        break;
      case "error":
        this.onError(msg.payload.code, msg.payload.message, msg.payload.questions);
        break;
      case "pong":
        break;
    }
  }

  private onResync(view: StageView, frame: FramePayload | null, transcript: TranscriptEntry[]): void {
    this.lock.release(); // any locally pending action is discarded
    this.cache.clear();
    this.sink.showTranscript(transcript);
    if (view.kind === "environment" && frame) {
      this.envKind = view.env;
      this.chatEnabled = Boolean(view.chat_enabled);
      this.binding = BINDINGS[view.env] ?? null;
      this.phase = "environment";
      this.cache.load(frame);
      this.t1 = this.sink.paintObservation(frame.observation, view.env);
    } else {
      this.onView(view);
    }
  }

  private onView(view: StageView): void {
    switch (view.kind) {
      case "instruction":
        this.phase = "instruction";
        this.sink.showInstruction(view.body);
        break;
      case "feedback":
        this.phase = "feedback";
        this.sink.showForm(view.form);
        break;
      case "environment":
        this.phase = "environment";
        this.envKind = view.env;
        this.chatEnabled = Boolean(view.chat_enabled);
        this.binding = BINDINGS[view.env] ?? null;
        break;
      case "complete":
        this.phase = "complete";
        this.sink.showComplete();
        break;
    }
  }

  private enterEnvironment(frame: FramePayload): void {
    this.phase = "environment";
    if (this.envKind) this.binding = BINDINGS[this.envKind] ?? null;
    this.binding = this.binding ?? BINDINGS.gridnav;
    this.lock.release();
    this.cache.load(frame);
    this.t1 = this.sink.paintObservation(frame.observation, this.envKind ?? "gridnav");
  }

  private onError(code: string, message: string, questions?: string[]): void {
    if (code === "upgrade_required" || code === "superseded") {
      this.phase = "blocked";
      this.sink.showUpgradeNotice(message);
      return;
    }
    if (code === "saving") {
      this.lock.release(); // same frame id stays valid; retry is safe
      this.sink.showStatus("saving");
      return;
    }
    if (code === "invalid_feedback") {
      this.sink.showForm([], questions ?? []);
      return;
    }
  }

  // --- participant input ---

  keydown(key: string): void {
    if (this.phase === "instruction" && key === CONTINUE_KEY) {
      this.send({ type: "action", payload: { kind: "continue" } });
      return;
    }
    if (this.phase !== "environment" || !this.binding) return;
    if (this.lock.isLocked) return; // no queuing of stale inputs
    const action = this.binding.actionFor(key);
    if (action === null) return; // unbound key
    if (!this.cache.isLegal(action)) return; // mask rule: no paint, no send
    const frameId = this.cache.frameId;
    const successor = this.cache.successor(action);
    if (frameId === null || successor === null) return;
    const t2 = this.clock.nowMs(); // keydown, the earliest intent signal
    const t1 = this.t1 ?? t2;
    // paint locally first: the render path owes nothing to the network
    const paintedAt = this.sink.paintObservation(successor.observation, this.envKind ?? "gridnav");
    this.t1 = paintedAt;
    if (!this.lock.acquire()) return;
    this.send({
      type: "action",
      payload: { kind: "env", frame_id: frameId, action, t1, t2 },
    });
  }

  submitFeedback(answers: Record<string, unknown>): void {
    if (this.phase !== "feedback") return;
    this.send({ type: "feedback_submit", payload: { answers } });
  }

  sendChat(text: string): void {
    if (this.phase !== "environment" || !this.chatEnabled) return;
    this.sink.appendChat({ role: "user", text });
    this.send({ type: "chat_user", payload: { text } });
  }

  ping(): void {
    this.send({ type: "ping", payload: {} });
  }
}
