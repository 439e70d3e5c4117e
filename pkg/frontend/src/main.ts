/**
 * Browser entry point: wires the session state machine to the DOM.
 *
 * t1 is taken right after the canvas draw for the observation on
 * screen; t2 at keydown. Both come from performance.now(). The session
 * id is kept in a cookie so reloads and reconnects resume seamlessly.
 */

import { buildForm } from "./forms.js";
import { CanvasRenderer, loadAtlas } from "./render.js";
import { ExperimentClient, type SessionStorage, type ViewSink } from "./session.js";
import { performanceClock } from "./timing.js";
import { ReconnectingSocket } from "./transport.js";
import type { ObservationPayload, QuestionPayload, TranscriptEntry } from "./protocol.js";

const COOKIE = "prestep_session";
const VERSION_COOKIE = "prestep_experiment_version";

function cookieValue(name: string): string | null {
  for (const part of document.cookie.split("; ")) {
    const [key, value] = part.split("=");
    if (key === name) return decodeURIComponent(value);
  }
  return null;
}

const cookieStorage: SessionStorage = {
  getSessionId: () => cookieValue(COOKIE),
  setSessionId: (id) => {
    document.cookie = `${COOKIE}=${encodeURIComponent(id)}; path=/; max-age=2592000`;
  },
  getExperimentVersion: () => {
    const raw = cookieValue(VERSION_COOKIE);
    return raw === null ? null : Number(raw);
  },
  setExperimentVersion: (version) => {
    document.cookie = `${VERSION_COOKIE}=${version}; path=/; max-age=2592000`;
  },
};

async function boot(): Promise<void> {
  const canvas = document.getElementById("board") as HTMLCanvasElement;
  const overlay = document.getElementById("overlay")!;
  const stagePane = document.getElementById("stage")!;
  const statusPane = document.getElementById("status")!;
  const chatLog = document.getElementById("chat-log")!;
  const chatBox = document.getElementById("chat-input") as HTMLInputElement;
  const chatPane = document.getElementById("chat")!;

  const { atlas, sheet } = await loadAtlas(".");
  const renderer = new CanvasRenderer(canvas, atlas, sheet);

  const sink: ViewSink = {
    paintObservation(obs: ObservationPayload, envKind: string): number {
      renderer.draw(obs, envKind);
      overlay.textContent = obs.overlay ?? "";
      canvas.hidden = false;
      stagePane.innerHTML = "";
      delete stagePane.dataset.formIds;
      chatPane.hidden = !client.chatEnabled;
      return performanceClock.nowMs();
    },
    showInstruction(body: string): void {
      canvas.hidden = true;
      chatPane.hidden = true;
      stagePane.innerHTML = "";
      delete stagePane.dataset.formIds;
      const text = document.createElement("pre");
      text.textContent = body;
      const hint = document.createElement("p");
      hint.textContent = "Press Enter to continue.";
      stagePane.append(text, hint);
    },
    showForm(form: QuestionPayload[], issues?: string[]): void {
      canvas.hidden = true;
      chatPane.hidden = true;
      if (issues && issues.length) {
        const note = document.createElement("p");
        note.className = "issues";
        note.textContent = `Please revisit: ${issues.join(", ")}`;
        stagePane.prepend(note);
        return; // keep partially entered answers
      }
      // a resync re-shows the same form: keep what was already entered
      const ids = form.map((q) => q.id).join("\n");
      if (stagePane.dataset.formIds === ids) return;
      stagePane.dataset.formIds = ids;
      buildForm(stagePane as HTMLElement, form, (answers) => client.submitFeedback(answers));
    },
    showComplete(): void {
      canvas.hidden = true;
      chatPane.hidden = true;
      delete stagePane.dataset.formIds;
      stagePane.textContent = "All done. Thank you for participating!";
    },
    showTranscript(entries: TranscriptEntry[]): void {
      chatLog.innerHTML = "";
      for (const entry of entries) this.appendChat(entry);
    },
    appendChat(entry: TranscriptEntry): void {
      const line = document.createElement("p");
      line.className = `chat-${entry.role}`;
      line.textContent = `${entry.role === "user" ? "you" : "assistant"}: ${entry.text}`;
      chatLog.appendChild(line);
      chatLog.scrollTop = chatLog.scrollHeight;
    },
    showStatus(status): void {
      statusPane.textContent = status === "connected" ? "" : status;
    },
    showUpgradeNotice(message: string): void {
      canvas.hidden = true;
      stagePane.textContent = `This session cannot continue: ${message}. Please reload.`;
    },
  };

  const socketUrl = `${location.protocol === "https:" ? "wss" : "ws"}://${location.host}/ws`;
  const transport = new ReconnectingSocket(socketUrl);
  const client = new ExperimentClient(transport, sink, performanceClock, cookieStorage);

  document.addEventListener("keydown", (event) => {
    if (event.target === chatBox) {
      if (event.key === "Enter" && chatBox.value.trim()) {
        client.sendChat(chatBox.value.trim());
        chatBox.value = "";
      }
      return;
    }
    client.keydown(event.key);
  });
  setInterval(() => client.ping(), 15_000);
  transport.connect();
}

boot().catch((err) => {
  document.body.textContent = `failed to start: ${err}`;
});
