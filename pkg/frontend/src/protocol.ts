/**
 * Wire protocol types, mirroring the server's JSON schema
 * (docs/protocol.md in the repository root).
 *
 * Messages travel one JSON object per websocket text frame (or per line
 * over TCP). `seq` increases by one per direction per connection;
 * idempotence of environment steps is keyed on `frame_id`.
 */

export const PROTOCOL_VERSION = 1;

export interface ObservationPayload {
  grid: number[][];
  overlay: string | null;
  legal: boolean[];
}

export interface SuccessorPayload {
  observation: ObservationPayload;
  reward: number;
  done: boolean;
}

export interface FramePayload {
  frame_id: number;
  stage_index: number;
  episode: number;
  step: number;
  observation: ObservationPayload;
  successors: Record<string, SuccessorPayload>;
}

export interface EpisodeEndPayload {
  episode: number;
  return: number;
  success: boolean;
}

export interface SessionPayload {
  session_id: string;
  experiment_id: string;
  experiment_version: number;
  title: string;
  consent: string;
  heartbeat_interval_ms: number;
  protocol_version: number;
}

export type StageView =
  | { kind: "instruction"; body: string }
  | { kind: "feedback"; form: QuestionPayload[] }
  | { kind: "environment"; env: string; chat_enabled?: boolean }
  | { kind: "complete" };

export interface ResyncPayload {
  stage_index: number;
  episode: number;
  successes: number;
  phase: "showing" | "interacting" | "complete";
  view: StageView;
  frame: FramePayload | null;
  transcript: TranscriptEntry[];
}

export interface TranscriptEntry {
  role: "user" | "assistant";
  text: string;
  unavailable?: boolean;
}

export interface EnvAckPayload {
  frame_id: number;
  action: number;
  reward: number;
  done: boolean;
  episode_end: EpisodeEndPayload | null;
  next_frame: FramePayload | null;
  stage_done: boolean;
}

export interface StageShowPayload {
  stage_index: number;
  view: StageView;
}

export interface FeedbackFormPayload {
  stage_index: number;
  form: QuestionPayload[];
}

export interface StageDonePayload {
  stage_index: number;
  experiment_complete: boolean;
}

export interface ErrorPayload {
  code: string;
  message: string;
  questions?: string[];
}

export interface ChatAssistantPayload {
  text: string;
  unavailable: boolean;
}

export type InputKindPayload =
  | { kind: "likert"; min: number; max: number; labels?: string[] }
  | { kind: "radio"; options: string[] }
  | { kind: "slider"; min: number; max: number; step: number }
  | { kind: "free_text" };

export interface QuestionPayload {
  id: string;
  prompt: string;
  input: InputKindPayload;
}

export type ServerMessage =
  | { type: "session"; session: string | null; seq: number; payload: SessionPayload }
  | { type: "resync"; session: string | null; seq: number; payload: ResyncPayload }
  | { type: "env_frame"; session: string | null; seq: number; payload: FramePayload }
  | { type: "env_ack"; session: string | null; seq: number; payload: EnvAckPayload }
  | { type: "stage_show"; session: string | null; seq: number; payload: StageShowPayload }
  | { type: "feedback_form"; session: string | null; seq: number; payload: FeedbackFormPayload }
  | { type: "stage_done"; session: string | null; seq: number; payload: StageDonePayload }
  | { type: "chat_assistant"; session: string | null; seq: number; payload: ChatAssistantPayload }
  | { type: "error"; session: string | null; seq: number; payload: ErrorPayload }
  | { type: "pong"; session: string | null; seq: number; payload: Record<string, never> };

export interface ActionPayload {
  kind: "env" | "continue";
  frame_id?: number;
  action?: number;
  t1?: number;
  t2?: number;
}

export type ClientMessageBody =
  | { type: "hello"; payload: { session_id: string | null; protocol_version: number; experiment_version?: number } }
  | { type: "action"; payload: ActionPayload }
  | { type: "feedback_submit"; payload: { answers: Record<string, unknown> } }
  | { type: "chat_user"; payload: { text: string } }
  | { type: "ping"; payload: Record<string, never> };

export function parseServerMessage(raw: string): ServerMessage | null {
  let doc: unknown;
  try {
    doc = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof doc !== "object" || doc === null) return null;
  const msg = doc as Record<string, unknown>;
  if (typeof msg.type !== "string" || typeof msg.seq !== "number") return null;
  return doc as ServerMessage;
}

export function encodeClientMessage(
  body: ClientMessageBody,
  session: string | null,
  seq: number,
): string {
  return JSON.stringify({ type: body.type, session, seq, payload: body.payload });
}
