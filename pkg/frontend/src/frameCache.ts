/**
 * Client-side cache of the current speculative frame.
 *
 * The cache exactly mirrors the last `env_frame` the server sent: the
 * current observation plus one successor (observation, reward, done)
 * per action. A keypress paints straight from here, never from the
 * network. A resync replaces the cache wholesale.
 */

import type { FramePayload, SuccessorPayload } from "./protocol.js";

export class ClientFrameCache {
  private frame: FramePayload | null = null;

  load(frame: FramePayload): void {
    this.frame = frame;
  }

  clear(): void {
    this.frame = null;
  }

  get current(): FramePayload | null {
    return this.frame;
  }

  get frameId(): number | null {
    return this.frame ? this.frame.frame_id : null;
  }

  /** Successor for an action id, or null when uncached/unknown. */
  successor(action: number): SuccessorPayload | null {
    if (!this.frame) return null;
    return this.frame.successors[String(action)] ?? null;
  }

  isLegal(action: number): boolean {
    if (!this.frame) return false;
    return this.frame.observation.legal[action] ?? false;
  }
}
