/**
 * One monotonic, high-resolution clock for the whole client.
 *
 * Both response-time stamps (t1 at observation paint, t2 at keydown)
 * must come from this same source; mixing clock bases would make their
 * difference meaningless. Wall-clock time never appears here.
 */

export interface MonotonicClock {
  nowMs(): number;
}

export const performanceClock: MonotonicClock = {
  nowMs: () => performance.now(),
};

/** Test clock advanced by hand. */
export class ManualClock implements MonotonicClock {
  private t = 0;

  nowMs(): number {
    return this.t;
  }

  advance(ms: number): void {
    this.t += ms;
  }
}
