/**
 * Key bindings per environment kind, plus the input lock.
 *
 * A binding maps keyboard keys to action ids; no two keys may map to
 * the same action within a stage (the reverse, several actions on one
 * key, is rejected by construction of the map). Unbound keys are
 * ignored. The lock admits at most one in-flight action per session.
 */

export class InputBinding {
  private readonly keyToAction = new Map<string, number>();

  constructor(entries: Array<[string, number]>) {
    const seen = new Set<number>();
    for (const [key, action] of entries) {
      if (this.keyToAction.has(key)) {
        throw new Error(`key ${key} bound twice`);
      }
      if (seen.has(action)) {
        throw new Error(`action ${action} bound to two keys`);
      }
      this.keyToAction.set(key, action);
      seen.add(action);
    }
  }

  actionFor(key: string): number | null {
    const action = this.keyToAction.get(key);
    return action === undefined ? null : action;
  }
}

export const BINDINGS: Record<string, InputBinding> = {
  gridnav: new InputBinding([
    ["ArrowUp", 0],
    ["ArrowDown", 1],
    ["ArrowLeft", 2],
    ["ArrowRight", 3],
    [" ", 4],
  ]),
  twocooks: new InputBinding([
    ["ArrowUp", 0],
    ["ArrowDown", 1],
    ["ArrowLeft", 2],
    ["ArrowRight", 3],
    [" ", 4],
    ["e", 5],
  ]),
};

export const CONTINUE_KEY = "Enter";

export class InputLock {
  private locked = false;

  get isLocked(): boolean {
    return this.locked;
  }

  /** Returns true when the caller acquired the lock. */
  acquire(): boolean {
    if (this.locked) return false;
    this.locked = true;
    return true;
  }

  release(): void {
    this.locked = false;
  }
}
