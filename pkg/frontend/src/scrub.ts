/**
 * Trajectory scrub controller: turns a stream of slider positions into a
 * bounded stream of service requests.
 *
 * Guarantees, regardless of how fast the slider moves:
 *   - at most one live request is in flight per session at any time; a
 *     request unresolved after staleAfterMs is written off so a hung
 *     connection cannot freeze the view;
 *   - issued requests are spaced at least minIntervalMs apart (default
 *     200 ms, i.e. at most 5 per second);
 *   - every response carries the sequence number of its request, and a
 *     response at or below the newest applied one is dropped, so a
 *     written-off request that eventually answers cannot clobber a newer
 *     frame;
 *   - the final slider position is always fetched (trailing edge), so the
 *     view settles on what the user last asked for.
 */

export interface ScrubResult<T> {
  seq: number;
  value: T;
}

export type ScrubFetch<T> = (t: number, seq: number) => Promise<T>;
export type ScrubApply<T> = (value: T, seq: number, t: number) => void;

interface TimerHost {
  setTimeout(fn: () => void, ms: number): ReturnType<typeof setTimeout>;
  clearTimeout(handle: ReturnType<typeof setTimeout>): void;
  now(): number;
}

const realTimers: TimerHost = {
  setTimeout: (fn, ms) => setTimeout(fn, ms),
  clearTimeout: (h) => clearTimeout(h),
  now: () => Date.now(),
};

export interface ScrubOptions {
  /** Minimum spacing between issued requests. */
  minIntervalMs?: number;
  /** In-flight age after which a request stops blocking new ones. */
  staleAfterMs?: number;
  timers?: TimerHost;
  onError?: (err: unknown) => void;
}

export class TrajectoryScrubber<T> {
  private seq = 0;
  private applied = 0;
  private inFlightSeq: number | null = null;
  private inFlightSince = 0;
  private lastIssuedAt = -Infinity;
  private pendingT: number | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;

  private readonly minIntervalMs: number;
  private readonly staleAfterMs: number;
  private readonly timers: TimerHost;
  private readonly onError: (err: unknown) => void;

  constructor(
    private readonly fetchFn: ScrubFetch<T>,
    private readonly apply: ScrubApply<T>,
    options: ScrubOptions | number = {},
  ) {
    const opts = typeof options === "number" ? { minIntervalMs: options } : options;
    this.minIntervalMs = opts.minIntervalMs ?? 200;
    this.staleAfterMs = opts.staleAfterMs ?? 4000;
    this.timers = opts.timers ?? realTimers;
    this.onError = opts.onError ?? (() => {});
  }

  /** Called on every slider movement. */
  request(t: number): void {
    this.pendingT = t;
    this.pump();
  }

  /** True while a request is unresolved or a trailing fetch is queued. */
  get busy(): boolean {
    return this.inFlightSeq !== null || this.pendingT !== null;
  }

  private blocked(): boolean {
    if (this.inFlightSeq === null) return false;
    if (this.timers.now() - this.inFlightSince < this.staleAfterMs) return true;
    // hung request: stop waiting for it; its late response will be
    // rejected by the sequence check in settle()
    this.inFlightSeq = null;
    return false;
  }

  private pump(): void {
    if (this.pendingT === null || this.blocked()) return;
    const wait = this.lastIssuedAt + this.minIntervalMs - this.timers.now();
    if (wait > 0) {
      if (this.timer === null) {
        this.timer = this.timers.setTimeout(() => {
          this.timer = null;
          this.pump();
        }, wait);
      }
      return;
    }
    const t = this.pendingT;
    this.pendingT = null;
    this.issue(t);
  }

  private issue(t: number): void {
    const seq = ++this.seq;
    this.inFlightSeq = seq;
    this.inFlightSince = this.timers.now();
    this.lastIssuedAt = this.timers.now();
    this.fetchFn(t, seq).then(
      (value) => this.settle(seq, t, value),
      (err) => {
        if (this.inFlightSeq === seq) this.inFlightSeq = null;
        this.onError(err);
        this.pump();
      },
    );
  }

  private settle(seq: number, t: number, value: T): void {
    if (this.inFlightSeq === seq) this.inFlightSeq = null;
    // a newer response may already be on screen; never go backwards
    if (seq > this.applied) {
      this.applied = seq;
      this.apply(value, seq, t);
    }
    this.pump();
  }
}

/**
 * Linear vertex-space blend between two fetched frames, for display while
 * the scrubber is between server responses. Purely cosmetic: every settled
 * frame comes from the service.
 */
export function blendFrames(
  a: Float32Array,
  b: Float32Array,
  alpha: number,
): Float32Array {
  if (a.length !== b.length) {
    throw new Error(`frame size mismatch: ${a.length} vs ${b.length}`);
  }
  const w = Math.min(1, Math.max(0, alpha));
  const out = new Float32Array(a.length);
  for (let i = 0; i < a.length; i++) {
    out[i] = (1 - w) * (a[i] as number) + w * (b[i] as number);
  }
  return out;
}
