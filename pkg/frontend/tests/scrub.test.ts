import { describe, expect, it } from "vitest";

import { blendFrames, TrajectoryScrubber } from "../src/scrub.js";

/** Deterministic manual clock: timers fire only through advance(). */
class FakeClock {
  private t = 0;
  private queue: { at: number; fn: () => void; id: number }[] = [];
  private nextId = 1;

  readonly host = {
    setTimeout: (fn: () => void, ms: number) => {
      const id = this.nextId++;
      this.queue.push({ at: this.t + ms, fn, id });
      return id as unknown as ReturnType<typeof setTimeout>;
    },
    clearTimeout: (handle: ReturnType<typeof setTimeout>) => {
      this.queue = this.queue.filter((q) => q.id !== (handle as unknown as number));
    },
    now: () => this.t,
  };

  async advance(ms: number): Promise<void> {
    const end = this.t + ms;
    for (;;) {
      this.queue.sort((a, b) => a.at - b.at);
      const next = this.queue[0];
      if (!next || next.at > end) break;
      this.t = next.at;
      this.queue.shift();
      next.fn();
      await flush();
    }
    this.t = end;
    await flush();
  }
}

async function flush(): Promise<void> {
  for (let i = 0; i < 8; i++) await Promise.resolve();
}

interface Deferred<T> {
  promise: Promise<T>;
  resolve: (v: T) => void;
  reject: (e: unknown) => void;
}

function deferred<T>(): Deferred<T> {
  let resolve!: (v: T) => void;
  let reject!: (e: unknown) => void;
  const promise = new Promise<T>((res, rej) => {
    resolve = res;
    reject = rej;
  });
  return { promise, resolve, reject };
}

describe("trajectory scrubbing", () => {
  it("issues at most 5 requests per second under a continuous drag", async () => {
    const clock = new FakeClock();
    const issuedAt: number[] = [];
    const scrubber = new TrajectoryScrubber<number>(
      (t) => {
        issuedAt.push(clock.host.now());
        return Promise.resolve(t);
      },
      () => {},
      { timers: clock.host },
    );

    // a 3-second drag with slider events every 10 ms
    for (let i = 0; i <= 300; i++) {
      scrubber.request(i / 300);
      await clock.advance(10);
    }

    expect(issuedAt.length).toBeGreaterThan(5); // it does keep fetching
    for (let i = 1; i < issuedAt.length; i++) {
      expect((issuedAt[i] as number) - (issuedAt[i - 1] as number)).toBeGreaterThanOrEqual(200);
    }
    // sliding-window check: 5 per strictly-less-than-a-second span
    for (let i = 0; i < issuedAt.length; i++) {
      const windowEnd = (issuedAt[i] as number) + 999;
      const inWindow = issuedAt.filter(
        (ts) => ts >= (issuedAt[i] as number) && ts <= windowEnd,
      );
      expect(inWindow.length).toBeLessThanOrEqual(5);
    }
  });

  it("always settles on the final slider position", async () => {
    const clock = new FakeClock();
    const fetched: number[] = [];
    const applied: number[] = [];
    const scrubber = new TrajectoryScrubber<number>(
      (t) => {
        fetched.push(t);
        return Promise.resolve(t);
      },
      (value) => applied.push(value),
      { timers: clock.host },
    );

    for (let i = 0; i <= 100; i++) {
      scrubber.request(i / 100);
      await clock.advance(5);
    }
    await clock.advance(500); // trailing edge
    expect(fetched[fetched.length - 1]).toBe(1);
    expect(applied[applied.length - 1]).toBe(1);
    expect(scrubber.busy).toBe(false);
  });

  it("discards a stale response by sequence number", async () => {
    const clock = new FakeClock();
    const pending = new Map<number, Deferred<string>>();
    const applied: { value: string; seq: number }[] = [];
    const scrubber = new TrajectoryScrubber<string>(
      (t, seq) => {
        const d = deferred<string>();
        pending.set(seq, d);
        return d.promise;
      },
      (value, seq) => applied.push({ value, seq }),
      { timers: clock.host, staleAfterMs: 1000 },
    );

    scrubber.request(0.2); // seq 1 issued, never answers in time
    await flush();
    expect(pending.has(1)).toBe(true);

    await clock.advance(1200); // seq 1 is written off as hung
    scrubber.request(0.9); // seq 2 replaces it
    await flush();
    expect(pending.has(2)).toBe(true);

    pending.get(2)!.resolve("frame-for-0.9");
    await flush();
    expect(applied).toEqual([{ value: "frame-for-0.9", seq: 2 }]);

    // the hung request finally answers: it must not overwrite the newer frame
    pending.get(1)!.resolve("frame-for-0.2");
    await flush();
    expect(applied).toEqual([{ value: "frame-for-0.9", seq: 2 }]);
  });

  it("keeps exactly one request in flight", async () => {
    const clock = new FakeClock();
    let inFlight = 0;
    let maxInFlight = 0;
    const scrubber = new TrajectoryScrubber<number>(
      async (t) => {
        inFlight += 1;
        maxInFlight = Math.max(maxInFlight, inFlight);
        await new Promise<void>((res) => clock.host.setTimeout(res, 350));
        inFlight -= 1;
        return t;
      },
      () => {},
      { timers: clock.host },
    );

    for (let i = 0; i < 50; i++) {
      scrubber.request(i / 50);
      await clock.advance(20);
    }
    await clock.advance(2000);
    expect(maxInFlight).toBe(1);
  });

  it("recovers after a failed request", async () => {
    const clock = new FakeClock();
    const errors: unknown[] = [];
    const applied: number[] = [];
    let calls = 0;
    const scrubber = new TrajectoryScrubber<number>(
      (t) => {
        calls += 1;
        if (calls === 1) return Promise.reject(new Error("boom"));
        return Promise.resolve(t);
      },
      (v) => applied.push(v),
      { timers: clock.host, onError: (e) => errors.push(e) },
    );

    scrubber.request(0.3);
    await flush();
    expect(errors).toHaveLength(1);
    scrubber.request(0.7);
    await clock.advance(300);
    expect(applied).toEqual([0.7]);
  });
});

describe("client-side frame interpolation", () => {
  it("blends linearly in vertex space and clamps alpha", () => {
    const a = new Float32Array([0, 0, 0, 2, 2, 2]);
    const b = new Float32Array([1, 1, 1, 4, 4, 4]);
    expect(Array.from(blendFrames(a, b, 0.5))).toEqual([0.5, 0.5, 0.5, 3, 3, 3]);
    expect(Array.from(blendFrames(a, b, -1))).toEqual(Array.from(a));
    expect(Array.from(blendFrames(a, b, 2))).toEqual(Array.from(b));
    expect(() => blendFrames(a, new Float32Array(3), 0.5)).toThrow();
  });
});
