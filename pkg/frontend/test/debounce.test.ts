import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { debounceLatest } from "../src/debounce.js";

describe("debounceLatest", () => {
  beforeEach(() => {
    vi.useFakeTimers();
  });
  afterEach(() => {
    vi.useRealTimers();
  });

  it("collapses rapid slider events to at most two calls", async () => {
    const calls: number[] = [];
    const dispatch = debounceLatest(
      async (n: number) => {
        calls.push(n);
        return n;
      },
      () => {},
      150,
    );
    // ten events spread over 100 ms: all within one debounce window
    for (let i = 0; i < 10; i++) {
      dispatch(i);
      await vi.advanceTimersByTimeAsync(10);
    }
    await vi.advanceTimersByTimeAsync(500);
    expect(calls.length).toBeLessThanOrEqual(2);
    expect(calls).toContain(9);
  });

  it("delivers only the latest result when calls overlap", async () => {
    const delivered: string[] = [];
    let release: (() => void) | null = null;
    const dispatch = debounceLatest(
      (tag: string) =>
        new Promise<string>((resolve) => {
          if (tag === "slow") {
            release = () => resolve("slow-result");
          } else {
            resolve(`${tag}-result`);
          }
        }),
      (result) => delivered.push(result),
      50,
    );

    dispatch("slow");
    await vi.advanceTimersByTimeAsync(60); // slow task now in flight
    dispatch("fast");
    await vi.advanceTimersByTimeAsync(60); // fast task resolves
    release!(); // stale task finally resolves
    await vi.advanceTimersByTimeAsync(10);
    expect(delivered).toEqual(["fast-result"]);
  });

  it("cancel drops the pending call", async () => {
    const calls: number[] = [];
    const dispatch = debounceLatest(
      async (n: number) => {
        calls.push(n);
        return n;
      },
      () => {},
      100,
    );
    dispatch(1);
    dispatch.cancel();
    await vi.advanceTimersByTimeAsync(500);
    expect(calls).toEqual([]);
  });

  it("reports errors of the winning call only", async () => {
    const errors: string[] = [];
    const dispatch = debounceLatest(
      async (n: number) => {
        if (n === 2) throw new Error(`boom-${n}`);
        return n;
      },
      () => {},
      50,
      (err) => errors.push(String(err)),
    );
    dispatch(1);
    await vi.advanceTimersByTimeAsync(200);
    dispatch(2);
    await vi.advanceTimersByTimeAsync(200);
    expect(errors).toEqual(["Error: boom-2"]);
  });
});
