/**
 * Trailing-edge debounce with latest-wins dispatch: rapid calls collapse to
 * one, and if a new call lands while an async task is in flight, the stale
 * task's result is dropped.
 */

export interface DebouncedDispatcher<A, R> {
  (args: A): void;
  cancel(): void;
  /** resolves once no call is pending or in flight */
  idle(): Promise<void>;
}

export function debounceLatest<A, R>(
  task: (args: A) => Promise<R>,
  onResult: (result: R, args: A) => void,
  delayMs = 150,
  onError?: (err: unknown) => void,
): DebouncedDispatcher<A, R> {
  let timer: ReturnType<typeof setTimeout> | null = null;
  let generation = 0;
  let inFlight = 0;
  let idleResolvers: (() => void)[] = [];

  const settleIfIdle = () => {
    if (timer === null && inFlight === 0) {
      for (const resolve of idleResolvers) resolve();
      idleResolvers = [];
    }
  };

  const dispatcher = ((args: A) => {
    if (timer !== null) clearTimeout(timer);
    const myGeneration = ++generation;
    timer = setTimeout(() => {
      timer = null;
      inFlight++;
      task(args)
        .then((result) => {
          if (myGeneration === generation) onResult(result, args);
        })
        .catch((err) => {
          if (myGeneration === generation && onError) onError(err);
        })
        .finally(() => {
          inFlight--;
          settleIfIdle();
        });
    }, delayMs);
  }) as DebouncedDispatcher<A, R>;

  dispatcher.cancel = () => {
    if (timer !== null) clearTimeout(timer);
    timer = null;
    generation++;
    settleIfIdle();
  };
  dispatcher.idle = () =>
    new Promise<void>((resolve) => {
      idleResolvers.push(resolve);
      settleIfIdle();
    });
  return dispatcher;
}
