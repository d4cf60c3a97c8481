/**
 * Simplex-coupled slider state: K mixture weights that always sum to 1.
 *
 * Moving one slider rescales the remaining components proportionally rather
 * than clamping them, so every mixture stays reachable from every state.
 */

export const SIMPLEX_TOLERANCE = 1e-6;

export function isOnSimplex(values: number[], tol = SIMPLEX_TOLERANCE): boolean {
  if (values.length === 0) return false;
  let sum = 0;
  for (const v of values) {
    if (!Number.isFinite(v) || v < -tol || v > 1 + tol) return false;
    sum += v;
  }
  return Math.abs(sum - 1) <= tol;
}

function clamp01(v: number): number {
  return Math.min(1, Math.max(0, v));
}

/** Exact renormalization so the result sums to 1 even after float rounding. */
function snapToSimplex(values: number[]): number[] {
  const clipped = values.map(clamp01);
  const sum = clipped.reduce((a, b) => a + b, 0);
  if (sum <= 0) {
    return clipped.map(() => 1 / clipped.length);
  }
  const out = clipped.map((v) => v / sum);
  // push any residual rounding error onto the largest component
  const err = 1 - out.reduce((a, b) => a + b, 0);
  const iMax = out.indexOf(Math.max(...out));
  out[iMax] += err;
  return out;
}

/**
 * Apply one slider move: component `index` takes `newValue`, the others are
 * rescaled proportionally to keep the sum at 1.  A zero remainder (the moved
 * slider was at 1) splits the slack evenly over the other components.
 */
export function applySliderChange(
  values: number[],
  index: number,
  newValue: number,
): number[] {
  if (index < 0 || index >= values.length) {
    throw new RangeError(`slider index ${index} out of range`);
  }
  const target = clamp01(newValue);
  if (values.length === 1) return [1];
  const restBudget = 1 - target;
  const restSum = values.reduce((a, v, i) => (i === index ? a : a + clamp01(v)), 0);
  const out = values.map((v, i) => {
    if (i === index) return target;
    if (restSum <= 0) return restBudget / (values.length - 1);
    return (clamp01(v) / restSum) * restBudget;
  });
  return snapToSimplex(out);
}

/** One-hot mixture vector: all weight on a single style. */
export function vertex(k: number, index: number): number[] {
  if (index < 0 || index >= k) throw new RangeError(`vertex ${index} out of range`);
  return Array.from({ length: k }, (_, i) => (i === index ? 1 : 0));
}

/**
 * Mixture vectors interpolated between two vertices.  With steps >= 2 the
 * endpoints are the vertices themselves; a single step yields the midpoint.
 */
export function interpolateVertices(
  k: number,
  from: number,
  to: number,
  steps: number,
): number[][] {
  if (steps < 1) return [];
  const a = vertex(k, from);
  const b = vertex(k, to);
  const ts =
    steps === 1
      ? [0.5]
      : Array.from({ length: steps }, (_, i) => i / (steps - 1));
  return ts.map((t) => snapToSimplex(a.map((av, i) => av * (1 - t) + b[i] * t)));
}

/** Display labels that visibly sum to 1.00. */
export function formatWeights(values: number[]): string[] {
  const rounded = values.map((v) => Math.round(v * 100));
  let drift = 100 - rounded.reduce((a, b) => a + b, 0);
  // distribute rounding drift one percent at a time, largest components first
  const order = [...rounded.keys()].sort((i, j) => rounded[j] - rounded[i]);
  for (let n = 0; drift !== 0 && n < order.length; n++) {
    rounded[order[n]] += Math.sign(drift);
    drift -= Math.sign(drift);
  }
  return rounded.map((r) => (r / 100).toFixed(2));
}
