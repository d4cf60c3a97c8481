/** Sweep-gallery assembly: interpolated mixtures between two style vertices. */

import { ApiClient, SweepResult } from "./api.js";
import { interpolateVertices } from "./simplex.js";

export interface GalleryCell {
  image: string;
  z: number | number[];
}

/**
 * One /sweep call over mixtures interpolated from vertex `from` to vertex
 * `to`; cell order follows interpolation order.  For a scalar (two-domain)
 * model pass k = 1 and the grid is a plain scalar ramp.
 */
export async function collectSweepGallery(
  api: ApiClient,
  model: string,
  image: string,
  k: number,
  from: number,
  to: number,
  steps: number,
): Promise<GalleryCell[]> {
  const grid: (number | number[])[] =
    k <= 1 ? scalarGrid(steps) : interpolateVertices(k, from, to, steps);
  if (grid.length === 0) return [];
  const results: SweepResult[] = await api.sweep(model, image, grid);
  return results.map((r) => ({ image: r.image, z: r.z }));
}

export function scalarGrid(steps: number): number[] {
  if (steps < 1) return [];
  if (steps === 1) return [0.5];
  return Array.from({ length: steps }, (_, i) => i / (steps - 1));
}
