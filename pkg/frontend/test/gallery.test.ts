import { describe, expect, it } from "vitest";

import { ApiClient, FetchLike } from "../src/api.js";
import { collectSweepGallery, scalarGrid } from "../src/gallery.js";
import { vertex } from "../src/simplex.js";

/**
 * Mock service: translation output is a deterministic function of
 * (image, z), and /sweep is implemented as one /translate per grid point --
 * the same contract the real service guarantees.
 */
function mockTranslateBytes(image: string, z: number | number[]): string {
  const zKey = Array.isArray(z) ? z.map((v) => v.toFixed(6)).join(",") : z.toFixed(6);
  return Buffer.from(`translated(${image}|${zKey})`).toString("base64");
}

const mockFetch: FetchLike = async (url, init) => {
  const body = init?.body ? JSON.parse(init.body) : {};
  if (url.endsWith("/translate")) {
    return {
      ok: true,
      status: 200,
      json: async () => ({
        image: mockTranslateBytes(body.image, body.z),
        z: body.z,
        latency_ms: 1,
        original_size: [32, 32],
        content_box: [0, 0, 32, 32],
        model: body.model,
      }),
    };
  }
  if (url.endsWith("/sweep")) {
    return {
      ok: true,
      status: 200,
      json: async () => ({
        results: body.z_values.map((z: number | number[]) => ({
          image: mockTranslateBytes(body.image, z),
          z,
        })),
        model: body.model,
      }),
    };
  }
  return { ok: false, status: 404, json: async () => ({ detail: "not found" }) };
};

const api = new ApiClient("http://mock", mockFetch);

describe("collectSweepGallery", () => {
  it("cells byte-match individual translate calls", async () => {
    const image = "IMAGEBYTES";
    const cells = await collectSweepGallery(api, "styles", image, 4, 0, 1, 5);
    expect(cells).toHaveLength(5);
    for (const cell of cells) {
      const single = await api.translate("styles", image, cell.z);
      expect(cell.image).toBe(single.image);
    }
  });

  it("endpoints match pure single-vertex translations", async () => {
    const image = "IMG2";
    const cells = await collectSweepGallery(api, "styles", image, 4, 1, 3, 5);
    const first = await api.translate("styles", image, vertex(4, 1));
    const last = await api.translate("styles", image, vertex(4, 3));
    expect(cells[0].image).toBe(first.image);
    expect(cells[4].image).toBe(last.image);
  });

  it("scalar models sweep a plain z ramp", async () => {
    const cells = await collectSweepGallery(api, "scalar", "IMG3", 1, 0, 0, 3);
    expect(cells.map((c) => c.z)).toEqual([0, 0.5, 1]);
    const single = await api.translate("scalar", "IMG3", 0.5);
    expect(cells[1].image).toBe(single.image);
  });

  it("empty grid yields an empty gallery", async () => {
    const cells = await collectSweepGallery(api, "styles", "IMG4", 4, 0, 1, 0);
    expect(cells).toEqual([]);
  });

  it("scalarGrid endpoints and midpoint", () => {
    expect(scalarGrid(5)).toEqual([0, 0.25, 0.5, 0.75, 1]);
    expect(scalarGrid(1)).toEqual([0.5]);
    expect(scalarGrid(0)).toEqual([]);
  });
});
