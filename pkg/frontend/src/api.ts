/** Typed client for the inference service JSON API (base64 PNG payloads). */

export interface ModelInfo {
  id: string;
  num_targets: number;
  domains: string[];
  image_size: number;
  image_channels: number;
  checkpoint_sha256: string;
}

export interface TranslateResponse {
  image: string;
  z: number | number[];
  latency_ms: number;
  original_size: [number, number];
  content_box: [number, number, number, number];
  model: string;
}

export interface SweepResult {
  image: string;
  z: number | number[];
}

export type FetchLike = (
  input: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<{ ok: boolean; status: number; json(): Promise<unknown> }>;

export class ServiceError extends Error {
  constructor(
    public readonly status: number,
    detail: string,
  ) {
    super(detail);
  }
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (...args) =>
      (globalThis.fetch as unknown as FetchLike)(...args),
  ) {}

  private async post<T>(path: string, body: unknown): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    const payload = (await response.json()) as T & { detail?: string };
    if (!response.ok) {
      throw new ServiceError(response.status, payload.detail ?? `HTTP ${response.status}`);
    }
    return payload;
  }

  async info(): Promise<ModelInfo[]> {
    const response = await this.fetchFn(`${this.baseUrl}/info`);
    if (!response.ok) throw new ServiceError(response.status, "info unavailable");
    const payload = (await response.json()) as { models: ModelInfo[] };
    return payload.models;
  }

  translate(model: string, image: string, z: number | number[]): Promise<TranslateResponse> {
    return this.post<TranslateResponse>("/translate", { model, image, z });
  }

  async sweep(
    model: string,
    image: string,
    zValues: (number | number[])[],
  ): Promise<SweepResult[]> {
    const payload = await this.post<{ results: SweepResult[] }>("/sweep", {
      model,
      image,
      z_values: zValues,
    });
    return payload.results;
  }
}
