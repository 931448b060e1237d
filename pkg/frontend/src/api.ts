/** Typed client for the /v1 JSON+PNG API. Every pixel shown by the UI is
 * fetched through here; nothing is synthesized client-side. */

export type Scope = "region" | "background" | "global";
export type Direction = "brighten" | "darken";

export interface Instruction {
  target_phrase: string;
  scope: Scope;
  direction: Direction;
  ratio: number;
  source_text: string;
}

export interface Report {
  instruction: Instruction;
  mode: string;
  seed: number;
  eta: number;
  mask_area_fraction: number;
  mean_illum_before: number;
  mean_illum_after: number;
  requested_ratio: number;
  achieved_ratio: number;
  timings: Record<string, number>;
}

/** Parameters recorded server-side so an edit can be replayed verbatim. */
export interface EnhanceParams {
  mode?: string;
  seed?: number;
  eta?: number;
  seed_point?: [number, number] | null;
  mask_id?: string | null;
  ratio_override?: number | null;
}

export interface HistoryEntry {
  prompt: string;
  request: Required<EnhanceParams>;
  instruction: Instruction;
  result_id: string;
  report: Report;
}

export interface EnhanceResponse {
  result_id: string;
  instruction: Instruction;
  report: Report;
}

export class ApiError extends Error {
  readonly status: number;
  readonly kind?: string;
  readonly span?: string;
  readonly stage?: string;

  constructor(status: number, body: Record<string, unknown>) {
    super(typeof body.error === "string" ? body.error : `HTTP ${status}`);
    this.status = status;
    if (typeof body.kind === "string") this.kind = body.kind;
    if (typeof body.span === "string") this.span = body.span;
    if (typeof body.stage === "string") this.stage = body.stage;
  }
}

async function raiseFor(resp: Response): Promise<never> {
  let body: Record<string, unknown> = {};
  try {
    body = await resp.json();
  } catch {
    // non-JSON error body; the status alone will have to do
  }
  throw new ApiError(resp.status, body);
}

export class Client {
  private readonly doFetch: typeof fetch;

  constructor(
    readonly baseUrl: string,
    fetchFn?: typeof fetch,
  ) {
    this.doFetch = fetchFn ?? ((...args) => fetch(...args));
  }

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.doFetch(this.baseUrl + path, init);
    if (!resp.ok) await raiseFor(resp);
    return (await resp.json()) as T;
  }

  async health(): Promise<{ status: string; version: string }> {
    return this.json("/v1/health");
  }

  async uploadImage(png: Uint8Array | ArrayBuffer | Blob): Promise<string> {
    const out = await this.json<{ image_id: string }>("/v1/images", {
      method: "POST",
      headers: { "Content-Type": "image/png" },
      body: png as BodyInit,
    });
    return out.image_id;
  }

  async createSession(imageId: string): Promise<string> {
    const out = await this.json<{ session_id: string }>("/v1/sessions", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ image_id: imageId }),
    });
    return out.session_id;
  }

  async parse(sessionId: string, prompt: string): Promise<Instruction> {
    const out = await this.json<{ instruction: Instruction }>(
      `/v1/sessions/${sessionId}/parse`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ prompt }),
      },
    );
    return out.instruction;
  }

  async enhance(
    sessionId: string,
    prompt: string,
    params: EnhanceParams = {},
  ): Promise<EnhanceResponse> {
    return this.json(`/v1/sessions/${sessionId}/enhance`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ prompt, ...params }),
    });
  }

  async history(sessionId: string): Promise<HistoryEntry[]> {
    return this.json(`/v1/sessions/${sessionId}/history`);
  }

  resultImageUrl(resultId: string): string {
    return `${this.baseUrl}/v1/results/${resultId}/image`;
  }

  async fetchResultBytes(resultId: string): Promise<Uint8Array> {
    const resp = await this.doFetch(this.resultImageUrl(resultId));
    if (!resp.ok) await raiseFor(resp);
    return new Uint8Array(await resp.arrayBuffer());
  }
}
