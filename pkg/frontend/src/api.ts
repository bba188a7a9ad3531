/**
 * Typed client for the planning service HTTP API.
 *
 * Every number displayed in the UI comes through here; the client never
 * derives science-side quantities itself. Raw response text is kept for
 * payloads the views must reproduce byte-for-byte across reloads.
 */

export interface ModelEntry {
  id: string;
  dataset?: string;
  checkpoint: string;
  metrics: Record<string, number>;
}

export interface AnalysisEntry {
  id: string;
  model?: string;
  bundle: string;
}

export interface DatasetEntry {
  id: string;
  manifest: string;
  topology_hash: string;
}

export interface SubjectRow {
  id: string;
  class: string;
  age: number;
  sex: string;
  provenance: string;
  split: string | null;
}

export interface EncodeResult {
  analysis: string | null;
  label: string | null;
  latent: number[];
  log_posteriors: Record<string, number> | null;
  subsets: number[][];
}

export interface EllipseSpec {
  label: string;
  center: [number, number];
  axes: [number, number];
  angle: number;
  degenerate: boolean;
}

export interface EmbeddingPoint {
  id: string;
  label: string;
  x: number;
  y: number;
}

export interface EmbeddingResponse {
  scope: string;
  classes: string[];
  points: EmbeddingPoint[];
  ellipses: EllipseSpec[];
  patient: [number, number] | null;
}

export interface ProcedureSpec {
  name: string;
  attributes: string[];
}

export interface SessionView {
  id: string;
  patient_id: string;
  model: string;
  analysis: string;
  procedure: string;
  procedure_attributes: string[];
  stops: Record<string, number>;
  target: string;
  t: number;
  created: string;
}

export interface TrajectoryStepPayload {
  t: number;
  latent: number[];
  embedded: Record<string, [number, number]>;
  displacement: number[];
  mesh_glb?: string;
  mesh_obj?: string;
}

export interface TrajectoryResponse {
  session: string;
  steps: TrajectoryStepPayload[];
}

export interface RankingRow {
  procedure: string;
  attributes: string[];
  d_mu: number;
  d_1sigma: number;
  d_2sigma: number;
  d_3sigma: number;
}

export interface RankingResponse {
  session: string;
  rows: RankingRow[];
}

export interface SessionCreateBody {
  patient_id: string;
  latent: number[];
  model: string;
  analysis: string;
  procedure: string;
  stops?: Record<string, number>;
  target?: string | number[];
  t?: number;
}

/** Error carrying the HTTP status and the service's detail message. */
export class ServiceError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
    readonly url: string,
  ) {
    super(`${status} ${detail} (${url})`);
    this.name = "ServiceError";
  }
}

export type FetchLike = (
  input: string,
  init?: RequestInit,
) => Promise<Response>;

async function raise(res: Response, url: string): Promise<never> {
  let detail = res.statusText;
  try {
    const body = (await res.json()) as { detail?: unknown };
    if (body.detail !== undefined) detail = JSON.stringify(body.detail);
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ServiceError(res.status, detail, url);
}

export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const url = this.baseUrl + path;
    const res = await this.fetchFn(url);
    if (!res.ok) await raise(res, url);
    return (await res.json()) as T;
  }

  /** GET returning both parsed JSON and the exact body text. */
  async getRaw<T>(path: string): Promise<{ data: T; text: string }> {
    const url = this.baseUrl + path;
    const res = await this.fetchFn(url);
    if (!res.ok) await raise(res, url);
    const text = await res.text();
    return { data: JSON.parse(text) as T, text };
  }

  private async send<T>(
    method: string,
    path: string,
    body: unknown,
  ): Promise<T> {
    const url = this.baseUrl + path;
    const res = await this.fetchFn(url, {
      method,
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!res.ok) await raise(res, url);
    return (await res.json()) as T;
  }

  models(): Promise<{ models: ModelEntry[] }> {
    return this.getJson("/models");
  }

  analyses(): Promise<{ analyses: AnalysisEntry[] }> {
    return this.getJson("/analyses");
  }

  datasets(): Promise<{ datasets: DatasetEntry[] }> {
    return this.getJson("/datasets");
  }

  subjects(dataset: string): Promise<{ subjects: SubjectRow[] }> {
    return this.getJson(`/datasets/${dataset}/subjects`);
  }

  encode(model: string, meshBase64: string): Promise<EncodeResult> {
    return this.send("POST", `/models/${model}/encode`, { data: meshBase64 });
  }

  embedding(
    analysis: string,
    scope = "whole",
    session?: string,
  ): Promise<EmbeddingResponse> {
    const params = new URLSearchParams({ scope });
    if (session !== undefined) params.set("session", session);
    return this.getJson(`/analyses/${analysis}/embedding?${params}`);
  }

  procedures(): Promise<{ procedures: ProcedureSpec[] }> {
    return this.getJson("/procedures");
  }

  putProcedure(name: string, attributes: string[]): Promise<ProcedureSpec> {
    return this.send("PUT", `/procedures/${encodeURIComponent(name)}`, {
      attributes,
    });
  }

  createSession(body: SessionCreateBody): Promise<SessionView> {
    return this.send("POST", "/sessions", body);
  }

  sessions(): Promise<{ sessions: SessionView[] }> {
    return this.getJson("/sessions");
  }

  session(id: string): Promise<SessionView> {
    return this.getJson(`/sessions/${id}`);
  }

  patchSession(
    id: string,
    patch: { t?: number; stops?: Record<string, number>; target?: string },
  ): Promise<SessionView> {
    return this.send("PATCH", `/sessions/${id}`, patch);
  }

  trajectoryPath(
    id: string,
    steps: number,
    meshFormat: "glb" | "obj" | "none" = "glb",
  ): string {
    return `/sessions/${id}/trajectory?steps=${steps}&mesh_format=${meshFormat}`;
  }

  trajectory(
    id: string,
    steps: number,
    meshFormat: "glb" | "obj" | "none" = "glb",
  ): Promise<TrajectoryResponse> {
    return this.getJson(this.trajectoryPath(id, steps, meshFormat));
  }

  ranking(id: string): Promise<RankingResponse> {
    return this.getJson(`/sessions/${id}/ranking`);
  }

  rankingRaw(id: string): Promise<{ data: RankingResponse; text: string }> {
    return this.getRaw(`/sessions/${id}/ranking`);
  }
}
