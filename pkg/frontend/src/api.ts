/**
 * Typed client for the selection service API.  Every payload mirrors the
 * server's JSON exactly; nothing is derived client-side.
 */

export interface CollectionRecord {
  id: string;
  name: string;
  n_docs: number;
  n_queries: number;
  has_qrels: boolean;
  created_at: number;
}

export interface Job {
  id: string;
  collection_id: string;
  method: string;
  params: Record<string, unknown>;
  state: "PENDING" | "ENCODING" | "SELECTING" | "FINISHED" | "FAILED";
  queue_class: "heavy" | "light";
  created_at: number;
  updated_at: number;
  stage: string | null;
  progress: number;
  error: string | null;
  result_ref: string | null;
}

export type RankedRow = [string, number | null, number];

export interface SelectionResult {
  job_id: string;
  method: string;
  ranked: RankedRow[];
  direction: "higher_is_better" | "lower_is_better";
  completed_at: number;
  per_query_diagnostics: unknown;
}

export interface MethodInfo {
  method: string;
  name: string;
  description: string;
  direction: string;
  requires_queries: boolean;
  queue_class: "heavy" | "light";
  params: string[];
}

export interface ModelInfo {
  model_id: string;
  dim: number;
  sim: string;
  encoder_endpoint: string;
  msmarco_ndcg10: number | null;
  mteb_avg: number | null;
  description: string;
}

export class ApiError extends Error {
  constructor(public status: number, public detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function parseError(resp: Response): Promise<never> {
  let detail = resp.statusText;
  try {
    const body = await resp.json();
    detail = body.detail ?? body.error ?? detail;
  } catch {
    /* non-JSON error body: keep the status text */
  }
  throw new ApiError(resp.status, detail);
}

export class ApiClient {
  constructor(
    private base: string = "",
    private token: string = "",
  ) {}

  private headers(): Record<string, string> {
    return this.token ? { Authorization: `Bearer ${this.token}` } : {};
  }

  private async getJson<T>(path: string): Promise<T> {
    const resp = await fetch(`${this.base}${path}`, { headers: this.headers() });
    if (!resp.ok) await parseError(resp);
    return (await resp.json()) as T;
  }

  async uploadCollection(files: { corpus: File | Blob; queries?: File | Blob; qrels?: File | Blob }, name = ""): Promise<{ collection_id: string; collection: CollectionRecord }> {
    const form = new FormData();
    form.append("corpus", files.corpus, "corpus.jsonl");
    if (files.queries) form.append("queries", files.queries, "queries.jsonl");
    if (files.qrels) form.append("qrels", files.qrels, "qrels.tsv");
    if (name) form.append("name", name);
    const resp = await fetch(`${this.base}/api/collections`, {
      method: "POST",
      body: form,
      headers: this.headers(),
    });
    if (!resp.ok) await parseError(resp);
    return await resp.json();
  }

  async listCollections(): Promise<CollectionRecord[]> {
    return (await this.getJson<{ collections: CollectionRecord[] }>("/api/collections")).collections;
  }

  async createJob(collectionId: string, method: string, params: Record<string, unknown>): Promise<Job> {
    const resp = await fetch(`${this.base}/api/jobs`, {
      method: "POST",
      headers: { "Content-Type": "application/json", ...this.headers() },
      body: JSON.stringify({ collection_id: collectionId, method, params }),
    });
    if (!resp.ok) await parseError(resp);
    return await resp.json();
  }

  async listJobs(): Promise<Job[]> {
    return (await this.getJson<{ jobs: Job[] }>("/api/jobs")).jobs;
  }

  async getJob(id: string): Promise<Job> {
    return await this.getJson<Job>(`/api/jobs/${id}`);
  }

  async getResult(id: string): Promise<SelectionResult> {
    return await this.getJson<SelectionResult>(`/api/jobs/${id}/result`);
  }

  async listMethods(): Promise<MethodInfo[]> {
    return (await this.getJson<{ methods: MethodInfo[] }>("/api/methods")).methods;
  }

  async listModels(): Promise<ModelInfo[]> {
    return (await this.getJson<{ models: ModelInfo[] }>("/api/models")).models;
  }

  bundleUrl(modelId: string): string {
    return `${this.base}/api/models/${encodeURIComponent(modelId)}/bundle`;
  }

  async downloadBundle(modelId: string): Promise<Blob> {
    const resp = await fetch(this.bundleUrl(modelId), { headers: this.headers() });
    if (!resp.ok) await parseError(resp);
    return await resp.blob();
  }
}

/** Client-side filename gate applied before any bytes leave the browser. */
export function validateUploadNames(names: { corpus?: string; queries?: string; qrels?: string }): string[] {
  const problems: string[] = [];
  if (!names.corpus) {
    problems.push("corpus.jsonl is required");
  } else if (!names.corpus.endsWith(".jsonl")) {
    problems.push(`corpus file must be .jsonl, got ${names.corpus}`);
  }
  if (names.queries && !names.queries.endsWith(".jsonl")) {
    problems.push(`queries file must be .jsonl, got ${names.queries}`);
  }
  if (names.qrels && !names.qrels.endsWith(".tsv")) {
    problems.push(`qrels file must be .tsv, got ${names.qrels}`);
  }
  return problems;
}
