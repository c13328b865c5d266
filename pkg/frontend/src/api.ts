/** Typed client for the annotation service HTTP surface.
 *
 * Every method maps to one endpoint. `submitLabels` never throws on an
 * HTTP error status: rejected submissions are part of the protocol and
 * the caller decides how to roll back.
 */

export interface QueryItem {
  id: number;
  confidence: number;
  payload_ref: string | null;
  x: number;
  y: number;
  suggested: number | null;
}

export interface QueriesPayload {
  query_epoch: number | null;
  items: QueryItem[];
}

export interface MetricRow {
  scope: string;
  epoch: number;
  labeled_count: number;
  labeled_frac: number | null;
  accuracy: number;
  kappa: number;
}

export interface StatusPayload {
  run_id: string;
  phase: string;
  fold: number | null;
  epoch: number;
  c_active: number;
  n_active: number;
  labeled_count: number;
  num_classes: number;
  interactive: boolean;
  pending_queries: QueryItem[];
  query_epoch: number | null;
  metrics_tail: MetricRow[];
  snapshots: Record<string, string>;
  error?: string;
  results?: Record<string, unknown>;
}

export interface MetricsPayload {
  fold: number | null;
  history: MetricRow[];
}

/** One row of the projection CSV. */
export interface ScatterRow {
  id: number;
  x: number;
  y: number;
  state: string;
  label: number;
  confidence: number;
}

export interface SubmitBody {
  run_id: string;
  query_epoch: number | null;
  labels: Record<string, number>;
}

/** HTTP status plus the decoded ack body, success or not. */
export interface SubmitOutcome {
  status: number;
  accepted: number[];
  noop: number[];
  error?: string;
}

export type FetchLike = (
  input: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<Response>;

const CSV_HEADER = "id,x,y,state,label_or_pseudo,confidence";

export function parseProjectionCsv(text: string): ScatterRow[] {
  const lines = text.trim().split(/\r?\n/);
  if (lines.length === 0 || lines[0] !== CSV_HEADER) {
    throw new Error(`unexpected projection header: ${lines[0] ?? "<empty>"}`);
  }
  const rows: ScatterRow[] = [];
  for (const line of lines.slice(1)) {
    if (line === "") continue;
    const parts = line.split(",");
    if (parts.length !== 6) throw new Error(`malformed projection row: ${line}`);
    rows.push({
      id: Number(parts[0]),
      x: Number(parts[1]),
      y: Number(parts[2]),
      state: parts[3] ?? "unlabeled",
      label: Number(parts[4]),
      confidence: Number(parts[5]),
    });
  }
  return rows;
}

export class ApiClient {
  readonly base: string;
  private readonly fetchFn: FetchLike;

  constructor(base: string, fetchFn?: FetchLike) {
    // strip a trailing slash so path concatenation stays uniform
    this.base = base.replace(/\/+$/, "");
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  private async getJson(path: string): Promise<unknown> {
    const resp = await this.fetchFn(this.base + path);
    if (!resp.ok) throw new Error(`GET ${path} failed with ${resp.status}`);
    return resp.json();
  }

  status(): Promise<StatusPayload> {
    return this.getJson("/status") as Promise<StatusPayload>;
  }

  queries(): Promise<QueriesPayload> {
    return this.getJson("/queries") as Promise<QueriesPayload>;
  }

  metrics(): Promise<MetricsPayload> {
    return this.getJson("/metrics") as Promise<MetricsPayload>;
  }

  /** Returns null while the run has not produced a projection snapshot yet. */
  async projection(network: 1 | 2): Promise<ScatterRow[] | null> {
    const resp = await this.fetchFn(`${this.base}/projection?network=${network}`);
    if (resp.status === 404) return null;
    if (!resp.ok) throw new Error(`GET /projection failed with ${resp.status}`);
    return parseProjectionCsv(await resp.text());
  }

  async submitLabels(body: SubmitBody): Promise<SubmitOutcome> {
    let resp: Response;
    try {
      resp = await this.fetchFn(`${this.base}/labels`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
      });
    } catch (err) {
      return { status: 0, accepted: [], noop: [], error: String(err) };
    }
    let payload: { accepted?: number[]; noop?: number[]; error?: string } = {};
    try {
      payload = (await resp.json()) as typeof payload;
    } catch {
      // non-JSON body on an error status; keep the status code
    }
    return {
      status: resp.status,
      accepted: payload.accepted ?? [],
      noop: payload.noop ?? [],
      ...(payload.error !== undefined ? { error: payload.error } : {}),
    };
  }
}
