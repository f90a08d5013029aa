// Typed client for the workbench HTTP API. Every mutation round-trips to the
// server; the UI never computes model state on its own.

export type ClarificationItem = {
  id: string;
  target: [string, string];
  question: string;
  default: [number | string, string] | null;
  status: 'open' | 'confirmed' | 'overridden';
  resolved_value: number | string | null;
  resolved_unit: string | null;
  source_prior: string | null;
  derived: Array<[string, string, string[]]>;
};

export type SessionState = {
  session_id: string;
  phase: string;
  version_tag: string | null;
  pending_edit_text: string | null;
  items: ClarificationItem[];
  counters: Record<string, number>;
  last_report: ViolationReport | null;
  dialog: Array<{ role: string; text: string; time: number }>;
  failure_trace: unknown[];
};

export type Violation = {
  predicate: string;
  site: string;
  residual: number;
  message: string;
};

export type ViolationReport = { epsilon: number; items: Violation[] };

export type VertexRecord = { kind: string; attrs: Record<string, unknown>; psi?: string };

export type GraphDelta = {
  added_vertices: Record<string, VertexRecord>;
  removed_vertices: Record<string, VertexRecord>;
  modified_vertices: Record<string, [VertexRecord, VertexRecord]>;
  added_edges: Record<string, unknown>;
  removed_edges: Record<string, unknown>;
  meta_change: unknown;
};

export type Proposal = {
  parameter: string;
  value: number;
  unit: string;
  interval: [number, number];
  source_prior: string;
};

export type AlignmentReport = {
  frontiers: Record<string, Record<string, string[]>>;
  dependents: Array<[string, string]>;
  proposals: Proposal[];
};

export type EditResponse =
  | { status: 'clarifications'; items: ClarificationItem[] }
  | {
      status: 'preview';
      delta: GraphDelta;
      alignment: AlignmentReport;
      report: ViolationReport;
    };

export type ConfirmResult = {
  version: string;
  report: ViolationReport;
  diagnostics: { ok: boolean };
  artifacts: string[];
  script_sha256: string;
};

export type PlotSeries = { species: string; compartment: string; color: string; label: string };
export type PlotManifest = {
  version: string;
  time_unit: string;
  subplots: Array<{ index: number; series: PlotSeries[] }>;
};

export type ApiError = { error: string; message: string; report?: ViolationReport };

export class WorkbenchError extends Error {
  readonly payload: ApiError;
  readonly status: number;

  constructor(status: number, payload: ApiError) {
    super(payload.message ?? `HTTP ${status}`);
    this.status = status;
    this.payload = payload;
  }
}

export class WorkbenchClient {
  private readonly base: string;
  private readonly fetchImpl: typeof fetch;

  constructor(baseUrl: string, fetchImpl: typeof fetch = fetch) {
    this.base = baseUrl.replace(/\/$/, '');
    this.fetchImpl = fetchImpl;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchImpl(`${this.base}${path}`, {
      method,
      headers: body === undefined ? {} : { 'Content-Type': 'application/json' },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await response.text();
    if (!response.ok) {
      let payload: ApiError;
      try {
        payload = JSON.parse(text);
      } catch {
        payload = { error: 'HttpError', message: text || response.statusText };
      }
      if (payload.message === undefined && 'detail' in (payload as Record<string, unknown>)) {
        payload.message = String((payload as Record<string, unknown>)['detail']);
      }
      throw new WorkbenchError(response.status, payload);
    }
    return (text ? JSON.parse(text) : null) as T;
  }

  private async requestText(path: string): Promise<string> {
    const response = await this.fetchImpl(`${this.base}${path}`);
    if (!response.ok) {
      throw new WorkbenchError(response.status, {
        error: 'HttpError',
        message: `${path}: ${response.statusText}`,
      });
    }
    return response.text();
  }

  createSession(): Promise<{ session_id: string }> {
    return this.request('POST', '/sessions');
  }

  ingest(sessionId: string, script: string): Promise<SessionState> {
    return this.request('POST', `/sessions/${sessionId}/ingest`, { script });
  }

  state(sessionId: string): Promise<SessionState> {
    return this.request('GET', `/sessions/${sessionId}/state`);
  }

  submitEdit(sessionId: string, text: string): Promise<EditResponse> {
    return this.request('POST', `/sessions/${sessionId}/edits`, { text });
  }

  resolve(
    sessionId: string,
    itemId: string,
    answer: { value?: number | string; unit?: string; accept_default?: boolean },
  ): Promise<SessionState> {
    return this.request('POST', `/sessions/${sessionId}/clarifications/${itemId}/resolve`, answer);
  }

  confirm(sessionId: string): Promise<ConfirmResult> {
    return this.request('POST', `/sessions/${sessionId}/confirm`);
  }

  manifest(sessionId: string, tag: string): Promise<PlotManifest> {
    return this.request('GET', `/sessions/${sessionId}/versions/${tag}/manifest`);
  }

  trajectoryCsv(sessionId: string, tag: string): Promise<string> {
    return this.requestText(`/sessions/${sessionId}/versions/${tag}/trajectory`);
  }

  script(sessionId: string, tag: string): Promise<string> {
    return this.requestText(`/sessions/${sessionId}/versions/${tag}/script`);
  }

  modules(sessionId: string): Promise<Array<{ id: string; kind: string; vertex_ids: string[] }>> {
    return this.request('GET', `/sessions/${sessionId}/modules`);
  }

  trajectoryUrl(sessionId: string, tag: string): string {
    return `${this.base}/sessions/${sessionId}/versions/${tag}/trajectory`;
  }
}
