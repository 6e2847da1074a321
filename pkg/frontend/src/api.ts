/** Typed client for the facetsim HTTP API. */

export interface Diagnostic {
  code: string;
  where: string | null;
  message: string;
}

export interface Report {
  ok: boolean;
  errors: Diagnostic[];
  warnings: Diagnostic[];
}

export interface PolicyDoc {
  name: string;
  target_agent_type: string;
  condition: string;
  action: { op: string; variable: string; operand: string };
  mode: string;
}

export interface ScenarioDoc {
  name: string;
  facets: string[];
  flow_bindings: Record<string, string>;
  policies: Array<string | PolicyDoc>;
  globals: {
    iterations: number;
    data_collection_interval?: number;
    seed?: number;
    populations: Record<string, number>;
    model_var_overrides?: Record<string, number | boolean | string>;
    ui_params?: Record<string, unknown>;
    init_jitter?: string[];
  };
  metrics?: Array<Record<string, unknown>>;
}

export interface RunStatus {
  id: string;
  scenario: string;
  seed: number | null;
  state: "queued" | "running" | "done" | "failed";
  progress: { completed: number; total: number };
  error: string | null;
  archive: string | null;
}

export interface RunMetrics {
  id: string;
  ticks: number[];
  metrics: Record<string, Array<number | null>>;
}

/** A 4xx/5xx response; carries the server's diagnostics report when present. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly report: Report | null,
    message: string,
  ) {
    super(message);
  }
}

async function parseError(res: Response): Promise<ApiError> {
  let report: Report | null = null;
  let message = `${res.status} ${res.statusText}`;
  try {
    const body = await res.json();
    if (body && Array.isArray(body.errors)) {
      report = body as Report;
      message = report.errors.map((d) => `${d.code}: ${d.message}`).join("; ") || message;
    }
  } catch {
    // non-JSON error body; keep the status line
  }
  return new ApiError(res.status, report, message);
}

export class ApiClient {
  constructor(readonly baseUrl: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await fetch(this.baseUrl + path, init);
    if (!res.ok) throw await parseError(res);
    return (await res.json()) as T;
  }

  listFacets(): Promise<Array<{ name: string; depends_on?: string[] }>> {
    return this.request("/facets");
  }

  listPolicies(): Promise<PolicyDoc[]> {
    return this.request("/policies");
  }

  createPolicy(doc: PolicyDoc): Promise<PolicyDoc> {
    return this.request("/policies", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(doc),
    });
  }

  listScenarios(): Promise<ScenarioDoc[]> {
    return this.request("/scenarios");
  }

  createScenario(doc: ScenarioDoc): Promise<ScenarioDoc> {
    return this.request("/scenarios", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(doc),
    });
  }

  startRun(scenario: string, seed?: number | null): Promise<RunStatus> {
    const body: { scenario: string; seed?: number } = { scenario };
    if (seed !== undefined && seed !== null) body.seed = seed;
    return this.request("/runs", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  getRunStatus(id: string): Promise<RunStatus> {
    return this.request(`/runs/${id}`);
  }

  getRunMetrics(id: string): Promise<RunMetrics> {
    return this.request(`/runs/${id}/metrics`);
  }
}

/** Poll a run until it leaves queued/running; resolves with the terminal status. */
export async function pollRun(
  api: ApiClient,
  id: string,
  intervalMs = 1000,
  onProgress?: (status: RunStatus) => void,
): Promise<RunStatus> {
  for (;;) {
    const status = await api.getRunStatus(id);
    onProgress?.(status);
    if (status.state === "done" || status.state === "failed") return status;
    await new Promise((resolve) => setTimeout(resolve, intervalMs));
  }
}
