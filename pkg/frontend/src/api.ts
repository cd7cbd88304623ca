import type {
  FormResponse,
  LaunchResponse,
  PlanDocument,
  RunsList,
  RunStatus,
  ValidateResponse,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly payload: unknown,
  ) {
    super(`api error ${status}`);
  }
}

export interface LaunchRequest {
  definition_id: string;
  run_id?: string;
  overrides?: Record<string, string>;
  parallelism?: number;
  monitor_interval_ms?: number;
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path, init);
    const body = await response.json().catch(() => null);
    if (!response.ok) {
      throw new ApiError(response.status, body);
    }
    return body as T;
  }

  // syntax errors come back as 400 with findings; the editor wants those
  // rendered inline, so only shapeless failures throw
  async validateDefinition(text: string): Promise<ValidateResponse> {
    const response = await this.fetchImpl(`${this.baseUrl}/definitions/validate`, {
      method: "POST",
      body: text,
    });
    const body = (await response.json().catch(() => null)) as ValidateResponse | null;
    if (body === null || !Array.isArray(body.findings)) {
      throw new ApiError(response.status, body);
    }
    return {
      runnable: false,
      errors: body.findings.length,
      ...body,
    };
  }

  storeDefinition(text: string): Promise<{ id: string; name: string }> {
    return this.request("/definitions", { method: "POST", body: text });
  }

  listDefinitions(): Promise<{ definitions: { id: string; name: string }[] }> {
    return this.request("/definitions");
  }

  getDefinition(id: string): Promise<{ id: string; name: string; text: string }> {
    return this.request(`/definitions/${id}`);
  }

  getPlan(id: string): Promise<PlanDocument> {
    return this.request(`/definitions/${id}/plan`);
  }

  getForm(id: string): Promise<FormResponse> {
    return this.request(`/definitions/${id}/form`);
  }

  launchRun(body: LaunchRequest): Promise<LaunchResponse> {
    return this.request("/runs", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  listRuns(): Promise<RunsList> {
    return this.request("/runs");
  }

  runStatus(runId: string): Promise<RunStatus> {
    return this.request(`/runs/${runId}/status`);
  }

  abortRun(runId: string): Promise<{ run_id: string; phase: string }> {
    return this.request(`/runs/${runId}/abort`, { method: "POST" });
  }

  metricsUrl(runId: string, machine: string): string {
    return `${this.baseUrl}/runs/${runId}/metrics?machine=${encodeURIComponent(machine)}`;
  }
}
