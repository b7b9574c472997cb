// Typed client for the story service HTTP+JSON API. Every method maps to
// exactly one request; no retries, no caching, no local state.

export interface ApiFrame {
  index: number;
  sentence: string;
  image_base64: string;
}

export interface ParentRef {
  id: string;
  at: number;
}

export interface SessionSummary {
  id: string;
  checkpoint: string;
  created_at: string;
  parent: ParentRef | null;
  length: number;
  frames: ApiFrame[];
}

export interface Health {
  status: string;
  checkpoint: string;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/** The full server surface the studio is allowed to touch. */
export interface StoryApi {
  health(): Promise<Health>;
  createSession(checkpoint: string, seed: number): Promise<{ id: string }>;
  extendSession(id: string, sentence: string): Promise<ApiFrame>;
  branchSession(id: string, at: number): Promise<{ id: string }>;
  getSession(id: string): Promise<SessionSummary>;
}

export class ApiClient implements StoryApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: { "content-type": "application/json" } };
    if (body !== undefined) {
      init.body = JSON.stringify(body);
    }
    const res = await this.fetchFn(this.baseUrl + path, init);
    const data = await res.json().catch(() => null);
    if (!res.ok) {
      const code = data?.code ?? `http_${res.status}`;
      const message = data?.message ?? `request failed with status ${res.status}`;
      throw new ApiError(res.status, code, message);
    }
    return data as T;
  }

  health(): Promise<Health> {
    return this.request("GET", "/healthz");
  }

  createSession(checkpoint: string, seed: number): Promise<{ id: string }> {
    return this.request("POST", "/sessions", { checkpoint, seed });
  }

  extendSession(id: string, sentence: string): Promise<ApiFrame> {
    return this.request("POST", `/sessions/${id}/frames`, { sentence });
  }

  branchSession(id: string, at: number): Promise<{ id: string }> {
    return this.request("POST", `/sessions/${id}/branch`, { at });
  }

  getSession(id: string): Promise<SessionSummary> {
    return this.request("GET", `/sessions/${id}`);
  }
}
