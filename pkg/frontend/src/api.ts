/** Typed client for the rollout service; a pure consumer of its wire contract. */

import type {
  CreateSessionRequest,
  CreateSessionResponse,
  RolloutRequest,
  RolloutResponse,
  TaskClickRequest,
  TaskResponse,
  TaskTextRequest,
} from "./types.js";

export type FetchLike = (
  input: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<{ ok: boolean; status: number; json(): Promise<unknown> }>;

export class ApiError extends Error {
  constructor(
    readonly code: string,
    readonly status: number,
    detail?: string,
  ) {
    super(detail ? `${code}: ${detail}` : code);
  }
}

export class ConnectionError extends Error {}

export class ServiceClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (input, init) =>
      fetch(input, init),
  ) {}

  private async post<T>(path: string, body: unknown): Promise<T> {
    let response;
    try {
      response = await this.fetchImpl(`${this.baseUrl}${path}`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
      });
    } catch (err) {
      throw new ConnectionError(`service unreachable: ${String(err)}`);
    }
    const payload = (await response.json()) as Record<string, unknown>;
    if (!response.ok) {
      throw new ApiError(
        typeof payload.error === "string" ? payload.error : "http_error",
        response.status,
        typeof payload.detail === "string" ? payload.detail : undefined,
      );
    }
    return payload as T;
  }

  createSession(req: CreateSessionRequest): Promise<CreateSessionResponse> {
    return this.post("/session", req);
  }

  setTaskText(sessionId: string, req: TaskTextRequest): Promise<TaskResponse> {
    return this.post(`/session/${sessionId}/task/text`, req);
  }

  setTaskClick(sessionId: string, req: TaskClickRequest): Promise<TaskResponse> {
    return this.post(`/session/${sessionId}/task/click`, req);
  }

  rollout(sessionId: string, req: RolloutRequest): Promise<RolloutResponse> {
    return this.post(`/session/${sessionId}/rollout`, req);
  }

  async health(): Promise<boolean> {
    try {
      const response = await this.fetchImpl(`${this.baseUrl}/healthz`);
      return response.ok;
    } catch {
      return false;
    }
  }
}
