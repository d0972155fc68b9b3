// Thin fetch client for the feedback service. Every method maps one
// documented endpoint; non-2xx responses become ApiError with the server's
// detail message so the UI can show an actionable banner.

import type {
  ElicitationAck,
  ElicitationRequest,
  FeedbackCardJson,
  FeedbackResponse,
  StatusResponse,
  TrainResponse,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
    readonly allowed: string[] | null = null,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

async function parseError(res: Response): Promise<ApiError> {
  let detail = res.statusText || `request failed`;
  let allowed: string[] | null = null;
  try {
    const body = (await res.json()) as Record<string, unknown>;
    if (typeof body.detail === "string") detail = body.detail;
    if (Array.isArray(body.allowed)) allowed = body.allowed.map(String);
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ApiError(res.status, detail, allowed);
}

export class ApiClient {
  /** `base` is "" when the app is served by the API itself (same origin). */
  constructor(private readonly base: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await fetch(this.base + path, init);
    if (!res.ok) throw await parseError(res);
    return (await res.json()) as T;
  }

  getStatus(): Promise<StatusResponse> {
    return this.request("/v1/status");
  }

  getFeedback(userId: string, week?: string): Promise<FeedbackResponse> {
    const query = week ? `?week=${encodeURIComponent(week)}` : "";
    return this.request(`/v1/users/${encodeURIComponent(userId)}/feedback${query}`);
  }

  getCard(eventId: string, expandFull = false): Promise<FeedbackCardJson> {
    const query = expandFull ? "?expand=full" : "";
    return this.request(`/v1/events/${encodeURIComponent(eventId)}/card${query}`);
  }

  postElicitation(record: ElicitationRequest): Promise<ElicitationAck> {
    return this.request("/v1/elicitations", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(record),
    });
  }

  postTrain(): Promise<TrainResponse> {
    return this.request("/v1/train", { method: "POST" });
  }
}
