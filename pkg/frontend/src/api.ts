/**
 * Typed fetch client for the review service. Every call returns a
 * discriminated result instead of throwing: callers decide whether a
 * failure means a banner, a revert, or a retry affordance.
 */
import { z } from "zod";
import {
  CaseSummary,
  ErrorBody,
  FeedbackRequest,
  FeedbackResponse,
  FinalizeRequest,
  FinalizeResponse,
  HealthzResponse,
  MetricsResponse,
  QueryRequest,
  QueryResponse,
  QueueResponse,
  ReviewRequest,
  ReviewResponse,
  UpdatePolicyRequest,
  UpdatePolicyResponse,
} from "./schemas.js";

export type ApiResult<T> =
  | { ok: true; data: T }
  | { ok: false; status: number; code: string; message: string };

export class ApiClient {
  constructor(
    public baseUrl: string,
    public token: string,
    private fetchFn: typeof fetch = fetch
  ) {}

  private async request<T>(
    method: string,
    path: string,
    schema: z.ZodType<T>,
    body?: unknown
  ): Promise<ApiResult<T>> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, {
        method,
        headers: {
          "Content-Type": "application/json",
          ...(this.token ? { Authorization: `Bearer ${this.token}` } : {}),
        },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      return { ok: false, status: 0, code: "network", message: String(err) };
    }
    let payload: unknown;
    try {
      payload = await response.json();
    } catch {
      return { ok: false, status: response.status, code: "bad_body", message: "non-JSON body" };
    }
    if (!response.ok) {
      const parsed = ErrorBody.safeParse(payload);
      return parsed.success
        ? { ok: false, status: response.status, code: parsed.data.code, message: parsed.data.message }
        : { ok: false, status: response.status, code: "unknown", message: JSON.stringify(payload) };
    }
    const parsed = schema.safeParse(payload);
    if (!parsed.success) {
      return {
        ok: false,
        status: response.status,
        code: "schema_mismatch",
        message: parsed.error.message,
      };
    }
    return { ok: true, data: parsed.data };
  }

  health() {
    return this.request("GET", "/v1/healthz", HealthzResponse);
  }

  query(text: string) {
    const body = QueryRequest.parse({ text });
    return this.request("POST", "/v1/query", QueryResponse, body);
  }

  queue() {
    return this.request("GET", "/v1/review/queue", QueueResponse);
  }

  getCase(caseId: string) {
    return this.request("GET", `/v1/cases/${encodeURIComponent(caseId)}`, CaseSummary);
  }

  review(caseId: string, body: ReviewRequest) {
    return this.request(
      "POST",
      `/v1/cases/${encodeURIComponent(caseId)}/review`,
      ReviewResponse,
      ReviewRequest.parse(body)
    );
  }

  finalize(caseId: string, body: FinalizeRequest) {
    return this.request(
      "POST",
      `/v1/cases/${encodeURIComponent(caseId)}/finalize`,
      FinalizeResponse,
      FinalizeRequest.parse(body)
    );
  }

  feedback(body: FeedbackRequest) {
    return this.request("POST", "/v1/feedback", FeedbackResponse, FeedbackRequest.parse(body));
  }

  metrics() {
    return this.request("GET", "/v1/metrics", MetricsResponse);
  }

  updatePolicy(force: boolean) {
    return this.request(
      "POST",
      "/v1/admin/update-policy",
      UpdatePolicyResponse,
      UpdatePolicyRequest.parse({ force })
    );
  }
}
