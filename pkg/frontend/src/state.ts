/**
 * Console state and actions. All mutations go through the API; the store
 * only mirrors server state, applies optimistic case-state changes, and
 * reverts them when the server says no.
 */
import { ApiClient } from "./api.js";
import { buildFeedbackPayload, emptyForm, FeedbackFormState, isComplete } from "./form.js";
import { CaseSummary, MetricsResponse } from "./schemas.js";

export type Role = "Advisor" | "Paralegal";

export interface Banner {
  kind: "error" | "info";
  text: string;
  retry?: () => void;
}

export interface AppState {
  role: Role | null;
  queue: CaseSummary[];
  selectedCaseId: string | null;
  metrics: MetricsResponse | null;
  form: FeedbackFormState;
  banner: Banner | null;
  lastFeedback: { reward: number; policyVersion: number } | null;
}

export const ADVISOR_ACTION_STATES = new Set(["Aggregated", "AdvisorReview"]);
export const PARALEGAL_ACTION_STATES = new Set(["ParalegalFinalize"]);

/** Which actions render for a case, by role and case state. */
export function actionsFor(role: Role | null, state: string): string[] {
  if (role === "Advisor" && ADVISOR_ACTION_STATES.has(state)) return ["approve", "revise"];
  if (role === "Paralegal" && PARALEGAL_ACTION_STATES.has(state)) return ["finalize"];
  if (role === "Paralegal" && state === "Released") return ["feedback"];
  return [];
}

export class ConsoleStore {
  state: AppState = {
    role: null,
    queue: [],
    selectedCaseId: null,
    metrics: null,
    form: emptyForm(),
    banner: null,
    lastFeedback: null,
  };
  private listeners: Array<() => void> = [];
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(public api: ApiClient, public pollMs = 2000) {}

  subscribe(listener: () => void) {
    this.listeners.push(listener);
  }

  private notify() {
    for (const listener of this.listeners) listener();
  }

  setRole(role: Role, token: string) {
    this.api.token = token;
    this.state.role = role;
    this.notify();
  }

  selectedCase(): CaseSummary | null {
    return this.state.queue.find((c) => c.case_id === this.state.selectedCaseId) ?? null;
  }

  selectCase(caseId: string | null) {
    this.state.selectedCaseId = caseId;
    this.state.form = emptyForm();
    this.notify();
  }

  startPolling() {
    if (this.timer !== null) return;
    this.timer = setInterval(() => void this.refresh(), this.pollMs);
  }

  stopPolling() {
    if (this.timer !== null) clearInterval(this.timer);
    this.timer = null;
  }

  async refresh(): Promise<void> {
    const [queue, metrics] = await Promise.all([this.api.queue(), this.api.metrics()]);
    if (queue.ok) {
      this.state.queue = [...queue.data.items].sort((a, b) =>
        a.case_id.localeCompare(b.case_id)
      );
    } else {
      this.fail("loading the review queue", queue, () => void this.refresh());
    }
    if (metrics.ok) this.state.metrics = metrics.data;
    // a released case drops out of the queue; keep the selection only if present
    if (
      this.state.selectedCaseId &&
      !this.state.queue.some((c) => c.case_id === this.state.selectedCaseId)
    ) {
      const detail = await this.api.getCase(this.state.selectedCaseId);
      if (detail.ok) {
        this.state.queue = [...this.state.queue, detail.data];
      }
    }
    this.notify();
  }

  private fail(what: string, result: { code: string; message: string }, retry?: () => void) {
    const roleProblem = result.code === "role_forbidden" || result.code.startsWith("auth");
    this.state.banner = {
      kind: "error",
      text: roleProblem
        ? `your role may not do this (${result.code}): ${result.message}`
        : `failed ${what} (${result.code}): ${result.message}`,
      retry: result.code === "network" ? retry : undefined,
    };
    this.notify();
  }

  clearBanner() {
    this.state.banner = null;
    this.notify();
  }

  /** Advisor verdict with optimistic state + revert on rejection. */
  async review(caseId: string, verdict: "approve" | "revise", notes = ""): Promise<boolean> {
    const target = this.state.queue.find((c) => c.case_id === caseId);
    const previous = target?.state;
    if (target) {
      target.state = verdict === "approve" ? "ParalegalFinalize" : "Revise";
      this.notify();
    }
    const result = await this.api.review(caseId, { verdict, notes });
    if (!result.ok) {
      if (target && previous !== undefined) target.state = previous;
      this.fail(`recording the ${verdict} verdict`, result, () => void this.review(caseId, verdict, notes));
      return false;
    }
    if (target) target.state = result.data.state;
    await this.refresh();
    return true;
  }

  async finalize(caseId: string, templateId = "default"): Promise<boolean> {
    const target = this.state.queue.find((c) => c.case_id === caseId);
    const previous = target?.state;
    if (target) {
      target.state = "Released";
      this.notify();
    }
    const result = await this.api.finalize(caseId, { template_id: templateId });
    if (!result.ok) {
      if (target && previous !== undefined) target.state = previous;
      this.fail("finalizing the document", result, () => void this.finalize(caseId, templateId));
      return false;
    }
    await this.refresh();
    return true;
  }

  canSubmitFeedback(): boolean {
    return this.state.selectedCaseId !== null && isComplete(this.state.form);
  }

  async submitFeedback(): Promise<boolean> {
    const caseId = this.state.selectedCaseId;
    if (!caseId || !this.canSubmitFeedback()) return false;
    const payload = buildFeedbackPayload(caseId, this.state.form);
    const result = await this.api.feedback(payload);
    if (!result.ok) {
      this.fail("submitting feedback", result, () => void this.submitFeedback());
      return false;
    }
    if (result.data.status === "accepted") {
      this.state.lastFeedback = {
        reward: result.data.reward,
        policyVersion: result.data.policy_version,
      };
      this.state.banner = {
        kind: "info",
        text: `feedback accepted, reward ${result.data.reward.toFixed(3)}`,
      };
    } else {
      this.state.banner = { kind: "info", text: `feedback held: ${result.data.reason}` };
    }
    this.state.form = emptyForm();
    await this.refresh();
    return true;
  }
}
