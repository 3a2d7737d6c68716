/**
 * Feedback form model: pure state + validation, no DOM. The submit button
 * stays disabled until all four rating components are set; payloads built
 * here always satisfy the feedback request schema.
 */
import { FeedbackRequest } from "./schemas.js";

export const COMPONENTS = ["relevance", "accuracy", "compliance", "satisfaction"] as const;
export type Component = (typeof COMPONENTS)[number];

/** Ratings move in quarter steps. */
export const RATING_STEPS = [0, 0.25, 0.5, 0.75, 1] as const;

export const QUALITATIVE_LABELS = [
  "",
  "high relevance",
  "low relevance",
  "high accuracy",
  "low accuracy",
  "high compliance",
  "low compliance",
  "high satisfaction",
  "low satisfaction",
] as const;

export interface FeedbackFormState {
  relevance: number | null;
  accuracy: number | null;
  compliance: number | null;
  satisfaction: number | null;
  qualitativeLabel: string;
  comment: string;
}

export function emptyForm(): FeedbackFormState {
  return {
    relevance: null,
    accuracy: null,
    compliance: null,
    satisfaction: null,
    qualitativeLabel: "",
    comment: "",
  };
}

export function setComponent(
  form: FeedbackFormState,
  component: Component,
  value: number | null
): FeedbackFormState {
  if (value !== null && !RATING_STEPS.includes(value as (typeof RATING_STEPS)[number])) {
    throw new Error(`rating must move in 0.25 steps, got ${value}`);
  }
  return { ...form, [component]: value };
}

/** Submit is allowed only when every component carries a rating. */
export function isComplete(form: FeedbackFormState): boolean {
  return COMPONENTS.every((c) => form[c] !== null);
}

export function buildFeedbackPayload(caseId: string, form: FeedbackFormState): FeedbackRequest {
  if (!isComplete(form)) {
    throw new Error("feedback form incomplete: all four components must be set");
  }
  const payload: FeedbackRequest = {
    case_id: caseId,
    relevance: form.relevance!,
    accuracy: form.accuracy!,
    compliance: form.compliance!,
    satisfaction: form.satisfaction!,
  };
  if (form.qualitativeLabel) payload.qualitative_label = form.qualitativeLabel;
  if (form.comment) payload.comment = form.comment;
  return FeedbackRequest.parse(payload);
}
