/**
 * Wire schemas for the review console.
 *
 * These mirror the service's request/response bodies exactly; the contract
 * tests validate recorded server traffic against them, so a drift between
 * console and service fails CI instead of a reviewer's session.
 */
import { z } from "zod";

export const ErrorBody = z.object({
  code: z.string(),
  message: z.string(),
});
export type ErrorBody = z.infer<typeof ErrorBody>;

export const Citation = z.tuple([z.number(), z.number(), z.string()]);

export const GateEntry = z.object({
  index: z.number(),
  g: z.array(z.number()),
  active: z.array(z.number()),
  action: z.number().nullable(),
  policy_version: z.number().nullable(),
});
export type GateEntry = z.infer<typeof GateEntry>;

export const QuestionScore = z.object({
  index: z.number(),
  question: z.string(),
  abstained: z.boolean(),
  best_score: z.number(),
  documents: z.array(z.tuple([z.string(), z.number()])),
});
export type QuestionScore = z.infer<typeof QuestionScore>;

export const FinalDocument = z.object({
  text: z.string(),
  template_id: z.string(),
  advisor_approval: z.object({ actor: z.string(), timestamp: z.number() }),
  paralegal_signoff: z.object({ actor: z.string(), timestamp: z.number() }),
});

export const CaseSummary = z.object({
  case_id: z.string(),
  state: z.string(),
  answer: z.string(),
  citations: z.array(Citation),
  abstained: z.boolean(),
  scores: z.object({ questions: z.array(QuestionScore) }),
  gate: z.object({ questions: z.array(GateEntry) }),
  objectives: z.string().optional(),
  queries: z.array(z.string()).optional(),
  age_seconds: z.number().optional(),
  revision_notes: z.array(z.string()).optional(),
  final_document: FinalDocument.optional(),
});
export type CaseSummary = z.infer<typeof CaseSummary>;

export const QueueResponse = z.object({ items: z.array(CaseSummary) });
export type QueueResponse = z.infer<typeof QueueResponse>;

export const QueryRequest = z.object({ text: z.string().min(1) }).strict();
export const QueryResponse = CaseSummary;

export const ReviewRequest = z
  .object({
    verdict: z.enum(["approve", "revise", "open"]),
    notes: z.string(),
  })
  .strict();
export type ReviewRequest = z.infer<typeof ReviewRequest>;

export const ReviewResponse = z.object({ case_id: z.string(), state: z.string() });

export const FinalizeRequest = z.object({ template_id: z.string() }).strict();
export type FinalizeRequest = z.infer<typeof FinalizeRequest>;

export const FinalizeResponse = z.object({
  case_id: z.string(),
  state: z.string(),
  document: z.object({
    text: z.string(),
    template_id: z.string(),
    citations: z.array(Citation),
  }),
});

const component = z.number().min(0).max(1);

export const FeedbackRequest = z
  .object({
    case_id: z.string(),
    response_id: z.string().optional(),
    relevance: component.optional(),
    accuracy: component.optional(),
    compliance: component.optional(),
    satisfaction: component.optional(),
    qualitative_label: z.string().optional(),
    comment: z.string().optional(),
  })
  .strict();
export type FeedbackRequest = z.infer<typeof FeedbackRequest>;

export const FeedbackResponse = z.union([
  z.object({
    status: z.literal("accepted"),
    reward: z.number(),
    policy_version: z.number(),
    updated: z.boolean(),
  }),
  z.object({ status: z.literal("held"), reason: z.string() }),
]);
export type FeedbackResponse = z.infer<typeof FeedbackResponse>;

export const MetricsResponse = z.object({
  n_feedback: z.number(),
  mean_reward: z.number().nullable(),
  policy_version: z.number(),
  abstention_rate_window: z.number().nullable(),
  n_documents: z.number().optional(),
  n_triples: z.number().optional(),
  n_cases: z.number().optional(),
  buffered_trajectories: z.number().optional(),
});
export type MetricsResponse = z.infer<typeof MetricsResponse>;

export const ExpertsResponse = z.object({
  policy_version: z.number(),
  experts: z.array(
    z.object({
      id: z.number(),
      role: z.string(),
      tasks: z.array(z.string()),
      handler_kind: z.string().nullable(),
    })
  ),
});

export const HealthzResponse = z.object({
  status: z.string(),
  policy_version: z.number(),
});

export const UpdatePolicyRequest = z.object({ force: z.boolean() }).strict();
export const UpdatePolicyResponse = z.object({
  updated: z.boolean(),
  policy_version: z.number(),
});
