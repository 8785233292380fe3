/**
 * Wire types for the evaluation service, validated with zod so a drifting
 * backend fails loudly instead of rendering garbage.
 */
import { z } from "zod";

export const SOCIETY_ORDER = [
  "TitleAbstract",
  "Introduction",
  "Methods",
  "Results",
  "Discussion",
  "OtherInformation",
] as const;

export type SocietyName = (typeof SOCIETY_ORDER)[number];

export const ReportItemSchema = z.object({
  id: z.number().int().min(1).max(27),
  society: z.enum(SOCIETY_ORDER).nullable(),
  score: z.number().int().min(0).max(5).nullable(),
  feedback: z.string(),
  evidence_quotes: z.array(z.string()),
  citations: z.array(z.string()),
  attempts: z.number().int().min(1),
  status: z.enum(["ok", "failed"]),
  violations: z.array(z.string()),
});

export const SocietyAggregateSchema = z.object({
  name: z.enum(SOCIETY_ORDER),
  mean: z.number().nullable(),
  scored: z.number().int(),
  failed: z.number().int(),
});

export const ReportSchema = z.object({
  schema_version: z.string(),
  run_id: z.string(),
  items: z.array(ReportItemSchema).length(27),
  societies: z.array(SocietyAggregateSchema).length(6),
  overall: z.number().nullable(),
  summary: z.string(),
  degenerate: z.boolean(),
  summary_fallback: z.boolean(),
  timestamps: z.object({ generated_at: z.number() }),
});

export const RunCreatedSchema = z.object({
  run_id: z.string(),
  doc_id: z.string(),
});

export const RunStateSchema = z.object({
  run_id: z.string(),
  doc_id: z.string(),
  state: z.enum([
    "pending",
    "parsing",
    "evaluating",
    "synthesizing",
    "complete",
    "failed",
  ]),
  error: z.string().nullable().optional(),
});

export const ProgressEventSchema = z.object({
  run_id: z.string(),
  task_id: z.string(),
  state: z.enum(["running", "retrying", "done", "failed"]),
  seq: z.number().int(),
  at: z.number(),
});

export const EventPageSchema = z.object({
  events: z.array(ProgressEventSchema),
  cursor: z.number().int(),
});

export const ChatReplySchema = z.object({
  session_id: z.string(),
  reply: z.string(),
});

export const ApiErrorSchema = z.object({
  code: z.string(),
  message: z.string(),
  details: z.record(z.unknown()).optional(),
});

export type Report = z.infer<typeof ReportSchema>;
export type ReportItem = z.infer<typeof ReportItemSchema>;
export type RunCreated = z.infer<typeof RunCreatedSchema>;
export type RunState = z.infer<typeof RunStateSchema>;
export type ProgressEvent = z.infer<typeof ProgressEventSchema>;
export type EventPage = z.infer<typeof EventPageSchema>;
export type ChatReply = z.infer<typeof ChatReplySchema>;
export type ApiErrorBody = z.infer<typeof ApiErrorSchema>;
