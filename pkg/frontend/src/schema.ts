import { z } from "zod";

import type { DecisionTableView, ExposureSamples } from "./types";

// Render tolerance for the three interval probabilities summing to one.
export const PROB_SUM_TOLERANCE = 1e-6;

export class SchemaError extends Error {}

const probability = z.number().min(-PROB_SUM_TOLERANCE).max(1 + PROB_SUM_TOLERANCE);

const decisionRowSchema = z.object({
  dose: z.number().positive(),
  schedule: z.string().min(1),
  freq: z.number().positive(),
  auc_cycle1: z.number().positive(),
  p_underdosing: probability,
  p_target: probability,
  p_overdosing: probability,
  ewoc_ok: z.boolean(),
  mean_dlt_prob: z.number().min(0).max(1).nullable(),
});

const combinationSchema = z.object({
  dose: z.number().positive(),
  schedule: z.string().min(1),
  freq: z.number().positive(),
});

export const decisionTableSchema = z.object({
  bound: z.number().gt(0).lt(1),
  interval: z.object({ lower: z.number(), upper: z.number() }),
  rows: z.array(decisionRowSchema).min(1),
  recommendation: combinationSchema.nullable(),
  rationale: z.string(),
});

export const decisionResponseSchema = z.object({
  session_id: z.string(),
  revision: z.number().int().min(0),
  decision: decisionTableSchema,
});

export const recordsResponseSchema = z.object({
  session_id: z.string(),
  revision: z.number().int().min(0),
  records: z.array(
    z.object({
      dose: z.number().positive(),
      freq: z.number().positive(),
      dlt: z.boolean(),
      time_hours: z.number().positive(),
    }),
  ),
});

export const exposureSchema = z.object({
  dose: z.number().positive(),
  freq: z.number().positive(),
  times_hours: z.array(z.number()),
  exposure: z.array(z.number()),
  cumulative_exposure: z.array(z.number()),
});

/**
 * Validate a decision table beyond field shapes: every row's interval
 * probabilities must sum to one within the render tolerance, and the
 * eligibility flag must equal the payload's own "P(overdosing) below the
 * bound" statement.  The client never recomputes statistics; it only
 * refuses to render inconsistent ones.
 */
export function validateDecisionTable(payload: unknown): DecisionTableView {
  const parsed = decisionTableSchema.safeParse(payload);
  if (!parsed.success) {
    throw new SchemaError(`decision payload malformed: ${parsed.error.issues[0]?.message}`);
  }
  const table = parsed.data;
  for (const row of table.rows) {
    const total = row.p_underdosing + row.p_target + row.p_overdosing;
    if (Math.abs(total - 1) > PROB_SUM_TOLERANCE) {
      throw new SchemaError(
        `probabilities for ${row.dose}${row.schedule} sum to ${total.toFixed(8)}, not 1`,
      );
    }
    if (row.ewoc_ok !== row.p_overdosing < table.bound) {
      throw new SchemaError(
        `eligibility flag for ${row.dose}${row.schedule} disagrees with its overdosing probability`,
      );
    }
  }
  if (table.recommendation) {
    const match = table.rows.find(
      (r) => r.dose === table.recommendation!.dose && r.schedule === table.recommendation!.schedule,
    );
    if (!match) {
      throw new SchemaError("recommended combination is not part of the grid");
    }
    if (!match.ewoc_ok) {
      throw new SchemaError("recommended combination is not eligible");
    }
  }
  return table;
}

export function validateExposure(payload: unknown): ExposureSamples {
  const parsed = exposureSchema.safeParse(payload);
  if (!parsed.success) {
    throw new SchemaError(`exposure payload malformed: ${parsed.error.issues[0]?.message}`);
  }
  const { times_hours, exposure, cumulative_exposure } = parsed.data;
  if (times_hours.length !== exposure.length || exposure.length !== cumulative_exposure.length) {
    throw new SchemaError("exposure arrays have mismatched lengths");
  }
  return parsed.data;
}
