import { z } from 'zod';

export const ErrorBodySchema = z.object({
  code: z.string(),
  message: z.string(),
  hint: z.string().default(''),
});

export const PreprocessReportSchema = z.object({
  content_score: z.number(),
  threshold: z.number().nullable(),
  bbox: z.array(z.number()).nullable(),
  rejected: z.boolean(),
  reason: z.string().nullable().optional(),
});

export const PreprocessResponseSchema = z.object({
  upload_id: z.string(),
  preview_png_b64: z.string(),
  mask_png_b64: z.string(),
  report: PreprocessReportSchema,
});

export const RankedPredictionSchema = z.object({
  label: z.string(),
  confidence: z.number(),
});

export const ClassifyResponseSchema = z.object({
  predictions: z.array(RankedPredictionSchema),
  provider_vectors: z.record(z.array(z.number())),
  combined_provider_id: z.string(),
  labels: z.array(z.string()),
});

export const MatchResultSchema = z.object({
  volume_id: z.string(),
  axis: z.string(),
  slice_index: z.number(),
  best_rotation: z.number(),
  dice: z.number(),
  hu_dist: z.number(),
  ssim: z.number(),
  ncc: z.number(),
  orb: z.number(),
  combined: z.number(),
  thumbnail_png_b64: z.string().default(''),
});

export const MatchedContextSchema = z.object({
  volume_id: z.string(),
  species: z.string(),
  axis: z.string(),
  slice_index: z.number(),
  dims: z.array(z.number()),
});

export const JobHandleSchema = z.object({
  job_id: z.string(),
  kind: z.string(),
  state: z.string(),
  progress: z.number(),
});

export const MatchStatusSchema = z.object({
  job_id: z.string(),
  kind: z.string(),
  state: z.enum(['queued', 'running', 'done', 'failed']),
  progress: z.number(),
  results: z.array(MatchResultSchema).nullable().optional(),
  matched_context: MatchedContextSchema.nullable().optional(),
  error: z.string().nullable().optional(),
  timing: z.record(z.unknown()).nullable().optional(),
});

export const VolumeSummarySchema = z.object({
  id: z.string(),
  species: z.string(),
  slice_count: z.number(),
  per_axis: z.record(z.number()),
});

export const VolumesResponseSchema = z.object({
  volumes: z.array(VolumeSummarySchema),
  species_totals: z.record(z.number()),
});

// headline numbers exported by the evaluation CLI; the landing page hides
// the metrics section when this file is not deployed alongside the assets
export const HeadlineReportSchema = z.object({
  accuracy: z.number(),
  top3_accuracy: z.number(),
  macro_f1: z.number(),
  macro_auc: z.number().optional(),
});

export type ErrorBody = z.infer<typeof ErrorBodySchema>;
export type PreprocessResponse = z.infer<typeof PreprocessResponseSchema>;
export type ClassifyResponse = z.infer<typeof ClassifyResponseSchema>;
export type MatchResult = z.infer<typeof MatchResultSchema>;
export type MatchedContext = z.infer<typeof MatchedContextSchema>;
export type JobHandle = z.infer<typeof JobHandleSchema>;
export type MatchStatus = z.infer<typeof MatchStatusSchema>;
export type VolumeSummary = z.infer<typeof VolumeSummarySchema>;
export type VolumesResponse = z.infer<typeof VolumesResponseSchema>;
export type HeadlineReport = z.infer<typeof HeadlineReportSchema>;

export interface PreprocessRequest {
  image_b64: string;
  sensitivity?: number;
  target_size?: number;
}

export interface ClassifyRequest {
  upload_id: string;
  ensemble_config_id?: string;
  top_k?: number;
}

export interface MatchRequest {
  upload_id: string;
  candidate_volume_ids?: string[] | null;
  axes?: string[] | null;
  top_k_coarse?: number;
  top_n?: number;
}

export interface CropRect {
  x: number;
  y: number;
  width: number;
  height: number;
}
