import { z } from "zod";

export const PROTO_VERSION = 1;

const cell = z.union([z.number(), z.null()]);
const matrix = z.array(z.array(cell));

export const EvalRequestSchema = z.object({
  proto: z.literal(PROTO_VERSION),
  id: z.string(),
  train: z.object({
    features: matrix,
    labels: z.array(z.number().int()),
  }),
  test: z.object({
    features: matrix,
  }),
  options: z
    .object({
      max_rows: z.number().int().positive().default(512),
      seed: z.number().int().default(42),
    })
    .default({}),
});

export type EvalRequest = z.infer<typeof EvalRequestSchema>;

export interface EvalResponse {
  proto: number;
  id: string | null;
  classes?: number[];
  probs?: number[][];
  n_train?: number;
  error?: string;
}

/** Rectangularity and train/test shape checks beyond what the schema encodes. */
export function validateShapes(req: EvalRequest): string | null {
  const { features, labels } = req.train;
  if (features.length === 0) return "train.features is empty";
  if (features.length !== labels.length) {
    return `train has ${features.length} rows but ${labels.length} labels`;
  }
  const width = features[0].length;
  if (width === 0) return "train rows have zero features";
  for (const row of features) {
    if (row.length !== width) return "train.features is not rectangular";
  }
  for (const row of req.test.features) {
    if (row.length !== width) {
      return `test rows must have ${width} features like train`;
    }
  }
  return null;
}

export function errorResponse(id: string | null, message: string): EvalResponse {
  return { proto: PROTO_VERSION, id, error: message };
}
