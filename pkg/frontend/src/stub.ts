/**
 * Deterministic stub predictor: per-class centroids over mean-imputed features,
 * probabilities from inverse squared distance. Good enough to integration-test
 * the wire protocol and the caller's cache accounting without a real model.
 */

import type { EvalRequest, EvalResponse } from "./protocol.js";
import { PROTO_VERSION } from "./protocol.js";

/** Small deterministic PRNG so subsampling is reproducible across platforms. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function shuffled(indices: number[], rand: () => number): number[] {
  const out = indices.slice();
  for (let i = out.length - 1; i > 0; i--) {
    const j = Math.floor(rand() * (i + 1));
    [out[i], out[j]] = [out[j], out[i]];
  }
  return out;
}

/** Per-class proportional subsample (largest remainder, at least 1 per class). */
export function stratifiedSubsample(
  labels: number[],
  maxRows: number,
  seed: number,
): number[] {
  if (labels.length <= maxRows) {
    return labels.map((_, i) => i);
  }
  const byClass = new Map<number, number[]>();
  labels.forEach((y, i) => {
    const bucket = byClass.get(y) ?? [];
    bucket.push(i);
    byClass.set(y, bucket);
  });
  const classes = [...byClass.keys()].sort((a, b) => a - b);
  const exact = classes.map(
    (c) => (byClass.get(c)!.length * maxRows) / labels.length,
  );
  const counts = exact.map((e) => Math.max(1, Math.floor(e)));
  let leftover = maxRows - counts.reduce((a, b) => a + b, 0);
  const order = classes
    .map((_, i) => i)
    .sort((i, j) => exact[j] - Math.floor(exact[j]) - (exact[i] - Math.floor(exact[i])) || i - j);
  for (const i of order) {
    if (leftover <= 0) break;
    if (counts[i] < byClass.get(classes[i])!.length) {
      counts[i] += 1;
      leftover -= 1;
    }
  }
  const rand = mulberry32(seed);
  const picked: number[] = [];
  classes.forEach((c, i) => {
    const rows = shuffled(byClass.get(c)!, rand);
    picked.push(...rows.slice(0, counts[i]));
  });
  return picked.sort((a, b) => a - b);
}

function columnMeans(rows: (number | null)[][]): number[] {
  const width = rows[0].length;
  const means = new Array<number>(width).fill(0);
  for (let j = 0; j < width; j++) {
    let sum = 0;
    let count = 0;
    for (const row of rows) {
      const v = row[j];
      if (v !== null && Number.isFinite(v)) {
        sum += v;
        count += 1;
      }
    }
    means[j] = count > 0 ? sum / count : 0;
  }
  return means;
}

function imputeRow(row: (number | null)[], means: number[]): number[] {
  return row.map((v, j) => (v !== null && Number.isFinite(v) ? v : means[j]));
}

export function stubPredict(req: EvalRequest): EvalResponse {
  const maxRows = req.options.max_rows;
  const keep = stratifiedSubsample(req.train.labels, maxRows, req.options.seed);
  const trainRows = keep.map((i) => req.train.features[i]);
  const trainLabels = keep.map((i) => req.train.labels[i]);

  const means = columnMeans(trainRows);
  const classes = [...new Set(trainLabels)].sort((a, b) => a - b);
  const centroids = classes.map((c) => {
    const members = trainRows
      .filter((_, i) => trainLabels[i] === c)
      .map((row) => imputeRow(row, means));
    const mu = new Array<number>(means.length).fill(0);
    for (const row of members) {
      row.forEach((v, j) => (mu[j] += v));
    }
    return mu.map((v) => v / members.length);
  });

  const probs = req.test.features.map((raw) => {
    const row = imputeRow(raw, means);
    const weights = centroids.map((mu) => {
      let d2 = 0;
      for (let j = 0; j < row.length; j++) {
        const diff = row[j] - mu[j];
        d2 += diff * diff;
      }
      return 1.0 / (d2 + 1e-9);
    });
    const total = weights.reduce((a, b) => a + b, 0);
    return weights.map((w) => w / total);
  });

  return {
    proto: PROTO_VERSION,
    id: req.id,
    classes,
    probs,
    n_train: trainRows.length,
  };
}
