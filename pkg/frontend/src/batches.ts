/**
 * Grouped prompt/target batches for SFT and grouped-rollout training.
 *
 * One batch is one rollout group: `groupSize` prompts with their targets.
 * Prompts are instruction + separator + document; targets pass through
 * verbatim so the trainer sees exactly the bytes the dataset file holds.
 */

import { loadTrainingRecords, type TrainingRecord } from './records.js';
import { RecordFormatError } from './errors.js';

export const PROMPT_SEPARATOR = '\n\n';
export const DEFAULT_GROUP_SIZE = 5;

export interface Batch {
  prompts: string[];
  targets: string[];
  records: TrainingRecord[];
  groupSize: number;
}

export interface LoadBatchesOptions {
  /** Shuffle records deterministically before grouping. */
  seed?: number;
  /** Drop records whose meta.kept is false (SFT wants verified ones). */
  keptOnly?: boolean;
}

/** Deterministic PRNG (mulberry32) so shuffles reproduce across runs. */
function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function shuffled<T>(items: T[], seed: number): T[] {
  const out = items.slice();
  const rand = mulberry32(seed);
  for (let i = out.length - 1; i > 0; i--) {
    const j = Math.floor(rand() * (i + 1));
    [out[i], out[j]] = [out[j]!, out[i]!];
  }
  return out;
}

export function buildPrompt(record: TrainingRecord): string {
  return record.instruction + PROMPT_SEPARATOR + record.document;
}

/**
 * Load a training file into groups of `groupSize`.
 *
 * The record count must align to the group size; a ragged tail would
 * silently skew group statistics, so it is an error instead.
 */
export function loadBatches(
  path: string,
  groupSize: number = DEFAULT_GROUP_SIZE,
  options: LoadBatchesOptions = {},
): Batch[] {
  if (!Number.isInteger(groupSize) || groupSize < 1) {
    throw new RangeError(`groupSize must be a positive integer, got ${groupSize}`);
  }
  let records = loadTrainingRecords(path);
  if (options.keptOnly) {
    records = records.filter((r) => r.meta.kept);
  }
  if (options.seed !== undefined) {
    records = shuffled(records, options.seed);
  }
  if (records.length % groupSize !== 0) {
    throw new RecordFormatError(
      `${records.length} records do not divide into groups of ${groupSize}`,
      records.length,
    );
  }
  const batches: Batch[] = [];
  for (let start = 0; start < records.length; start += groupSize) {
    const group = records.slice(start, start + groupSize);
    batches.push({
      prompts: group.map(buildPrompt),
      targets: group.map((r) => r.target),
      records: group,
      groupSize,
    });
  }
  return batches;
}
