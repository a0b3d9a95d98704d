/**
 * Reading and validating costforge training-record files.
 *
 * The file format is line-delimited JSON, one record per line, with a
 * "version" field (currently "1") and the fields instruction, document,
 * target, meta. Targets must carry exactly one
 * <reasoning>...</reasoning> pair followed by one <answer>...</answer>
 * pair; anything else is rejected with its line number so bad lines are
 * findable in multi-thousand-sample files.
 */

import { readFileSync } from 'node:fs';

import { RecordFormatError, SchemaVersionMismatchError } from './errors.js';

export const FORMAT_VERSION = '1';

export interface RecordMeta {
  structure_kind: string;
  task_category: string | null;
  kept: boolean;
  iterations_used: number;
  domain_tag: string;
}

export interface TrainingRecord {
  instruction: string;
  document: string;
  /** Tagged target text, byte-identical to the file contents. */
  target: string;
  meta: RecordMeta;
}

const TAG_SEQUENCE = ['<reasoning>', '</reasoning>', '<answer>', '</answer>'] as const;
const TAG_PATTERN = /<\/?reasoning>|<\/?answer>/g;

/** True when the target carries exactly the four tags in order. */
export function hasWellFormedTags(target: string): boolean {
  const seen = target.match(TAG_PATTERN) ?? [];
  return seen.length === TAG_SEQUENCE.length && seen.every((tag, i) => tag === TAG_SEQUENCE[i]);
}

function asRecord(value: unknown, line: number): TrainingRecord {
  if (typeof value !== 'object' || value === null) {
    throw new RecordFormatError('record is not an object', line);
  }
  const raw = value as Record<string, unknown>;
  if (raw.version !== FORMAT_VERSION) {
    throw new SchemaVersionMismatchError(
      `line ${line}: record version ${JSON.stringify(raw.version)}, expected "${FORMAT_VERSION}"`,
    );
  }
  for (const field of ['instruction', 'document', 'target'] as const) {
    if (typeof raw[field] !== 'string') {
      throw new RecordFormatError(`missing or non-string field "${field}"`, line);
    }
  }
  if (typeof raw.meta !== 'object' || raw.meta === null) {
    throw new RecordFormatError('missing meta object', line);
  }
  const target = raw.target as string;
  if (!hasWellFormedTags(target)) {
    throw new RecordFormatError('target is not a well-formed tagged pair', line);
  }
  return {
    instruction: raw.instruction as string,
    document: raw.document as string,
    target,
    meta: raw.meta as unknown as RecordMeta,
  };
}

/** Load and validate every record in a training file. */
export function loadTrainingRecords(path: string): TrainingRecord[] {
  const text = readFileSync(path, 'utf-8');
  const records: TrainingRecord[] = [];
  const lines = text.split('\n');
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i]?.trim();
    if (!line) continue;
    let parsed: unknown;
    try {
      parsed = JSON.parse(line);
    } catch (err) {
      throw new RecordFormatError(`undecodable record: ${(err as Error).message}`, i + 1);
    }
    records.push(asRecord(parsed, i + 1));
  }
  return records;
}
