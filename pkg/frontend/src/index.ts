export {
  GroupTooSmallError,
  RecordFormatError,
  SchemaVersionMismatchError,
  ServiceUnavailableError,
} from './errors.js';
export {
  FORMAT_VERSION,
  hasWellFormedTags,
  loadTrainingRecords,
  type RecordMeta,
  type TrainingRecord,
} from './records.js';
export {
  DEFAULT_GROUP_SIZE,
  PROMPT_SEPARATOR,
  buildPrompt,
  loadBatches,
  type Batch,
  type LoadBatchesOptions,
} from './batches.js';
export {
  fetchGroupRewards,
  type AuditEntry,
  type GroupRewards,
  type RewardBreakdown,
  type RewardRequest,
  type RewardResult,
} from './rewardClient.js';
