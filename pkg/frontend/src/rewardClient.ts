/**
 * Client for the costforge reward service.
 *
 * The adapter does no reward math locally: one POST to /v1/reward/batch
 * scores the rollouts, one POST to /v1/advantages converts the returned
 * totals into group-relative advantages, and both results come back in
 * rollout order.
 */

import { GroupTooSmallError, ServiceUnavailableError } from './errors.js';

export interface RewardRequest {
  question: string;
  gold_answer: string;
  reference_target: string;
  rollout: string;
  structure_kind: string;
  group_id?: string | null;
}

export interface RewardBreakdown {
  format: number;
  s_struct: number;
  s_sem: number;
  answer: number;
  answer_empty: boolean;
  process_raw: number;
  gamma: number;
  process_scaled: number;
  total: number;
}

export interface AuditEntry {
  label: string;
  call_id: string;
}

export interface RewardResult {
  group_id: string | null;
  breakdown: RewardBreakdown;
  audit: AuditEntry[];
}

export interface GroupRewards {
  results: RewardResult[];
  advantages: number[];
  configHash: string | null;
}

async function post(url: string, body: unknown): Promise<Response> {
  try {
    return await fetch(url, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(body),
    });
  } catch (err) {
    throw new ServiceUnavailableError(`cannot reach ${url}: ${(err as Error).message}`);
  }
}

async function failFrom(response: Response, url: string): Promise<never> {
  let detail = '';
  let errorName = '';
  try {
    const payload = (await response.json()) as { error?: string; detail?: string };
    errorName = payload.error ?? '';
    detail = payload.detail ?? '';
  } catch {
    // non-JSON error body; fall through with the status alone
  }
  if (response.status === 422 && errorName === 'GroupTooSmall') {
    throw new GroupTooSmallError(detail || 'group too small for advantages');
  }
  throw new ServiceUnavailableError(`${url} replied ${response.status} ${errorName} ${detail}`.trim());
}

/**
 * Score one rollout group and fetch its advantages.
 *
 * Exactly two HTTP calls; results preserve rollout order. A 422/GroupTooSmall
 * from the service surfaces as GroupTooSmallError, every other failure as
 * ServiceUnavailableError.
 */
export async function fetchGroupRewards(
  rollouts: RewardRequest[],
  serviceUrl: string,
): Promise<GroupRewards> {
  const base = serviceUrl.replace(/\/$/, '');
  const batchResponse = await post(`${base}/v1/reward/batch`, rollouts);
  if (!batchResponse.ok) {
    await failFrom(batchResponse, `${base}/v1/reward/batch`);
  }
  const results = (await batchResponse.json()) as RewardResult[];
  if (!Array.isArray(results) || results.length !== rollouts.length) {
    throw new ServiceUnavailableError(
      `batch endpoint returned ${Array.isArray(results) ? results.length : 'non-array'} results for ${rollouts.length} rollouts`,
    );
  }

  const totals = results.map((r) => r.breakdown.total);
  const advResponse = await post(`${base}/v1/advantages`, { rewards: totals });
  if (!advResponse.ok) {
    await failFrom(advResponse, `${base}/v1/advantages`);
  }
  const { advantages } = (await advResponse.json()) as { advantages: number[] };
  return {
    results,
    advantages,
    configHash: batchResponse.headers.get('X-CostForge-Config-Hash'),
  };
}
