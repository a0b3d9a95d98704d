import { createServer, type Server } from 'node:http';
import type { AddressInfo } from 'node:net';

import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import {
  GroupTooSmallError,
  ServiceUnavailableError,
  fetchGroupRewards,
  type RewardRequest,
} from '../src/index.js';

/**
 * Stub reward service with a ledger: every scored rollout's total is
 * recorded so tests can check the adapter passes values through without
 * doing any reward math of its own.
 */
class StubService {
  server: Server;
  url = '';
  ledger: number[] = [];
  advantagesServed: number[][] = [];
  private counter = 0;

  constructor() {
    this.server = createServer((req, res) => {
      let body = '';
      req.on('data', (chunk) => (body += chunk));
      req.on('end', () => {
        const reply = (status: number, payload: unknown) => {
          res.writeHead(status, {
            'Content-Type': 'application/json',
            'X-CostForge-Config-Hash': 'stub-hash-0001',
          });
          res.end(JSON.stringify(payload));
        };
        if (req.url === '/v1/reward/batch') {
          const requests = JSON.parse(body) as RewardRequest[];
          const results = requests.map((r, i) => {
            const total = Math.round((this.counter++ * 0.31 + i * 0.07) * 1000) / 1000;
            this.ledger.push(total);
            return {
              group_id: r.group_id ?? null,
              breakdown: {
                format: 1.0,
                s_struct: 50.0,
                s_sem: 50.0,
                answer: 0.5,
                answer_empty: false,
                process_raw: 0.5,
                gamma: 1.0,
                process_scaled: 0.5,
                total,
              },
              audit: [{ label: `stub:${i}`, call_id: 'cafe0000beef' }],
            };
          });
          reply(200, results);
        } else if (req.url === '/v1/advantages') {
          const { rewards } = JSON.parse(body) as { rewards: number[] };
          if (rewards.length < 2) {
            reply(422, { error: 'GroupTooSmall', detail: 'need >= 2 rewards' });
            return;
          }
          // fixed canned advantages; the adapter must not recompute anything
          const advantages = rewards.map((_, i) => (i === 0 ? -1 : i === 1 ? 1 : 0));
          this.advantagesServed.push(advantages);
          reply(200, { advantages });
        } else {
          reply(404, { error: 'NotFound' });
        }
      });
    });
  }

  start(): Promise<void> {
    return new Promise((resolve) => {
      this.server.listen(0, '127.0.0.1', () => {
        const { port } = this.server.address() as AddressInfo;
        this.url = `http://127.0.0.1:${port}`;
        resolve();
      });
    });
  }

  stop(): Promise<void> {
    return new Promise((resolve) => this.server.close(() => resolve()));
  }
}

function rollouts(n: number, groupId = 'g1'): RewardRequest[] {
  return Array.from({ length: n }, (_, i) => ({
    question: 'q',
    gold_answer: 'g',
    reference_target: '<reasoning>Step 1: r</reasoning><answer>| A |\n| 1 |</answer>',
    rollout: `<reasoning>Step 1: attempt ${i}</reasoning><answer>| A |\n| ${i} |</answer>`,
    structure_kind: 'table',
    group_id: groupId,
  }));
}

describe('fetchGroupRewards', () => {
  const stub = new StubService();

  beforeAll(() => stub.start());
  afterAll(() => stub.stop());

  it('passes totals through in rollout order and matches the ledger', async () => {
    const before = stub.ledger.length;
    const { results, advantages, configHash } = await fetchGroupRewards(rollouts(5), stub.url);
    expect(results).toHaveLength(5);
    const totals = results.map((r) => r.breakdown.total);
    expect(totals).toEqual(stub.ledger.slice(before));
    const sum = (xs: number[]) => xs.reduce((a, b) => a + b, 0);
    expect(sum(totals)).toBe(sum(stub.ledger.slice(before)));
    expect(advantages).toEqual(stub.advantagesServed.at(-1));
    expect(configHash).toBe('stub-hash-0001');
  });

  it('serves degenerate two-rollout groups as given by the service', async () => {
    const { advantages } = await fetchGroupRewards(rollouts(2), stub.url);
    expect(advantages).toEqual([-1, 1]);
  });

  it('surfaces GroupTooSmall distinctly from unavailability', async () => {
    await expect(fetchGroupRewards(rollouts(1), stub.url)).rejects.toBeInstanceOf(
      GroupTooSmallError,
    );
  });

  it('maps unreachable services to ServiceUnavailableError', async () => {
    await expect(fetchGroupRewards(rollouts(5), 'http://127.0.0.1:9')).rejects.toBeInstanceOf(
      ServiceUnavailableError,
    );
  });

  it('maps unexpected statuses to ServiceUnavailableError', async () => {
    await expect(
      fetchGroupRewards(rollouts(2), `${stub.url}/nowhere`),
    ).rejects.toBeInstanceOf(ServiceUnavailableError);
  });
});
