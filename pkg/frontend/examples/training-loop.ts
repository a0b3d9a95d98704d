/**
 * Wiring example: two-phase fine-tuning against the costforge artifacts.
 *
 * This script documents where the adapter plugs into a real trainer. It is
 * NOT part of the test suite and performs no weight updates itself; the
 * `Trainer` interface below is the seam where an actual stack (e.g. a
 * LoRA-capable SFT trainer plus a grouped-rollout RL trainer) goes.
 *
 * Reference settings for the published recipe this mirrors:
 *   SFT:  LoRA rank 16, lora alpha 32, lr 2e-4, batch 16, 3 epochs
 *   RL:   lr 1e-5, batch 16, 5 sampled generations per query
 * Loss masking: compute loss on the target region only, not the prompt.
 *
 * Run with: npx ts-node examples/training-loop.ts <train.jsonl> <service-url>
 */

import { fetchGroupRewards, loadBatches, type RewardRequest } from '../src/index.js';

interface Trainer {
  /** One supervised step on (prompt, target) pairs; prompt tokens masked. */
  sftStep(prompts: string[], targets: string[]): Promise<void>;
  /** Sample `count` rollouts for a prompt from the current policy. */
  sample(prompt: string, count: number): Promise<string[]>;
  /** One policy-gradient step from externally computed advantages. */
  rlStep(prompt: string, rollouts: string[], advantages: number[]): Promise<void>;
}

const GROUP_SIZE = 5;
const SFT_EPOCHS = 3;

export async function trainingLoop(trainer: Trainer, datasetPath: string, serviceUrl: string) {
  // Phase 1: SFT on verified samples only.
  const sftBatches = loadBatches(datasetPath, GROUP_SIZE, { keptOnly: true, seed: 7 });
  for (let epoch = 0; epoch < SFT_EPOCHS; epoch++) {
    for (const batch of sftBatches) {
      await trainer.sftStep(batch.prompts, batch.targets);
    }
  }

  // Phase 2: grouped-rollout RL with remote rewards. Every sample is fair
  // game here, including unverified ones kept as hard cases.
  const rlBatches = loadBatches(datasetPath, GROUP_SIZE, { seed: 8 });
  for (const batch of rlBatches) {
    for (let i = 0; i < batch.records.length; i++) {
      const record = batch.records[i]!;
      const prompt = batch.prompts[i]!;
      const rollouts = await trainer.sample(prompt, GROUP_SIZE);
      const requests: RewardRequest[] = rollouts.map((rollout) => ({
        question: record.instruction,
        gold_answer: '',
        reference_target: record.target,
        rollout,
        structure_kind: record.meta.structure_kind,
        group_id: record.instruction,
      }));
      const { results, advantages } = await fetchGroupRewards(requests, serviceUrl);
      console.log(
        `rewards ${results.map((r) => r.breakdown.total.toFixed(3)).join(' ')} -> ` +
          `advantages ${advantages.map((a) => a.toFixed(3)).join(' ')}`,
      );
      await trainer.rlStep(prompt, rollouts, advantages);
    }
  }
}

// Minimal stand-in so the script runs end-to-end against a live service.
const loggingTrainer: Trainer = {
  async sftStep(prompts) {
    console.log(`sft step over ${prompts.length} pairs`);
  },
  async sample(_prompt, count) {
    return Array.from({ length: count }, (_, i) => `<reasoning>Step 1: attempt ${i}</reasoning><answer>| A |\n| ${i} |</answer>`);
  },
  async rlStep(_prompt, rollouts) {
    console.log(`rl step over ${rollouts.length} rollouts`);
  },
};

const [datasetPath, serviceUrl] = process.argv.slice(2);
if (datasetPath && serviceUrl) {
  trainingLoop(loggingTrainer, datasetPath, serviceUrl).catch((err) => {
    console.error(err);
    process.exit(1);
  });
}
