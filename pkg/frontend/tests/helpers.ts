import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import type { GridStepPayload, SingleChoiceStepPayload, StepPayload } from "../src/types.js";

const HERE = dirname(fileURLToPath(import.meta.url));
export const REPO_ROOT = join(HERE, "..", "..");
export const FIXTURES = join(REPO_ROOT, "fixtures");

/** Pull a step payload out of a pinned service golden file. */
export function stepFromGolden(name: string): StepPayload {
  const raw = JSON.parse(readFileSync(join(FIXTURES, "goldens", "api", name), "utf-8"));
  return raw.body.step as StepPayload;
}

export function choiceStepFixture(): SingleChoiceStepPayload {
  return stepFromGolden("04_create_full.json") as SingleChoiceStepPayload;
}

export function gridStepFixture(): GridStepPayload {
  return stepFromGolden("15_create_spot.json") as GridStepPayload;
}

export function syntheticGrid(n: number, itemsPerRow = 3): GridStepPayload {
  const base = gridStepFixture();
  return {
    ...base,
    items: Array.from({ length: n }, (_, i) => ({
      identifier: `item${i}`,
      description: `Item ${i}`,
      imageTitle: `item${i}`,
    })),
    options: base.options === null ? null : { ...base.options, itemsPerRow },
  };
}

export async function waitFor<T>(probe: () => T | null | undefined | false,
                                 timeoutMs = 10_000, label = "condition"): Promise<T> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    const got = probe();
    if (got) return got;
    if (Date.now() > deadline) throw new Error(`timed out waiting for ${label}`);
    await new Promise((resolve) => setTimeout(resolve, 15));
  }
}
