/* Boots the real annotation service on a synthetic two-frame dataset for
 * the end-to-end suite. */
import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import type { TestProject } from "vitest/node";

const PORT = 8931;
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess | null = null;

async function waitForServer(timeoutMs: number): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const response = await fetch(`${BASE}/v1/meta`);
      if (response.ok) return;
    } catch {
      /* not up yet */
    }
    await new Promise((resolve) => setTimeout(resolve, 300));
  }
  throw new Error(`annotation service did not come up on ${BASE}`);
}

export default async function setup(project: TestProject): Promise<() => void> {
  const root = mkdtempSync(join(tmpdir(), "voxhand-e2e-"));
  const dataset = join(root, "ds");

  const synth = spawnSync("python3", [
    "-m", "voxhand.cli", "synth",
    "--count", "2", "--seed", "3", "--out", dataset,
  ], { stdio: "inherit" });
  if (synth.status !== 0) {
    throw new Error("failed to generate the e2e dataset (is voxhand installed?)");
  }

  server = spawn("python3", [
    "-m", "voxhand.cli", "serve",
    "--dataset", dataset, "--port", String(PORT),
  ], { stdio: "inherit" });
  await waitForServer(60_000);

  project.provide("voxhandBaseUrl", BASE);
  project.provide("voxhandDataset", dataset);

  return () => {
    server?.kill();
  };
}

declare module "vitest" {
  export interface ProvidedContext {
    voxhandBaseUrl: string;
    voxhandDataset: string;
  }
}
