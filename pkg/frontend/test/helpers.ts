import { createHash } from "node:crypto";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

/** Write a synthetic artifact directory with a valid manifest. */
export function makeArtifactDir(files: Record<string, string>): string {
  const dir = mkdtempSync(join(tmpdir(), "socgrad-art-"));
  const outputs: { path: string; sha256: string }[] = [];
  for (const [name, text] of Object.entries(files)) {
    writeFileSync(join(dir, name), text);
    outputs.push({
      path: name,
      sha256: createHash("sha256").update(text).digest("hex"),
    });
  }
  const manifest = {
    config: { run: { experiment: "synthetic", seed: 0 } },
    seeds: [0],
    outputs,
    runtime_s: 0.0,
  };
  writeFileSync(join(dir, "manifest.json"), JSON.stringify(manifest));
  return dir;
}

export function lqCsv(rows: [string, number, number, number][]): string {
  return (
    "method,epsilon,seed,mse\n" + rows.map((r) => r.join(",")).join("\n") + "\n"
  );
}

/** Gaussian-ish samples from a fixed congruential stream (deterministic). */
export function pseudoNormal(n: number, mean = 0, sd = 1, seed = 1): number[] {
  let state = seed >>> 0;
  const next = () => {
    state = (1664525 * state + 1013904223) >>> 0;
    return state / 2 ** 32;
  };
  const out: number[] = [];
  for (let i = 0; i < n; i++) {
    let s = 0;
    for (let k = 0; k < 12; k++) s += next();
    out.push(mean + sd * (s - 6));
  }
  return out;
}
