/** Artifact directory access: manifest validation and typed CSV loads. */

import { createHash } from "node:crypto";
import { existsSync, readFileSync } from "node:fs";
import { join } from "node:path";

import { parseCsv, Row } from "./csv.js";

export interface Manifest {
  config: Record<string, Record<string, unknown>>;
  seeds: number[];
  outputs: { path: string; sha256: string }[];
  runtime_s: number;
}

export class ArtifactDir {
  manifest: Manifest;

  constructor(public dir: string) {
    const mPath = join(dir, "manifest.json");
    if (!existsSync(mPath)) {
      throw new Error(`no manifest.json in ${dir}`);
    }
    this.manifest = JSON.parse(readFileSync(mPath, "utf-8")) as Manifest;
  }

  /** Every file listed in the manifest must exist with a matching hash. */
  verify(): void {
    for (const out of this.manifest.outputs) {
      const p = join(this.dir, out.path);
      if (!existsSync(p)) throw new Error(`manifest lists missing file ${out.path}`);
      const digest = createHash("sha256").update(readFileSync(p)).digest("hex");
      if (digest !== out.sha256) {
        throw new Error(`hash mismatch for ${out.path}: manifest ${out.sha256}, file ${digest}`);
      }
    }
  }

  has(name: string): boolean {
    return existsSync(join(this.dir, name));
  }

  csv(name: string, required: string[]): Row[] {
    return parseCsv(readFileSync(join(this.dir, name), "utf-8"), required, name);
  }
}
