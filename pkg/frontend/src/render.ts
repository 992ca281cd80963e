/** socgrad figure renderer.
 *
 * Usage: node dist/render.js <artifact_dir> <out_dir>
 *
 * Reads the CSV/JSON artifacts written by the `socgrad run` CLI, verifies
 * the manifest hashes, and writes one SVG + PNG + metadata JSON per figure.
 * Rendering is read-only over the artifacts and deterministic given the
 * inputs. Missing optional series produce a legend note, not a failure.
 */

import { mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { ArtifactDir } from "./artifacts.js";
import { column } from "./csv.js";
import { FigureResult, finetuneFigure, lqFigure, pendulumFigure } from "./figures.js";

export function renderAll(artifactDir: string, outDir: string): FigureResult[] {
  const art = new ArtifactDir(artifactDir);
  art.verify();
  const figures: FigureResult[] = [];

  if (art.has("lq_mse.csv")) {
    figures.push(lqFigure(art.csv("lq_mse.csv", ["method", "epsilon", "seed", "mse"])));
  }

  if (art.has("pendulum_map.csv")) {
    const mapRows = art.csv("pendulum_map.csv", ["theta", "omega", "cost"]);
    const pointRows = art.has("pendulum_points.csv")
      ? art.csv("pendulum_points.csv", ["method", "iter", "i", "theta", "omega"])
      : [];
    const methods = [...new Set(pointRows.map((r) => r.method as string))];
    for (const method of methods.length ? methods : ["trbsde"]) {
      figures.push(pendulumFigure(mapRows, pointRows, method));
    }
  }

  const hist = art.has("finetune_hist.csv")
    ? art.csv("finetune_hist.csv", ["method", "beta", "iter", "total", "w1"])
    : [];
  const betas = [...new Set(column(hist, "beta"))];
  for (const beta of betas) {
    const tag = formatBeta(beta);
    const curve = art.csv(`tilted_curve_${tag}.csv`, ["x", "density"]);
    const tr = art.has(`samples_trbsde_${tag}.csv`)
      ? column(art.csv(`samples_trbsde_${tag}.csv`, ["x"]), "x")
      : [];
    const am = art.has(`samples_adjoint_matching_${tag}.csv`)
      ? column(art.csv(`samples_adjoint_matching_${tag}.csv`, ["x"]), "x")
      : [];
    figures.push(finetuneFigure(beta, tr, am, curve));
  }

  mkdirSync(outDir, { recursive: true });
  for (const fig of figures) {
    writeFileSync(join(outDir, `${fig.name}.svg`), fig.svg);
    writeFileSync(join(outDir, `${fig.name}.png`), fig.png);
    writeFileSync(join(outDir, `${fig.name}.meta.json`), JSON.stringify(fig.meta, null, 2));
  }
  return figures;
}

/** Mirrors the CLI's %g beta formatting in file names. */
export function formatBeta(beta: number): string {
  return Number(beta.toPrecision(6)).toString();
}

const invokedDirectly = process.argv[1]?.endsWith("render.js");
if (invokedDirectly) {
  const [artifactDir, outDir] = process.argv.slice(2);
  if (!artifactDir || !outDir) {
    console.error("usage: node dist/render.js <artifact_dir> <out_dir>");
    process.exit(2);
  }
  const figures = renderAll(artifactDir, outDir);
  for (const fig of figures) {
    console.log(`wrote ${fig.name}.svg / .png / .meta.json`);
  }
}
