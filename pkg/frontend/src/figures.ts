/** The three figure families rendered from artifact CSV rows.
 *
 * Each builder returns the SVG text, a raster companion, and a metadata
 * record describing exactly what was drawn (series, band semantics,
 * overlays) so tests can verify renders without parsing pixels.
 */

import type { Row } from "./csv.js";
import { column } from "./csv.js";
import { heatColor, Raster } from "./png.js";
import { histogram, kde } from "./stats.js";
import { LinearScale, MARGINS, SvgChart } from "./svg.js";

export interface FigureResult {
  name: string;
  svg: string;
  png: Uint8Array;
  meta: Record<string, unknown>;
}

const COLORS: Record<string, string> = {
  trbsde: "#1f5fd0",
  pnaa: "#d03b2f",
  adjoint_matching: "#d03b2f",
};
const RGB: Record<string, [number, number, number]> = {
  trbsde: [31, 95, 208],
  pnaa: [208, 59, 47],
  adjoint_matching: [208, 59, 47],
};

const W = 560;
const H = 400;

function plotScales(
  xd: [number, number],
  yd: [number, number],
  logY = false,
): { x: LinearScale; y: LinearScale } {
  return {
    x: new LinearScale(xd[0], xd[1], MARGINS.left, W - MARGINS.right),
    y: new LinearScale(yd[0], yd[1], H - MARGINS.bottom, MARGINS.top, logY),
  };
}

/** MSE vs noise strength: per-method mean line with a min..max band. */
export function lqFigure(rows: Row[]): FigureResult {
  const methods = ["trbsde", "pnaa"].filter((m) => rows.some((r) => r.method === m));
  const missing = ["trbsde", "pnaa"].filter((m) => !methods.includes(m));
  const epsilons = [...new Set(column(rows, "epsilon"))].sort((a, b) => a - b);
  const series = methods.map((method) => {
    const mean: number[] = [];
    const min: number[] = [];
    const max: number[] = [];
    for (const eps of epsilons) {
      const vals = rows
        .filter((r) => r.method === method && r.epsilon === eps)
        .map((r) => r.mse as number);
      mean.push(vals.reduce((a, b) => a + b, 0) / vals.length);
      min.push(Math.min(...vals));
      max.push(Math.max(...vals));
    }
    return { method, mean, min, max, n_seeds: rows.filter((r) => r.method === method && r.epsilon === epsilons[0]).length };
  });

  const allVals = series.flatMap((s) => [...s.min, ...s.max]);
  const y0 = Math.min(...allVals) * 0.8;
  const y1 = Math.max(...allVals) * 1.25;
  const { x, y } = plotScales([epsilons[0] - 0.05, epsilons[epsilons.length - 1] + 0.05], [y0, y1], true);
  const chart = new SvgChart(W, H, "Costate-map MSE vs noise strength");
  chart.axes(x, y, "noise strength", "MSE (log scale)");
  const raster = new Raster(W, H);
  raster.fillRect(MARGINS.left, MARGINS.top, W - MARGINS.right, MARGINS.top, [51, 51, 51]);
  raster.fillRect(MARGINS.left, H - MARGINS.bottom, W - MARGINS.right, H - MARGINS.bottom, [51, 51, 51]);
  for (const s of series) {
    chart.band(epsilons, s.min, s.max, x, y, COLORS[s.method] + "33");
    chart.polyline(epsilons, s.mean, x, y, `stroke="${COLORS[s.method]}" stroke-width="2"`);
    for (let i = 0; i + 1 < epsilons.length; i++) {
      raster.line(x.map(epsilons[i]), y.map(s.mean[i]), x.map(epsilons[i + 1]), y.map(s.mean[i + 1]), RGB[s.method]);
    }
  }
  const notes = missing.map((m) => `series "${m}" unavailable`);
  chart.legend(series.map((s) => ({ label: s.method, color: COLORS[s.method] })), notes);
  return {
    name: "lq_mse",
    svg: chart.toString(),
    png: raster.encode(),
    meta: {
      figure: "lq_mse",
      band: "minmax",
      epsilons,
      series: series.map((s) => ({
        label: s.method,
        n_seeds: s.n_seeds,
        mean: s.mean,
        band_lo: s.min,
        band_hi: s.max,
      })),
      notes,
    },
  };
}

/** Cost heat map with the support points of one method overlaid. */
export function pendulumFigure(mapRows: Row[], pointRows: Row[], method: string): FigureResult {
  const thetas = [...new Set(column(mapRows, "theta"))].sort((a, b) => a - b);
  const omegas = [...new Set(column(mapRows, "omega"))].sort((a, b) => a - b);
  const costs = column(mapRows, "cost");
  const c0 = Math.min(...costs);
  const c1 = Math.max(...costs);
  const { x, y } = plotScales(
    [thetas[0], thetas[thetas.length - 1]],
    [omegas[0], omegas[omegas.length - 1]],
  );
  const chart = new SvgChart(W, H, `Expected cost map with ${method} support points`);
  const raster = new Raster(W, H);
  const dth = thetas.length > 1 ? thetas[1] - thetas[0] : 1;
  const dom = omegas.length > 1 ? omegas[1] - omegas[0] : 1;
  for (const r of mapRows) {
    const u = ((r.cost as number) - c0) / (c1 - c0 || 1);
    const [cr, cg, cb] = heatColor(u);
    const fill = `rgb(${cr},${cg},${cb})`;
    const px0 = x.map((r.theta as number) - dth / 2);
    const px1 = x.map((r.theta as number) + dth / 2);
    const py0 = y.map((r.omega as number) - dom / 2);
    const py1 = y.map((r.omega as number) + dom / 2);
    chart.rect(px0, py0, px1, py1, fill);
    raster.fillRect(px0, py1, px1, py0, [cr, cg, cb]);
  }
  chart.axes(x, y, "theta", "omega");
  const iters = column(pointRows, "iter");
  const lastIter = iters.length ? Math.max(...iters) : 0;
  const finals = pointRows.filter((r) => r.method === method && r.iter === lastIter);
  for (const p of finals) {
    chart.circle(x.map(p.theta as number), y.map(p.omega as number), 3, `fill="white" stroke="black" stroke-width="1"`);
    raster.fillRect(x.map(p.theta as number) - 1, y.map(p.omega as number) - 1, x.map(p.theta as number) + 1, y.map(p.omega as number) + 1, [0, 0, 0]);
  }
  const notes = finals.length ? [] : [`no support points for "${method}"`];
  chart.legend([{ label: `${method} final points (iter ${lastIter})`, color: "#000" }], notes);
  return {
    name: `pendulum_${method}`,
    svg: chart.toString(),
    png: raster.encode(),
    meta: {
      figure: "pendulum_map",
      method,
      n_cells: mapRows.length,
      n_points: finals.length,
      final_iter: lastIter,
      cost_range: [c0, c1],
      notes,
    },
  };
}

/** Histogram (reversed-BSDE) + density line (adjoint matching) + target curve. */
export function finetuneFigure(
  beta: number,
  trSamples: number[],
  amSamples: number[],
  curveRows: Row[],
): FigureResult {
  const curveX = column(curveRows, "x");
  const curveY = column(curveRows, "density");
  const bins = trSamples.length ? histogram(trSamples) : [];
  const amKde = amSamples.length ? kde(amSamples) : { x: [], y: [] };
  const xsAll = [...curveX, ...bins.flatMap((b) => [b.start, b.end]), ...amKde.x];
  const ysAll = [...curveY, ...bins.map((b) => b.density), ...amKde.y];
  const { x, y } = plotScales(
    [Math.min(...xsAll), Math.max(...xsAll)],
    [0, Math.max(...ysAll) * 1.1],
  );
  const chart = new SvgChart(W, H, `Fine-tuned samples vs tilted target (beta = ${beta})`);
  const raster = new Raster(W, H);
  for (const b of bins) {
    chart.rect(x.map(b.start), y.map(0), x.map(b.end), y.map(b.density), COLORS.trbsde + "99");
    raster.fillRect(x.map(b.start), y.map(b.density), x.map(b.end), y.map(0), [140, 170, 230]);
  }
  if (amKde.x.length) {
    chart.polyline(amKde.x, amKde.y, x, y, `stroke="${COLORS.adjoint_matching}" stroke-width="2" stroke-dasharray="6,4"`);
    for (let i = 0; i + 1 < amKde.x.length; i += 2) {
      raster.line(x.map(amKde.x[i]), y.map(amKde.y[i]), x.map(amKde.x[i + 1]), y.map(amKde.y[i + 1]), RGB.adjoint_matching);
    }
  }
  chart.polyline(curveX, curveY, x, y, `stroke="black" stroke-width="2"`);
  for (let i = 0; i + 1 < curveX.length; i++) {
    raster.line(x.map(curveX[i]), y.map(curveY[i]), x.map(curveX[i + 1]), y.map(curveY[i + 1]), [0, 0, 0]);
  }
  chart.axes(x, y, "x", "density");
  const notes: string[] = [];
  if (!trSamples.length) notes.push('series "trbsde" unavailable');
  if (!amSamples.length) notes.push('series "adjoint_matching" unavailable');
  chart.legend(
    [
      { label: "analytic tilted target", color: "#000" },
      { label: "reversed-BSDE histogram", color: COLORS.trbsde },
      { label: "adjoint matching density", color: COLORS.adjoint_matching, dash: "6,4" },
    ],
    notes,
  );
  return {
    name: `finetune_${beta}`,
    svg: chart.toString(),
    png: raster.encode(),
    meta: {
      figure: "finetune_density",
      beta,
      series: [
        { label: "trbsde", kind: "histogram", n_samples: trSamples.length, n_bins: bins.length },
        { label: "adjoint_matching", kind: "kde", n_samples: amSamples.length },
        { label: "tilted_target", kind: "curve", n_points: curveX.length, source: "tilted_curve csv" },
      ],
      notes,
    },
  };
}
