/** Hand-rolled SVG chart primitives: axes, lines, bands, scatter, heat cells. */

export interface Margins {
  top: number;
  right: number;
  bottom: number;
  left: number;
}

export const MARGINS: Margins = { top: 36, right: 18, bottom: 46, left: 62 };

export function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export function niceTicks(min: number, max: number, count = 6): number[] {
  const range = max - min || 1;
  const rough = range / count;
  const mag = Math.pow(10, Math.floor(Math.log10(rough)));
  const step = [1, 2, 5, 10].map((m) => m * mag).find((n) => n >= rough) ?? rough;
  const start = Math.ceil(min / step) * step;
  const ticks: number[] = [];
  for (let v = start; v <= max + step * 1e-9; v += step) ticks.push(v);
  return ticks;
}

export function fmtTick(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1e4 || a < 1e-3) return v.toExponential(1);
  return Number(v.toPrecision(4)).toString();
}

export class LinearScale {
  constructor(
    public d0: number,
    public d1: number,
    public r0: number,
    public r1: number,
    public log = false,
  ) {}

  map(v: number): number {
    const [a, b] = this.log ? [Math.log10(this.d0), Math.log10(this.d1)] : [this.d0, this.d1];
    const x = this.log ? Math.log10(v) : v;
    return this.r0 + ((x - a) / (b - a || 1)) * (this.r1 - this.r0);
  }

  ticks(count = 6): number[] {
    if (!this.log) return niceTicks(this.d0, this.d1, count);
    const ticks: number[] = [];
    const e0 = Math.floor(Math.log10(this.d0));
    const e1 = Math.ceil(Math.log10(this.d1));
    for (let e = e0; e <= e1; e++) {
      const v = Math.pow(10, e);
      if (v >= this.d0 * 0.999 && v <= this.d1 * 1.001) ticks.push(v);
    }
    return ticks.length >= 2 ? ticks : [this.d0, this.d1];
  }
}

export class SvgChart {
  parts: string[] = [];

  constructor(
    public width: number,
    public height: number,
    public title: string,
  ) {
    this.parts.push(
      `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
        `viewBox="0 0 ${width} ${height}" font-family="Helvetica, Arial, sans-serif">`,
      `<rect width="${width}" height="${height}" fill="white"/>`,
      `<text x="${width / 2}" y="20" text-anchor="middle" font-size="14">${esc(title)}</text>`,
    );
  }

  axes(x: LinearScale, y: LinearScale, xLabel: string, yLabel: string): void {
    const m = MARGINS;
    const w = this.width;
    const h = this.height;
    this.parts.push(
      `<rect x="${m.left}" y="${m.top}" width="${w - m.left - m.right}" height="${h - m.top - m.bottom}" fill="none" stroke="#333" stroke-width="1"/>`,
    );
    for (const t of x.ticks()) {
      const px = x.map(t);
      this.parts.push(
        `<line x1="${px.toFixed(2)}" y1="${h - m.bottom}" x2="${px.toFixed(2)}" y2="${h - m.bottom + 4}" stroke="#333"/>`,
        `<text x="${px.toFixed(2)}" y="${h - m.bottom + 17}" text-anchor="middle" font-size="10">${fmtTick(t)}</text>`,
      );
    }
    for (const t of y.ticks()) {
      const py = y.map(t);
      this.parts.push(
        `<line x1="${m.left - 4}" y1="${py.toFixed(2)}" x2="${m.left}" y2="${py.toFixed(2)}" stroke="#333"/>`,
        `<text x="${m.left - 7}" y="${(py + 3).toFixed(2)}" text-anchor="end" font-size="10">${fmtTick(t)}</text>`,
      );
    }
    this.parts.push(
      `<text x="${(m.left + w - m.right) / 2}" y="${h - 10}" text-anchor="middle" font-size="12">${esc(xLabel)}</text>`,
      `<text x="16" y="${(m.top + h - m.bottom) / 2}" text-anchor="middle" font-size="12" transform="rotate(-90 16 ${(m.top + h - m.bottom) / 2})">${esc(yLabel)}</text>`,
    );
  }

  polyline(xs: number[], ys: number[], x: LinearScale, y: LinearScale, style: string): void {
    const pts = xs.map((v, i) => `${x.map(v).toFixed(2)},${y.map(ys[i]).toFixed(2)}`).join(" ");
    this.parts.push(`<polyline points="${pts}" fill="none" ${style}/>`);
  }

  band(xs: number[], lo: number[], hi: number[], x: LinearScale, y: LinearScale, fill: string): void {
    const fwd = xs.map((v, i) => `${x.map(v).toFixed(2)},${y.map(hi[i]).toFixed(2)}`);
    const back = [...xs].reverse().map((v, i) => {
      const j = xs.length - 1 - i;
      return `${x.map(v).toFixed(2)},${y.map(lo[j]).toFixed(2)}`;
    });
    this.parts.push(`<polygon points="${[...fwd, ...back].join(" ")}" fill="${fill}" stroke="none"/>`);
  }

  rect(x0: number, y0: number, x1: number, y1: number, fill: string): void {
    const x = Math.min(x0, x1);
    const y = Math.min(y0, y1);
    this.parts.push(
      `<rect x="${x.toFixed(2)}" y="${y.toFixed(2)}" width="${Math.abs(x1 - x0).toFixed(2)}" height="${Math.abs(y1 - y0).toFixed(2)}" fill="${fill}" stroke="none"/>`,
    );
  }

  circle(cx: number, cy: number, r: number, style: string): void {
    this.parts.push(`<circle cx="${cx.toFixed(2)}" cy="${cy.toFixed(2)}" r="${r}" ${style}/>`);
  }

  legend(entries: { label: string; color: string; dash?: string }[], notes: string[] = []): void {
    const x0 = MARGINS.left + 10;
    let y0 = MARGINS.top + 14;
    for (const e of entries) {
      this.parts.push(
        `<line x1="${x0}" y1="${y0 - 4}" x2="${x0 + 22}" y2="${y0 - 4}" stroke="${e.color}" stroke-width="2"${e.dash ? ` stroke-dasharray="${e.dash}"` : ""}/>`,
        `<text x="${x0 + 28}" y="${y0}" font-size="11">${esc(e.label)}</text>`,
      );
      y0 += 15;
    }
    for (const n of notes) {
      this.parts.push(`<text x="${x0}" y="${y0}" font-size="10" fill="#888">${esc(n)}</text>`);
      y0 += 13;
    }
  }

  toString(): string {
    return this.parts.join("\n") + "\n</svg>\n";
  }
}
