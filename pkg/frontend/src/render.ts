/** Pure HTML/SVG rendering of a session state payload.
 *
 * Every number shown comes straight from the service; the only local
 * arithmetic is coordinate mapping into SVG pixel space. Output is a
 * deterministic string so it can be snapshot-tested without a DOM.
 */

import type { Curve, SessionState, Window } from "./types.js";

const W = 420;
const H = 320;
const PAD = 44;

const PHASE_LABELS: Record<string, string> = {
  stage1: "Stage 1 — conditional escalation",
  stage2: "Stage 2 — adaptive randomization",
  stopped_safety: "Stopped — safety rule",
  stopped_futility: "Stopped — futility rule",
  completed: "Completed — awaiting final decision",
};

function esc(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function fmt(v: number, digits = 2): string {
  return v.toFixed(digits);
}

/** Map a standardized dose pair to raw mg/m² coordinates. */
export function toRaw(win: Window, x: number, y: number): [number, number] {
  return [
    win.x_min + x * (win.x_max - win.x_min),
    win.y_min + y * (win.y_max - win.y_min),
  ];
}

interface Scale {
  px(rawX: number): number;
  py(rawY: number): number;
}

function makeScale(win: Window): Scale {
  return {
    px: (v) => PAD + ((v - win.x_min) / (win.x_max - win.x_min)) * (W - 2 * PAD),
    py: (v) =>
      H - PAD - ((v - win.y_min) / (win.y_max - win.y_min)) * (H - 2 * PAD),
  };
}

function axes(win: Window): string {
  const s = makeScale(win);
  const ticks = (min: number, max: number) =>
    [0, 0.25, 0.5, 0.75, 1].map((t) => min + t * (max - min));
  const parts: string[] = [
    `<line class="axis" x1="${PAD}" y1="${H - PAD}" x2="${W - PAD}" y2="${H - PAD}"/>`,
    `<line class="axis" x1="${PAD}" y1="${PAD}" x2="${PAD}" y2="${H - PAD}"/>`,
  ];
  for (const t of ticks(win.x_min, win.x_max)) {
    parts.push(
      `<text class="tick" x="${fmt(s.px(t), 1)}" y="${H - PAD + 16}" text-anchor="middle">${fmt(t, 1)}</text>`,
    );
  }
  for (const t of ticks(win.y_min, win.y_max)) {
    parts.push(
      `<text class="tick" x="${PAD - 6}" y="${fmt(s.py(t) + 4, 1)}" text-anchor="end">${fmt(t, 1)}</text>`,
    );
  }
  parts.push(
    `<text class="label" x="${W / 2}" y="${H - 6}" text-anchor="middle">drug A dose (mg/m²)</text>`,
    `<text class="label" x="12" y="${H / 2}" text-anchor="middle" transform="rotate(-90 12 ${H / 2})">drug B dose (mg/m²)</text>`,
  );
  return parts.join("\n");
}

export function renderCurveChart(state: SessionState): string {
  const win = state.window;
  const s = makeScale(win);
  const body: string[] = [axes(win)];

  const curve = state.curve;
  if (curve !== null && curve.empty_reason === null && curve.x.length > 0) {
    const pts = curve.x
      .map((cx, i) => {
        const [rx, ry] = toRaw(win, cx, curve.y[i]);
        return `${fmt(s.px(rx), 1)},${fmt(s.py(ry), 1)}`;
      })
      .join(" ");
    body.push(`<polyline class="mtd-curve" fill="none" points="${pts}"/>`);
  }

  for (const r of state.records) {
    const cls = r.z === 1 ? "patient dlt" : "patient no-dlt";
    body.push(
      `<circle class="${cls}" cx="${fmt(s.px(r.raw_x), 1)}" cy="${fmt(s.py(r.raw_y), 1)}" r="4">` +
        `<title>patient ${r.index}: z=${r.z}, e=${r.e === null ? "pending" : r.e}</title></circle>`,
    );
  }
  for (const p of state.pending) {
    const x = s.px(p.raw_x);
    const y = s.py(p.raw_y);
    body.push(
      `<g class="pending"><line x1="${fmt(x - 5, 1)}" y1="${fmt(y, 1)}" x2="${fmt(x + 5, 1)}" y2="${fmt(y, 1)}"/>` +
        `<line x1="${fmt(x, 1)}" y1="${fmt(y - 5, 1)}" x2="${fmt(x, 1)}" y2="${fmt(y + 5, 1)}"/>` +
        `<title>pending patient ${p.index}</title></g>`,
    );
  }
  return `<svg class="curve-chart" viewBox="0 0 ${W} ${H}" role="img" aria-label="estimated MTD curve and assigned doses">\n${body.join("\n")}\n</svg>`;
}

export function renderExceedanceChart(state: SessionState): string {
  const prof = state.exceedance;
  const curve = state.curve;
  if (prof === null || curve === null || curve.empty_reason !== null) {
    return `<p class="placeholder">No exceedance profile yet.</p>`;
  }
  const win = state.window;
  const s = makeScale(win);
  const py = (v: number) => H - PAD - v * (H - 2 * PAD);
  const pts = prof
    .map((v, i) => {
      const [rx] = toRaw(win, curve.x[i], 0);
      return `${fmt(s.px(rx), 1)},${fmt(py(v), 1)}`;
    })
    .join(" ");
  const du = py(state.config.delta_u);
  const parts = [
    `<line class="axis" x1="${PAD}" y1="${H - PAD}" x2="${W - PAD}" y2="${H - PAD}"/>`,
    `<line class="axis" x1="${PAD}" y1="${PAD}" x2="${PAD}" y2="${H - PAD}"/>`,
    `<line class="threshold" x1="${PAD}" y1="${fmt(du, 1)}" x2="${W - PAD}" y2="${fmt(du, 1)}"/>`,
    `<text class="tick" x="${W - PAD + 4}" y="${fmt(du + 4, 1)}">δ_u=${fmt(state.config.delta_u)}</text>`,
    `<polyline class="exceedance" fill="none" points="${pts}"/>`,
  ];
  if (state.exceedance_argmax !== null) {
    const i = state.exceedance_argmax;
    const [rx] = toRaw(win, curve.x[i], 0);
    parts.push(
      `<circle class="argmax" cx="${fmt(s.px(rx), 1)}" cy="${fmt(py(prof[i]), 1)}" r="4">` +
        `<title>max exceedance ${fmt(prof[i], 3)}</title></circle>`,
    );
  }
  parts.push(
    `<text class="label" x="${W / 2}" y="${H - 6}" text-anchor="middle">drug A dose (mg/m²)</text>`,
    `<text class="label" x="12" y="${H / 2}" text-anchor="middle" transform="rotate(-90 12 ${H / 2})">P(π_E &gt; θ_E | data)</text>`,
  );
  return `<svg class="exceedance-chart" viewBox="0 0 ${W} ${H}" role="img" aria-label="posterior exceedance profile along the MTD curve">\n${parts.join("\n")}\n</svg>`;
}

function emptyCurveBanner(curve: Curve): string {
  const why =
    curve.empty_reason === "sub_toxic"
      ? "the estimated DLT rate is below the target everywhere — the curve lies above the dose window"
      : "the estimated DLT rate exceeds the target everywhere — no tolerable combination in the window";
  return `<div class="banner warning">Estimated MTD curve is empty (${esc(curve.empty_reason ?? "")}): ${why}.</div>`;
}

export function renderBanners(state: SessionState): string {
  const out: string[] = [];
  const label = PHASE_LABELS[state.phase] ?? state.phase;
  const cls = state.phase.startsWith("stopped") ? "banner stopped" : "banner";
  out.push(`<div class="${cls}">${esc(label)}</div>`);
  if (state.stop_reason !== null) {
    out.push(`<div class="banner stop-reason">${esc(state.stop_reason)}</div>`);
  }
  if (state.curve !== null && state.curve.empty_reason !== null) {
    out.push(emptyCurveBanner(state.curve));
  }
  const conv = state.convergence?.split_rhat_max ?? {};
  const bad = Object.entries(conv).filter(([, v]) => v > 1.1);
  if (bad.length > 0) {
    const detail = bad.map(([m, v]) => `${m} R̂=${fmt(v, 3)}`).join(", ");
    out.push(
      `<div class="banner warning">Posterior chains may not have converged (${esc(detail)}); treat estimates with caution.</div>`,
    );
  }
  return out.join("\n");
}

export function renderRecordsTable(state: SessionState): string {
  const rows = state.records
    .map(
      (r) =>
        `<tr><td>${r.index}</td><td>${r.stage}</td><td>${r.cohort}</td>` +
        `<td>${fmt(r.raw_x)}</td><td>${fmt(r.raw_y)}</td>` +
        `<td>${r.z}</td><td>${r.e === null ? "—" : r.e}</td></tr>`,
    )
    .join("\n");
  return (
    `<table class="records"><thead><tr><th>#</th><th>stage</th><th>cohort</th>` +
    `<th>A (mg/m²)</th><th>B (mg/m²)</th><th>DLT</th><th>resp.</th></tr></thead>` +
    `<tbody>\n${rows}\n</tbody></table>`
  );
}

export function renderOutcomeForm(state: SessionState): string {
  if (state.pending.length === 0) {
    return `<p class="placeholder">No pending cohort.</p>`;
  }
  const rows = state.pending
    .map(
      (p) =>
        `<tr data-index="${p.index}"><td>${p.index}</td>` +
        `<td>${fmt(p.raw_x)}</td><td>${fmt(p.raw_y)}</td>` +
        `<td><select name="z-${p.index}"><option value="0">no</option><option value="1">yes</option></select></td>` +
        `<td><select name="e-${p.index}"><option value="">pending</option><option value="0">no</option><option value="1">yes</option></select></td></tr>`,
    )
    .join("\n");
  const alpha = state.pending[0].alpha;
  const note =
    alpha !== null
      ? `<p class="note">Feasibility bound α = ${fmt(alpha)} for this cohort.</p>`
      : "";
  return (
    `<form class="outcomes" data-version="${state.version}">${note}` +
    `<table><thead><tr><th>#</th><th>A (mg/m²)</th><th>B (mg/m²)</th><th>DLT</th><th>response</th></tr></thead>` +
    `<tbody>\n${rows}\n</tbody></table>` +
    `<button type="submit">Record cohort ${state.pending[0].cohort} outcomes</button></form>`
  );
}

export function renderSession(state: SessionState): string {
  return [
    `<section class="session" data-session="${esc(state.id)}" data-version="${state.version}">`,
    `<header><h1>Trial ${esc(state.id)}</h1>` +
      `<p class="meta">enrolled ${state.enrolled} of ${state.config.n1 + state.config.n2} · version ${state.version}</p></header>`,
    renderBanners(state),
    `<div class="charts">`,
    renderCurveChart(state),
    renderExceedanceChart(state),
    `</div>`,
    `<h2>Pending cohort</h2>`,
    renderOutcomeForm(state),
    `<h2>Enrolled patients</h2>`,
    state.records.length > 0
      ? renderRecordsTable(state)
      : `<p class="placeholder">No patients enrolled yet.</p>`,
    `</section>`,
  ].join("\n");
}
