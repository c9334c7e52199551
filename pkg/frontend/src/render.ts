// HTML/SVG string rendering. Every score shown is the payload value passed
// through String(); nothing is recomputed or reformatted client-side.

import type {
  AggregatePayload,
  CandidateView,
  FixPayload,
  MissionView,
  TemplatePayload,
  ThresholdsPayload,
} from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function verbatim(value: number | string | null | undefined): string {
  if (value === null || value === undefined) return "n/a";
  return escapeHtml(String(value));
}

export function renderHistogramSvg(
  candidate: number[] | null,
  templates: TemplatePayload[],
  width = 360,
  height = 90,
): string {
  const series: Array<{ bins: number[]; color: string; label: string }> = [];
  if (candidate) series.push({ bins: candidate, color: "#2b7de9", label: "candidate" });
  for (const [i, tpl] of templates.entries()) {
    series.push({
      bins: tpl.histogram,
      color: i === 0 ? "#e9692b" : "#36a14e",
      label: `template ${tpl.template_id}`,
    });
  }
  if (series.length === 0) return `<svg class="histogram" width="${width}" height="${height}"></svg>`;
  const bins = series[0].bins.length;
  const peak = Math.max(...series.flatMap((s) => s.bins), 1e-9);
  const slot = width / bins;
  const bar = slot / (series.length + 0.5);
  const parts: string[] = [];
  for (const [si, s] of series.entries()) {
    for (let b = 0; b < bins; b++) {
      const value = s.bins[b] ?? 0;
      const barHeight = (value / peak) * (height - 4);
      const x = b * slot + si * bar;
      const y = height - barHeight;
      parts.push(
        `<rect data-series="${escapeHtml(s.label)}" data-bin="${b}" x="${x.toFixed(2)}" ` +
          `y="${y.toFixed(2)}" width="${bar.toFixed(2)}" height="${barHeight.toFixed(2)}" ` +
          `fill="${s.color}" fill-opacity="0.75"></rect>`,
      );
    }
  }
  return `<svg class="histogram" width="${width}" height="${height}">${parts.join("")}</svg>`;
}

export type GaugeZone = "target" | "possible" | "uncertain" | "rejected";

export function gaugeZone(dHist: number, thr: ThresholdsPayload): GaugeZone {
  if (dHist < thr.d_certain) return "target";
  if (dHist < thr.d_likely) return "possible";
  if (dHist < thr.d_uncertain) return "uncertain";
  return "rejected";
}

export function renderGauge(
  dHist: number | null,
  thresholds: ThresholdsPayload | null,
  width = 360,
): string {
  if (dHist === null || thresholds === null) {
    return `<div class="gauge gauge-empty">d_hist n/a</div>`;
  }
  const zone = gaugeZone(dHist, thresholds);
  const pos = Math.max(0, Math.min(1, dHist)) * width;
  const marks = [
    { value: thresholds.d_certain, label: "d_certain" },
    { value: thresholds.d_likely, label: "d_likely" },
    { value: thresholds.d_uncertain, label: "d_uncertain" },
  ]
    .map(
      (m) =>
        `<line data-mark="${m.label}" x1="${(m.value * width).toFixed(2)}" y1="0" ` +
        `x2="${(m.value * width).toFixed(2)}" y2="18" stroke="#444"></line>`,
    )
    .join("");
  return (
    `<div class="gauge" data-zone="${zone}">` +
    `<svg width="${width}" height="20">` +
    `<rect x="0" y="6" width="${width}" height="8" fill="#ddd"></rect>` +
    marks +
    `<circle cx="${pos.toFixed(2)}" cy="10" r="5" fill="#c22"></circle>` +
    `</svg>` +
    `<span class="gauge-value">d_hist ${verbatim(dHist)} (${zone})</span>` +
    `</div>`
  );
}

export function renderCandidatePanel(
  view: CandidateView | null,
  templates: TemplatePayload[],
  thresholds: ThresholdsPayload | null,
  cropBase = "",
): string {
  if (!view) {
    return `<section class="candidate candidate-empty">no pending candidate</section>`;
  }
  const rejected = view.verdict === "rejected";
  const classes = rejected ? "candidate candidate-rejected" : "candidate";
  const crop = view.crop_url
    ? `<img class="crop" alt="candidate crop" src="${escapeHtml(cropBase + view.crop_url)}">`
    : `<div class="crop crop-missing">no crop</div>`;
  const reason = rejected
    ? `<p class="reject-reason">rejected: ${verbatim(view.reject_reason)}</p>`
    : "";
  return (
    `<section class="${classes}" data-candidate-id="${view.candidate_id}">` +
    `<h3>candidate #${view.candidate_id} (frame ${view.frame_id})</h3>` +
    `<span class="verdict verdict-${escapeHtml(view.verdict)}">${escapeHtml(view.verdict)}</span>` +
    reason +
    crop +
    `<table class="scores">` +
    `<tr><td>p_m1</td><td data-score="p_m1">${verbatim(view.p_m1)}</td>` +
    `<td>p_m2</td><td data-score="p_m2">${verbatim(view.p_m2)}</td></tr>` +
    `<tr><td>matches</td><td data-score="match_count1">${verbatim(view.match_count1)}</td>` +
    `<td></td><td data-score="match_count2">${verbatim(view.match_count2)}</td></tr>` +
    `<tr><td>d1</td><td data-score="d1">${verbatim(view.d1)}</td>` +
    `<td>d2</td><td data-score="d2">${verbatim(view.d2)}</td></tr>` +
    `<tr><td>d_hist</td><td data-score="d_hist">${verbatim(view.d_hist)}</td>` +
    `<td>strength</td><td data-score="strength">${verbatim(view.strength)}</td></tr>` +
    `<tr><td>retained</td><td data-score="retained_ratio">${verbatim(view.retained_ratio)}</td>` +
    `<td>keypoints</td><td data-score="candidate_keypoints">${verbatim(view.candidate_keypoints)}</td></tr>` +
    `</table>` +
    renderHistogramSvg(view.histogram, templates) +
    renderGauge(view.d_hist, thresholds) +
    `</section>`
  );
}

export function renderScatterSvg(
  fixes: FixPayload[],
  aggregate: AggregatePayload | null,
  size = 320,
): string {
  if (fixes.length === 0) {
    return `<svg class="scatter" width="${size}" height="${size}"></svg>`;
  }
  const xs = fixes.map((f) => f.x);
  const ys = fixes.map((f) => f.y);
  let minX = Math.min(...xs);
  let maxX = Math.max(...xs);
  let minY = Math.min(...ys);
  let maxY = Math.max(...ys);
  const pad = Math.max(maxX - minX, maxY - minY, 1.0) * 0.15;
  minX -= pad; maxX += pad; minY -= pad; maxY += pad;
  const span = Math.max(maxX - minX, maxY - minY);
  const sx = (x: number) => ((x - minX) / span) * size;
  // East-north axes: north points up in the plot.
  const sy = (y: number) => size - ((y - minY) / span) * size;
  const scale = size / span;

  const points = fixes
    .map(
      (f) =>
        `<circle class="fix" data-frame="${f.frame_id}" cx="${sx(f.x).toFixed(2)}" ` +
        `cy="${sy(f.y).toFixed(2)}" r="3" fill="#2b7de9"></circle>`,
    )
    .join("");
  let ellipse = "";
  if (aggregate && !aggregate.degenerate && aggregate.count >= 2) {
    const [cx, cy] = aggregate.mean;
    const degrees = (-aggregate.orientation * 180) / Math.PI;
    ellipse =
      `<ellipse class="sigma" cx="${sx(cx).toFixed(2)}" cy="${sy(cy).toFixed(2)}" ` +
      `rx="${(aggregate.semi_axes[0] * scale).toFixed(2)}" ` +
      `ry="${(aggregate.semi_axes[1] * scale).toFixed(2)}" ` +
      `transform="rotate(${degrees.toFixed(2)} ${sx(cx).toFixed(2)} ${sy(cy).toFixed(2)})" ` +
      `fill="none" stroke="#c22" stroke-width="2"></ellipse>`;
  }
  return `<svg class="scatter" width="${size}" height="${size}">${points}${ellipse}</svg>`;
}

export function renderMissionHeader(view: MissionView): string {
  const banner = !view.connected
    ? `<div class="banner banner-error">connection lost, retrying</div>`
    : view.stale
      ? `<div class="banner banner-warn">stale: no events for 5 s</div>`
      : "";
  return (
    `<header class="mission">` +
    `<h2>mission state: <span class="state state-${escapeHtml(view.stateName)}">` +
    `${escapeHtml(view.stateName)}</span></h2>` +
    banner +
    `</header>`
  );
}

export function renderDecisionButtons(view: MissionView, enabled: boolean): string {
  const pending = view.pending;
  if (!pending || view.stateName !== "awaiting_confirmation") {
    return `<div class="decisions decisions-idle"></div>`;
  }
  const attr = enabled ? "" : " disabled";
  return (
    `<div class="decisions" data-candidate-id="${pending.candidate_id}">` +
    `<button id="confirm-btn"${attr}>confirm</button>` +
    `<button id="reject-btn"${attr}>reject</button>` +
    `</div>`
  );
}

export function renderEventLog(view: MissionView): string {
  const rows = view.eventLog.slice(-12).map((line) => `<li>${escapeHtml(line)}</li>`);
  return `<ul class="event-log">${rows.join("")}</ul>`;
}

export function renderApp(view: MissionView, decisionEnabled: boolean, cropBase = ""): string {
  return (
    `<div class="console">` +
    renderMissionHeader(view) +
    renderDecisionButtons(view, decisionEnabled) +
    renderCandidatePanel(view.pending, view.templates, view.thresholds, cropBase) +
    `<section class="geoloc"><h3>target fixes (ENU meters)</h3>` +
    renderScatterSvg(view.fixes, view.aggregate) +
    `</section>` +
    renderEventLog(view) +
    `</div>`
  );
}
