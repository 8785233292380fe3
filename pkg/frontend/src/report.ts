/**
 * Pure HTML renderers for the evaluation report. Returning strings keeps the
 * module testable under node and lets the shell swap innerHTML wholesale.
 */
import { Report, ReportItem, SOCIETY_ORDER, SocietyName } from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

/** Color band for a 0-5 score: poor (0-1), weak (2-3), good (4-5). */
export function scoreBand(score: number | null): "poor" | "weak" | "good" | "failed" {
  if (score === null) return "failed";
  if (score <= 1) return "poor";
  if (score <= 3) return "weak";
  return "good";
}

export function formatMean(mean: number | null): string {
  return mean === null ? "n/a" : mean.toFixed(2);
}

function renderItem(item: ReportItem): string {
  const band = item.status === "failed" ? "failed" : scoreBand(item.score);
  const score =
    item.status === "failed"
      ? `<span class="badge badge-failed">evaluation failed</span>`
      : `<span class="score score-${band}">${item.score} / 5</span>`;
  const quotes = item.evidence_quotes
    .map((q) => `<blockquote>${escapeHtml(q)}</blockquote>`)
    .join("");
  const violations = item.violations.length
    ? `<div class="violations">last violations: ${item.violations
        .map(escapeHtml)
        .join(", ")}</div>`
    : "";
  return `<article class="item item-${band}" data-item-id="${item.id}">
  <header><span class="item-id">Item ${item.id}</span>${score}
    <span class="attempts">${item.attempts} attempt${item.attempts === 1 ? "" : "s"}</span></header>
  <p class="feedback">${escapeHtml(item.feedback)}</p>
  ${quotes}${violations}
</article>`;
}

function renderSociety(report: Report, name: SocietyName): string {
  const aggregate = report.societies.find((s) => s.name === name);
  const items = report.items.filter((i) => i.society === name);
  const failedNote = aggregate && aggregate.failed > 0
    ? ` <span class="badge badge-failed">${aggregate.failed} failed</span>`
    : "";
  return `<section class="society" data-society="${name}">
  <h2>${name} <span class="society-mean">mean ${formatMean(aggregate?.mean ?? null)}</span>${failedNote}</h2>
  ${items.map(renderItem).join("\n")}
</section>`;
}

export function renderReport(report: Report): string {
  const overall = `<div class="overall">Overall mean: <strong>${formatMean(
    report.overall,
  )}</strong>${report.degenerate ? ' <span class="badge badge-failed">degenerate</span>' : ""}</div>`;
  const summary = `<section class="summary"><h2>Summary</h2><pre>${escapeHtml(
    report.summary,
  )}</pre></section>`;
  const societies = SOCIETY_ORDER.map((name) => renderSociety(report, name)).join(
    "\n",
  );
  return `<div class="report" data-run-id="${escapeHtml(report.run_id)}">
${overall}
${summary}
${societies}
</div>`;
}
