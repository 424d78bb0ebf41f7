/**
 * Pure HTML renderers: (view model) -> markup string.  The app shell injects
 * these into the DOM; tests snapshot them directly.
 */

import type { MethodInfo } from "./api.js";
import type { JobRow, ResultView, Stage } from "./state.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

function timestamp(epochSeconds: number): string {
  return new Date(epochSeconds * 1000).toISOString().replace("T", " ").slice(0, 19);
}

export function renderJobTable(rows: JobRow[]): string {
  if (rows.length === 0) {
    return `<p class="empty">No jobs yet. Upload a collection and pick a method.</p>`;
  }
  const body = rows
    .map((row) => {
      const link = row.resultLink
        ? `<a href="${escapeHtml(row.resultLink)}">result</a>`
        : `<a href="#/jobs/${escapeHtml(row.id)}">view</a>`;
      return (
        `<tr>` +
        `<td class="mono">${escapeHtml(row.id.slice(0, 12))}</td>` +
        `<td>${escapeHtml(row.method)}</td>` +
        `<td><span class="badge badge-${row.state.toLowerCase()}">${row.state}</span></td>` +
        `<td>${timestamp(row.created_at)}</td>` +
        `<td>${timestamp(row.updated_at)}</td>` +
        `<td>${link}</td>` +
        `</tr>`
      );
    })
    .join("");
  return (
    `<table class="jobs"><thead><tr>` +
    `<th>job</th><th>method</th><th>status</th><th>created</th><th>updated</th><th></th>` +
    `</tr></thead><tbody>${body}</tbody></table>`
  );
}

export function renderStageBar(stages: Stage[], progressPercent: number): string {
  const cells = stages
    .map(
      (stage) =>
        `<li class="stage stage-${stage.status}">` +
        `<span class="stage-label">${escapeHtml(stage.label)}</span>` +
        `</li>`,
    )
    .join("");
  return (
    `<ol class="stage-bar" data-progress="${progressPercent}">` +
    cells +
    `</ol>` +
    `<div class="progress"><div class="progress-fill" style="width:${progressPercent}%"></div></div>`
  );
}

export function renderMethodDescription(view: ResultView): string {
  return (
    `<section class="method-box">` +
    `<h3>${escapeHtml(view.methodName)}</h3>` +
    `<p>${escapeHtml(view.description)}</p>` +
    `</section>`
  );
}

export function renderResultTable(view: ResultView): string {
  if (view.state === "FAILED") {
    return `<div class="banner banner-error">Job failed: ${escapeHtml(view.error ?? "unknown error")}</div>`;
  }
  if (view.rows.length === 0) {
    return `<p class="empty">Ranking not available yet.</p>`;
  }
  const body = view.rows
    .map((row) => {
      const value = row.value === null ? "n/a" : row.value.toFixed(6);
      const cls = row.isTop ? ` class="top-model"` : "";
      const label = row.isTop ? " &#9733;" : "";
      return (
        `<tr${cls}>` +
        `<td>${row.rank}</td>` +
        `<td>${escapeHtml(row.model)}${label}</td>` +
        `<td class="mono">${value}</td>` +
        `<td><button class="download" data-model="${escapeHtml(row.model)}">download bundle</button></td>` +
        `</tr>`
      );
    })
    .join("");
  return (
    `<table class="ranking"><thead><tr>` +
    `<th>rank</th><th>model</th><th>value</th><th></th>` +
    `</tr></thead><tbody>${body}</tbody></table>`
  );
}

export function renderResultPage(view: ResultView): string {
  return (
    `<section class="result-page" data-job="${escapeHtml(view.jobId)}">` +
    renderStageBar(view.stages, view.progressPercent) +
    renderMethodDescription(view) +
    renderResultTable(view) +
    `</section>`
  );
}

export function renderParamsPanel(fields: string[], defaults: Record<string, string | number> = {}): string {
  if (fields.length === 0) {
    return `<p class="empty">This method takes no parameters.</p>`;
  }
  const inputs = fields
    .map((field) => {
      const value = defaults[field] !== undefined ? String(defaults[field]) : "";
      return (
        `<label class="param">` +
        `<span>${escapeHtml(field)}</span>` +
        `<input name="${escapeHtml(field)}" value="${escapeHtml(value)}">` +
        `</label>`
      );
    })
    .join("");
  return `<div class="params-panel">${inputs}</div>`;
}

export function renderMethodOptions(methods: MethodInfo[], selected = ""): string {
  return methods
    .map((m) => {
      const sel = m.method === selected ? " selected" : "";
      return `<option value="${escapeHtml(m.method)}"${sel}>${escapeHtml(m.name)} [${m.queue_class}]</option>`;
    })
    .join("");
}

export function renderErrorBanner(message: string): string {
  return `<div class="banner banner-error">${escapeHtml(message)}</div>`;
}

export function renderStaleNotice(stale: boolean): string {
  return stale ? `<div class="banner banner-warn">Connection lost; showing the last known state.</div>` : "";
}
