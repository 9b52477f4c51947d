/** HTML rendering from AppState. Interactive elements are native buttons,
 * checkboxes, and labels only, so keyboard operation comes from the browser
 * rather than custom key handlers. Actions are wired by data-action. */

import { canSubmit, curatedCount, type AppState } from "./state.js";

export function escapeHtml(raw: string): string {
  return raw
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

function bannerHtml(state: AppState): string {
  if (!state.banner) return "";
  return `
    <div class="banner" role="alert">
      <span>${escapeHtml(state.banner)}</span>
      <button type="button" data-action="retry">Retry</button>
    </div>`;
}

function listHtml(state: AppState): string {
  const rows = state.trajectories
    .map((t) => {
      const badge = t.curated
        ? `<span class="badge curated">curated</span>`
        : `<span class="badge pending">pending</span>`;
      const object = t.metadata["object"] ?? "";
      const goal = t.metadata["goal"] ?? "";
      const task = object && goal ? `${object} to ${goal}` : "";
      return `
        <li class="row">
          <button type="button" data-action="open" data-id="${escapeHtml(t.trajectory_id)}">
            ${escapeHtml(t.trajectory_id)}
          </button>
          ${badge}
          <span class="steps">${t.steps} steps</span>
          <span class="task">${escapeHtml(task)}</span>
        </li>`;
    })
    .join("");
  return `
    <section>
      <h1>Instruction curation</h1>
      <p class="summary">${curatedCount(state)} of ${state.trajectories.length} trajectories curated</p>
      <ul class="trajectories">${rows}</ul>
    </section>`;
}

function reviewHtml(state: AppState): string {
  const detail = state.detail;
  if (!detail) return "";
  const frames = detail.keyframes
    .map(
      (kf) => `
        <figure>
          <img src="${escapeHtml(kf.url)}" alt="keyframe at step ${kf.index}" width="128" height="128">
          <figcaption>step ${kf.index}</figcaption>
        </figure>`,
    )
    .join("");
  const candidates = detail.candidates
    .map((c) => {
      const checked = state.selected.has(c.index) ? " checked" : "";
      return `
        <li>
          <label>
            <input type="checkbox" data-action="toggle" data-index="${c.index}"${checked}>
            <span class="candidate-text">${escapeHtml(c.text)}</span>
          </label>
        </li>`;
    })
    .join("");
  const notice = state.notice
    ? `<p class="notice" role="status">${escapeHtml(state.notice)}</p>`
    : "";
  const saved = state.saved ? `<p class="saved" role="status">Selection saved.</p>` : "";
  const disabled = canSubmit(state) ? "" : " disabled";
  return `
    <section>
      <button type="button" data-action="back">Back to list</button>
      <h1>${escapeHtml(detail.trajectory_id)}</h1>
      <div class="keyframes">${frames}</div>
      <h2>Candidate instructions</h2>
      <ul class="candidates">${candidates}</ul>
      ${notice}
      ${saved}
      <button type="button" data-action="submit"${disabled}>
        Save selection (${state.selected.size})
      </button>
    </section>`;
}

export function render(state: AppState): string {
  const body = state.view === "list" ? listHtml(state) : reviewHtml(state);
  return `${bannerHtml(state)}${body}`;
}
