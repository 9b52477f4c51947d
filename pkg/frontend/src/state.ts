/** Pure view-state transitions. The server is the source of truth; every
 * transition rebuilds from API payloads so the client stays stateless. */

import type { TrajectoryDetail, TrajectorySummary } from "./api.js";

export const MAX_SELECTED = 5;

export interface AppState {
  view: "list" | "review";
  trajectories: TrajectorySummary[];
  detail: TrajectoryDetail | null;
  selected: Set<number>; // candidate indices
  submitting: boolean;
  banner: string | null; // whole-app failure (API unreachable)
  notice: string | null; // inline validation message from a rejected submit
  saved: boolean;
}

export function initialState(): AppState {
  return {
    view: "list",
    trajectories: [],
    detail: null,
    selected: new Set(),
    submitting: false,
    banner: null,
    notice: null,
    saved: false,
  };
}

export function showList(state: AppState, trajectories: TrajectorySummary[]): AppState {
  return {
    ...state,
    view: "list",
    trajectories,
    detail: null,
    selected: new Set(),
    banner: null,
    notice: null,
    saved: false,
  };
}

/** Enter review; seed the checkboxes from the stored curation, if any. */
export function showReview(state: AppState, detail: TrajectoryDetail): AppState {
  const selected = new Set<number>();
  if (detail.curation) {
    const byText = new Map(detail.candidates.map((c) => [c.text, c.index]));
    for (const text of detail.curation.selected) {
      const index = byText.get(text);
      if (index !== undefined) selected.add(index);
    }
  }
  return { ...state, view: "review", detail, selected, banner: null, notice: null, saved: false };
}

export function toggleCandidate(state: AppState, index: number): AppState {
  if (!state.detail || !state.detail.candidates.some((c) => c.index === index)) {
    return state;
  }
  const selected = new Set(state.selected);
  if (selected.has(index)) {
    selected.delete(index);
  } else {
    selected.add(index);
  }
  return { ...state, selected, notice: null, saved: false };
}

export function canSubmit(state: AppState): boolean {
  return (
    state.view === "review" &&
    !state.submitting &&
    state.selected.size >= 1 &&
    state.selected.size <= MAX_SELECTED
  );
}

/** Selected candidate texts in index order; never invents text. */
export function selectedTexts(state: AppState): string[] {
  if (!state.detail) return [];
  return state.detail.candidates.filter((c) => state.selected.has(c.index)).map((c) => c.text);
}

export function withSubmitting(state: AppState, submitting: boolean): AppState {
  return { ...state, submitting };
}

export function withBanner(state: AppState, banner: string): AppState {
  return { ...state, banner, submitting: false };
}

export function withNotice(state: AppState, notice: string): AppState {
  return { ...state, notice, submitting: false };
}

export function markSaved(state: AppState, detail: TrajectoryDetail): AppState {
  return { ...showReview(state, detail), saved: true };
}

export function curatedCount(state: AppState): number {
  return state.trajectories.filter((t) => t.curated).length;
}
