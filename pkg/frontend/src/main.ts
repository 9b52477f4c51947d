/** Bootstrap: wires API calls, state transitions, and DOM events together.
 * Exported as boot() so tests can drive the full loop against a fake fetch. */

import {
  ApiError,
  getTrajectory,
  listTrajectories,
  submitCuration,
  type FetchLike,
} from "./api.js";
import { render } from "./render.js";
import {
  initialState,
  markSaved,
  selectedTexts,
  showList,
  showReview,
  toggleCandidate,
  withBanner,
  withNotice,
  withSubmitting,
  type AppState,
} from "./state.js";

export interface UiHandle {
  state(): AppState;
  refresh(): Promise<void>;
  open(id: string): Promise<void>;
  toggle(index: number): void;
  submit(): Promise<void>;
  back(): Promise<void>;
}

export function boot(root: HTMLElement, fetchFn: FetchLike = fetch): UiHandle {
  let state = initialState();

  function paint(next: AppState): void {
    state = next;
    root.innerHTML = render(state);
  }

  async function refresh(): Promise<void> {
    try {
      paint(showList(state, await listTrajectories(fetchFn)));
    } catch (err) {
      paint(withBanner(state, err instanceof ApiError ? err.message : String(err)));
    }
  }

  async function open(id: string): Promise<void> {
    try {
      paint(showReview(state, await getTrajectory(id, fetchFn)));
    } catch (err) {
      paint(withBanner(state, err instanceof ApiError ? err.message : String(err)));
    }
  }

  function toggle(index: number): void {
    paint(toggleCandidate(state, index));
  }

  async function submit(): Promise<void> {
    const detail = state.detail;
    if (!detail) return;
    paint(withSubmitting(state, true));
    try {
      await submitCuration(detail.trajectory_id, selectedTexts(state), fetchFn);
      // Re-fetch so the confirmation reflects what the server stored.
      paint(markSaved(withSubmitting(state, false), await getTrajectory(detail.trajectory_id, fetchFn)));
    } catch (err) {
      if (err instanceof ApiError && err.status > 0) {
        paint(withNotice(state, err.message));
      } else {
        paint(withBanner(state, err instanceof ApiError ? err.message : String(err)));
      }
    }
  }

  root.addEventListener("click", (ev) => {
    const target = (ev.target as HTMLElement).closest<HTMLElement>("[data-action]");
    if (!target) return;
    const action = target.dataset["action"];
    if (action === "open" && target.dataset["id"]) {
      void open(target.dataset["id"]);
    } else if (action === "back" || action === "retry") {
      void refresh();
    } else if (action === "submit") {
      void submit();
    }
  });

  // Checkbox toggles arrive as change events for both mouse and keyboard.
  root.addEventListener("change", (ev) => {
    const target = ev.target as HTMLElement;
    if (target.dataset["action"] === "toggle" && target.dataset["index"]) {
      toggle(Number(target.dataset["index"]));
    }
  });

  void refresh();
  return { state: () => state, refresh, open, toggle, submit, back: refresh };
}

const appRoot = typeof document !== "undefined" ? document.getElementById("app") : null;
if (appRoot) {
  boot(appRoot);
}
