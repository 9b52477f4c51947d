/** Typed client for the curation API. Same-origin paths, injectable fetch. */

export interface TrajectorySummary {
  trajectory_id: string;
  curated: boolean;
  steps: number;
  metadata: Record<string, string>;
}

export interface Keyframe {
  index: number;
  url: string;
}

export interface Candidate {
  index: number;
  text: string;
}

export interface Curation {
  trajectory_id: string;
  selected: string[];
  curator: string;
  timestamp: string;
}

export interface TrajectoryDetail {
  trajectory_id: string;
  metadata: Record<string, string>;
  keyframes: Keyframe[];
  candidates: Candidate[];
  curation: Curation | null;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(readonly status: number, detail: string) {
    super(detail);
    this.name = "ApiError";
  }
}

async function request<T>(fetchFn: FetchLike, path: string, init?: RequestInit): Promise<T> {
  let res: Response;
  try {
    res = await fetchFn(path, init);
  } catch {
    // Network failure, server down, CORS: one visible error, no retry loop.
    throw new ApiError(0, "curation API unreachable");
  }
  if (!res.ok) {
    let detail = `request failed with status ${res.status}`;
    try {
      const body: unknown = await res.json();
      if (body && typeof body === "object" && typeof (body as { detail?: unknown }).detail === "string") {
        detail = (body as { detail: string }).detail;
      }
    } catch {
      // keep the generic message
    }
    throw new ApiError(res.status, detail);
  }
  return (await res.json()) as T;
}

export function listTrajectories(fetchFn: FetchLike = fetch): Promise<TrajectorySummary[]> {
  return request(fetchFn, "/api/trajectories");
}

export function getTrajectory(id: string, fetchFn: FetchLike = fetch): Promise<TrajectoryDetail> {
  return request(fetchFn, `/api/trajectories/${encodeURIComponent(id)}`);
}

export function submitCuration(
  id: string,
  selected: string[],
  fetchFn: FetchLike = fetch,
): Promise<Curation> {
  return request(fetchFn, `/api/trajectories/${encodeURIComponent(id)}/curation`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify({ selected, curator: "ui" }),
  });
}
