/** In-memory stand-in for the curation API, mirroring its routes, payload
 * shapes, validation order, and error bodies. Tests drive the real client
 * and state code against this fetch implementation. */

import type { FetchLike } from "../src/api.js";

export interface FakeTrajectory {
  id: string;
  steps: number;
  metadata: Record<string, string>;
  candidates: string[]; // five texts, candidate indices 1..5
  curation?: string[];
}

interface StoredCuration {
  trajectory_id: string;
  selected: string[];
  curator: string;
  timestamp: string;
}

export interface FakeServer {
  fetch: FetchLike;
  requests: string[];
  curations: Map<string, StoredCuration>;
  trajectories: Map<string, FakeTrajectory>;
  failNextRequest(): void;
}

function json(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

function keyframeIndices(steps: number): number[] {
  return [0, Math.floor((steps - 1) / 2), steps - 1];
}

export function makeFakeServer(data: FakeTrajectory[]): FakeServer {
  const trajectories = new Map(data.map((t) => [t.id, t]));
  const curations = new Map<string, StoredCuration>();
  const requests: string[] = [];
  let failNext = false;
  let clock = 0;

  for (const t of data) {
    if (t.curation) {
      curations.set(t.id, {
        trajectory_id: t.id,
        selected: [...t.curation],
        curator: "seed",
        timestamp: "2026-01-01T00:00:00Z",
      });
    }
  }

  const fetchImpl: FetchLike = async (input, init) => {
    requests.push(`${init?.method ?? "GET"} ${input}`);
    if (failNext) {
      failNext = false;
      throw new TypeError("fetch failed");
    }

    if (input === "/api/trajectories") {
      const summaries = [...trajectories.keys()].sort().map((id) => {
        const t = trajectories.get(id)!;
        return {
          trajectory_id: id,
          curated: curations.has(id),
          steps: t.steps,
          metadata: t.metadata,
        };
      });
      return json(200, summaries);
    }

    const detailMatch = /^\/api\/trajectories\/([^/]+)$/.exec(input);
    if (detailMatch) {
      const id = decodeURIComponent(detailMatch[1]!);
      const t = trajectories.get(id);
      if (!t) return json(404, { detail: `unknown trajectory ${id}` });
      return json(200, {
        trajectory_id: id,
        metadata: t.metadata,
        keyframes: keyframeIndices(t.steps).map((k) => ({
          index: k,
          url: `/api/trajectories/${id}/frames/${k}`,
        })),
        candidates: t.candidates.map((text, i) => ({ index: i + 1, text })),
        curation: curations.get(id) ?? null,
      });
    }

    const postMatch = /^\/api\/trajectories\/([^/]+)\/curation$/.exec(input);
    if (postMatch && init?.method === "POST") {
      const id = decodeURIComponent(postMatch[1]!);
      const body = JSON.parse(String(init.body)) as { selected?: string[]; curator?: string };
      const selected = body.selected ?? [];
      // Request-model validation runs before the handler, like the server.
      if (selected.length < 1 || selected.length > 5) {
        return json(422, { detail: [{ loc: ["body", "selected"], msg: "length out of range" }] });
      }
      const t = trajectories.get(id);
      if (!t) return json(404, { detail: `unknown trajectory ${id}` });
      if (!selected.every((s) => t.candidates.includes(s))) {
        return json(400, { detail: "selected instructions not among candidates" });
      }
      clock += 1;
      const stored = {
        trajectory_id: id,
        selected: [...selected],
        curator: body.curator ?? "ui",
        timestamp: `2026-01-01T00:00:${String(clock).padStart(2, "0")}Z`,
      };
      curations.set(id, stored);
      return json(200, stored);
    }

    return json(404, { detail: "no route" });
  };

  return {
    fetch: fetchImpl,
    requests,
    curations,
    trajectories,
    failNextRequest: () => {
      failNext = true;
    },
  };
}

export function threeTrajectories(): FakeTrajectory[] {
  const texts = (id: string) =>
    [1, 2, 3, 4, 5].map((i) => `move the red block to the left edge, phrasing ${i} for ${id}.`);
  return [
    { id: "traj-000", steps: 7, metadata: { object: "red block", goal: "left edge" }, candidates: texts("traj-000") },
    { id: "traj-001", steps: 9, metadata: { object: "blue cup", goal: "center" }, candidates: texts("traj-001") },
    {
      id: "traj-002",
      steps: 5,
      metadata: { object: "green ball", goal: "back right corner" },
      candidates: texts("traj-002"),
      curation: [texts("traj-002")[0]!, texts("traj-002")[3]!],
    },
  ];
}
