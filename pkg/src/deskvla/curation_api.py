"""Local HTTP service hosting the manual-curation workflow.

Serves trajectory summaries, keyframe images, and candidate instruction
sets; accepts curation submissions and persists them through the
InstructionStore. Optionally hosts a static UI bundle at the root.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .instructions import N_CANDIDATES, CuratedSet, InstructionStore, keyframe_indices, utc_timestamp

log = logging.getLogger(__name__)


class CurationRequest(BaseModel):
    selected: list[str] = Field(min_length=1, max_length=N_CANDIDATES)
    curator: str = "ui"


def _manifest_entries(dataset_root: Path) -> dict[str, dict]:
    manifest_path = dataset_root / "manifest.json"
    if not manifest_path.exists():
        raise ValueError("no manifest")
    manifest = json.loads(manifest_path.read_text())
    return {e["id"]: e for e in manifest["trajectories"]}


def create_app(store: InstructionStore, dataset_root: str | Path,
               ui_dist: str | Path | None = None) -> FastAPI:
    dataset_root = Path(dataset_root)
    entries = _manifest_entries(dataset_root)
    app = FastAPI(title="curation api")

    def entry_or_404(trajectory_id: str) -> dict:
        entry = entries.get(trajectory_id)
        if entry is None:
            raise HTTPException(status_code=404, detail=f"unknown trajectory {trajectory_id}")
        return entry

    @app.get("/api/trajectories")
    def list_trajectories():
        summaries = []
        for tid in store.candidate_ids():
            entry = entries.get(tid, {})
            summaries.append({
                "trajectory_id": tid,
                "curated": store.is_curated(tid),
                "steps": entry.get("steps", 0),
                "metadata": entry.get("metadata", {}),
            })
        return summaries

    @app.get("/api/trajectories/{trajectory_id}")
    def trajectory_detail(trajectory_id: str):
        entry = entry_or_404(trajectory_id)
        try:
            candidates = store.load_candidates(trajectory_id)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        keyframes = [
            {"index": k, "url": f"/api/trajectories/{trajectory_id}/frames/{k}"}
            for k in keyframe_indices(entry["steps"])
        ]
        curation = None
        if store.is_curated(trajectory_id):
            curation = store.load_curation(trajectory_id).to_payload()
        return {
            "trajectory_id": trajectory_id,
            "metadata": entry.get("metadata", {}),
            "keyframes": keyframes,
            "candidates": candidates.to_payload()["candidates"],
            "curation": curation,
        }

    @app.get("/api/trajectories/{trajectory_id}/frames/{step}")
    def frame_image(trajectory_id: str, step: int):
        entry_or_404(trajectory_id)
        path = dataset_root / trajectory_id / "imgs" / f"{step}.png"
        if not path.exists():
            raise HTTPException(status_code=404, detail=f"no frame {step}")
        return Response(content=path.read_bytes(), media_type="image/png")

    @app.post("/api/trajectories/{trajectory_id}/curation")
    def submit_curation(trajectory_id: str, request: CurationRequest):
        entry_or_404(trajectory_id)
        try:
            curated = CuratedSet(
                trajectory_id=trajectory_id,
                selected=tuple(request.selected),
                curator=request.curator,
                timestamp=utc_timestamp(),
            )
            store.save_curation(curated)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return curated.to_payload()

    if ui_dist is not None and Path(ui_dist).exists():
        app.mount("/", StaticFiles(directory=str(ui_dist), html=True), name="ui")

    return app


def serve(store: InstructionStore, dataset_root: str | Path, host: str = "127.0.0.1",
          port: int = 8712, ui_dist: str | Path | None = None) -> None:
    """Run the curation API until interrupted."""
    import uvicorn

    app = create_app(store, dataset_root, ui_dist=ui_dist)
    log.info("curation api on http://%s:%d (ui %s)", host, port,
             "mounted" if ui_dist else "absent")
    uvicorn.run(app, host=host, port=port, log_level="warning")
