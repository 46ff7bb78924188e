"""JSON-over-HTTP service for the painter UI.

State is plain files under a state root (frames, edits, results), one
directory per project. Propagation runs on a background worker with a
single-flight lock per project; progress is polled via /status and a
cancel flag is honored between frames.
"""

from __future__ import annotations

import base64
import json
import threading
import uuid
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles

from . import pngio
from .autodiff import ParamStore, load_params
from .matchnet import ModelConfig, propagate_clip
from .matchnet.pipeline import identity_result, reference_regions_from_coloring
from .metrics import evaluate_clip
from .raster import (
    RgbRaster,
    SegmentMap,
    extract_segments,
    fill_segments,
    merge_color_lines_structural,
    quantize_lines,
)

BACKGROUND = (255, 255, 255)


class Project:
    def __init__(self, root: Path, project_id: str):
        self.id = project_id
        self.root = root / project_id
        self.lock = threading.Lock()
        self.status = {"state": "idle", "progress": 0, "total": 0, "error": None}
        self.cancel_flag = threading.Event()
        self._segmaps: dict[int, SegmentMap] = {}
        self._worker: threading.Thread | None = None

    # -- persistence ---------------------------------------------------------

    def create(self, frames: list[bytes], gt: list[bytes] | None):
        (self.root / "frames").mkdir(parents=True)
        for i, data in enumerate(frames):
            (self.root / "frames" / f"{i:03d}.png").write_bytes(data)
        if gt:
            (self.root / "gt").mkdir()
            for i, data in enumerate(gt):
                (self.root / "gt" / f"{i:03d}.png").write_bytes(data)
        (self.root / "edits.json").write_text("{}")
        self._write_manifest(len(frames), bool(gt))

    def _write_manifest(self, n_frames: int, has_gt: bool):
        (self.root / "manifest.json").write_text(
            json.dumps({"n_frames": n_frames, "has_gt": has_gt})
        )

    @property
    def manifest(self) -> dict:
        return json.loads((self.root / "manifest.json").read_text())

    @property
    def n_frames(self) -> int:
        return self.manifest["n_frames"]

    def frame_lines(self, k: int):
        frame = pngio.load_rgb(self.root / "frames" / f"{k:03d}.png")
        return quantize_lines(frame)

    def segmap(self, k: int) -> SegmentMap:
        if k not in self._segmaps:
            self._segmaps[k] = merge_color_lines_structural(
                extract_segments(self.frame_lines(k))
            )
        return self._segmaps[k]

    def edits(self) -> dict[int, str]:
        raw = json.loads((self.root / "edits.json").read_text())
        return {int(k): v for k, v in raw.items()}

    def apply_edits(self, edits: dict[int, str]):
        current = self.edits()
        current.update(edits)
        (self.root / "edits.json").write_text(
            json.dumps({str(k): v for k, v in current.items()})
        )
        return current

    def reference_coloring(self) -> RgbRaster:
        seg = self.segmap(0)
        colors = np.empty((seg.n_segments, 3), dtype=np.uint8)
        colors[...] = BACKGROUND
        for sid, hexcolor in self.edits().items():
            if 0 <= sid < seg.n_segments:
                colors[sid] = pngio.hex_to_color(hexcolor)
        return fill_segments(seg, colors)

    def result_paths(self, k: int) -> tuple[Path, Path]:
        return (
            self.root / "results" / f"{k:03d}.png",
            self.root / "results" / f"{k:03d}.json",
        )

    # -- propagation ---------------------------------------------------------

    def start_propagation(self, cfg, store, mode, threshold, backend):
        if not self.lock.acquire(blocking=False):
            raise Busy()
        self.cancel_flag.clear()
        self.status = {
            "state": "running",
            "progress": 0,
            "total": self.n_frames,
            "error": None,
        }

        def work():
            try:
                self._propagate(cfg, store, mode, threshold, backend)
                if self.status["state"] == "running":
                    self.status["state"] = "done"
            except Exception as exc:  # surfaced via /status
                self.status["state"] = "error"
                self.status["error"] = str(exc)
            finally:
                self.lock.release()

        self._worker = threading.Thread(target=work, daemon=True)
        self._worker.start()

    def _propagate(self, cfg, store, mode, threshold, backend):
        (self.root / "results").mkdir(exist_ok=True)
        ref_colored = self.reference_coloring()
        rng = np.random.default_rng(0)

        seg0 = self.segmap(0)
        lab = reference_regions_from_coloring(seg0, ref_colored)
        result0 = identity_result(seg0, lab, ref_colored)
        self._save_result(0, ref_colored, result0)
        self.status["progress"] = 1

        ref_state = (seg0, lab, self.frame_lines(0))
        from .matchnet.hu import hu_match
        from .matchnet.pipeline import labeling_from_match, match_pair

        thr = cfg.match_threshold if threshold is None else threshold
        for t in range(1, self.n_frames):
            if self.cancel_flag.is_set():
                self.status["state"] = "cancelled"
                return
            ref_segmap, ref_labeling, ref_lines = ref_state
            tgt_lines = self.frame_lines(t)
            tgt_segmap = self.segmap(t)
            if backend == "hu":
                result = hu_match((ref_segmap, ref_labeling), tgt_segmap, threshold=thr)
            else:
                result, _, tgt_segmap = match_pair(
                    ref_segmap, ref_labeling, ref_lines, tgt_lines,
                    store, cfg, rng, threshold=thr, tgt_segmap=tgt_segmap,
                )
            self._save_result(t, result.raster, result)
            if mode == "chain":
                next_lab = labeling_from_match(tgt_segmap, result, ref_labeling)
                ref_state = (tgt_segmap, next_lab, tgt_lines)
            self.status["progress"] = t + 1

    def _save_result(self, k: int, raster: RgbRaster, result):
        (self.root / "results").mkdir(exist_ok=True)
        png, meta = self.result_paths(k)
        png.write_bytes(pngio.rgb_to_png_bytes(raster))
        meta.write_text(json.dumps(result.to_json()))


class Busy(Exception):
    pass


def create_app(
    state_root: str | Path,
    checkpoint: str | Path | None = None,
    cfg: ModelConfig | None = None,
) -> FastAPI:
    root = Path(state_root)
    root.mkdir(parents=True, exist_ok=True)
    cfg = cfg or ModelConfig.desk()
    store: ParamStore | None = None
    if checkpoint is not None:
        store, _ = load_params(checkpoint)

    app = FastAPI(title="inkprop")
    projects: dict[str, Project] = {}
    for existing in sorted(root.iterdir()) if root.exists() else []:
        if (existing / "manifest.json").exists():
            projects[existing.name] = Project(root, existing.name)
    app.state.projects = projects

    def get_project(pid: str) -> Project:
        if pid not in projects:
            raise HTTPException(404, f"unknown project {pid}")
        return projects[pid]

    def decode_frames(items, what: str) -> list[bytes]:
        out = []
        for i, b64 in enumerate(items):
            try:
                data = base64.b64decode(b64)
                pngio.rgb_from_png_bytes(data)
            except Exception:
                raise HTTPException(400, f"{what}[{i}] is not a decodable PNG")
            out.append(data)
        return out

    @app.post("/projects", status_code=201)
    async def create_project(request: Request):
        body = await _json_body(request)
        frames = body.get("frames")
        if not isinstance(frames, list) or not frames:
            raise HTTPException(400, "body needs a non-empty 'frames' list")
        data = decode_frames(frames, "frames")
        gt = None
        if body.get("gt_frames"):
            gt = decode_frames(body["gt_frames"], "gt_frames")
            if len(gt) != len(data):
                raise HTTPException(400, "gt_frames length must match frames")
        pid = uuid.uuid4().hex[:12]
        project = Project(root, pid)
        project.create(data, gt)
        projects[pid] = project
        return {"id": pid, "n_frames": len(data)}

    @app.get("/projects/{pid}")
    def project_info(pid: str):
        p = get_project(pid)
        return {"id": pid, **p.manifest, "status": p.status}

    @app.get("/projects/{pid}/frames/{k}/segments")
    def segments(pid: str, k: int):
        p = get_project(pid)
        _check_frame(p, k)
        return pngio.segmap_records_json(p.segmap(k))

    @app.get("/projects/{pid}/frames/{k}/segments.png")
    def segments_png(pid: str, k: int):
        p = get_project(pid)
        _check_frame(p, k)
        return Response(
            pngio.segmap_to_png_bytes(p.segmap(k)), media_type="image/png"
        )

    @app.get("/projects/{pid}/frames/{k}/lines.png")
    def lines_png(pid: str, k: int):
        p = get_project(pid)
        _check_frame(p, k)
        return Response(
            (p.root / "frames" / f"{k:03d}.png").read_bytes(),
            media_type="image/png",
        )

    @app.put("/projects/{pid}/frames/0/colors")
    async def put_colors(pid: str, request: Request):
        p = get_project(pid)
        body = await _json_body(request)
        edits = body.get("edits")
        if not isinstance(edits, dict):
            raise HTTPException(400, "body needs an 'edits' object")
        seg = p.segmap(0)
        parsed: dict[int, str] = {}
        for key, value in edits.items():
            try:
                sid = int(key)
                pngio.hex_to_color(value)
            except (ValueError, IndexError):
                raise HTTPException(400, f"bad edit {key!r}: {value!r}")
            if not 0 <= sid < seg.n_segments:
                raise HTTPException(400, f"segment {sid} does not exist")
            parsed[sid] = value.lower()
        current = p.apply_edits(parsed)
        return {
            "applied": len(parsed),
            "colors": {str(k): v for k, v in sorted(current.items())},
        }

    @app.post("/projects/{pid}/propagate", status_code=202)
    async def propagate(pid: str, request: Request):
        p = get_project(pid)
        body = await _json_body(request)
        mode = body.get("mode", "chain")
        backend = body.get("backend", "hu")
        threshold = body.get("threshold")
        if mode not in ("chain", "fixed"):
            raise HTTPException(400, "mode must be 'chain' or 'fixed'")
        if backend not in ("neural", "hu"):
            raise HTTPException(400, "backend must be 'neural' or 'hu'")
        if threshold is not None and not isinstance(threshold, (int, float)):
            raise HTTPException(400, "threshold must be a number")
        if backend == "neural" and store is None:
            raise HTTPException(400, "service started without a checkpoint")
        try:
            p.start_propagation(cfg, store, mode, threshold, backend)
        except Busy:
            raise HTTPException(409, "propagation already running")
        return {"status": "started"}

    @app.post("/projects/{pid}/propagate/cancel")
    def cancel(pid: str):
        p = get_project(pid)
        p.cancel_flag.set()
        return {"status": "cancelling"}

    @app.get("/projects/{pid}/status")
    def status(pid: str):
        return get_project(pid).status

    @app.get("/projects/{pid}/frames/{k}/result")
    def result(pid: str, k: int):
        p = get_project(pid)
        _check_frame(p, k)
        png, meta = _result_payload(p, k)
        return {
            "frame": k,
            "png_base64": base64.b64encode(png).decode(),
            "result": meta,
        }

    @app.get("/projects/{pid}/frames/{k}/result.png")
    def result_png(pid: str, k: int):
        p = get_project(pid)
        _check_frame(p, k)
        png, _ = _result_payload(p, k)
        return Response(png, media_type="image/png")

    def _result_payload(p: Project, k: int):
        png_path, meta_path = p.result_paths(k)
        if png_path.exists():
            return png_path.read_bytes(), json.loads(meta_path.read_text())
        if k == 0:
            # live view of the painter's current reference coloring
            seg = p.segmap(0)
            colored = p.reference_coloring()
            lab = reference_regions_from_coloring(seg, colored)
            res = identity_result(seg, lab, colored)
            return pngio.rgb_to_png_bytes(colored), res.to_json()
        raise HTTPException(404, f"frame {k} has no result yet")

    @app.put("/projects/{pid}/gt")
    async def put_gt(pid: str, request: Request):
        p = get_project(pid)
        body = await _json_body(request)
        frames = body.get("frames")
        if not isinstance(frames, list) or len(frames) != p.n_frames:
            raise HTTPException(400, "need one gt frame per project frame")
        data = decode_frames(frames, "frames")
        (p.root / "gt").mkdir(exist_ok=True)
        for i, blob in enumerate(data):
            (p.root / "gt" / f"{i:03d}.png").write_bytes(blob)
        p._write_manifest(p.n_frames, True)
        return {"n_frames": len(data)}

    @app.get("/projects/{pid}/metrics")
    def metrics(pid: str):
        p = get_project(pid)
        if not p.manifest.get("has_gt"):
            raise HTTPException(404, "no ground truth uploaded")
        preds, gts = [], []
        for k in range(p.n_frames):
            png_path, _ = p.result_paths(k)
            if not png_path.exists():
                raise HTTPException(404, f"frame {k} has no result yet")
            preds.append(pngio.rgb_from_png_bytes(png_path.read_bytes()))
            gts.append(pngio.load_rgb(p.root / "gt" / f"{k:03d}.png"))
        agg, frames = evaluate_clip(preds, gts, background=BACKGROUND)
        return {
            "aggregate": agg.to_json(),
            "frames": [f.to_json() for f in frames],
        }

    def _check_frame(p: Project, k: int):
        if not 0 <= k < p.n_frames:
            raise HTTPException(404, f"frame {k} out of range")

    async def _json_body(request: Request) -> dict:
        try:
            body = await request.json()
        except Exception:
            raise HTTPException(400, "malformed JSON body")
        if not isinstance(body, dict):
            raise HTTPException(400, "body must be a JSON object")
        return body

    ui_dist = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    if ui_dist.exists():
        app.mount("/ui", StaticFiles(directory=ui_dist, html=True), name="ui")

    @app.exception_handler(HTTPException)
    async def http_error(request, exc: HTTPException):
        return JSONResponse({"error": exc.detail}, status_code=exc.status_code)

    return app
