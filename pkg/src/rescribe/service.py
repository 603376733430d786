"""Read-mostly HTTP review service over a directory of session bundles.

GET endpoints are side-effect free; the annotation log is append-only.
Edits never mutate records in place: a status change appends a successor
record referencing its predecessor, and current state is reconstructed
deterministically by dropping superseded records.
"""

from __future__ import annotations

import json
import threading
import uuid
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query, Request, Response
from fastapi.responses import JSONResponse, PlainTextResponse

from .annotate import Annotation, export_scatter, sort_annotations
from .artifacts import import_artifact_map
from .errors import IndexOutOfRange, RescribeError, SchemaViolation
from .pipeline import load_matches
from .session import SessionBundle, load_bundle
from .util import sha256_hex


class _SessionStore:
    def __init__(self, root: Path):
        self.root = Path(root)
        self._bundles: dict[str, SessionBundle] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

    def session_dirs(self) -> dict[str, Path]:
        out = {}
        for child in sorted(self.root.iterdir()):
            if (child / "manifest.json").exists():
                sid = json.loads((child / "manifest.json").read_text("utf-8"))["session_id"]
                out[sid] = child
        return out

    def bundle(self, sid: str) -> SessionBundle:
        with self._registry_lock:
            if sid not in self._bundles:
                dirs = self.session_dirs()
                if sid not in dirs:
                    raise HTTPException(status_code=404, detail=f"unknown session {sid!r}")
                self._bundles[sid] = load_bundle(dirs[sid])
            return self._bundles[sid]

    def lock(self, sid: str) -> threading.Lock:
        with self._registry_lock:
            return self._locks.setdefault(sid, threading.Lock())


def _read_log(bundle: SessionBundle) -> list[dict]:
    path = bundle.root / "annotations.jsonl"
    if not path.exists():
        return []
    return [json.loads(line) for line in path.read_text("utf-8").splitlines() if line.strip()]


def _current_state(records: list[dict]) -> list[dict]:
    superseded = {r["predecessor"] for r in records if r.get("predecessor")}
    return [r for r in records if r["id"] not in superseded]


def _append_record(bundle: SessionBundle, record: dict) -> None:
    path = bundle.root / "annotations.jsonl"
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, separators=(",", ":"), ensure_ascii=False) + "\n")


def create_app(root: str | Path) -> FastAPI:
    store = _SessionStore(Path(root))
    app = FastAPI(title="rescribe review service")

    @app.exception_handler(RescribeError)
    async def _domain_error(request: Request, exc: RescribeError):
        return JSONResponse(status_code=422, content={"error": type(exc).__name__, "detail": str(exc)})

    @app.get("/sessions")
    def list_sessions():
        out = []
        for sid, path in store.session_dirs().items():
            out.append(json.loads((path / "manifest.json").read_text("utf-8")))
        return out

    @app.get("/sessions/{sid}")
    def get_session(sid: str):
        bundle = store.bundle(sid)
        return {
            "manifest": json.loads((bundle.root / "manifest.json").read_text("utf-8")),
            "frames": [{"index": f.index, "t": f.t, "kind": f.kind} for f in bundle.frames],
        }

    @app.get("/sessions/{sid}/frames/{index}.png")
    def get_frame(sid: str, index: int, request: Request):
        bundle = store.bundle(sid)
        try:
            png = bundle.reconstruct_frame(index).to_png_bytes()
        except IndexOutOfRange as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        etag = f'"{sha256_hex(png)[:32]}"'
        if request.headers.get("if-none-match") == etag:
            return Response(status_code=304, headers={"ETag": etag})
        return Response(content=png, media_type="image/png", headers={"ETag": etag})

    @app.get("/sessions/{sid}/events")
    def get_events(
        sid: str,
        from_: int | None = Query(default=None, alias="from"),
        to: int | None = None,
        type: str | None = None,  # noqa: A002 - query name fixed by the API
    ):
        bundle = store.bundle(sid)
        out = []
        for line in (bundle.root / "events.jsonl").read_text("utf-8").splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            if from_ is not None and obj["t"] < from_:
                continue
            if to is not None and obj["t"] > to:
                continue
            if type is not None and obj["type"] != type:
                continue
            out.append(obj)
        return out

    @app.get("/sessions/{sid}/annotations")
    def get_annotations(sid: str, kind: str | None = None, status: str | None = None):
        bundle = store.bundle(sid)
        records = _current_state(_read_log(bundle))
        if kind is not None:
            records = [r for r in records if r["kind"] == kind]
        if status is not None:
            records = [r for r in records if r["status"] == status]
        records.sort(key=lambda r: (r["t_start"], r["id"]))
        return records

    @app.post("/sessions/{sid}/annotations", status_code=201)
    def post_annotation(sid: str, body: dict):
        bundle = store.bundle(sid)
        author = body.get("author") or "anonymous"
        ann = Annotation(
            id=f"h-{uuid.uuid4().hex[:12]}",
            session_id=sid,
            kind=body.get("kind", ""),
            t_start=body.get("t_start", -1),
            t_end=body.get("t_end"),
            payload=body.get("payload", {}),
            status="manual",
            provenance={"human": author},
        )
        try:
            ann.validate()
            if not isinstance(ann.t_start, int) or ann.t_start < 0:
                raise SchemaViolation("t_start must be a non-negative integer")
        except SchemaViolation as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        record = json.loads(ann.to_json())
        with store.lock(sid):
            _append_record(bundle, record)
        return record

    @app.patch("/sessions/{sid}/annotations/{aid}")
    def patch_annotation(sid: str, aid: str, body: dict):
        bundle = store.bundle(sid)
        new_status = body.get("status")
        if new_status not in ("suggested", "confirmed", "rejected", "manual"):
            raise HTTPException(status_code=422, detail=f"invalid status {new_status!r}")
        author = body.get("author") or "anonymous"
        with store.lock(sid):
            records = _read_log(bundle)
            by_id = {r["id"]: r for r in records}
            if aid not in by_id:
                raise HTTPException(status_code=404, detail=f"unknown annotation {aid!r}")
            superseded = {r["predecessor"] for r in records if r.get("predecessor")}
            if aid in superseded:
                raise HTTPException(
                    status_code=409, detail=f"annotation {aid!r} already superseded; refetch"
                )
            base = dict(by_id[aid])
            base["id"] = f"h-{uuid.uuid4().hex[:12]}"
            base["status"] = new_status
            base["provenance"] = {"human": author}
            base["predecessor"] = aid
            _append_record(bundle, base)
        return base

    @app.get("/sessions/{sid}/scatter.csv")
    def get_scatter(sid: str):
        bundle = store.bundle(sid)
        try:
            samples = load_matches(bundle.root)
        except RescribeError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        amap = import_artifact_map(
            bundle.root / "artifacts" / f"{bundle.manifest.binary_id}.json"
        )
        intervals = [
            Annotation.from_obj(r)
            for r in _current_state(_read_log(bundle))
            if r["kind"] == "FunctionView"
        ]
        return PlainTextResponse(
            export_scatter(samples, sort_annotations(intervals), amap), media_type="text/csv"
        )

    return app


def serve(root: str | Path, bind: str = "127.0.0.1:8077") -> None:
    """Run the review service until interrupted."""
    import uvicorn

    host, _, port = bind.partition(":")
    uvicorn.run(create_app(root), host=host or "127.0.0.1", port=int(port or 8077), log_level="warning")
