"""HTTP service over the store, the simulator's df report, and a live tail.

All routes live under /api/v1 and answer with a versioned media type.
Handlers are stateless; they read the store's committed state. Workload
triggers run on a background thread and serialize onto the simulator's
single-writer lock.
"""

from __future__ import annotations

import asyncio
import itertools
import json
import re
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse, PlainTextResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles

from . import simfs as simfs_mod
from .errors import (
    BadCursor,
    BadSpec,
    ChauditError,
    FsError,
    IoError,
    MalformedRecord,
    NoEnt,
    ScriptParse,
    StoreUnavailable,
    UnknownCollection,
    UnknownType,
)
from .model import Fid
from .simfs import SimFs
from .store import QuerySpec, Store, encode_cursor

MEDIA_TYPE = "application/vnd.chaudit.v1+json"


class ApiResponse(JSONResponse):
    media_type = MEDIA_TYPE


class SimDisabled(ChauditError):
    pass


@dataclass
class ApiConfig:
    store_dir: Path
    host: str = "127.0.0.1"
    port: int = 8080
    sim_attached: bool = True
    static_dir: Optional[Path] = None

    def __post_init__(self):
        if not (1 <= self.port <= 65535):
            raise ValueError(f"port out of range: {self.port}")


_STATUS = {
    BadSpec: 400,
    BadCursor: 400,
    ScriptParse: 400,
    MalformedRecord: 400,
    UnknownType: 400,
    SimDisabled: 403,
    UnknownCollection: 404,
    NoEnt: 404,
    FsError: 400,
    StoreUnavailable: 503,
    IoError: 500,
}


def _error_response(exc: Exception) -> ApiResponse:
    status = 500
    for klass, code in _STATUS.items():
        if isinstance(exc, klass):
            status = code
            break
    return ApiResponse(
        status_code=status,
        content={"code": type(exc).__name__, "message": str(exc)},
    )


def parse_rfc3339_ns(text: str) -> int:
    # the fraction is handled by hand: RFC 3339 allows up to nanoseconds,
    # datetime only carries microseconds
    t = text.replace("Z", "+00:00")
    frac_ns = 0
    m = re.match(r"^([^.]*)\.([0-9]{1,9})(.*)$", t, re.ASCII)
    if m:
        t = m.group(1) + m.group(3)
        frac_ns = int(m.group(2).ljust(9, "0"))
    try:
        dt = datetime.fromisoformat(t)
    except ValueError:
        raise BadSpec(f"not an RFC 3339 timestamp: {text!r}") from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp()) * 1_000_000_000 + frac_ns


def _build_spec(
    device=None, types=None, uid=None, gid=None, fid=None, nid=None,
    name_contains=None, from_=None, to=None, limit=100, cursor=None,
) -> QuerySpec:
    return QuerySpec(
        device=device,
        from_ts=parse_rfc3339_ns(from_) if from_ else None,
        to_ts=parse_rfc3339_ns(to) if to else None,
        types=frozenset(types) if types else None,
        uid=uid,
        gid=gid,
        fid=fid,
        nid=nid,
        name_contains=name_contains,
        limit=limit,
        cursor=cursor,
    )


def create_app(store: Store, sim: SimFs = None,
               static_dir: Path = None,
               stream_poll_secs: float = 0.2,
               stream_heartbeat_secs: float = 10.0) -> FastAPI:
    app = FastAPI(title="chaudit", default_response_class=ApiResponse)
    runs: dict[str, dict] = {}
    run_ids = itertools.count(1)

    @app.exception_handler(ChauditError)
    async def chaudit_error_handler(request: Request, exc: ChauditError):
        return _error_response(exc)

    @app.exception_handler(ValueError)
    async def value_error_handler(request: Request, exc: ValueError):
        return _error_response(BadSpec(str(exc)))

    def require_sim() -> SimFs:
        if sim is None:
            raise SimDisabled("simulator endpoints are not enabled")
        return sim

    # -- store surface ---------------------------------------------------

    @app.get("/api/v1/devices")
    def devices():
        return {"devices": store.devices()}

    @app.get("/api/v1/events")
    def events(
        device: Optional[str] = None,
        type: Optional[list[str]] = Query(None),
        uid: Optional[int] = None,
        gid: Optional[int] = None,
        fid: Optional[str] = None,
        nid: Optional[str] = None,
        name_contains: Optional[str] = None,
        from_: Optional[str] = Query(None, alias="from"),
        to: Optional[str] = None,
        limit: int = 100,
        cursor: Optional[str] = None,
    ):
        spec = _build_spec(device, type, uid, gid, fid, nid, name_contains,
                           from_, to, limit, cursor)
        page = store.query(spec)
        return {
            "events": [e.to_dict() for e in page.events],
            "next_cursor": page.next_cursor,
        }

    @app.get("/api/v1/events/stream")
    async def events_stream(
        request: Request,
        device: Optional[str] = None,
        type: Optional[list[str]] = Query(None),
    ):
        types = frozenset(type) if type else None
        if types:
            QuerySpec(types=types).validate()
        cursor = None
        last_id = request.headers.get("last-event-id")
        if last_id:
            dev, _, idx = last_id.rpartition(":")
            if not dev or not idx.isdigit():
                raise BadSpec(f"bad Last-Event-Id: {last_id!r}")
            cursor = encode_cursor(dev, int(idx))

        async def gen():
            nonlocal cursor
            idle = 0.0
            while True:
                if await request.is_disconnected():
                    return
                page = store.query(
                    QuerySpec(device=device, types=types, limit=500,
                              cursor=cursor)
                )
                if page.events:
                    idle = 0.0
                    for ev in page.events:
                        payload = json.dumps(ev.to_dict(),
                                             separators=(",", ":"))
                        yield (
                            f"id: {ev.device}:{ev.index}\n"
                            f"event: audit\ndata: {payload}\n\n"
                        )
                    cursor = encode_cursor(*page.events[-1].key())
                else:
                    idle += stream_poll_secs
                    if idle >= stream_heartbeat_secs:
                        idle = 0.0
                        yield ": heartbeat\n\n"
                    await asyncio.sleep(stream_poll_secs)

        return StreamingResponse(gen(), media_type="text/event-stream")

    @app.get("/api/v1/events/{device}/{index}")
    def event_by_key(device: str, index: int):
        page = store.query(QuerySpec(device=device, limit=1,
                                     cursor=encode_cursor(device, index - 1)))
        if not page.events or page.events[0].index != index:
            raise UnknownCollection(f"no event ({device},{index})")
        return page.events[0].to_dict()

    @app.get("/api/v1/trail/{fid}")
    def trail(fid: str):
        canonical = str(Fid.parse(fid))  # 400 via ValueError handler
        return {"fid": canonical,
                "events": [e.to_dict() for e in store.trail(canonical)]}

    @app.get("/api/v1/stats/counts")
    def counts(
        by: str,
        device: Optional[str] = None,
        type: Optional[list[str]] = Query(None),
        uid: Optional[int] = None,
        from_: Optional[str] = Query(None, alias="from"),
        to: Optional[str] = None,
    ):
        spec = _build_spec(device, type, uid, from_=from_, to=to,
                           limit=10_000)
        result = store.counts_by(by, spec)
        return {"by": by, "counts": {str(k): v for k, v in result.items()}}

    @app.get("/api/v1/stats/timeline")
    def timeline(
        bucket: int,
        device: Optional[str] = None,
        type: Optional[list[str]] = Query(None),
        from_: Optional[str] = Query(None, alias="from"),
        to: Optional[str] = None,
    ):
        spec = _build_spec(device, type, from_=from_, to=to, limit=10_000)
        return {
            "bucket_seconds": bucket,
            "buckets": [
                {"start": s, "count": c}
                for s, c in store.timeline(spec, bucket)
            ],
        }

    @app.get("/api/v1/anomalies/denied-opens")
    def denied_opens(
        device: Optional[str] = None,
        from_: Optional[str] = Query(None, alias="from"),
        to: Optional[str] = None,
    ):
        spec = _build_spec(device, from_=from_, to=to, limit=10_000)
        return {"denied_opens": store.denied_open_report(spec)}

    @app.get("/api/v1/chain/verify")
    def chain_verify(device: str):
        res = store.verify_chain(device)
        return {"device": device, "ok": res.ok,
                "first_bad_index": res.first_bad_index}

    # -- simulator surface -------------------------------------------------

    @app.get("/api/v1/df")
    def df(format: str = "json"):
        report = require_sim().df()
        if format == "text":
            return PlainTextResponse(report.render_text() + "\n")
        if format != "json":
            raise BadSpec(f"unknown format: {format!r}")
        return report.to_dict()

    @app.post("/api/v1/sim/workload")
    def trigger_workload(body: dict):
        fs = require_sim()
        script = body.get("script")
        if body.get("name"):
            wl = Path(__file__).parent / "workloads" / body["name"]
            if not wl.exists():
                raise NoEnt(f"no bundled workload: {body['name']}")
            script = wl.read_text()
        if not script:
            raise BadSpec("body requires 'script' or 'name'")
        simfs_mod.parse_workload(script)  # reject bad scripts before accept
        run_id = f"run-{next(run_ids)}"
        runs[run_id] = {"run_id": run_id, "status": "running", "op_count": 0}

        def execute():
            try:
                n = fs.run_workload(script)
                runs[run_id].update(status="done", op_count=n)
            except Exception as e:
                runs[run_id].update(status="error", error=str(e))

        threading.Thread(target=execute, daemon=True).start()
        return ApiResponse(status_code=202,
                           content={"accepted": True, "run_id": run_id})

    @app.get("/api/v1/sim/workload/{run_id}")
    def workload_status(run_id: str):
        require_sim()
        if run_id not in runs:
            raise UnknownCollection(f"no such run: {run_id}")
        return runs[run_id]

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=static_dir, html=True),
                  name="dashboard")

    return app


def serve(cfg: ApiConfig, store: Store = None, sim: SimFs = None) -> None:
    """Blocking server entry point."""
    import uvicorn

    store = store or Store(cfg.store_dir)
    app = create_app(
        store,
        sim=sim if cfg.sim_attached else None,
        static_dir=cfg.static_dir,
    )
    uvicorn.run(app, host=cfg.host, port=cfg.port, log_level="warning")
