"""chaudit command-line tool.

One binary with subcommands; long-running commands (collector run, sim serve,
serve-api) host their module's own concurrency. Exit codes: 0 success,
1 operational error, 2 usage error. `--format json` output is field-identical
to the corresponding HTTP API response body; table output is human-oriented
and not contract-stable.
"""

from __future__ import annotations

import json
import sys
import threading
from datetime import datetime, timezone
from pathlib import Path

import click

from .api import ApiConfig, create_app, parse_rfc3339_ns
from .collector import Collector, CollectorConfig
from .errors import ChauditError
from .model import Fid
from .simfs import SimFs
from .store import QuerySpec, Store

EXPECTED_DEMO_COUNTS = {
    "MARK": 2, "CREAT": 100, "OPEN": 100, "MTIME": 100, "CLOSE": 100,
}


def _workload_path(name: str) -> Path:
    return Path(__file__).parent / "workloads" / name


def _fmt_time(ts_ns: int) -> str:
    dt = datetime.fromtimestamp(ts_ns // 10**9, tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S") + f".{ts_ns % 10**9:09d}Z"


def _echo_json(obj) -> None:
    click.echo(json.dumps(obj, sort_keys=True))


def _event_table(events: list[dict]) -> str:
    rows = [("INDEX", "TIME", "TYPE", "FID", "NAME", "UID:GID", "NID", "MODE")]
    for e in events:
        ug = "" if e["uid"] is None else f"{e['uid']}:{e['gid']}"
        rows.append((
            str(e["index"]), _fmt_time(e["ts_utc"]), e["type_name"],
            e["fid"], e["name"] or "", ug, e["nid"] or "",
            e["mode_mask"] or "",
        ))
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "\n".join(
        "  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
        for row in rows
    )


def _build_spec(device, types, uid, gid, fid, nid, name_contains,
                from_, to, limit=100, cursor=None) -> QuerySpec:
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


filter_options = [
    click.option("--device", default=None),
    click.option("--type", "types", multiple=True),
    click.option("--uid", type=int, default=None),
    click.option("--gid", type=int, default=None),
    click.option("--fid", default=None),
    click.option("--nid", default=None),
    click.option("--name-contains", default=None),
    click.option("--from", "from_", default=None,
                 help="RFC 3339 timestamp, inclusive lower bound"),
    click.option("--to", default=None,
                 help="RFC 3339 timestamp, exclusive upper bound"),
]


def with_filters(cmd):
    for opt in reversed(filter_options):
        cmd = opt(cmd)
    return cmd


@click.group()
@click.option("--data-dir", envvar="AUDIT_DATA_DIR", default="./audit-data",
              type=click.Path(path_type=Path), show_default=True,
              help="Store directory (also: AUDIT_DATA_DIR).")
@click.option("--format", "fmt", type=click.Choice(["json", "table"]),
              default="table", show_default=True)
@click.pass_context
def main(ctx, data_dir: Path, fmt: str):
    """Audit pipeline for changelog-equipped file systems."""
    ctx.obj = {"data_dir": data_dir, "fmt": fmt}


def run(ctx_obj, fn) -> None:
    """Execute a command body, mapping module errors to exit code 1."""
    try:
        fn()
    except ChauditError as e:
        click.echo(f"error: {type(e).__name__}: {e}", err=True)
        sys.exit(1)


@main.command()
@click.pass_obj
def demo(obj):
    """Reproduce the reference experiment: 100 file creations, audited."""
    data_dir: Path = obj["data_dir"]
    if data_dir.exists() and any(data_dir.iterdir()):
        raise click.UsageError(f"refusing to run demo in non-empty {data_dir}")

    def body():
        fs = SimFs()
        store = Store(data_dir)
        cfg = CollectorConfig(device=fs.device, store_dir=data_dir)
        with Collector(fs, store, cfg) as col:
            fs.set_mask(fs.device, "ALL")
            fs.run_workload(_workload_path("create100.wl").read_text())
            while col.run_cycle().read:
                pass
        counts = store.counts_by("type", QuerySpec())
        res = store.verify_chain(fs.device)
        summary = {
            "counts": {"by": "type", "counts": counts},
            "chain": {"device": fs.device, "ok": res.ok,
                      "first_bad_index": res.first_bad_index},
        }
        if obj["fmt"] == "json":
            _echo_json(summary)
        else:
            for name, n in sorted(counts.items()):
                click.echo(f"{name:<8}{n:>6}")
            click.echo(f"chain    {'ok' if res.ok else f'BAD at {res.first_bad_index}'}")
        if counts != EXPECTED_DEMO_COUNTS or not res.ok:
            sys.exit(1)

    run(obj, body)


@main.command()
@with_filters
@click.option("--limit", type=int, default=100, show_default=True)
@click.option("--cursor", default=None)
@click.pass_obj
def query(obj, device, types, uid, gid, fid, nid, name_contains, from_, to,
          limit, cursor):
    """List audit events matching the given filters."""
    def body():
        store = Store(obj["data_dir"])
        spec = _build_spec(device, types, uid, gid, fid, nid, name_contains,
                           from_, to, limit, cursor)
        page = store.query(spec)
        events = [e.to_dict() for e in page.events]
        if obj["fmt"] == "json":
            _echo_json({"events": events, "next_cursor": page.next_cursor})
        else:
            click.echo(_event_table(events))
            if page.next_cursor:
                click.echo(f"next cursor: {page.next_cursor}")

    run(obj, body)


@main.command()
@click.argument("fid")
@click.pass_obj
def trail(obj, fid):
    """Reconstruct the life of a file identifier."""
    def body():
        store = Store(obj["data_dir"])
        canonical = str(Fid.parse(fid))
        events = [e.to_dict() for e in store.trail(canonical)]
        if obj["fmt"] == "json":
            _echo_json({"fid": canonical, "events": events})
        else:
            click.echo(_event_table(events))

    try:
        run(obj, body)
    except ValueError as e:
        raise click.UsageError(str(e))


@main.command()
@click.option("--by", type=click.Choice(["type", "uid", "nid"]),
              required=True)
@with_filters
@click.pass_obj
def counts(obj, by, device, types, uid, gid, fid, nid, name_contains,
           from_, to):
    """Group-by counts over matching events."""
    def body():
        store = Store(obj["data_dir"])
        spec = _build_spec(device, types, uid, gid, fid, nid, name_contains,
                           from_, to)
        result = store.counts_by(by, spec)
        as_str = {str(k): v for k, v in result.items()}
        if obj["fmt"] == "json":
            _echo_json({"by": by, "counts": as_str})
        else:
            for key, n in sorted(as_str.items()):
                click.echo(f"{key:<24}{n:>8}")

    run(obj, body)


@main.command()
@click.option("--device", required=True)
@click.pass_obj
def verify(obj, device):
    """Verify the hash chain of a device's collection; exit 1 if broken."""
    def body():
        store = Store(obj["data_dir"])
        res = store.verify_chain(device)
        if obj["fmt"] == "json":
            _echo_json({"device": device, "ok": res.ok,
                        "first_bad_index": res.first_bad_index})
        elif res.ok:
            click.echo(f"{device}: ok")
        else:
            click.echo(f"{device}: chain broken at index {res.first_bad_index}")
        if not res.ok:
            sys.exit(1)

    run(obj, body)


@main.command()
@click.pass_obj
def df(obj):
    """Capacity report of a pristine simulated file system."""
    def body():
        report = SimFs().df()
        if obj["fmt"] == "json":
            _echo_json(report.to_dict())
        else:
            click.echo(report.render_text())

    run(obj, body)


@main.group()
def collector():
    """Collector daemon commands."""


@collector.command("run")
@click.option("--device", default="lustre-MDT0000", show_default=True)
@click.option("--interval", type=float, default=5.0, show_default=True,
              envvar="AUDIT_POLL_SECS")
@click.option("--max-cycles", type=int, default=0, show_default=True,
              help="Stop after N cycles (0 = run until interrupted).")
@click.pass_obj
def collector_run(obj, device, interval, max_cycles):
    """Host a simulated device and poll its changelog into the store."""
    def body():
        fs = SimFs()
        store = Store(obj["data_dir"])
        cfg = CollectorConfig(device=device, store_dir=obj["data_dir"],
                              poll_interval=interval)
        shutdown = threading.Event()
        with Collector(fs, store, cfg) as col:
            if max_cycles:
                for _ in range(max_cycles):
                    col.run_cycle()
            else:
                try:
                    col.run_loop(shutdown)
                except KeyboardInterrupt:
                    shutdown.set()

    run(obj, body)


@main.group()
def sim():
    """Simulator commands."""


@sim.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8080, show_default=True)
@click.option("--interval", type=float, default=5.0, show_default=True,
              envvar="AUDIT_POLL_SECS")
@click.option("--static-dir", type=click.Path(path_type=Path), default=None)
@click.pass_obj
def sim_serve(obj, host, port, interval, static_dir):
    """Boot a simulator + collector and serve the full API over them."""
    def body():
        import uvicorn

        fs = SimFs()
        store = Store(obj["data_dir"])
        cfg = CollectorConfig(device=fs.device, store_dir=obj["data_dir"],
                              poll_interval=interval)
        shutdown = threading.Event()
        with Collector(fs, store, cfg) as col:
            worker = threading.Thread(target=col.run_loop, args=(shutdown,),
                                      daemon=True)
            worker.start()
            app = create_app(store, sim=fs, static_dir=static_dir)
            try:
                uvicorn.run(app, host=host, port=port, log_level="warning")
            finally:
                shutdown.set()
                worker.join(timeout=10)

    run(obj, body)


@main.command("serve-api")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8080, show_default=True)
@click.option("--static-dir", type=click.Path(path_type=Path), default=None)
@click.pass_obj
def serve_api(obj, host, port, static_dir):
    """Serve the query API over an existing store (no simulator attached)."""
    def body():
        from .api import serve

        cfg = ApiConfig(store_dir=obj["data_dir"], host=host, port=port,
                        sim_attached=False, static_dir=static_dir)
        serve(cfg)

    run(obj, body)


if __name__ == "__main__":
    main()
