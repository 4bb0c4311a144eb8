"""Simulated Lustre cluster: one MDT namespace, files striped over OSTs.

Every mutating operation emits changelog records according to the record
type table and the active changelog mask. The changelog supports multiple
registered users (`cl1`, `cl2`, ...) with independent cleared positions;
records are purged only once every user has cleared past them.

All mutating calls are serialized on an internal lock (single-writer state
machine); reads observe a consistent snapshot.
"""

from __future__ import annotations

import re
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

from .errors import (
    Exists,
    IndexOutOfRange,
    IsDir,
    NoEnt,
    NoSpace,
    NotDir,
    NotEmpty,
    PermissionDenied,
    ScriptParse,
    UnknownDevice,
    UnknownType,
    UnknownUser,
)
from .model import (
    ChangelogRecord,
    Fid,
    Nid,
    RECORD_TYPES,
    render_record,
    type_by_name,
)

KIB = 1024
MIB = 1024**2
GIB = 1024**3

ROOT_FID = Fid(0x200000007, 1, 0)
FID_SEQUENCE = 0x200000401

# virtual clock: 2024-01-01T00:00:00Z, advancing 1 ms per applied op
DEFAULT_EPOCH_NS = 1_704_067_200 * 10**9
CLOCK_TICK_NS = 1_000_000

ALL_TYPE_NAMES = frozenset(t.name for t in RECORD_TYPES)


@dataclass
class Target:
    """One MDT or OST with byte-level capacity accounting."""

    name: str
    capacity: int
    used: int = 0

    @property
    def available(self) -> int:
        return self.capacity - self.used


@dataclass
class Topology:
    fsname: str = "lustre"
    mdt: Target = None
    osts: list[Target] = None
    oss_count: int = 2
    osts_per_oss: int = 6

    @classmethod
    def default(cls) -> "Topology":
        mdt = Target("lustre-MDT0000", int(1.1 * GIB))
        osts = [
            Target(f"lustre-OST{i:04x}", int(1.8 * GIB))
            for i in range(2 * 6)
        ]
        return cls(mdt=mdt, osts=osts)


@dataclass
class ClientCtx:
    """Subject of every audited action: who and from where."""

    uid: int
    gid: int
    nid: Nid


@dataclass
class Inode:
    fid: Fid
    kind: str  # file | dir | symlink | device
    mode: int
    uid: int
    gid: int
    size: int = 0
    nlink: int = 1
    stripes: list = field(default_factory=list)  # [(ost_index, bytes)]
    xattrs: dict = field(default_factory=dict)
    symlink_target: Optional[str] = None
    atime: int = 0
    mtime: int = 0
    ctime: int = 0


def format_size(n: int) -> str:
    """Human-readable size with one decimal, powers of 1024 (lfs df -h style)."""
    if n < KIB:
        return str(n)
    for unit in "KMGTP":
        n /= 1024.0
        if n < 1024 or unit == "P":
            return f"{n:.1f}{unit}"
    raise AssertionError("unreachable")


@dataclass
class CapacityRow:
    uuid: str
    total: int
    used: int
    available: int
    mounted: str

    @property
    def use_pct(self) -> int:
        return round(100 * self.used / self.total) if self.total else 0

    def to_dict(self) -> dict:
        return {
            "uuid": self.uuid,
            "total_bytes": self.total,
            "used_bytes": self.used,
            "available_bytes": self.available,
            "use_pct": self.use_pct,
            "mounted_on": self.mounted,
        }


@dataclass
class CapacityReport:
    rows: list[CapacityRow]
    summary: CapacityRow

    def to_dict(self) -> dict:
        return {
            "rows": [r.to_dict() for r in self.rows],
            "summary": self.summary.to_dict(),
        }

    def render_text(self) -> str:
        out = [
            f"{'UUID':<33}{'bytes':>8}{'Used':>10}{'Available':>10}"
            f"{'Use%':>5} Mounted on"
        ]
        for r in self.rows + [self.summary]:
            out.append(
                f"{r.uuid:<33}{format_size(r.total):>8}{format_size(r.used):>10}"
                f"{format_size(r.available):>10}{str(r.use_pct) + '%':>5} {r.mounted}"
            )
        return "\n".join(out)


class SimFs:
    """The simulated filesystem plus its MDT changelog."""

    def __init__(self, topology: Topology = None, epoch_ns: int = DEFAULT_EPOCH_NS,
                 clock: Callable[[], int] = None):
        self.topology = topology or Topology.default()
        self._lock = threading.RLock()
        self._clock_ns = epoch_ns
        self._external_clock = clock  # overrides the virtual clock when set
        self._next_oid = 1
        self._create_counter = 0  # round-robin stripe placement

        # world-writable root so workloads can run under any uid
        root = Inode(fid=ROOT_FID, kind="dir", mode=0o777, uid=0, gid=0, nlink=2)
        self._inodes: dict[Fid, Inode] = {ROOT_FID: root}
        self._dirents: dict[Fid, dict[str, Fid]] = {ROOT_FID: {}}

        # changelog state
        self._ring: list[ChangelogRecord] = []
        self._next_index = 1
        self._users: dict[str, int] = {}  # userid -> cleared_index
        self._next_user = 1
        self._mask: frozenset[str] = frozenset(ALL_TYPE_NAMES)

    @property
    def device(self) -> str:
        return self.topology.mdt.name

    # -- clock ---------------------------------------------------------------

    def _tick(self) -> int:
        if self._external_clock is not None:
            self._clock_ns = self._external_clock()
        else:
            self._clock_ns += CLOCK_TICK_NS
        return self._clock_ns

    # -- changelog plumbing ---------------------------------------------------

    def _check_device(self, device: str) -> None:
        if device != self.device:
            raise UnknownDevice(f"no such device: {device}")

    def _emit(self, type_name: str, target: Fid, ctx: ClientCtx = None,
              mode_mask: str = None, parent: Fid = None, name: str = None,
              force: bool = False) -> Optional[ChangelogRecord]:
        if not force and type_name not in self._mask:
            return None
        rec = ChangelogRecord(
            index=self._next_index,
            rtype=type_by_name(type_name),
            ts_ns=self._clock_ns,
            flags=0x0,
            target=target,
            ext_flags=0x0 if ctx is not None else None,
            uid=ctx.uid if ctx else None,
            gid=ctx.gid if ctx else None,
            nid=ctx.nid if ctx else None,
            mode_mask=mode_mask,
            parent=parent,
            name=name,
        )
        self._next_index += 1
        self._ring.append(rec)
        return rec

    def changelog_register(self, device: str) -> str:
        """Register a new changelog consumer; returns its userid (cl<N>)."""
        with self._lock:
            self._check_device(device)
            userid = f"cl{self._next_user}"
            self._next_user += 1
            self._users[userid] = self._next_index - 1
            self._tick()
            self._emit("MARK", ROOT_FID, force=True)
            return userid

    def set_mask(self, device: str, mask) -> frozenset:
        """Set the emission mask: 'ALL' or an iterable of type names."""
        with self._lock:
            self._check_device(device)
            if mask == "ALL":
                names = frozenset(ALL_TYPE_NAMES)
            else:
                names = frozenset(mask)
                for n in names:
                    type_by_name(n)
            self._mask = names
            self._tick()
            self._emit("MARK", ROOT_FID, force=True)
            return self._mask

    def changelog_read(self, device: str, userid: str, since_index: int = 0,
                       max_records: int = 2**31) -> list[ChangelogRecord]:
        with self._lock:
            self._check_device(device)
            if userid not in self._users:
                raise UnknownUser(f"not a registered changelog user: {userid}")
            lo = max(since_index, self._users[userid])
            return [r for r in self._ring if r.index > lo][:max_records]

    def changelog_read_lines(self, device: str, userid: str, since_index: int = 0,
                             max_records: int = 2**31) -> list[str]:
        """The lctl-like text surface consumed by the collector."""
        return [
            render_record(r)
            for r in self.changelog_read(device, userid, since_index, max_records)
        ]

    def changelog_clear(self, device: str, userid: str, end_index: int) -> int:
        with self._lock:
            self._check_device(device)
            if userid not in self._users:
                raise UnknownUser(f"not a registered changelog user: {userid}")
            if end_index < 0 or end_index > self._next_index - 1:
                raise IndexOutOfRange(
                    f"end_index {end_index} beyond latest {self._next_index - 1}"
                )
            self._users[userid] = max(self._users[userid], end_index)
            floor = min(self._users.values())
            before = len(self._ring)
            self._ring = [r for r in self._ring if r.index > floor]
            return before - len(self._ring)

    def latest_index(self) -> int:
        with self._lock:
            return self._next_index - 1

    # -- namespace helpers -----------------------------------------------------

    def _alloc_fid(self) -> Fid:
        fid = Fid(FID_SEQUENCE, self._next_oid, 0)
        self._next_oid += 1
        return fid

    def _may(self, ctx: ClientCtx, inode: Inode, want: str) -> bool:
        """POSIX owner/group/other rwx bit check; uid 0 bypasses."""
        if ctx.uid == 0:
            return True
        if ctx.uid == inode.uid:
            shift = 6
        elif ctx.gid == inode.gid:
            shift = 3
        else:
            shift = 0
        bits = (inode.mode >> shift) & 0o7
        need = {"r": 0o4, "w": 0o2, "x": 0o1}
        return all(bits & need[c] for c in want)

    def _split(self, path: str) -> list[str]:
        if not path.startswith("/"):
            raise NoEnt(f"path must be absolute: {path}")
        return [p for p in path.split("/") if p]

    def _lookup_dir(self, ctx: ClientCtx, parts: list[str]) -> Inode:
        """Resolve a directory by path components; requires x on each dir."""
        node = self._inodes[ROOT_FID]
        for part in parts:
            if node.kind != "dir":
                raise NotDir(f"not a directory: {part}")
            if not self._may(ctx, node, "x"):
                raise PermissionDenied(f"search permission denied: {part}")
            child = self._dirents[node.fid].get(part)
            if child is None:
                raise NoEnt(f"no such entry: {part}")
            node = self._inodes[child]
        return node

    def _resolve_parent(self, ctx: ClientCtx, path: str) -> tuple[Inode, str]:
        parts = self._split(path)
        if not parts:
            raise IsDir("operation on root")
        parent = self._lookup_dir(ctx, parts[:-1])
        if parent.kind != "dir":
            raise NotDir(f"not a directory: {path}")
        return parent, parts[-1]

    def _resolve(self, ctx: ClientCtx, path: str) -> Inode:
        parts = self._split(path)
        if not parts:
            return self._inodes[ROOT_FID]
        parent = self._lookup_dir(ctx, parts[:-1])
        if parent.kind != "dir":
            raise NotDir(f"not a directory: {path}")
        if not self._may(ctx, parent, "x"):
            raise PermissionDenied(f"search permission denied: {path}")
        fid = self._dirents[parent.fid].get(parts[-1])
        if fid is None:
            raise NoEnt(f"no such file: {path}")
        return self._inodes[fid]

    def _require_write(self, ctx: ClientCtx, dirnode: Inode, path: str) -> None:
        if not self._may(ctx, dirnode, "wx"):
            raise PermissionDenied(f"write permission denied on parent of {path}")

    def _new_entry(self, ctx: ClientCtx, path: str, kind: str, mode: int) -> tuple:
        parent, name = self._resolve_parent(ctx, path)
        self._require_write(ctx, parent, path)
        if name in self._dirents[parent.fid]:
            raise Exists(f"already exists: {path}")
        fid = self._alloc_fid()
        now = self._clock_ns
        node = Inode(fid=fid, kind=kind, mode=mode, uid=ctx.uid, gid=ctx.gid,
                     atime=now, mtime=now, ctime=now)
        self._inodes[fid] = node
        self._dirents[parent.fid][name] = fid
        if kind == "dir":
            self._dirents[fid] = {}
            node.nlink = 2
            parent.nlink += 1
        return node, parent, name

    # -- namespace operations ---------------------------------------------------

    def mkdir(self, ctx: ClientCtx, path: str, mode: int = 0o755) -> Fid:
        with self._lock:
            self._tick()
            node, parent, name = self._new_entry(ctx, path, "dir", mode)
            self._emit("MKDIR", node.fid, ctx, parent=parent.fid, name=name)
            return node.fid

    def create(self, ctx: ClientCtx, path: str, mode: int = 0o644) -> Fid:
        with self._lock:
            self._tick()
            node, parent, name = self._new_entry(ctx, path, "file", mode)
            ost = self._create_counter % len(self.topology.osts)
            self._create_counter += 1
            node.stripes = [(ost, 0)]
            self._emit("CREAT", node.fid, ctx, parent=parent.fid, name=name)
            return node.fid

    def mknod(self, ctx: ClientCtx, path: str, mode: int = 0o644) -> Fid:
        with self._lock:
            self._tick()
            node, parent, name = self._new_entry(ctx, path, "device", mode)
            self._emit("MKNOD", node.fid, ctx, parent=parent.fid, name=name)
            return node.fid

    def symlink(self, ctx: ClientCtx, target: str, path: str) -> Fid:
        with self._lock:
            self._tick()
            node, parent, name = self._new_entry(ctx, path, "symlink", 0o777)
            node.symlink_target = target
            self._emit("SLINK", node.fid, ctx, parent=parent.fid, name=name)
            return node.fid

    def link(self, ctx: ClientCtx, src: str, dst: str) -> Fid:
        with self._lock:
            self._tick()
            node = self._resolve(ctx, src)
            if node.kind == "dir":
                raise IsDir(f"cannot hard-link a directory: {src}")
            parent, name = self._resolve_parent(ctx, dst)
            self._require_write(ctx, parent, dst)
            if name in self._dirents[parent.fid]:
                raise Exists(f"already exists: {dst}")
            self._dirents[parent.fid][name] = node.fid
            node.nlink += 1
            self._emit("HLINK", node.fid, ctx, parent=parent.fid, name=name)
            return node.fid

    def open(self, ctx: ClientCtx, path: str, mode_mask: str) -> Fid:
        """Open with a requested rwx mask; denied opens emit NOPEN and raise."""
        with self._lock:
            self._tick()
            node = self._resolve(ctx, path)
            if node.kind == "dir" and "w" in mode_mask:
                raise IsDir(f"cannot open a directory for write: {path}")
            want = mode_mask.replace("-", "")
            if not self._may(ctx, node, want):
                self._emit("NOPEN", node.fid, ctx, mode_mask=mode_mask)
                raise PermissionDenied(f"open denied: {path} ({mode_mask})")
            self._emit("OPEN", node.fid, ctx, mode_mask=mode_mask)
            return node.fid

    def close(self, ctx: ClientCtx, path: str) -> None:
        with self._lock:
            self._tick()
            node = self._resolve(ctx, path)
            self._emit("CLOSE", node.fid, ctx)

    def write(self, ctx: ClientCtx, path: str, nbytes: int) -> None:
        """Append nbytes to the file; accounts bytes on the file's stripe OSTs."""
        with self._lock:
            self._tick()
            node = self._resolve(ctx, path)
            if node.kind == "dir":
                raise IsDir(f"cannot write a directory: {path}")
            if node.kind != "file":
                raise NoEnt(f"not a regular file: {path}")
            if not self._may(ctx, node, "w"):
                raise PermissionDenied(f"write denied: {path}")
            ost_idx, cur = node.stripes[0]
            ost = self.topology.osts[ost_idx]
            if ost.used + nbytes > ost.capacity:
                raise NoSpace(f"{ost.name} full: {nbytes} bytes do not fit")
            ost.used += nbytes
            node.stripes[0] = (ost_idx, cur + nbytes)
            node.size += nbytes
            node.mtime = self._clock_ns
            self._emit("MTIME", node.fid, ctx)

    def truncate(self, ctx: ClientCtx, path: str, length: int) -> None:
        with self._lock:
            self._tick()
            node = self._resolve(ctx, path)
            if node.kind == "dir":
                raise IsDir(f"cannot truncate a directory: {path}")
            if not self._may(ctx, node, "w"):
                raise PermissionDenied(f"truncate denied: {path}")
            ost_idx, cur = node.stripes[0] if node.stripes else (0, 0)
            delta = length - node.size
            ost = self.topology.osts[ost_idx]
            if delta > 0 and ost.used + delta > ost.capacity:
                raise NoSpace(f"{ost.name} full")
            ost.used += delta
            node.stripes = [(ost_idx, cur + delta)]
            node.size = length
            node.mtime = self._clock_ns
            self._emit("TRUNC", node.fid, ctx)

    def chmod(self, ctx: ClientCtx, path: str, mode: int) -> None:
        with self._lock:
            self._tick()
            node = self._resolve(ctx, path)
            if ctx.uid != 0 and ctx.uid != node.uid:
                raise PermissionDenied(f"chmod denied: {path}")
            node.mode = mode
            node.ctime = self._clock_ns
            self._emit("SATTR", node.fid, ctx)

    def chown(self, ctx: ClientCtx, path: str, uid: int, gid: int) -> None:
        with self._lock:
            self._tick()
            node = self._resolve(ctx, path)
            if ctx.uid != 0:
                raise PermissionDenied(f"chown denied: {path}")
            node.uid, node.gid = uid, gid
            node.ctime = self._clock_ns
            self._emit("SATTR", node.fid, ctx)

    def setxattr(self, ctx: ClientCtx, path: str, name: str, value: bytes) -> None:
        with self._lock:
            self._tick()
            node = self._resolve(ctx, path)
            if not self._may(ctx, node, "w"):
                raise PermissionDenied(f"setxattr denied: {path}")
            node.xattrs[name] = value
            node.ctime = self._clock_ns
            self._emit("XATTR", node.fid, ctx)

    def getxattr(self, ctx: ClientCtx, path: str, name: str) -> Optional[bytes]:
        with self._lock:
            self._tick()
            node = self._resolve(ctx, path)
            if not self._may(ctx, node, "r"):
                raise PermissionDenied(f"getxattr denied: {path}")
            self._emit("GXATR", node.fid, ctx)
            return node.xattrs.get(name)

    def unlink(self, ctx: ClientCtx, path: str) -> None:
        with self._lock:
            self._tick()
            parent, name = self._resolve_parent(ctx, path)
            self._require_write(ctx, parent, path)
            fid = self._dirents[parent.fid].get(name)
            if fid is None:
                raise NoEnt(f"no such file: {path}")
            node = self._inodes[fid]
            if node.kind == "dir":
                raise IsDir(f"is a directory: {path}")
            del self._dirents[parent.fid][name]
            node.nlink -= 1
            if node.nlink == 0:
                for ost_idx, nbytes in node.stripes:
                    self.topology.osts[ost_idx].used -= nbytes
                del self._inodes[fid]
            self._emit("UNLNK", fid, ctx, parent=parent.fid, name=name)

    def rmdir(self, ctx: ClientCtx, path: str) -> None:
        with self._lock:
            self._tick()
            parent, name = self._resolve_parent(ctx, path)
            self._require_write(ctx, parent, path)
            fid = self._dirents[parent.fid].get(name)
            if fid is None:
                raise NoEnt(f"no such directory: {path}")
            node = self._inodes[fid]
            if node.kind != "dir":
                raise NotDir(f"not a directory: {path}")
            if self._dirents[fid]:
                raise NotEmpty(f"directory not empty: {path}")
            del self._dirents[parent.fid][name]
            del self._dirents[fid]
            del self._inodes[fid]
            parent.nlink -= 1
            self._emit("RMDIR", fid, ctx, parent=parent.fid, name=name)

    def rename(self, ctx: ClientCtx, src: str, dst: str) -> None:
        """Atomic rename: RENME then RNMTO at consecutive indices."""
        with self._lock:
            self._tick()
            src_parent, src_name = self._resolve_parent(ctx, src)
            self._require_write(ctx, src_parent, src)
            fid = self._dirents[src_parent.fid].get(src_name)
            if fid is None:
                raise NoEnt(f"no such file: {src}")
            dst_parent, dst_name = self._resolve_parent(ctx, dst)
            self._require_write(ctx, dst_parent, dst)
            if dst_name in self._dirents[dst_parent.fid]:
                raise Exists(f"already exists: {dst}")
            del self._dirents[src_parent.fid][src_name]
            self._dirents[dst_parent.fid][dst_name] = fid
            self._emit("RENME", fid, ctx, parent=src_parent.fid, name=src_name)
            self._emit("RNMTO", fid, ctx, parent=dst_parent.fid, name=dst_name)

    def _simple_event(self, type_name: str):
        def op(ctx: ClientCtx, path: str) -> None:
            with self._lock:
                self._tick()
                node = self._resolve(ctx, path)
                self._emit(type_name, node.fid, ctx)
        return op

    def layout_change(self, ctx, path):
        self._simple_event("LYOUT")(ctx, path)

    def migrate(self, ctx, path):
        self._simple_event("MIGRT")(ctx, path)

    def hsm_event(self, ctx, path):
        self._simple_event("HSM")(ctx, path)

    def flr_write(self, ctx, path):
        self._simple_event("FLRW")(ctx, path)

    def flr_resync(self, ctx, path):
        self._simple_event("RESYNC")(ctx, path)

    def touch_atime(self, ctx, path):
        with self._lock:
            self._tick()
            node = self._resolve(ctx, path)
            node.atime = self._clock_ns
            self._emit("ATIME", node.fid, ctx)

    def touch_mtime(self, ctx, path):
        with self._lock:
            self._tick()
            node = self._resolve(ctx, path)
            node.mtime = self._clock_ns
            self._emit("MTIME", node.fid, ctx)

    def touch_ctime(self, ctx, path):
        with self._lock:
            self._tick()
            node = self._resolve(ctx, path)
            node.ctime = self._clock_ns
            self._emit("CTIME", node.fid, ctx)

    # -- introspection -----------------------------------------------------------

    def stat(self, ctx: ClientCtx, path: str) -> Inode:
        with self._lock:
            return self._resolve(ctx, path)

    def live_bytes(self) -> int:
        with self._lock:
            return sum(
                n.size for n in self._inodes.values() if n.kind == "file"
            )

    def df(self) -> CapacityReport:
        with self._lock:
            mnt = "/mnt/lustre"
            rows = [
                CapacityRow(
                    uuid=f"{self.topology.mdt.name}_UID",
                    total=self.topology.mdt.capacity,
                    used=self.topology.mdt.used,
                    available=self.topology.mdt.available,
                    mounted=f"{mnt}[MDT:0]",
                )
            ]
            for i, ost in enumerate(self.topology.osts):
                rows.append(
                    CapacityRow(
                        uuid=f"{ost.name}_UID",
                        total=ost.capacity,
                        used=ost.used,
                        available=ost.available,
                        mounted=f"{mnt}[OST:{i}]",
                    )
                )
            osts = rows[1:]
            summary = CapacityRow(
                uuid="filesystem_summary:",
                total=sum(r.total for r in osts),
                used=sum(r.used for r in osts),
                available=sum(r.available for r in osts),
                mounted=mnt,
            )
            return CapacityReport(rows=rows, summary=summary)

    # -- workload scripts ----------------------------------------------------------

    def run_workload(self, script: str, keep_going: bool = False) -> int:
        """Execute a workload script; returns the number of fs ops applied."""
        steps = parse_workload(script)
        ctx = ClientCtx(0, 0, Nid("192.168.1.115", "tcp0"))
        count = 0
        for line_no, directive, args in steps:
            if directive == "ctx":
                ctx = ClientCtx(args[0], args[1], args[2])
                continue
            try:
                self._apply_directive(ctx, directive, args)
                count += 1
            except Exception:
                if not keep_going:
                    raise
        return count

    def _apply_directive(self, ctx, directive, args):
        dispatch = {
            "mkdir": lambda: self.mkdir(ctx, args[0], args[1]),
            "create": lambda: self.create(ctx, args[0], args[1]),
            "open": lambda: self.open(ctx, args[0], args[1]),
            "write": lambda: self.write(ctx, args[0], args[1]),
            "close": lambda: self.close(ctx, args[0]),
            "unlink": lambda: self.unlink(ctx, args[0]),
            "rmdir": lambda: self.rmdir(ctx, args[0]),
            "rename": lambda: self.rename(ctx, args[0], args[1]),
            "chmod": lambda: self.chmod(ctx, args[0], args[1]),
            "chown": lambda: self.chown(ctx, args[0], args[1], args[2]),
            "setx": lambda: self.setxattr(ctx, args[0], args[1], args[2]),
            "getx": lambda: self.getxattr(ctx, args[0], args[1]),
            "link": lambda: self.link(ctx, args[0], args[1]),
            "symlink": lambda: self.symlink(ctx, args[0], args[1]),
            "truncate": lambda: self.truncate(ctx, args[0], args[1]),
            "touch": lambda: getattr(self, f"touch_{args[1]}")(ctx, args[0]),
        }
        dispatch[directive]()


def parse_size(tok: str) -> int:
    m = re.fullmatch(r"([0-9]+)([KMG]?)", tok, re.ASCII)
    if not m:
        raise ValueError(f"bad size: {tok!r}")
    mult = {"": 1, "K": KIB, "M": MIB, "G": GIB}[m.group(2)]
    return int(m.group(1)) * mult


def _parse_mode(tok: str, line_no: int) -> int:
    try:
        return int(tok, 8)
    except ValueError:
        raise ScriptParse(line_no, f"bad octal mode: {tok!r}") from None


def parse_workload(script: str) -> list[tuple[int, str, tuple]]:
    """Expand a workload script to a flat (line_no, directive, args) list.

    `repeat <n> {` ... `}` blocks nest; `$i` in a block body is replaced by
    the innermost zero-based iteration index, zero-padded to 3 digits.
    """
    lines = script.splitlines()
    steps: list[tuple[int, str, tuple]] = []
    _parse_block(lines, 0, len(lines), steps)
    return steps


def _parse_block(lines, start, end, steps):
    i = start
    while i < end:
        raw = lines[i]
        line_no = i + 1
        text = raw.split("#", 1)[0].strip()
        if not text:
            i += 1
            continue
        toks = text.split()
        if toks[0] == "repeat":
            if len(toks) != 3 or toks[2] != "{" or not toks[1].isdigit():
                raise ScriptParse(line_no, "expected: repeat <n> {")
            depth, j = 1, i + 1
            while j < end:
                t = lines[j].split("#", 1)[0].strip()
                if t.endswith("{"):
                    depth += 1
                elif t == "}":
                    depth -= 1
                    if depth == 0:
                        break
                j += 1
            if depth != 0:
                raise ScriptParse(line_no, "unterminated repeat block")
            body = lines[i + 1 : j]
            for it in range(int(toks[1])):
                expanded = [ln.replace("$i", f"{it:03d}") for ln in body]
                _parse_block(expanded, 0, len(expanded), steps)
            i = j + 1
            continue
        if toks[0] == "}":
            raise ScriptParse(line_no, "unmatched '}'")
        steps.append(_parse_directive(toks, line_no))
        i += 1


def _parse_directive(toks, line_no) -> tuple[int, str, tuple]:
    d = toks[0]
    argn = {
        "ctx": 3, "mkdir": 2, "create": 2, "open": 2, "write": 2, "close": 1,
        "unlink": 1, "rmdir": 1, "rename": 2, "chmod": 2, "chown": 2,
        "setx": 3, "getx": 2, "link": 2, "symlink": 2, "truncate": 2, "touch": 2,
    }
    if d not in argn:
        raise ScriptParse(line_no, f"unknown directive: {d!r}")
    args = toks[1:]
    if len(args) != argn[d]:
        raise ScriptParse(line_no, f"{d} expects {argn[d]} argument(s)")
    try:
        if d == "ctx":
            return line_no, d, (int(args[0]), int(args[1]), Nid.parse(args[2]))
        if d in ("mkdir", "create", "chmod"):
            return line_no, d, (args[0], _parse_mode(args[1], line_no))
        if d == "chown":
            uid, _, gid = args[1].partition(":")
            return line_no, d, (args[0], int(uid), int(gid))
        if d in ("write", "truncate"):
            return line_no, d, (args[0], parse_size(args[1]))
        if d == "open":
            if not re.fullmatch(r"[r-][w-][x-]", args[1]):
                raise ScriptParse(line_no, f"bad rwx mask: {args[1]!r}")
            return line_no, d, tuple(args)
        if d == "setx":
            return line_no, d, (args[0], args[1], args[2].encode())
        if d == "touch":
            if args[1] not in ("atime", "mtime", "ctime"):
                raise ScriptParse(line_no, f"bad touch kind: {args[1]!r}")
            return line_no, d, tuple(args)
        return line_no, d, tuple(args)
    except ScriptParse:
        raise
    except (ValueError, UnknownType) as e:
        raise ScriptParse(line_no, str(e)) from None
