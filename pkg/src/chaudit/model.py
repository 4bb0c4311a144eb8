"""Domain types for changelog records and the line grammar parser/renderer.

The text grammar (single space separators):

    <index> <code:2><NAME> <hh>:<mm>:<ss>.<frac> <yyyy>.<mm>.<dd> 0x<flags>
        t=[<fid>] [ef=0x<hex>] [u=<uid>:<gid>] [nid=<nid>] [m=<rwx-mask>]
        [p=[<fid>] <name>]

All functions here are pure; values are frozen dataclasses, safe to share
across threads.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from typing import Optional

from .errors import MalformedRecord, UnknownType

__all__ = [
    "Fid",
    "Nid",
    "RecordType",
    "ChangelogRecord",
    "AuditEvent",
    "RECORD_TYPES",
    "type_by_code",
    "type_by_name",
    "parse_record",
    "render_record",
]

U32_MAX = 2**32 - 1
U64_MAX = 2**64 - 1
NS_PER_SEC = 1_000_000_000


@dataclass(frozen=True, order=True)
class Fid:
    """Lustre-style file identifier: (sequence, oid, version) triple."""

    sequence: int
    oid: int
    version: int = 0

    def __post_init__(self):
        if not (0 <= self.sequence <= U64_MAX):
            raise ValueError(f"fid sequence out of range: {self.sequence}")
        if not (0 <= self.oid <= U32_MAX) or not (0 <= self.version <= U32_MAX):
            raise ValueError("fid oid/version out of range")

    def __str__(self) -> str:
        return f"[0x{self.sequence:x}:0x{self.oid:x}:0x{self.version:x}]"

    @classmethod
    def parse(cls, text: str) -> "Fid":
        if text.startswith("["):
            if not text.endswith("]"):
                raise ValueError(f"unbalanced fid brackets: {text!r}")
            text = text[1:-1]
        m = re.fullmatch(
            r"0[xX]([0-9a-fA-F]+):0[xX]([0-9a-fA-F]+):0[xX]([0-9a-fA-F]+)", text
        )
        if not m:
            raise ValueError(f"not a fid: {text!r}")
        return cls(int(m.group(1), 16), int(m.group(2), 16), int(m.group(3), 16))


@dataclass(frozen=True)
class Nid:
    """Network identifier: IPv4 address @ network name (tcp/o2ib + digits)."""

    address: str
    network: str = "tcp"

    def __post_init__(self):
        if not re.fullmatch(
            r"(25[0-5]|2[0-4]\d|1\d\d|[1-9]?\d)(\.(25[0-5]|2[0-4]\d|1\d\d|[1-9]?\d)){3}",
            self.address,
            re.ASCII,
        ):
            raise ValueError(f"not an IPv4 dotted quad: {self.address!r}")
        if not re.fullmatch(r"(tcp|o2ib)\d*", self.network, re.ASCII):
            raise ValueError(f"bad network token: {self.network!r}")

    def __str__(self) -> str:
        return f"{self.address}@{self.network}"

    @classmethod
    def parse(cls, text: str) -> "Nid":
        addr, sep, net = text.partition("@")
        if not sep:
            raise ValueError(f"not a nid: {text!r}")
        return cls(addr, net)


@dataclass(frozen=True)
class RecordType:
    """One entry of the changelog type table."""

    code: int
    name: str
    description: str
    audit_only: bool = False

    def __str__(self) -> str:
        return f"{self.code:02d}{self.name}"


# Code assignment: OPEN anchored at 10; the rest in table reading order.
# OPEN and NOPEN share code 10 (granted vs denied open); both are
# audit-only, as are ATIME and GXATR.
RECORD_TYPES: tuple[RecordType, ...] = (
    RecordType(0, "MARK", "Internal recordkeeping"),
    RecordType(1, "CREAT", "Regular file creation"),
    RecordType(2, "MKDIR", "Directory creation"),
    RecordType(3, "HLINK", "Hard link"),
    RecordType(4, "SLINK", "Soft link"),
    RecordType(5, "MKNOD", "Other file creation"),
    RecordType(6, "UNLNK", "Regular file removal"),
    RecordType(7, "RMDIR", "Directory removal"),
    RecordType(8, "RENME", "Rename, original"),
    RecordType(9, "RNMTO", "Rename, final"),
    RecordType(10, "OPEN", "Granted open", audit_only=True),
    RecordType(10, "NOPEN", "Denied open", audit_only=True),
    RecordType(11, "CLOSE", "Close"),
    RecordType(12, "LYOUT", "Layout change"),
    RecordType(13, "TRUNC", "Regular file truncated"),
    RecordType(14, "SATTR", "Attribute change"),
    RecordType(15, "XATTR", "Extended attribute change (setxattr)"),
    RecordType(16, "HSM", "HSM specific event"),
    RecordType(17, "MTIME", "MTIME change"),
    RecordType(18, "CTIME", "CTIME change"),
    RecordType(19, "ATIME", "ATIME change", audit_only=True),
    RecordType(20, "MIGRT", "Migration event"),
    RecordType(21, "FLRW", "File Level Replication: file initially written"),
    RecordType(22, "RESYNC", "File Level Replication: file re-synced"),
    RecordType(23, "GXATR", "Extended attribute access (getxattr)", audit_only=True),
)

_BY_NAME = {t.name: t for t in RECORD_TYPES}


def type_by_name(name: str) -> RecordType:
    try:
        return _BY_NAME[name]
    except KeyError:
        raise UnknownType(f"unknown record type name: {name!r}") from None


def type_by_code(code: int, denied: bool = False) -> RecordType:
    """Look up a type by numeric code; code 10 is OPEN or, when denied, NOPEN."""
    if code == 10:
        return _BY_NAME["NOPEN" if denied else "OPEN"]
    for t in RECORD_TYPES:
        if t.code == code:
            return t
    raise UnknownType(f"unknown record type code: {code}")


_NAMESPACE_TYPES = frozenset(
    {"CREAT", "MKDIR", "HLINK", "SLINK", "MKNOD", "UNLNK", "RMDIR", "RENME", "RNMTO"}
)

_MODE_MASK_RE = re.compile(r"[r-][w-][x-]")


def _validate_name(name: str) -> None:
    if not name:
        raise ValueError("empty filename")
    if "/" in name or "\x00" in name:
        raise ValueError(f"filename contains '/' or NUL: {name!r}")
    # line-oriented wire format cannot carry newlines
    if "\n" in name or "\r" in name:
        raise ValueError(f"filename contains a line break: {name!r}")
    if len(name.encode("utf-8")) > 255:
        raise ValueError("filename longer than 255 bytes")


@dataclass(frozen=True)
class ChangelogRecord:
    """One parsed changelog line.

    Timestamps are kept as a single nanosecond UTC epoch value; the wire
    form's time-of-day and date are derived from it on render.
    uid/gid are optional together (the minimal MARK form omits them).
    """

    index: int
    rtype: RecordType
    ts_ns: int
    flags: int
    target: Fid
    ext_flags: Optional[int] = None
    uid: Optional[int] = None
    gid: Optional[int] = None
    nid: Optional[Nid] = None
    mode_mask: Optional[str] = None
    parent: Optional[Fid] = None
    name: Optional[str] = None

    def __post_init__(self):
        if self.index < 1 or self.index > U64_MAX:
            raise ValueError(f"record index out of range: {self.index}")
        # upper bound keeps the timestamp renderable as a yyyy < 10000 date
        if not (0 <= self.ts_ns < 253_402_300_800 * NS_PER_SEC):
            raise ValueError(f"timestamp out of range: {self.ts_ns}")
        if (self.uid is None) != (self.gid is None):
            raise ValueError("uid and gid must be present together")
        for v in (self.uid, self.gid):
            if v is not None and not (0 <= v <= U32_MAX):
                raise ValueError(f"uid/gid out of range: {v}")
        if self.mode_mask is not None and not _MODE_MASK_RE.fullmatch(self.mode_mask):
            raise ValueError(f"bad mode mask: {self.mode_mask!r}")
        if (self.parent is None) != (self.name is None):
            raise ValueError("parent and name must be present together")
        if self.name is not None:
            _validate_name(self.name)
        if self.rtype.name in _NAMESPACE_TYPES and self.parent is None:
            raise ValueError(f"{self.rtype.name} requires parent and name")
        if self.rtype.name in ("OPEN", "NOPEN") and (
            self.mode_mask is None or self.uid is None or self.nid is None
        ):
            raise ValueError(f"{self.rtype.name} requires mode mask, uid:gid and nid")


class _Cursor:
    """Token scanner over one changelog line; tracks byte position for errors."""

    def __init__(self, line: str):
        self.line = line
        self.pos = 0
        self.tok_start = 0

    def fail(self, reason: str):
        raise MalformedRecord(self.tok_start, reason)

    @property
    def done(self) -> bool:
        return self.pos >= len(self.line)

    def peek(self) -> str:
        rest = self.line[self.pos :]
        return rest.split(" ", 1)[0]

    def take(self, what: str) -> str:
        self.tok_start = self.pos
        if self.done:
            self.fail(f"expected {what}, got end of line")
        tok = self.peek()
        if not tok:
            self.fail(f"expected {what}, got empty token")
        self.pos += len(tok)
        if self.pos < len(self.line):
            if self.line[self.pos] != " ":
                self.fail("expected single space separator")
            self.pos += 1
        return tok

    def take_rest(self, what: str) -> str:
        """Consume the remainder of the line verbatim (final field)."""
        self.tok_start = self.pos
        if self.done:
            self.fail(f"expected {what}, got end of line")
        rest = self.line[self.pos :]
        self.pos = len(self.line)
        return rest


def _parse_hex_word(tok: str, cur: _Cursor, what: str) -> int:
    m = re.fullmatch(r"0[xX]([0-9a-fA-F]+)", tok)
    if not m:
        cur.fail(f"expected {what} as 0x-hex word, got {tok!r}")
    return int(m.group(1), 16)


def _parse_timestamp(cur: _Cursor) -> int:
    time_tok = cur.take("time of day")
    tm = re.fullmatch(r"(\d{2}):(\d{2}):(\d{2})\.(\d{1,9})", time_tok, re.ASCII)
    if not tm:
        cur.fail(f"expected hh:mm:ss.frac time, got {time_tok!r}")
    hh, mm, ss = int(tm.group(1)), int(tm.group(2)), int(tm.group(3))
    if hh > 23 or mm > 59 or ss > 59:
        cur.fail(f"time of day out of range: {time_tok!r}")
    frac_ns = int(tm.group(4).ljust(9, "0"))

    date_tok = cur.take("date")
    dm = re.fullmatch(r"(\d{4})\.(\d{2})\.(\d{2})", date_tok, re.ASCII)
    if not dm:
        cur.fail(f"expected yyyy.mm.dd date, got {date_tok!r}")
    try:
        day = datetime(
            int(dm.group(1)), int(dm.group(2)), int(dm.group(3)), tzinfo=timezone.utc
        )
    except ValueError as e:
        cur.fail(f"bad calendar date: {e}")
    secs = int(day.timestamp()) + hh * 3600 + mm * 60 + ss
    return secs * NS_PER_SEC + frac_ns


def parse_record(line: str) -> ChangelogRecord:
    """Parse one changelog line; raises MalformedRecord or UnknownType."""
    line = line.rstrip("\r\n")
    if not line:
        raise MalformedRecord(0, "empty line")
    cur = _Cursor(line)

    tok = cur.take("record index")
    if not re.fullmatch(r"[0-9]+", tok):
        cur.fail(f"expected decimal index, got {tok!r}")
    index = int(tok)
    if index < 1 or index > U64_MAX:
        cur.fail(f"index out of range: {index}")

    tok = cur.take("record type")
    m = re.fullmatch(r"(\d{2})([A-Z]+)", tok, re.ASCII)
    if not m:
        cur.fail(f"expected <2-digit code><NAME> type token, got {tok!r}")
    rtype = type_by_name(m.group(2))
    if rtype.code != int(m.group(1)):
        cur.fail(f"type code {m.group(1)} does not match {m.group(2)}")

    ts_ns = _parse_timestamp(cur)

    flags = _parse_hex_word(cur.take("flags word"), cur, "flags")

    tok = cur.take("target fid")
    if not tok.startswith("t=["):
        cur.fail(f"expected t=[<fid>], got {tok!r}")
    try:
        target = Fid.parse(tok[2:])
    except ValueError as e:
        cur.fail(str(e))

    ext_flags = uid = gid = nid = mode_mask = parent = name = None

    if not cur.done and cur.peek().startswith("ef="):
        ext_flags = _parse_hex_word(cur.take("ext flags")[3:], cur, "ef")
    if not cur.done and cur.peek().startswith("u="):
        tok = cur.take("uid:gid")[2:]
        um = re.fullmatch(r"([0-9]+):([0-9]+)", tok)
        if not um:
            cur.fail(f"expected u=<uid>:<gid>, got {tok!r}")
        uid, gid = int(um.group(1)), int(um.group(2))
        if uid > U32_MAX or gid > U32_MAX:
            cur.fail("uid/gid out of range")
    if not cur.done and cur.peek().startswith("nid="):
        tok = cur.take("nid")[4:]
        try:
            nid = Nid.parse(tok)
        except ValueError as e:
            cur.fail(str(e))
    if not cur.done and cur.peek().startswith("m="):
        mode_mask = cur.take("mode mask")[2:]
        if not _MODE_MASK_RE.fullmatch(mode_mask):
            cur.fail(f"expected 3-char rwx mask, got {mode_mask!r}")
    if not cur.done and cur.peek().startswith("p="):
        tok = cur.take("parent fid")
        if not tok.startswith("p=["):
            cur.fail(f"expected p=[<fid>], got {tok!r}")
        try:
            parent = Fid.parse(tok[2:])
        except ValueError as e:
            cur.fail(str(e))
        name = cur.take_rest("filename")
        try:
            _validate_name(name)
        except ValueError as e:
            cur.fail(str(e))

    if not cur.done:
        cur.fail(f"trailing garbage: {cur.peek()!r}")

    try:
        return ChangelogRecord(
            index=index,
            rtype=rtype,
            ts_ns=ts_ns,
            flags=flags,
            target=target,
            ext_flags=ext_flags,
            uid=uid,
            gid=gid,
            nid=nid,
            mode_mask=mode_mask,
            parent=parent,
            name=name,
        )
    except ValueError as e:
        raise MalformedRecord(len(line), str(e)) from None


def render_record(r: ChangelogRecord) -> str:
    """Canonical line form: lowercase 0x hex, 9 fractional digits, fixed order."""
    secs, frac = divmod(r.ts_ns, NS_PER_SEC)
    dt = datetime.fromtimestamp(secs, tz=timezone.utc)
    parts = [
        str(r.index),
        str(r.rtype),
        f"{dt:%H:%M:%S}.{frac:09d}",
        f"{dt:%Y.%m.%d}",
        f"0x{r.flags:x}",
        f"t={r.target}",
    ]
    if r.ext_flags is not None:
        parts.append(f"ef=0x{r.ext_flags:x}")
    if r.uid is not None:
        parts.append(f"u={r.uid}:{r.gid}")
    if r.nid is not None:
        parts.append(f"nid={r.nid}")
    if r.mode_mask is not None:
        parts.append(f"m={r.mode_mask}")
    if r.parent is not None:
        parts.append(f"p={r.parent}")
        parts.append(r.name)
    return " ".join(parts)


# Flat JSON field order for stored/served events; also the hashing order.
EVENT_FIELDS = (
    "device",
    "index",
    "type_code",
    "type_name",
    "ts_utc",
    "flags",
    "fid",
    "ext_flags",
    "uid",
    "gid",
    "nid",
    "mode_mask",
    "parent_fid",
    "name",
    "ingested_at",
    "chain_digest",
)

GENESIS_DIGEST = bytes(32)


@dataclass(frozen=True)
class AuditEvent:
    """A changelog record normalized for storage: device + record + ingestion metadata."""

    device: str
    record: ChangelogRecord
    ingested_at: int = 0
    chain_digest: bytes = b""

    @property
    def index(self) -> int:
        return self.record.index

    @property
    def ts_utc(self) -> int:
        return self.record.ts_ns

    def key(self) -> tuple[str, int]:
        return (self.device, self.record.index)

    def to_dict(self) -> dict:
        r = self.record
        return {
            "device": self.device,
            "index": r.index,
            "type_code": r.rtype.code,
            "type_name": r.rtype.name,
            "ts_utc": r.ts_ns,
            "flags": f"0x{r.flags:x}",
            "fid": str(r.target),
            "ext_flags": None if r.ext_flags is None else f"0x{r.ext_flags:x}",
            "uid": r.uid,
            "gid": r.gid,
            "nid": None if r.nid is None else str(r.nid),
            "mode_mask": r.mode_mask,
            "parent_fid": None if r.parent is None else str(r.parent),
            "name": r.name,
            "ingested_at": self.ingested_at,
            "chain_digest": self.chain_digest.hex(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AuditEvent":
        rec = ChangelogRecord(
            index=d["index"],
            rtype=type_by_code(d["type_code"], denied=d["type_name"] == "NOPEN"),
            ts_ns=d["ts_utc"],
            flags=int(d["flags"], 16),
            target=Fid.parse(d["fid"]),
            ext_flags=None if d["ext_flags"] is None else int(d["ext_flags"], 16),
            uid=d["uid"],
            gid=d["gid"],
            nid=None if d["nid"] is None else Nid.parse(d["nid"]),
            mode_mask=d["mode_mask"],
            parent=None if d["parent_fid"] is None else Fid.parse(d["parent_fid"]),
            name=d["name"],
        )
        if rec.rtype.name != d["type_name"]:
            raise ValueError(f"type name/code mismatch: {d['type_name']}")
        return cls(
            device=d["device"],
            record=rec,
            ingested_at=d["ingested_at"],
            chain_digest=bytes.fromhex(d["chain_digest"]),
        )

    def canonical_bytes(self) -> bytes:
        """Bytes hashed into the chain: all fields except ingestion metadata."""
        d = self.to_dict()
        del d["ingested_at"]
        del d["chain_digest"]
        return json.dumps(d, separators=(",", ":"), ensure_ascii=False).encode("utf-8")

    def with_chain(self, ingested_at: int, digest: bytes) -> "AuditEvent":
        return replace(self, ingested_at=ingested_at, chain_digest=digest)
