import importlib.resources

import pytest

from chaudit.errors import (
    Exists,
    IndexOutOfRange,
    IsDir,
    NoEnt,
    NoSpace,
    NotEmpty,
    PermissionDenied,
    ScriptParse,
    UnknownDevice,
    UnknownUser,
)
from chaudit.model import Nid, parse_record
from chaudit.simfs import (
    ClientCtx,
    GIB,
    MIB,
    SimFs,
    Target,
    Topology,
    format_size,
    parse_size,
    parse_workload,
)

DEV = "lustre-MDT0000"
ROOT_CTX = ClientCtx(0, 0, Nid("10.0.0.1", "tcp"))
USER_CTX = ClientCtx(500, 500, Nid("10.128.11.159", "tcp"))
OTHER_CTX = ClientCtx(501, 501, Nid("10.128.11.160", "tcp"))


@pytest.fixture
def fs():
    return SimFs()


@pytest.fixture
def reader(fs):
    userid = fs.changelog_register(DEV)
    return fs, userid


def records(fs, userid, since=0):
    return fs.changelog_read(DEV, userid, since)


class TestRegistration:
    def test_first_user_is_cl1(self, fs):
        assert fs.changelog_register(DEV) == "cl1"

    def test_second_user_is_cl2(self, fs):
        fs.changelog_register(DEV)
        assert fs.changelog_register(DEV) == "cl2"

    def test_register_emits_mark(self, reader):
        fs, userid = reader
        recs = records(fs, userid)
        assert [r.rtype.name for r in recs] == ["MARK"]

    def test_unknown_device(self, fs):
        with pytest.raises(UnknownDevice):
            fs.changelog_register("lustre-MDT0001")


class TestMask:
    def test_all_enables_everything(self, reader):
        fs, userid = reader
        assert len(fs.set_mask(DEV, "ALL")) == 25

    def test_mask_change_emits_mark(self, reader):
        fs, userid = reader
        fs.set_mask(DEV, ["CREAT"])
        assert records(fs, userid)[-1].rtype.name == "MARK"

    def test_empty_mask_emits_only_mark(self, reader):
        fs, userid = reader
        fs.set_mask(DEV, [])
        fs.create(ROOT_CTX, "/f")
        fs.touch_atime(ROOT_CTX, "/f")
        assert {r.rtype.name for r in records(fs, userid)} == {"MARK"}

    def test_mask_without_atime_suppresses_atime(self, reader):
        fs, userid = reader
        fs.set_mask(DEV, ["CREAT"])
        fs.create(ROOT_CTX, "/f")
        before = len(records(fs, userid))
        fs.touch_atime(ROOT_CTX, "/f")
        assert len(records(fs, userid)) == before
        fs.set_mask(DEV, "ALL")
        fs.touch_atime(ROOT_CTX, "/f")
        assert records(fs, userid)[-1].rtype.name == "ATIME"

    def test_unknown_type_rejected(self, fs):
        from chaudit.errors import UnknownType

        with pytest.raises(UnknownType):
            fs.set_mask(DEV, ["WRITE"])


class TestEmissionTable:
    CASES = [
        ("mkdir", lambda fs: fs.mkdir(ROOT_CTX, "/d"), "MKDIR"),
        ("create", lambda fs: fs.create(ROOT_CTX, "/f"), "CREAT"),
        ("mknod", lambda fs: fs.mknod(ROOT_CTX, "/dev0"), "MKNOD"),
        ("symlink", lambda fs: fs.symlink(ROOT_CTX, "/f", "/s"), "SLINK"),
    ]

    @pytest.mark.parametrize("name,op,expected", CASES, ids=[c[0] for c in CASES])
    def test_creation_ops(self, reader, name, op, expected):
        fs, userid = reader
        op(fs)
        rec = records(fs, userid)[-1]
        assert rec.rtype.name == expected
        assert rec.parent is not None and rec.name is not None
        assert (rec.uid, rec.gid) == (0, 0)
        assert rec.nid == ROOT_CTX.nid

    def test_full_file_lifecycle(self, reader):
        fs, userid = reader
        fs.create(ROOT_CTX, "/f")
        fs.open(ROOT_CTX, "/f", "-w-")
        fs.write(ROOT_CTX, "/f", 4096)
        fs.close(ROOT_CTX, "/f")
        fs.truncate(ROOT_CTX, "/f", 100)
        fs.chmod(ROOT_CTX, "/f", 0o600)
        fs.setxattr(ROOT_CTX, "/f", "user.tag", b"x")
        fs.getxattr(ROOT_CTX, "/f", "user.tag")
        fs.link(ROOT_CTX, "/f", "/f2")
        fs.layout_change(ROOT_CTX, "/f")
        fs.migrate(ROOT_CTX, "/f")
        fs.hsm_event(ROOT_CTX, "/f")
        fs.flr_write(ROOT_CTX, "/f")
        fs.flr_resync(ROOT_CTX, "/f")
        fs.touch_ctime(ROOT_CTX, "/f")
        fs.unlink(ROOT_CTX, "/f2")
        names = [r.rtype.name for r in records(fs, userid)]
        assert names == [
            "MARK", "CREAT", "OPEN", "MTIME", "CLOSE", "TRUNC", "SATTR",
            "XATTR", "GXATR", "HLINK", "LYOUT", "MIGRT", "HSM", "FLRW",
            "RESYNC", "CTIME", "UNLNK",
        ]

    def test_rename_emits_pair(self, reader):
        fs, userid = reader
        fid = fs.create(ROOT_CTX, "/a")
        fs.rename(ROOT_CTX, "/a", "/b")
        recs = records(fs, userid)[-2:]
        assert [r.rtype.name for r in recs] == ["RENME", "RNMTO"]
        assert recs[0].name == "a" and recs[1].name == "b"
        assert recs[0].target == recs[1].target == fid
        assert recs[1].index == recs[0].index + 1

    def test_rmdir(self, reader):
        fs, userid = reader
        fs.mkdir(ROOT_CTX, "/d")
        fs.rmdir(ROOT_CTX, "/d")
        assert records(fs, userid)[-1].rtype.name == "RMDIR"

    def test_indices_gapless(self, reader):
        fs, userid = reader
        for i in range(5):
            fs.create(ROOT_CTX, f"/f{i}")
        recs = records(fs, userid)
        assert [r.index for r in recs] == list(range(1, len(recs) + 1))


class TestPermissions:
    def test_denied_open_emits_nopen(self, reader):
        fs, userid = reader
        fs.create(USER_CTX, "/secret", 0o600)
        with pytest.raises(PermissionDenied):
            fs.open(OTHER_CTX, "/secret", "-w-")
        rec = records(fs, userid)[-1]
        assert rec.rtype.name == "NOPEN"
        assert rec.mode_mask == "-w-"
        assert (rec.uid, rec.gid) == (501, 501)

    def test_denied_open_mutates_nothing(self, fs):
        fs.create(USER_CTX, "/secret", 0o600)
        fs.write(USER_CTX, "/secret", 100)
        before_df = fs.df().to_dict()
        before_size = fs.stat(ROOT_CTX, "/secret").size
        with pytest.raises(PermissionDenied):
            fs.open(OTHER_CTX, "/secret", "-w-")
        assert fs.df().to_dict() == before_df
        assert fs.stat(ROOT_CTX, "/secret").size == before_size

    def test_owner_open_granted(self, fs):
        fs.create(USER_CTX, "/own", 0o600)
        fs.open(USER_CTX, "/own", "rw-")

    def test_group_bits(self, fs):
        fs.create(USER_CTX, "/g", 0o640)
        group_ctx = ClientCtx(502, 500, OTHER_CTX.nid)
        fs.open(group_ctx, "/g", "r--")
        with pytest.raises(PermissionDenied):
            fs.open(group_ctx, "/g", "-w-")

    def test_root_bypasses(self, fs):
        fs.create(USER_CTX, "/p", 0o000)
        fs.open(ROOT_CTX, "/p", "rwx")

    def test_non_owner_chmod_denied(self, fs):
        fs.create(USER_CTX, "/f", 0o644)
        with pytest.raises(PermissionDenied):
            fs.chmod(OTHER_CTX, "/f", 0o777)

    def test_create_in_unwritable_dir(self, fs):
        fs.mkdir(ROOT_CTX, "/locked", 0o755)
        with pytest.raises(PermissionDenied):
            fs.create(USER_CTX, "/locked/f")


class TestNamespaceErrors:
    def test_noent(self, fs):
        with pytest.raises(NoEnt):
            fs.open(ROOT_CTX, "/missing", "r--")

    def test_exists(self, fs):
        fs.create(ROOT_CTX, "/f")
        with pytest.raises(Exists):
            fs.create(ROOT_CTX, "/f")

    def test_isdir(self, fs):
        fs.mkdir(ROOT_CTX, "/d")
        with pytest.raises(IsDir):
            fs.unlink(ROOT_CTX, "/d")

    def test_notempty(self, fs):
        fs.mkdir(ROOT_CTX, "/d")
        fs.create(ROOT_CTX, "/d/f")
        with pytest.raises(NotEmpty):
            fs.rmdir(ROOT_CTX, "/d")

    def test_hardlink_preserves_until_last_unlink(self, fs):
        fs.create(ROOT_CTX, "/f")
        fs.write(ROOT_CTX, "/f", 10)
        fs.link(ROOT_CTX, "/f", "/f2")
        fs.unlink(ROOT_CTX, "/f")
        assert fs.stat(ROOT_CTX, "/f2").size == 10
        fs.unlink(ROOT_CTX, "/f2")
        assert fs.live_bytes() == 0


class TestChangelogReadClear:
    def test_fresh_device_empty(self, reader):
        fs, userid = reader
        fs.changelog_clear(DEV, userid, fs.latest_index())
        assert records(fs, userid) == []

    def test_three_creates(self, reader):
        fs, userid = reader
        fs.changelog_clear(DEV, userid, fs.latest_index())
        for i in range(3):
            fs.create(ROOT_CTX, f"/f{i}")
        recs = records(fs, userid)
        assert [r.rtype.name for r in recs] == ["CREAT"] * 3
        assert recs[2].index == recs[0].index + 2

    def test_since_suffix(self, reader):
        fs, userid = reader
        for i in range(3):
            fs.create(ROOT_CTX, f"/f{i}")
        all_recs = records(fs, userid)
        assert records(fs, userid, since=all_recs[-2].index) == [all_recs[-1]]

    def test_read_does_not_mutate(self, reader):
        fs, userid = reader
        fs.create(ROOT_CTX, "/f")
        assert records(fs, userid) == records(fs, userid)

    def test_single_user_clear_purges(self, reader):
        fs, userid = reader
        fs.create(ROOT_CTX, "/f")
        n = fs.latest_index()
        assert fs.changelog_clear(DEV, userid, n) == n
        assert records(fs, userid) == []

    def test_two_users_min_rule(self, fs):
        u1 = fs.changelog_register(DEV)
        u2 = fs.changelog_register(DEV)
        # drain the registration MARKs so both users start even
        setup = fs.latest_index()
        fs.changelog_clear(DEV, u1, setup)
        fs.changelog_clear(DEV, u2, setup)
        fs.create(ROOT_CTX, "/f")
        n = fs.latest_index()
        assert fs.changelog_clear(DEV, u1, n) == 0
        assert records(fs, u2) != []
        assert fs.changelog_clear(DEV, u2, n) > 0

    def test_clear_zero_noop(self, reader):
        fs, userid = reader
        fs.create(ROOT_CTX, "/f")
        assert fs.changelog_clear(DEV, userid, 0) == 0

    def test_clear_out_of_range(self, reader):
        fs, userid = reader
        with pytest.raises(IndexOutOfRange):
            fs.changelog_clear(DEV, userid, fs.latest_index() + 1)

    def test_indices_continue_after_clear(self, reader):
        fs, userid = reader
        fs.create(ROOT_CTX, "/f1")
        n = fs.latest_index()
        fs.changelog_clear(DEV, userid, n)
        fs.create(ROOT_CTX, "/f2")
        assert records(fs, userid)[0].index == n + 1

    def test_unknown_user(self, fs):
        with pytest.raises(UnknownUser):
            fs.changelog_read(DEV, "cl9")


class TestCapacity:
    def test_default_topology_rows(self, fs):
        rep = fs.df()
        assert len(rep.rows) == 13
        assert rep.rows[0].uuid == "lustre-MDT0000_UID"
        assert format_size(rep.rows[0].total) == "1.1G"
        for row in rep.rows[1:]:
            assert format_size(row.total) == "1.8G"
        assert rep.rows[1].uuid == "lustre-OST0000_UID"
        assert rep.rows[12].uuid == "lustre-OST000b_UID"
        assert rep.rows[12].mounted == "/mnt/lustre[OST:11]"

    def test_summary_is_ost_sums(self, fs):
        fs.create(ROOT_CTX, "/f")
        fs.write(ROOT_CTX, "/f", 123456)
        rep = fs.df()
        osts = rep.rows[1:]
        assert rep.summary.total == sum(r.total for r in osts)
        assert rep.summary.used == sum(r.used for r in osts)
        assert rep.summary.available == sum(r.available for r in osts)
        assert rep.summary.uuid == "filesystem_summary:"

    def test_write_shows_in_used_column(self, fs):
        fs.create(ROOT_CTX, "/f")
        fs.write(ROOT_CTX, "/f", int(1.2 * MIB))
        rep = fs.df()
        used = [format_size(r.used) for r in rep.rows[1:]]
        assert used.count("1.2M") == 1

    def test_text_layout(self, fs):
        text = fs.df().render_text()
        lines = text.splitlines()
        assert lines[0].startswith("UUID")
        assert lines[0].rstrip().endswith("Mounted on")
        assert len(lines) == 15
        assert lines[-1].startswith("filesystem_summary:")
        assert "/mnt/lustre[MDT:0]" in lines[1]

    def test_nospace(self):
        topo = Topology(
            mdt=Target("lustre-MDT0000", GIB),
            osts=[Target("lustre-OST0000", 1 * MIB)],
        )
        fs = SimFs(topology=topo)
        fs.create(ROOT_CTX, "/f")
        fs.write(ROOT_CTX, "/f", MIB)
        with pytest.raises(NoSpace):
            fs.write(ROOT_CTX, "/f", 1)

    def test_conservation(self, fs):
        for i in range(5):
            fs.create(ROOT_CTX, f"/f{i}")
            fs.write(ROOT_CTX, f"/f{i}", 1000 * (i + 1))
        fs.unlink(ROOT_CTX, "/f2")
        assert sum(o.used for o in fs.topology.osts) == fs.live_bytes()

    def test_round_robin_stripes(self, fs):
        for i in range(14):
            fs.create(ROOT_CTX, f"/f{i}")
            fs.write(ROOT_CTX, f"/f{i}", 100)
        used = [o.used for o in fs.topology.osts]
        assert used[0] == 200 and used[1] == 200
        assert all(u == 100 for u in used[2:])


class TestRecordsAreParseable:
    def test_all_emitted_lines_round_trip(self, reader):
        fs, userid = reader
        fs.set_mask(DEV, "ALL")
        fs.mkdir(ROOT_CTX, "/d")
        fs.create(ROOT_CTX, "/d/f")
        fs.open(ROOT_CTX, "/d/f", "rw-")
        fs.rename(ROOT_CTX, "/d/f", "/d/g")
        fs.unlink(ROOT_CTX, "/d/g")
        lines = fs.changelog_read_lines(DEV, userid)
        recs = records(fs, userid)
        assert [parse_record(l) for l in lines] == recs

    def test_timestamps_nondecreasing(self, reader):
        fs, userid = reader
        for i in range(10):
            fs.create(ROOT_CTX, f"/f{i}")
        ts = [r.ts_ns for r in records(fs, userid)]
        assert ts == sorted(ts)


class TestWorkload:
    def test_create100(self, reader):
        fs, userid = reader
        wl = (
            importlib.resources.files("chaudit")
            .joinpath("workloads/create100.wl")
            .read_text()
        )
        assert fs.run_workload(wl) == 400
        counts = {}
        for r in records(fs, userid):
            counts[r.rtype.name] = counts.get(r.rtype.name, 0) + 1
        assert counts == {"MARK": 1, "CREAT": 100, "OPEN": 100, "MTIME": 100,
                          "CLOSE": 100}

    def test_empty_script(self, fs):
        assert fs.run_workload("") == 0
        assert fs.run_workload("# comments only\n\n") == 0

    def test_ctx_directive(self, reader):
        fs, userid = reader
        fs.run_workload("ctx 500 500 10.0.0.9@tcp\nmkdir /home 0777\n")
        rec = records(fs, userid)[-1]
        assert (rec.uid, rec.gid) == (500, 500)
        assert str(rec.nid) == "10.0.0.9@tcp"

    def test_nospace_deterministic(self):
        topo = Topology(
            mdt=Target("lustre-MDT0000", GIB),
            osts=[Target("lustre-OST0000", 5 * MIB)],
        )
        fs = SimFs(topology=topo)
        script = "repeat 10 {\ncreate /f$i 0644\nwrite /f$i 1M\n}\n"
        with pytest.raises(NoSpace):
            fs.run_workload(script)
        # 5 create+write pairs succeed, the 6th write overflows
        assert fs.live_bytes() == 5 * MIB

    @pytest.mark.parametrize(
        "bad",
        ["frobnicate /x", "create /f", "repeat x {", "repeat 2 {\ncreate /f 0644",
         "}", "chmod /f 99", "write /f 10Q", "ctx a b c"],
    )
    def test_script_parse_errors(self, fs, bad):
        with pytest.raises(ScriptParse):
            fs.run_workload(bad)

    def test_parse_size(self):
        assert parse_size("10M") == 10 * MIB
        assert parse_size("1G") == GIB
        assert parse_size("512") == 512

    def test_sequential_repeats(self, fs):
        script = (
            "repeat 2 {\nmkdir /d$i 0755\n}\n"
            "repeat 3 {\ncreate /f$i 0644\n}\n"
        )
        assert fs.run_workload(script) == 5
