import { describe, expect, it } from "vitest";

import { collapseRenames } from "./trail.js";
import type { AuditEvent } from "./types.js";

function ev(index: number, type_name: string, name: string | null = null): AuditEvent {
  return {
    device: "lustre-MDT0000",
    index,
    type_code: 0,
    type_name,
    ts_utc: index * 1_000_000,
    flags: "0x0",
    fid: "[0x200000401:0x2:0x0]",
    ext_flags: null,
    uid: 500,
    gid: 500,
    nid: "10.0.0.1@tcp",
    mode_mask: null,
    parent_fid: null,
    name,
    ingested_at: 0,
    chain_digest: "",
  };
}

describe("collapseRenames", () => {
  it("merges a consecutive RENME/RNMTO pair into one step", () => {
    const steps = collapseRenames([
      ev(1, "CREAT", "old"),
      ev(2, "SATTR"),
      ev(3, "RENME", "old"),
      ev(4, "RNMTO", "new"),
      ev(5, "UNLNK", "new"),
    ]);
    expect(steps).toHaveLength(4);
    expect(steps.map((s) => s.kind)).toEqual([
      "event", "event", "rename", "event",
    ]);
    const rename = steps[2]!;
    if (rename.kind !== "rename") throw new Error("expected rename step");
    expect(rename.from).toBe("old");
    expect(rename.to).toBe("new");
    expect(rename.source.index).toBe(3);
    expect(rename.dest.index).toBe(4);
  });

  it("leaves a RENME without its partner alone", () => {
    const steps = collapseRenames([ev(1, "RENME", "old"), ev(3, "RNMTO", "new")]);
    // indices 1 and 3 are not consecutive: the pair belongs to different ops
    expect(steps.map((s) => s.kind)).toEqual(["event", "event"]);
  });

  it("does not pair records across devices", () => {
    const a = ev(1, "RENME", "old");
    const b = { ...ev(2, "RNMTO", "new"), device: "lustre-MDT0001" };
    expect(collapseRenames([a, b]).map((s) => s.kind)).toEqual([
      "event", "event",
    ]);
  });

  it("handles empty and rename-only trails", () => {
    expect(collapseRenames([])).toEqual([]);
    const only = collapseRenames([ev(1, "RENME", "a"), ev(2, "RNMTO", "b")]);
    expect(only).toHaveLength(1);
    expect(only[0]!.kind).toBe("rename");
  });

  it("collapses multiple renames in one trail", () => {
    const steps = collapseRenames([
      ev(1, "RENME", "a"), ev(2, "RNMTO", "b"),
      ev(3, "RENME", "b"), ev(4, "RNMTO", "c"),
    ]);
    expect(steps.map((s) => s.kind)).toEqual(["rename", "rename"]);
  });
});
