/**
 * Live-tail bookkeeping: exactly-once presentation per (device,index) and
 * a monotone resume cursor, independent of how often the stream reconnects.
 */

import type { AuditEvent } from "./types.js";

export class LiveTail {
  private readonly seen = new Set<string>();
  private readonly highWater = new Map<string, number>();
  private last: { device: string; index: number } | null = null;

  /** True when the event is new for this session; false for duplicates. */
  accept(ev: Pick<AuditEvent, "device" | "index">): boolean {
    const key = `${ev.device}:${ev.index}`;
    if (this.seen.has(key)) return false;
    this.seen.add(key);
    const high = this.highWater.get(ev.device) ?? 0;
    if (ev.index > high) this.highWater.set(ev.device, ev.index);
    if (
      this.last === null ||
      ev.device !== this.last.device ||
      ev.index > this.last.index
    ) {
      this.last = { device: ev.device, index: ev.index };
    }
    return true;
  }

  /** Resume cursor in the stream's Last-Event-Id format, or null. */
  get cursor(): string | null {
    return this.last ? `${this.last.device}:${this.last.index}` : null;
  }

  /** Highest accepted index for a device (0 when none). */
  highWaterMark(device: string): number {
    return this.highWater.get(device) ?? 0;
  }

  get size(): number {
    return this.seen.size;
  }
}
