/**
 * Trail presentation: a rename is emitted by the changelog as two
 * consecutive records (RENME at the source, RNMTO at the destination);
 * the trail view shows them as a single "old -> new" step.
 */

import type { AuditEvent } from "./types.js";

export type TrailStep =
  | { kind: "event"; event: AuditEvent }
  | { kind: "rename"; from: string; to: string; source: AuditEvent; dest: AuditEvent };

export function collapseRenames(events: AuditEvent[]): TrailStep[] {
  const steps: TrailStep[] = [];
  for (let i = 0; i < events.length; i++) {
    const ev = events[i]!;
    const next = events[i + 1];
    if (
      ev.type_name === "RENME" &&
      next !== undefined &&
      next.type_name === "RNMTO" &&
      next.device === ev.device &&
      next.index === ev.index + 1
    ) {
      steps.push({
        kind: "rename",
        from: ev.name ?? "?",
        to: next.name ?? "?",
        source: ev,
        dest: next,
      });
      i++; // the RNMTO is consumed
    } else {
      steps.push({ kind: "event", event: ev });
    }
  }
  return steps;
}
