/** DOM builders for the four views. Pure construction, no fetching. */

import type {
  AuditEvent,
  CapacityReport,
  DeniedOpenRow,
  TimelineResponse,
} from "./types.js";
import { collapseRenames } from "./trail.js";
import { formatBucketLabel, formatOwner, formatSize, formatTime } from "./format.js";

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  node.append(...children);
  return node;
}

export function fidLink(fid: string, onNavigate: (fid: string) => void): HTMLElement {
  const a = el("a", { href: `#/trail?fid=${encodeURIComponent(fid)}`, class: "fid" }, fid);
  a.addEventListener("click", (e) => {
    e.preventDefault();
    onNavigate(fid);
  });
  return a;
}

export const EVENT_COLUMNS = [
  "index", "time", "type", "fid", "name", "uid:gid", "nid", "mode",
] as const;

export function eventRow(ev: AuditEvent, onFid: (fid: string) => void): HTMLTableRowElement {
  return el(
    "tr",
    { "data-key": `${ev.device}:${ev.index}` },
    el("td", { class: "num" }, String(ev.index)),
    el("td", { class: "time" }, formatTime(ev.ts_utc)),
    el("td", {}, el("span", { class: `badge t-${ev.type_name}` }, ev.type_name)),
    el("td", {}, fidLink(ev.fid, onFid)),
    el("td", {}, ev.name ?? ""),
    el("td", { class: "num" }, formatOwner(ev.uid, ev.gid)),
    el("td", {}, ev.nid ?? ""),
    el("td", { class: "mode" }, ev.mode_mask ?? ""),
  );
}

export function eventTable(onFid: (fid: string) => void): {
  table: HTMLTableElement;
  body: HTMLTableSectionElement;
  append: (ev: AuditEvent) => void;
} {
  const body = el("tbody");
  const table = el(
    "table",
    { class: "events" },
    el("thead", {}, el("tr", {}, ...EVENT_COLUMNS.map((c) => el("th", {}, c)))),
    body,
  );
  return { table, body, append: (ev) => body.appendChild(eventRow(ev, onFid)) };
}

export function emptyState(message: string): HTMLElement {
  return el("p", { class: "empty" }, message);
}

export function errorBanner(message: string, onRetry: () => void): HTMLElement {
  const retry = el("button", { class: "retry" }, "Retry");
  retry.addEventListener("click", onRetry);
  return el("div", { class: "banner error" }, `API error: ${message} `, retry);
}

export function trailList(
  events: AuditEvent[],
  onFid: (fid: string) => void,
): HTMLElement {
  if (!events.length) return emptyState("No events recorded for this fid.");
  const items = collapseRenames(events).map((step) => {
    if (step.kind === "rename") {
      return el(
        "li",
        { class: "step rename" },
        el("span", { class: "badge t-RENME" }, "RENAME"),
        ` ${step.from} → ${step.to} `,
        el("span", { class: "time" }, formatTime(step.source.ts_utc)),
      );
    }
    const ev = step.event;
    return el(
      "li",
      { class: "step" },
      el("span", { class: `badge t-${ev.type_name}` }, ev.type_name),
      ev.name ? ` ${ev.name} ` : " ",
      ev.parent_fid ? fidLink(ev.parent_fid, onFid) : "",
      " ",
      el("span", { class: "time" }, formatTime(ev.ts_utc)),
      el("span", { class: "owner" }, ` ${formatOwner(ev.uid, ev.gid)}`),
    );
  });
  return el("ol", { class: "trail" }, ...items);
}

export function countsPanel(
  title: string,
  counts: Record<string, number>,
  onPick?: (key: string) => void,
): HTMLElement {
  const entries = Object.entries(counts).sort((a, b) => b[1] - a[1]);
  const max = entries.length ? entries[0]![1] : 0;
  const rows = entries.map(([key, n]) => {
    const bar = el("div", { class: "bar" });
    bar.style.width = max ? `${(100 * n) / max}%` : "0";
    const row = el(
      "div",
      { class: "count-row", "data-key": key },
      el("span", { class: "key" }, key),
      bar,
      el("span", { class: "num" }, String(n)),
    );
    if (onPick) {
      row.classList.add("clickable");
      row.addEventListener("click", () => onPick(key));
    }
    return row;
  });
  return el(
    "section",
    { class: "panel" },
    el("h3", {}, title),
    rows.length ? el("div", {}, ...rows) : emptyState("No events."),
  );
}

export function timelinePanel(tl: TimelineResponse): HTMLElement {
  const max = Math.max(1, ...tl.buckets.map((b) => b.count));
  const bars = tl.buckets.map((b) =>
    el(
      "div",
      {
        class: "tl-bar",
        title: `${formatBucketLabel(b.start)} — ${b.count} events`,
        style: `height:${Math.max(2, (100 * b.count) / max)}%`,
      },
    ),
  );
  return el(
    "section",
    { class: "panel" },
    el("h3", {}, `Timeline (${tl.bucket_seconds}s buckets)`),
    tl.buckets.length
      ? el("div", { class: "timeline" }, ...bars)
      : emptyState("No events."),
  );
}

export function deniedOpensPanel(
  rows: DeniedOpenRow[],
  onDrill: (uid: number) => void,
): HTMLElement {
  const body = rows.map((r) => {
    const tr = el(
      "tr",
      { class: "clickable" },
      el("td", { class: "num" }, String(r.uid)),
      el("td", {}, r.nid),
      el("td", { class: "num" }, String(r.count)),
      el("td", { class: "time" }, formatTime(r.last_ts)),
    );
    tr.addEventListener("click", () => onDrill(r.uid));
    return tr;
  });
  return el(
    "section",
    { class: "panel" },
    el("h3", {}, "Denied opens"),
    rows.length
      ? el(
          "table",
          {},
          el("thead", {}, el("tr", {},
            el("th", {}, "uid"), el("th", {}, "nid"),
            el("th", {}, "count"), el("th", {}, "last seen"))),
          el("tbody", {}, ...body),
        )
      : emptyState("No denied opens."),
  );
}

export function capacityPanel(report: CapacityReport): HTMLElement {
  const row = (r: CapacityReport["summary"], cls = "") => {
    const fill = el("div", { class: "bar used" });
    fill.style.width = `${r.use_pct}%`;
    return el(
      "div",
      { class: `cap-row ${cls}` },
      el("span", { class: "key" }, r.uuid),
      el("div", { class: "cap-track" }, fill),
      el("span", { class: "num" },
        `${formatSize(r.used_bytes)} / ${formatSize(r.total_bytes)} (${r.use_pct}%)`),
    );
  };
  return el(
    "section",
    { class: "panel" },
    el("h3", {}, "Capacity"),
    ...report.rows.map((r) => row(r)),
    row(report.summary, "summary"),
  );
}
