/**
 * Single-page wiring: hash routing, data fetching, and the live tail.
 * One streaming connection at a time; navigation closes it and cancels
 * in-flight requests.
 */

import { ApiClient, ApiError } from "./api.js";
import {
  isValidFid,
  parseState,
  serializeState,
  type EventFilters,
  type ViewState,
} from "./query.js";
import { LiveTail } from "./tail.js";
import type { AuditEvent } from "./types.js";
import {
  capacityPanel,
  countsPanel,
  deniedOpensPanel,
  el,
  emptyState,
  errorBanner,
  eventTable,
  timelinePanel,
  trailList,
} from "./views.js";

const api = new ApiClient("");
const root = document.getElementById("app")!;

let stream: EventSource | null = null;
let aborter: AbortController | null = null;

function navigate(state: ViewState): void {
  location.hash = serializeState(state);
}

function currentState(): ViewState {
  return parseState(location.hash);
}

function teardown(): void {
  stream?.close();
  stream = null;
  aborter?.abort();
  aborter = null;
  root.replaceChildren();
}

function showError(err: unknown, retry: () => void): void {
  const message =
    err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
  root.prepend(errorBanner(message, retry));
}

function toTrail(fid: string): void {
  navigate({ ...currentState(), view: "trail", selectedFid: fid });
}

// -- events view -----------------------------------------------------------

async function renderEvents(state: ViewState): Promise<void> {
  const filters = state.filters;
  const form = filterForm(state);
  const { table, append } = eventTable(toTrail);
  const tail = new LiveTail();
  root.append(form, table);

  try {
    const page = await api.events(filters);
    if (!page.events.length && !state.tail) {
      table.replaceWith(emptyState("No events match these filters."));
      return;
    }
    for (const ev of page.events) {
      if (tail.accept(ev)) append(ev);
    }
    if (page.next_cursor) {
      const more = el("button", { class: "more" }, "Load more");
      more.addEventListener("click", () => {
        navigate({ ...state, filters: { ...filters, cursor: page.next_cursor! } });
      });
      root.append(more);
    }
  } catch (err) {
    showError(err, () => render());
    return;
  }

  if (state.tail) {
    stream = new EventSource(api.streamUrl(filters));
    stream.addEventListener("audit", (msg) => {
      const ev = JSON.parse((msg as MessageEvent).data) as AuditEvent;
      if (tail.accept(ev)) append(ev); // never the same (device,index) twice
    });
    // EventSource reconnects by itself and resends the last event id,
    // so a dropped stream resumes from the cursor without duplicates.
  }
}

function filterForm(state: ViewState): HTMLElement {
  const f = state.filters;
  const device = el("input", { placeholder: "device", value: f.device ?? "" });
  const type = el("input", { placeholder: "type (comma-sep)", value: (f.types ?? []).join(",") });
  const uid = el("input", { placeholder: "uid", value: f.uid?.toString() ?? "" });
  const name = el("input", { placeholder: "name contains", value: f.nameContains ?? "" });
  const tailBox = el("input", { type: "checkbox" }) as HTMLInputElement;
  tailBox.checked = state.tail;
  const apply = el("button", {}, "Apply");
  const form = el(
    "form",
    { class: "filters" },
    device, type, uid, name,
    el("label", {}, tailBox, " live tail"),
    apply,
  );
  form.addEventListener("submit", (e) => {
    e.preventDefault();
    const filters: EventFilters = {};
    if (device.value) filters.device = device.value;
    if (type.value) filters.types = type.value.split(",").map((t) => t.trim()).filter(Boolean);
    if (uid.value) filters.uid = Number(uid.value);
    if (name.value) filters.nameContains = name.value;
    navigate({ ...state, view: "events", filters, tail: tailBox.checked });
  });
  return form;
}

// -- trail view ------------------------------------------------------------

async function renderTrail(state: ViewState): Promise<void> {
  const input = el("input", {
    placeholder: "[0x200000401:0x2:0x0]",
    value: state.selectedFid ?? "",
    class: "fid-input",
  }) as HTMLInputElement;
  const note = el("span", { class: "validation" });
  const go = el("button", {}, "Trace");
  const form = el("form", { class: "filters" }, input, go, note);
  form.addEventListener("submit", (e) => {
    e.preventDefault();
    if (!isValidFid(input.value)) {
      note.textContent = "not a fid: expected [0x..:0x..:0x..]"; // no request
      return;
    }
    navigate({ ...currentState(), view: "trail", selectedFid: input.value.trim() });
  });
  root.append(form);

  const fid = state.selectedFid;
  if (!fid) return;
  if (!isValidFid(fid)) {
    note.textContent = "not a fid: expected [0x..:0x..:0x..]";
    return;
  }
  try {
    const res = await api.trail(fid);
    root.append(el("h2", {}, res.fid), trailList(res.events, toTrail));
  } catch (err) {
    showError(err, () => render());
  }
}

// -- overview view -----------------------------------------------------------

async function renderOverview(state: ViewState): Promise<void> {
  try {
    const [tl, byType, byUid, denied, df] = await Promise.all([
      api.timeline(state.bucketSeconds, state.filters),
      api.counts("type", state.filters),
      api.counts("uid", state.filters),
      api.deniedOpens(),
      api.df().catch(() => null), // sim may be detached
    ]);
    root.append(
      timelinePanel(tl),
      countsPanel("Events by type", byType.counts, (t) =>
        navigate({ ...state, view: "events", filters: { types: [t] } })),
      countsPanel("Events by uid", byUid.counts, (u) =>
        navigate({ ...state, view: "events", filters: { uid: Number(u) } })),
      deniedOpensPanel(denied.denied_opens, (uid) =>
        navigate({ ...state, view: "events", filters: { types: ["NOPEN"], uid } })),
    );
    if (df) root.append(capacityPanel(df));
  } catch (err) {
    showError(err, () => render());
  }
}

// -- workload view -----------------------------------------------------------

async function renderWorkload(): Promise<void> {
  // feature-detect: the sim surface answers 403 when detached
  try {
    await api.df();
  } catch (err) {
    if (err instanceof ApiError && err.status === 403) {
      root.append(emptyState("Simulator endpoints are not enabled on this server."));
      return;
    }
  }
  const script = el("textarea", { rows: "10", class: "script" }) as HTMLTextAreaElement;
  script.value = "ctx 500 500 10.0.0.9@tcp\ncreate /what-if 0644\n";
  const run = el("button", {}, "Run");
  const preset = el("button", { type: "button" }, "Load create100");
  const status = el("pre", { class: "run-status" });
  preset.addEventListener("click", async () => {
    script.value = "";
    await trigger({ name: "create100.wl" });
  });
  const form = el("form", { class: "workload" }, script, run, preset, status);
  form.addEventListener("submit", async (e) => {
    e.preventDefault();
    await trigger({ script: script.value });
  });
  root.append(form);

  async function trigger(body: { script?: string; name?: string }): Promise<void> {
    status.textContent = "submitting…";
    const startedAt = new Date().toISOString();
    try {
      const { run_id } = await api.runWorkload(body);
      let info = await api.workloadStatus(run_id);
      while (info.status === "running") {
        await new Promise((r) => setTimeout(r, 250));
        info = await api.workloadStatus(run_id);
      }
      status.textContent = `${run_id}: ${info.status}` +
        (info.status === "done" ? `, ${info.op_count} ops` : `: ${info.error}`);
      if (info.status === "done") {
        const link = el("a", { href: "#" }, "view this run's events");
        link.addEventListener("click", (e) => {
          e.preventDefault();
          navigate({
            ...currentState(),
            view: "events",
            filters: { from: startedAt, limit: 1000 },
          });
        });
        status.append(" — ", link);
      }
    } catch (err) {
      // script errors come back line-anchored from the server
      status.textContent =
        err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
    }
  }
}

// -- router ------------------------------------------------------------------

const VIEWS = {
  overview: renderOverview,
  events: renderEvents,
  trail: renderTrail,
  workload: renderWorkload,
} as const;

function render(): void {
  teardown();
  const state = currentState();
  for (const link of document.querySelectorAll("nav a")) {
    link.classList.toggle("active", link.getAttribute("data-view") === state.view);
  }
  void VIEWS[state.view](state);
}

window.addEventListener("hashchange", render);
window.addEventListener("DOMContentLoaded", () => {
  if (!location.hash) location.hash = "#/overview";
  render();
});
