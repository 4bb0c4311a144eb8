/**
 * Filter state and its (lossless) mapping onto the API's query-param
 * contract and onto the location hash. The dashboard never filters rows
 * itself: whatever is rendered is exactly one API response, so these
 * serializers are the only place where view state meets the wire.
 */

export interface EventFilters {
  device?: string;
  types?: string[];
  uid?: number;
  gid?: number;
  fid?: string;
  nid?: string;
  nameContains?: string;
  from?: string; // RFC 3339
  to?: string;
  limit?: number;
  cursor?: string;
}

export type ViewName = "overview" | "events" | "trail" | "workload";

export interface ViewState {
  view: ViewName;
  filters: EventFilters;
  selectedFid?: string;
  tail: boolean;
  bucketSeconds: number;
}

export const DEFAULT_BUCKET_SECONDS = 60;

export const FID_PATTERN = /^\[0x[0-9a-f]+:0x[0-9a-f]+:0x[0-9a-f]+\]$/i;

export function isValidFid(text: string): boolean {
  return FID_PATTERN.test(text.trim());
}

/** EventFilters -> query params, matching the server's parameter names. */
export function toQueryParams(f: EventFilters): URLSearchParams {
  const p = new URLSearchParams();
  if (f.device) p.set("device", f.device);
  for (const t of f.types ?? []) p.append("type", t);
  if (f.uid !== undefined) p.set("uid", String(f.uid));
  if (f.gid !== undefined) p.set("gid", String(f.gid));
  if (f.fid) p.set("fid", f.fid);
  if (f.nid) p.set("nid", f.nid);
  if (f.nameContains) p.set("name_contains", f.nameContains);
  if (f.from) p.set("from", f.from);
  if (f.to) p.set("to", f.to);
  if (f.limit !== undefined) p.set("limit", String(f.limit));
  if (f.cursor) p.set("cursor", f.cursor);
  return p;
}

export function fromQueryParams(p: URLSearchParams): EventFilters {
  const f: EventFilters = {};
  const device = p.get("device");
  if (device) f.device = device;
  const types = p.getAll("type");
  if (types.length) f.types = types;
  const uid = p.get("uid");
  if (uid !== null && uid !== "") f.uid = Number(uid);
  const gid = p.get("gid");
  if (gid !== null && gid !== "") f.gid = Number(gid);
  const fid = p.get("fid");
  if (fid) f.fid = fid;
  const nid = p.get("nid");
  if (nid) f.nid = nid;
  const name = p.get("name_contains");
  if (name) f.nameContains = name;
  const from = p.get("from");
  if (from) f.from = from;
  const to = p.get("to");
  if (to) f.to = to;
  const limit = p.get("limit");
  if (limit !== null && limit !== "") f.limit = Number(limit);
  const cursor = p.get("cursor");
  if (cursor) f.cursor = cursor;
  return f;
}

/**
 * ViewState <-> location.hash. Reloading any URL reproduces the view:
 * `#/events?type=CREAT&tail=1`, `#/trail?fid=[0x...:0x2:0x0]`, ...
 */
export function serializeState(s: ViewState): string {
  const p = toQueryParams(s.filters);
  if (s.view === "trail" && s.selectedFid) p.set("fid", s.selectedFid);
  if (s.tail) p.set("tail", "1");
  if (s.bucketSeconds !== DEFAULT_BUCKET_SECONDS) {
    p.set("bucket", String(s.bucketSeconds));
  }
  const q = p.toString();
  return `#/${s.view}${q ? "?" + q : ""}`;
}

export function parseState(hash: string): ViewState {
  const m = /^#\/([a-z]+)(?:\?(.*))?$/.exec(hash);
  const view = (m?.[1] ?? "overview") as ViewName;
  const known: ViewName[] = ["overview", "events", "trail", "workload"];
  const p = new URLSearchParams(m?.[2] ?? "");
  const filters = fromQueryParams(p);
  const state: ViewState = {
    view: known.includes(view) ? view : "overview",
    filters,
    tail: p.get("tail") === "1",
    bucketSeconds: Number(p.get("bucket") ?? DEFAULT_BUCKET_SECONDS),
  };
  if (state.view === "trail") {
    state.selectedFid = filters.fid;
    delete state.filters.fid;
  }
  return state;
}
