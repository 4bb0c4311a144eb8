/** Thin typed client for the /api/v1 contract. */

import type {
  CapacityReport,
  CountsResponse,
  DeniedOpenRow,
  EventsPage,
  TimelineResponse,
  TrailResponse,
  WorkloadRun,
} from "./types.js";
import { toQueryParams, type EventFilters } from "./query.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(url, init);
  if (!resp.ok) {
    let code = "HttpError";
    let message = resp.statusText;
    try {
      const body = await resp.json();
      code = body.code ?? code;
      message = body.message ?? message;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(resp.status, code, message);
  }
  return resp.json() as Promise<T>;
}

export class ApiClient {
  constructor(readonly base: string = "") {}

  private url(path: string, params?: URLSearchParams): string {
    const q = params?.toString();
    return `${this.base}/api/v1${path}${q ? "?" + q : ""}`;
  }

  devices(): Promise<{ devices: string[] }> {
    return request(this.url("/devices"));
  }

  events(filters: EventFilters): Promise<EventsPage> {
    return request(this.url("/events", toQueryParams(filters)));
  }

  trail(fid: string): Promise<TrailResponse> {
    return request(this.url(`/trail/${encodeURIComponent(fid)}`));
  }

  counts(by: "type" | "uid" | "nid", filters: EventFilters = {}): Promise<CountsResponse> {
    const p = toQueryParams(filters);
    p.set("by", by);
    return request(this.url("/stats/counts", p));
  }

  timeline(bucketSeconds: number, filters: EventFilters = {}): Promise<TimelineResponse> {
    const p = toQueryParams(filters);
    p.set("bucket", String(bucketSeconds));
    return request(this.url("/stats/timeline", p));
  }

  deniedOpens(): Promise<{ denied_opens: DeniedOpenRow[] }> {
    return request(this.url("/anomalies/denied-opens"));
  }

  df(): Promise<CapacityReport> {
    return request(this.url("/df"));
  }

  verifyChain(device: string): Promise<{ device: string; ok: boolean; first_bad_index: number | null }> {
    const p = new URLSearchParams({ device });
    return request(this.url("/chain/verify", p));
  }

  runWorkload(body: { script?: string; name?: string }): Promise<{ accepted: boolean; run_id: string }> {
    return request(this.url("/sim/workload"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  workloadStatus(runId: string): Promise<WorkloadRun> {
    return request(this.url(`/sim/workload/${encodeURIComponent(runId)}`));
  }

  /** URL for the SSE live tail (EventSource handles reconnect + resume). */
  streamUrl(filters: Pick<EventFilters, "device" | "types">): string {
    return this.url("/events/stream", toQueryParams(filters));
  }
}
