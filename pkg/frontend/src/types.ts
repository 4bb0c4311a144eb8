/** Payload shapes of the /api/v1 contract. */

export interface AuditEvent {
  device: string;
  index: number;
  type_code: number;
  type_name: string;
  ts_utc: number; // nanoseconds since the Unix epoch, UTC
  flags: string;
  fid: string;
  ext_flags: string | null;
  uid: number | null;
  gid: number | null;
  nid: string | null;
  mode_mask: string | null;
  parent_fid: string | null;
  name: string | null;
  ingested_at: number;
  chain_digest: string;
}

export interface EventsPage {
  events: AuditEvent[];
  next_cursor: string | null;
}

export interface TrailResponse {
  fid: string;
  events: AuditEvent[];
}

export interface CountsResponse {
  by: string;
  counts: Record<string, number>;
}

export interface TimelineBucket {
  start: number; // bucket start, seconds since the epoch
  count: number;
}

export interface TimelineResponse {
  bucket_seconds: number;
  buckets: TimelineBucket[];
}

export interface DeniedOpenRow {
  uid: number;
  nid: string;
  count: number;
  first_ts: number;
  last_ts: number;
}

export interface CapacityRow {
  uuid: string;
  total_bytes: number;
  used_bytes: number;
  available_bytes: number;
  use_pct: number;
  mounted_on: string;
}

export interface CapacityReport {
  rows: CapacityRow[];
  summary: CapacityRow;
}

export interface WorkloadRun {
  run_id: string;
  status: "running" | "done" | "error";
  op_count?: number;
  error?: string;
}

export interface ApiErrorBody {
  code: string;
  message: string;
}
