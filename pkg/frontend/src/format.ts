/** Small display helpers shared by the views. */

/** Nanoseconds since the epoch -> "2024-01-01 00:00:00.123" (UTC). */
export function formatTime(tsNs: number): string {
  const ms = Math.floor(tsNs / 1e6);
  const iso = new Date(ms).toISOString(); // 2024-01-01T00:00:00.123Z
  return iso.slice(0, 23).replace("T", " ");
}

/** Bytes -> the capacity report's human form: powers of 1024, one decimal. */
export function formatSize(n: number): string {
  if (n < 1024) return String(n);
  let v = n;
  for (const unit of ["K", "M", "G", "T", "P"]) {
    v /= 1024;
    if (v < 1024 || unit === "P") return `${v.toFixed(1)}${unit}`;
  }
  return String(n);
}

/** uid/gid pair -> "500:500", or "" when the record carries none. */
export function formatOwner(uid: number | null, gid: number | null): string {
  return uid === null ? "" : `${uid}:${gid}`;
}

/** Bucket start (seconds) -> short UTC label for the histogram axis. */
export function formatBucketLabel(startSec: number): string {
  return new Date(startSec * 1000).toISOString().slice(11, 19);
}
