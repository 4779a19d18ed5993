// Wire types mirroring the gateway's JSON payloads. Coordinates arrive as
// fixed-point degrees x 1e7; digests are 16-char hex strings.

export type DetectionKind = "plate" | "face" | "gps";

export interface DetectionRow {
  detection_id: number;
  kind: DetectionKind;
  value: string | number;
  lat_e7: number;
  lon_e7: number;
  timestamp_ms: number;
  source_frame: string;
  crop_blob: string | null;
  worker_id: string;
  detected_at_ms: number;
}

export interface WatchlistRow {
  entry_id: number;
  kind: "plate" | "face";
  value: string | number;
  label: string;
  created_at_ms: number;
}

export interface MatchRow {
  match_id: number;
  entry_id: number;
  detection_id: number;
  lat_e7: number;
  lon_e7: number;
  timestamp_ms: number;
  matched_at_ms: number;
}

export function latDeg(e7: number): number {
  return e7 / 1e7;
}

export function lonDeg(e7: number): number {
  return e7 / 1e7;
}
