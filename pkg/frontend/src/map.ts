// Generic self-contained map: a canvas with an equirectangular projection
// fitted to the visible points, a faint graticule, kind-colored detection
// markers and pulsing match highlights. No tile servers, no API keys.

import type { DetectionRow } from "./types.js";
import type { FeedMarker } from "./feed.js";

export interface Bounds {
  minLat: number;
  minLon: number;
  maxLat: number;
  maxLon: number;
}

const PAD_FRACTION = 0.12;
const MIN_SPAN_DEG = 0.0005;

export function fitBounds(points: Array<{ lat: number; lon: number }>): Bounds {
  if (points.length === 0) {
    return { minLat: -0.01, minLon: -0.01, maxLat: 0.01, maxLon: 0.01 };
  }
  let minLat = Infinity, maxLat = -Infinity, minLon = Infinity, maxLon = -Infinity;
  for (const p of points) {
    minLat = Math.min(minLat, p.lat);
    maxLat = Math.max(maxLat, p.lat);
    minLon = Math.min(minLon, p.lon);
    maxLon = Math.max(maxLon, p.lon);
  }
  let latSpan = Math.max(maxLat - minLat, MIN_SPAN_DEG);
  let lonSpan = Math.max(maxLon - minLon, MIN_SPAN_DEG);
  const latPad = latSpan * PAD_FRACTION;
  const lonPad = lonSpan * PAD_FRACTION;
  return {
    minLat: minLat - latPad,
    maxLat: minLat + latSpan + latPad,
    minLon: minLon - lonPad,
    maxLon: minLon + lonSpan + lonPad,
  };
}

export function project(b: Bounds, width: number, height: number,
                        lat: number, lon: number): { x: number; y: number } {
  const x = ((lon - b.minLon) / (b.maxLon - b.minLon)) * width;
  const y = height - ((lat - b.minLat) / (b.maxLat - b.minLat)) * height;
  return { x, y };
}

export function unproject(b: Bounds, width: number, height: number,
                          x: number, y: number): { lat: number; lon: number } {
  const lon = b.minLon + (x / width) * (b.maxLon - b.minLon);
  const lat = b.minLat + ((height - y) / height) * (b.maxLat - b.minLat);
  return { lat, lon };
}

/** Convert a drag rectangle in pixels to a lat/lon bbox (degrees). */
export function dragToBbox(b: Bounds, width: number, height: number,
                           x0: number, y0: number, x1: number, y1: number):
    [number, number, number, number] {
  const a = unproject(b, width, height, Math.min(x0, x1), Math.max(y0, y1));
  const z = unproject(b, width, height, Math.max(x0, x1), Math.min(y0, y1));
  return [a.lat, a.lon, z.lat, z.lon];
}

export const KIND_COLORS: Record<string, string> = {
  plate: "#f5a623",
  face: "#38c6d9",
  gps: "#8a8f98",
};

export interface MapCallbacks {
  onSelect?(detection: DetectionRow): void;
  onBboxDrawn?(bbox: [number, number, number, number]): void;
}

interface PlacedMarker {
  x: number;
  y: number;
  detection: DetectionRow;
}

export class MapView {
  private detections: DetectionRow[] = [];
  private highlights: FeedMarker[] = [];
  private placed: PlacedMarker[] = [];
  private bounds: Bounds = fitBounds([]);
  private drag: { x0: number; y0: number; x1: number; y1: number } | null = null;
  private selectedId: number | null = null;

  constructor(private readonly canvas: HTMLCanvasElement,
              private readonly callbacks: MapCallbacks = {}) {
    canvas.addEventListener("mousedown", (ev) => this.onDown(ev));
    canvas.addEventListener("mousemove", (ev) => this.onMove(ev));
    canvas.addEventListener("mouseup", (ev) => this.onUp(ev));
    canvas.addEventListener("mouseleave", () => { this.drag = null; this.render(); });
  }

  setDetections(rows: DetectionRow[]): void {
    this.detections = rows;
    this.refit();
    this.render();
  }

  setHighlights(markers: FeedMarker[]): void {
    this.highlights = markers.slice(0, 50);
    this.refit();
    this.render();
  }

  setSelected(detectionId: number | null): void {
    this.selectedId = detectionId;
    this.render();
  }

  private refit(): void {
    const pts = [
      ...this.detections.map((d) => ({ lat: d.lat_e7 / 1e7, lon: d.lon_e7 / 1e7 })),
      ...this.highlights.map((m) => ({ lat: m.lat, lon: m.lon })),
    ];
    this.bounds = fitBounds(pts);
  }

  private pos(ev: MouseEvent): { x: number; y: number } {
    const rect = this.canvas.getBoundingClientRect();
    return { x: ev.clientX - rect.left, y: ev.clientY - rect.top };
  }

  private onDown(ev: MouseEvent): void {
    const { x, y } = this.pos(ev);
    this.drag = { x0: x, y0: y, x1: x, y1: y };
  }

  private onMove(ev: MouseEvent): void {
    if (!this.drag) return;
    const { x, y } = this.pos(ev);
    this.drag.x1 = x;
    this.drag.y1 = y;
    this.render();
  }

  private onUp(ev: MouseEvent): void {
    const drag = this.drag;
    this.drag = null;
    if (!drag) return;
    const { x, y } = this.pos(ev);
    const moved = Math.hypot(x - drag.x0, y - drag.y0) > 6;
    if (moved) {
      this.callbacks.onBboxDrawn?.(
        dragToBbox(this.bounds, this.canvas.width, this.canvas.height,
                   drag.x0, drag.y0, x, y));
    } else {
      const hit = this.hitTest(x, y);
      if (hit) this.callbacks.onSelect?.(hit.detection);
    }
    this.render();
  }

  private hitTest(x: number, y: number): PlacedMarker | null {
    let best: PlacedMarker | null = null;
    let bestDist = 12;
    for (const m of this.placed) {
      const d = Math.hypot(m.x - x, m.y - y);
      if (d < bestDist) {
        best = m;
        bestDist = d;
      }
    }
    return best;
  }

  render(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    const { width, height } = this.canvas;
    ctx.fillStyle = "#10151c";
    ctx.fillRect(0, 0, width, height);
    this.drawGraticule(ctx, width, height);
    this.placed = [];
    for (const det of this.detections) {
      const { x, y } = project(this.bounds, width, height,
                               det.lat_e7 / 1e7, det.lon_e7 / 1e7);
      this.placed.push({ x, y, detection: det });
      ctx.beginPath();
      ctx.arc(x, y, det.detection_id === this.selectedId ? 7 : 4.5, 0, Math.PI * 2);
      ctx.fillStyle = KIND_COLORS[det.kind] ?? "#ffffff";
      ctx.fill();
      if (det.detection_id === this.selectedId) {
        ctx.strokeStyle = "#ffffff";
        ctx.lineWidth = 2;
        ctx.stroke();
      }
    }
    for (const m of this.highlights) {
      const { x, y } = project(this.bounds, width, height, m.lat, m.lon);
      ctx.beginPath();
      ctx.arc(x, y, 10, 0, Math.PI * 2);
      ctx.strokeStyle = "#ff5470";
      ctx.lineWidth = 2;
      ctx.stroke();
    }
    if (this.drag) {
      ctx.strokeStyle = "#6ea8fe";
      ctx.setLineDash([5, 4]);
      ctx.strokeRect(this.drag.x0, this.drag.y0,
                     this.drag.x1 - this.drag.x0, this.drag.y1 - this.drag.y0);
      ctx.setLineDash([]);
    }
  }

  private drawGraticule(ctx: CanvasRenderingContext2D,
                        width: number, height: number): void {
    const b = this.bounds;
    const latSpan = b.maxLat - b.minLat;
    const step = niceStep(latSpan);
    ctx.strokeStyle = "#1d2633";
    ctx.fillStyle = "#4a5568";
    ctx.font = "10px monospace";
    ctx.lineWidth = 1;
    for (let lat = Math.ceil(b.minLat / step) * step; lat <= b.maxLat; lat += step) {
      const { y } = project(b, width, height, lat, b.minLon);
      ctx.beginPath();
      ctx.moveTo(0, y);
      ctx.lineTo(width, y);
      ctx.stroke();
      ctx.fillText(lat.toFixed(4), 4, y - 2);
    }
    for (let lon = Math.ceil(b.minLon / step) * step; lon <= b.maxLon; lon += step) {
      const { x } = project(b, width, height, b.minLat, lon);
      ctx.beginPath();
      ctx.moveTo(x, 0);
      ctx.lineTo(x, height);
      ctx.stroke();
      ctx.fillText(lon.toFixed(4), x + 2, height - 4);
    }
  }
}

function niceStep(span: number): number {
  const raw = span / 6;
  const mag = Math.pow(10, Math.floor(Math.log10(raw)));
  for (const mult of [1, 2, 5, 10]) {
    if (raw <= mult * mag) return mult * mag;
  }
  return 10 * mag;
}
