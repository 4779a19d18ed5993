import { describe, expect, it } from "vitest";

import { dragToBbox, fitBounds, project, unproject } from "../src/map.js";

describe("fitBounds", () => {
  it("pads around the data extent", () => {
    const b = fitBounds([
      { lat: 48.85, lon: 2.35 },
      { lat: 48.86, lon: 2.36 },
    ]);
    expect(b.minLat).toBeLessThan(48.85);
    expect(b.maxLat).toBeGreaterThan(48.86);
    expect(b.minLon).toBeLessThan(2.35);
    expect(b.maxLon).toBeGreaterThan(2.36);
  });

  it("expands degenerate single-point extents", () => {
    const b = fitBounds([{ lat: 48.85, lon: 2.35 }]);
    expect(b.maxLat - b.minLat).toBeGreaterThan(0);
    expect(b.maxLon - b.minLon).toBeGreaterThan(0);
  });
});

describe("projection", () => {
  const b = { minLat: 48.0, maxLat: 49.0, minLon: 2.0, maxLon: 3.0 };

  it("maps corners to canvas corners (y inverted)", () => {
    expect(project(b, 100, 50, 48.0, 2.0)).toEqual({ x: 0, y: 50 });
    expect(project(b, 100, 50, 49.0, 3.0)).toEqual({ x: 100, y: 0 });
    expect(project(b, 100, 50, 48.5, 2.5)).toEqual({ x: 50, y: 25 });
  });

  it("round-trips through unproject", () => {
    for (const [lat, lon] of [[48.2, 2.9], [48.77, 2.01], [49.0, 2.0]]) {
      const { x, y } = project(b, 640, 480, lat, lon);
      const back = unproject(b, 640, 480, x, y);
      expect(back.lat).toBeCloseTo(lat, 9);
      expect(back.lon).toBeCloseTo(lon, 9);
    }
  });

  it("converts a drag rectangle to an ordered bbox regardless of direction", () => {
    const down = project(b, 100, 100, 48.8, 2.2);
    const up = project(b, 100, 100, 48.3, 2.7);
    for (const [x0, y0, x1, y1] of [
      [down.x, down.y, up.x, up.y],
      [up.x, up.y, down.x, down.y],
    ]) {
      const [minLat, minLon, maxLat, maxLon] = dragToBbox(b, 100, 100, x0, y0, x1, y1);
      expect(minLat).toBeCloseTo(48.3, 6);
      expect(minLon).toBeCloseTo(2.2, 6);
      expect(maxLat).toBeCloseTo(48.8, 6);
      expect(maxLon).toBeCloseTo(2.7, 6);
    }
  });
});
