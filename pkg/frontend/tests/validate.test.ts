import { describe, expect, it } from "vitest";

import { parseFaceCode, plateValid, validateEntry } from "../src/validate.js";

describe("plate validation", () => {
  it("accepts exactly 7 chars of A-Z0-9, case-normalized", () => {
    expect(plateValid("AB123CD")).toBe(true);
    expect(plateValid("ab123cd")).toBe(true);
    expect(plateValid(" AB123CD ")).toBe(true);
  });

  it("rejects wrong lengths and alphabets", () => {
    for (const bad of ["ab", "AB123C", "AB123CDE", "AB123C*", "", "ÅB123CD"]) {
      expect(plateValid(bad)).toBe(false);
    }
  });
});

describe("face code validation", () => {
  it("accepts 0..4095", () => {
    expect(parseFaceCode("0")).toBe(0);
    expect(parseFaceCode("4095")).toBe(4095);
    expect(parseFaceCode(" 2749 ")).toBe(2749);
  });

  it("rejects out-of-range and non-integers", () => {
    for (const bad of ["4096", "-1", "1.5", "abc", ""]) {
      expect(parseFaceCode(bad)).toBeNull();
    }
  });
});

describe("validateEntry", () => {
  it("blocks short plates before any network call", () => {
    const res = validateEntry("plate", "ab");
    expect(res.ok).toBe(false);
  });

  it("produces normalized payload values", () => {
    const plate = validateEntry("plate", "ab123cd");
    expect(plate).toEqual({ ok: true, entry: { kind: "plate", value: "AB123CD" } });
    const face = validateEntry("face", "7");
    expect(face).toEqual({ ok: true, entry: { kind: "face", value: 7 } });
  });
});
