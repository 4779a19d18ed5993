// Client-side validation of watchlist values, mirroring the server's domains
// so obviously-bad submissions never leave the form.

const PLATE_RE = /^[A-Z0-9]{7}$/;
export const FACE_CODE_MAX = 4096;

export function normalizePlate(raw: string): string {
  return raw.trim().toUpperCase();
}

export function plateValid(raw: string): boolean {
  return PLATE_RE.test(normalizePlate(raw));
}

export function parseFaceCode(raw: string): number | null {
  const text = raw.trim();
  if (!/^\d+$/.test(text)) return null;
  const value = Number(text);
  return value >= 0 && value < FACE_CODE_MAX ? value : null;
}

export interface ValidatedEntry {
  kind: "plate" | "face";
  value: string | number;
}

export function validateEntry(kind: string, raw: string):
    { ok: true; entry: ValidatedEntry } | { ok: false; message: string } {
  if (kind === "plate") {
    const plate = normalizePlate(raw);
    if (!plateValid(plate)) {
      return { ok: false, message: "plate must be exactly 7 chars of A-Z or 0-9" };
    }
    return { ok: true, entry: { kind: "plate", value: plate } };
  }
  if (kind === "face") {
    const code = parseFaceCode(raw);
    if (code === null) {
      return { ok: false, message: `face code must be an integer 0..${FACE_CODE_MAX - 1}` };
    }
    return { ok: true, entry: { kind: "face", value: code } };
  }
  return { ok: false, message: `unknown kind ${kind}` };
}
