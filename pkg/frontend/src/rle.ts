// Run-length mask codec. Masks travel as alternating background/foreground
// counts starting with background (a leading zero means the raster starts
// with foreground); decoding client-side avoids shipping rasters twice.

import type { MaskObj } from './protocol';

export function decodeMask(mask: MaskObj): Uint8Array {
  const out = new Uint8Array(mask.w * mask.h);
  let cursor = 0;
  let value = 0;
  for (const run of mask.runs) {
    if (value === 1) {
      out.fill(1, cursor, cursor + run);
    }
    cursor += run;
    value = 1 - value;
  }
  if (cursor !== out.length) {
    throw new Error(`mask runs cover ${cursor} pixels, expected ${out.length}`);
  }
  return out;
}

export function encodeMask(bitmap: Uint8Array, w: number, h: number): MaskObj {
  if (bitmap.length !== w * h) {
    throw new Error(`bitmap length ${bitmap.length} does not match ${w}x${h}`);
  }
  const runs: number[] = [];
  let value = 0;
  let count = 0;
  for (let i = 0; i < bitmap.length; i++) {
    const v = bitmap[i] ? 1 : 0;
    if (v === value) {
      count += 1;
    } else {
      runs.push(count);
      value = v;
      count = 1;
    }
  }
  runs.push(count);
  return { w, h, runs };
}

export function maskArea(mask: MaskObj): number {
  let area = 0;
  for (let i = 1; i < mask.runs.length; i += 2) {
    area += mask.runs[i];
  }
  return area;
}

export interface Bounds {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
}

/** Tight bounding box of the foreground, or null for an empty mask. */
export function maskBounds(mask: MaskObj): Bounds | null {
  let x0 = mask.w;
  let y0 = mask.h;
  let x1 = -1;
  let y1 = -1;
  let cursor = 0;
  let value = 0;
  for (const run of mask.runs) {
    if (value === 1 && run > 0) {
      const start = cursor;
      const end = cursor + run - 1;
      const rowStart = Math.floor(start / mask.w);
      const rowEnd = Math.floor(end / mask.w);
      y0 = Math.min(y0, rowStart);
      y1 = Math.max(y1, rowEnd);
      if (rowStart === rowEnd) {
        x0 = Math.min(x0, start % mask.w);
        x1 = Math.max(x1, end % mask.w);
      } else {
        x0 = 0;
        x1 = mask.w - 1;
      }
    }
    cursor += run;
    value = 1 - value;
  }
  return x1 < 0 ? null : { x0, y0, x1, y1 };
}
