// Stable per-label colors: the same label keeps its color across frames
// and across reconnects, because the index is a pure hash of the label.

export interface Rgba {
  r: number;
  g: number;
  b: number;
  a: number;
}

export const MASK_PALETTE: Rgba[] = [
  { r: 251, g: 146, b: 60, a: 102 }, // orange
  { r: 59, g: 130, b: 246, a: 102 }, // blue
  { r: 34, g: 197, b: 94, a: 102 }, // green
  { r: 168, g: 85, b: 247, a: 102 }, // purple
  { r: 236, g: 72, b: 153, a: 102 }, // pink
  { r: 6, g: 182, b: 212, a: 102 }, // cyan
  { r: 245, g: 158, b: 11, a: 102 }, // amber
  { r: 99, g: 102, b: 241, a: 102 }, // indigo
];

export const TIP_COLOR: Rgba = { r: 255, g: 255, b: 255, a: 255 };
export const CURSOR_ARMED_COLOR: Rgba = { r: 250, g: 204, b: 21, a: 255 };
export const CURSOR_CLICKED_COLOR: Rgba = { r: 239, g: 68, b: 68, a: 255 };

export function colorForLabel(label: string): Rgba {
  let hash = 0;
  for (let i = 0; i < label.length; i++) {
    hash = (hash * 31 + label.charCodeAt(i)) >>> 0;
  }
  return MASK_PALETTE[hash % MASK_PALETTE.length];
}
