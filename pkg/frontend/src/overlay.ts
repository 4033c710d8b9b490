// Latest-state view model fed exclusively by session events, plus a pure
// RGBA compositor. Rendering is decoupled from the network: the browser
// layer just blits the composed buffer onto a canvas every animation frame.

import { colorForLabel, CURSOR_ARMED_COLOR, CURSOR_CLICKED_COLOR, Rgba, TIP_COLOR } from './colors';
import type {
  CandidatePayload,
  MaskObj,
  ServerMessage,
  SessionEvent,
  SnapshotState,
  TrackedObjectPayload,
} from './protocol';
import { decodeMask } from './rle';

export const MAX_GRID_TILES = 6;
export const EMPTY_GRID_NOTICE = 'No candidates - refine your query.';

export interface GridTile {
  index: number; // 1-based, exactly as the server numbers them
  score: number;
  sourcePrompt: string;
  mask: MaskObj;
}

export interface GridModel {
  tiles: GridTile[];
  pageIndex: number;
  pageCount: number;
  notice: string | null;
  locked: boolean;
}

export function renderCandidateGrid(payload: Record<string, any>): GridModel {
  const candidates = (payload.candidates ?? []) as CandidatePayload[];
  const tiles = candidates.slice(0, MAX_GRID_TILES).map((c) => ({
    index: c.index,
    score: c.score,
    sourcePrompt: c.source_prompt,
    mask: c.mask,
  }));
  return {
    tiles,
    pageIndex: payload.page_index ?? 0,
    pageCount: payload.page_count ?? 0,
    notice: tiles.length === 0 ? EMPTY_GRID_NOTICE : null,
    locked: false,
  };
}

export interface OverlayObject {
  id: string;
  label: string;
  kind: string;
  mask: MaskObj;
  color: Rgba;
}

export interface TipMarker {
  instrument: string;
  x: number;
  y: number;
}

export interface CursorMarker {
  x: number;
  y: number;
  armed: boolean;
  clicked: boolean;
}

/** Everything the console shows, reduced from the event stream. */
export class OverlayModel {
  module = 'InteractiveMode';
  frame = 0;
  lastSeq = 0;
  synced = false; // true once a snapshot or any event has been consumed
  dropped = 0;
  objects = new Map<string, OverlayObject>();
  tip: TipMarker | null = null;
  cursor: CursorMarker | null = null;
  grid: GridModel | null = null;
  transcript: string[] = [];
  errorCount = 0;
  lastSelection: Record<string, any> | null = null;

  applyServerMessage(message: ServerMessage): void {
    if (message.type === 'snapshot') {
      this.applySnapshot(message.state, message.last_seq);
    } else {
      this.dropped = message.dropped;
      this.apply(message.event);
    }
  }

  applySnapshot(state: SnapshotState, lastSeq: number): void {
    this.module = state.module;
    this.frame = state.frame;
    this.lastSeq = lastSeq;
    this.synced = true;
  }

  apply(event: SessionEvent): void {
    this.lastSeq = event.seq;
    this.frame = event.frame;
    this.synced = true;
    switch (event.kind) {
      case 'frame': {
        const objects = (event.payload.objects ?? []) as TrackedObjectPayload[];
        this.objects = new Map(
          objects.map((o) => [
            o.id,
            { id: o.id, label: o.label, kind: o.kind, mask: o.mask, color: colorForLabel(o.label) },
          ]),
        );
        if (this.cursor) {
          this.cursor = { ...this.cursor, clicked: false };
        }
        break;
      }
      case 'candidates_page':
        this.grid = renderCandidateGrid(event.payload);
        break;
      case 'mask_selected':
        this.grid = null; // server confirmed; unlock and clear the display
        this.lastSelection = event.payload;
        break;
      case 'label_assigned': {
        const obj = this.objects.get(event.payload.id);
        if (obj) {
          obj.label = event.payload.label;
          obj.color = colorForLabel(obj.label);
        }
        break;
      }
      case 'tip_locked':
        this.tip = { instrument: event.payload.instrument, x: event.payload.x, y: event.payload.y };
        break;
      case 'cursor_moved':
        this.cursor = {
          x: event.payload.x,
          y: event.payload.y,
          armed: Boolean(event.payload.armed),
          clicked: false,
        };
        break;
      case 'click':
        this.cursor = { x: event.payload.x, y: event.payload.y, armed: false, clicked: true };
        break;
      case 'anatomy_segmented':
        // the mask itself arrives with subsequent frame events
        break;
      case 'agent_text':
        this.transcript.push(event.payload.text);
        break;
      case 'error':
        this.errorCount += 1;
        break;
    }
  }

  lockGrid(): void {
    if (this.grid) {
      this.grid = { ...this.grid, locked: true };
    }
  }

  /** Serializable view state; two consoles showing the same thing compare equal. */
  viewState(): Record<string, any> {
    return {
      module: this.module,
      frame: this.frame,
      objects: [...this.objects.values()].map((o) => ({
        id: o.id,
        label: o.label,
        kind: o.kind,
        mask: o.mask,
      })),
      tip: this.tip,
      cursor: this.cursor,
      grid: this.grid,
    };
  }
}

function stampDisk(
  out: Uint8ClampedArray,
  width: number,
  height: number,
  cx: number,
  cy: number,
  radius: number,
  color: Rgba,
): void {
  const x0 = Math.max(0, Math.floor(cx - radius));
  const x1 = Math.min(width - 1, Math.ceil(cx + radius));
  const y0 = Math.max(0, Math.floor(cy - radius));
  const y1 = Math.min(height - 1, Math.ceil(cy + radius));
  for (let y = y0; y <= y1; y++) {
    for (let x = x0; x <= x1; x++) {
      const dx = x - cx;
      const dy = y - cy;
      if (dx * dx + dy * dy <= radius * radius) {
        const i = (y * width + x) * 4;
        out[i] = color.r;
        out[i + 1] = color.g;
        out[i + 2] = color.b;
        out[i + 3] = 255;
      }
    }
  }
}

/**
 * Compose the overlay into an RGBA buffer: semi-transparent mask fills,
 * then tip and cursor markers. The buffer is reused when supplied, which is
 * what keeps per-frame rendering within budget on 720p streams.
 */
export function composeOverlay(
  model: OverlayModel,
  width: number,
  height: number,
  out?: Uint8ClampedArray,
): Uint8ClampedArray {
  const buffer = out ?? new Uint8ClampedArray(width * height * 4);
  buffer.fill(0);
  for (const obj of model.objects.values()) {
    if (obj.mask.w !== width || obj.mask.h !== height) {
      continue; // dimension mismatch: skip the object, count it upstream
    }
    const bitmap = decodeMask(obj.mask);
    const { r, g, b, a } = obj.color;
    for (let i = 0; i < bitmap.length; i++) {
      if (bitmap[i]) {
        const j = i * 4;
        // source-over blend of the 40%-alpha fill
        const alpha = a / 255;
        buffer[j] = r * alpha + buffer[j] * (1 - alpha);
        buffer[j + 1] = g * alpha + buffer[j + 1] * (1 - alpha);
        buffer[j + 2] = b * alpha + buffer[j + 2] * (1 - alpha);
        buffer[j + 3] = Math.max(buffer[j + 3], a);
      }
    }
  }
  if (model.tip) {
    stampDisk(buffer, width, height, model.tip.x, model.tip.y, 3, TIP_COLOR);
  }
  if (model.cursor) {
    const color = model.cursor.clicked
      ? CURSOR_CLICKED_COLOR
      : model.cursor.armed
        ? CURSOR_ARMED_COLOR
        : TIP_COLOR;
    stampDisk(buffer, width, height, model.cursor.x, model.cursor.y, model.cursor.clicked ? 7 : 5, color);
  }
  return buffer;
}
