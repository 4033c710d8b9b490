// Wire types for the session event stream. Mirrors the server's JSON schema:
// the console displays nothing that did not arrive as a SessionEvent.

export interface MaskObj {
  w: number;
  h: number;
  runs: number[];
}

export type EventKind =
  | 'frame'
  | 'candidates_page'
  | 'mask_selected'
  | 'label_assigned'
  | 'tip_locked'
  | 'cursor_moved'
  | 'click'
  | 'anatomy_segmented'
  | 'agent_text'
  | 'error';

export interface SessionEvent {
  seq: number;
  frame: number;
  t_ms: number;
  kind: EventKind;
  payload: Record<string, any>;
}

export interface TrackedObjectPayload {
  id: string;
  label: string;
  kind: string;
  mask: MaskObj;
}

export interface CandidatePayload {
  index: number;
  score: number;
  source_prompt: string;
  backend_id: string;
  mask: MaskObj;
}

export interface SnapshotState {
  module: string;
  frame: number;
  tracked: { id: string; label: string; kind: string }[];
  page_index: number | null;
  finished: boolean;
}

export type ServerMessage =
  | { type: 'snapshot'; state: SnapshotState; last_seq: number }
  | { type: 'event'; event: SessionEvent; dropped: number };

export type ClientCommand =
  | { type: 'utterance'; text: string }
  | { type: 'select'; index: number }
  | { type: 'stop' };
