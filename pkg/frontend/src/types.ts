// Wire types mirroring the review service's JSON bodies bit-for-bit.

export type AnnotationKind =
  | "TaskMark"
  | "FunctionView"
  | "BlockView"
  | "Navigation"
  | "Rename"
  | "FeatureUse"
  | "Comment";

export type AnnotationStatus = "suggested" | "confirmed" | "rejected" | "manual";

export interface Annotation {
  id: string;
  session_id: string;
  kind: AnnotationKind;
  t_start: number;
  t_end?: number;
  payload: Record<string, unknown>;
  status: AnnotationStatus;
  provenance: Record<string, string>;
  predecessor?: string;
}

export interface Manifest {
  session_id: string;
  subject_pseudonym: string;
  binary_id: string;
  tool_hint?: string;
  start: number;
  end: number;
  frame_count: number;
  capture_interval_ms: number;
}

export interface FrameInfo {
  index: number;
  t: number;
  kind: "keyframe" | "patch";
}

export interface SessionDetail {
  manifest: Manifest;
  frames: FrameInfo[];
}

export interface KeyEvent {
  type: "key";
  t: number;
  key: string;
  modifiers: string[];
}

export interface ClickEvent {
  type: "click";
  t: number;
  x: number;
  y: number;
  button: string;
  click_count: number;
}

export interface ProcEvent {
  type: "proc";
  t: number;
  processes: { name: string; cpu_pct: number; mem_bytes: number }[];
}

export interface WindowEvent {
  type: "window";
  t: number;
  title: string;
  x: number;
  y: number;
  w: number;
  h: number;
  focused: boolean;
}

export interface CommentEvent {
  type: "comment";
  t: number;
  text: string;
}

export type SessionEvent = KeyEvent | ClickEvent | ProcEvent | WindowEvent | CommentEvent;

// Fixed lane order for the timeline view.
export const LANE_ORDER: AnnotationKind[] = [
  "TaskMark",
  "FunctionView",
  "BlockView",
  "Navigation",
  "Rename",
  "FeatureUse",
  "Comment",
];

export interface NewAnnotationDraft {
  kind: AnnotationKind;
  t_start: number;
  t_end?: number;
  payload: Record<string, unknown>;
  author?: string;
}
