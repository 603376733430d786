// Timeline view model: a pure function of server data plus local
// playhead/filter state. Reloading and rebuilding from the same server
// responses always reproduces the same view.

import type { ApiClient } from "./api.js";
import type {
  Annotation,
  AnnotationKind,
  AnnotationStatus,
  FrameInfo,
  KeyEvent,
  ProcEvent,
  SessionDetail,
  SessionEvent,
} from "./types.js";
import { LANE_ORDER } from "./types.js";

export interface FilterState {
  kind: AnnotationKind | null;
  status: AnnotationStatus | null;
}

export interface TimelineViewModel {
  sessionId: string;
  detail: SessionDetail;
  lanes: Map<AnnotationKind, Annotation[]>;
  playhead: number;
  selectedId: string | null;
  filter: FilterState;
}

export function clampPlayhead(detail: SessionDetail, t: number): number {
  return Math.min(Math.max(t, detail.manifest.start), detail.manifest.end);
}

export function buildLanes(annotations: Annotation[]): Map<AnnotationKind, Annotation[]> {
  const lanes = new Map<AnnotationKind, Annotation[]>();
  for (const kind of LANE_ORDER) lanes.set(kind, []);
  const sorted = [...annotations].sort(
    (a, b) => a.t_start - b.t_start || a.id.localeCompare(b.id),
  );
  for (const ann of sorted) {
    lanes.get(ann.kind)?.push(ann);
  }
  return lanes;
}

export function buildViewModel(
  sessionId: string,
  detail: SessionDetail,
  annotations: Annotation[],
  playhead?: number,
  selectedId: string | null = null,
  filter: FilterState = { kind: null, status: null },
): TimelineViewModel {
  return {
    sessionId,
    detail,
    lanes: buildLanes(annotations),
    playhead: clampPlayhead(detail, playhead ?? detail.manifest.start),
    selectedId,
    filter,
  };
}

/** Lanes in fixed order with the kind/status filter applied. */
export function visibleLanes(vm: TimelineViewModel): [AnnotationKind, Annotation[]][] {
  const out: [AnnotationKind, Annotation[]][] = [];
  for (const kind of LANE_ORDER) {
    if (vm.filter.kind && vm.filter.kind !== kind) continue;
    const anns = (vm.lanes.get(kind) ?? []).filter(
      (a) => !vm.filter.status || a.status === vm.filter.status,
    );
    out.push([kind, anns]);
  }
  return out;
}

/** Index of the latest frame captured at or before `t`, or null. */
export function frameIndexAt(frames: FrameInfo[], t: number): number | null {
  let best: number | null = null;
  for (const f of frames) {
    if (f.t <= t) best = f.index;
    else break;
  }
  return best;
}

/** The FunctionView interval covering the playhead, if any. */
export function currentFunctionView(vm: TimelineViewModel): Annotation | null {
  const views = vm.lanes.get("FunctionView") ?? [];
  let current: Annotation | null = null;
  for (const ann of views) {
    const end = ann.t_end ?? ann.t_start;
    if (ann.t_start <= vm.playhead && vm.playhead <= end) current = ann;
  }
  return current;
}

const TYPED_OVERLAY_WINDOW_MS = 4000;
const DROPPED_KEYS = new Set([
  "shift", "ctrl", "control", "alt", "meta", "win", "capslock",
  "left", "right", "up", "down", "home", "end", "pageup", "pagedown",
  "enter", "tab", "escape",
]);

/** Recent keystrokes around the playhead rendered as the typed overlay. */
export function typedTextAt(events: SessionEvent[], t: number): string {
  const chars: string[] = [];
  for (const ev of events) {
    if (ev.type !== "key" || ev.t > t || t - ev.t > TYPED_OVERLAY_WINDOW_MS) continue;
    const key = ev as KeyEvent;
    const name = key.key.toLowerCase();
    if (name === "backspace" || name === "delete") {
      chars.pop();
    } else if (name === "space") {
      chars.push(" ");
    } else if (key.key.length === 1 && !DROPPED_KEYS.has(name)) {
      chars.push(key.key);
    }
  }
  return chars.join("");
}

/** Top processes (by CPU) from the last sample at or before the playhead. */
export function topProcessesAt(
  events: SessionEvent[],
  t: number,
  limit = 3,
): { name: string; cpu_pct: number }[] {
  let last: ProcEvent | null = null;
  for (const ev of events) {
    if (ev.type === "proc" && ev.t <= t) last = ev as ProcEvent;
  }
  if (!last) return [];
  return [...last.processes]
    .sort((a, b) => b.cpu_pct - a.cpu_pct)
    .slice(0, limit)
    .map((p) => ({ name: p.name, cpu_pct: p.cpu_pct }));
}

/** Fetch everything the timeline needs and build the initial view. */
export async function loadSessionView(
  api: ApiClient,
  sessionId: string,
): Promise<{ vm: TimelineViewModel; events: SessionEvent[] }> {
  const detail = await api.getSession(sessionId);
  const annotations = await api.getAnnotations(sessionId);
  const events = await api.getEvents(sessionId);
  return { vm: buildViewModel(sessionId, detail, annotations), events };
}

export interface DecisionResult {
  vm: TimelineViewModel;
  conflict: boolean;
}

export type Decision =
  | { action: "confirm" | "reject"; id: string; author?: string }
  | {
      action: "add";
      kind: AnnotationKind;
      t_start: number;
      t_end?: number;
      payload: Record<string, unknown>;
      author?: string;
    };

/**
 * Apply a confirm/reject/add decision on the server, then rebuild the view
 * from the server's state. Never optimistic: the returned model reflects
 * exactly what the server acknowledged. On a stale-edit conflict the state
 * is refetched and `conflict` is set so the UI can prompt for a retry.
 */
export async function submitAnnotationDecision(
  api: ApiClient,
  vm: TimelineViewModel,
  decision: Decision,
): Promise<DecisionResult> {
  const { ConflictError } = await import("./api.js");
  let conflict = false;
  try {
    if (decision.action === "add") {
      await api.postAnnotation(vm.sessionId, {
        kind: decision.kind,
        t_start: decision.t_start,
        t_end: decision.t_end,
        payload: decision.payload,
        author: decision.author,
      });
    } else {
      await api.patchAnnotation(
        vm.sessionId,
        decision.id,
        decision.action === "confirm" ? "confirmed" : "rejected",
        decision.author,
      );
    }
  } catch (err) {
    if (err instanceof ConflictError) {
      conflict = true;
    } else {
      throw err;
    }
  }
  const annotations = await api.getAnnotations(vm.sessionId);
  return {
    vm: buildViewModel(vm.sessionId, vm.detail, annotations, vm.playhead, vm.selectedId, vm.filter),
    conflict,
  };
}
