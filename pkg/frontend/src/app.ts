// Browser entry: session list, annotation lanes, playback with overlays,
// and confirm/reject/add controls. All state mutations round-trip through
// the server; this file only renders what the model layer returns.
//
// Keyboard: space = play/pause, arrows = frame step, c = confirm, x = reject.

import { ApiClient } from "./api.js";
import {
  Decision,
  TimelineViewModel,
  currentFunctionView,
  frameIndexAt,
  loadSessionView,
  submitAnnotationDecision,
  topProcessesAt,
  typedTextAt,
  visibleLanes,
} from "./model.js";
import { PlaybackController } from "./playback.js";
import type { SessionEvent } from "./types.js";

const api = new ApiClient("");

interface AppState {
  vm: TimelineViewModel | null;
  events: SessionEvent[];
  playback: PlaybackController | null;
}

const state: AppState = { vm: null, events: [], playback: null };

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function spanPercent(vm: TimelineViewModel, t: number): number {
  const { start, end } = vm.detail.manifest;
  if (end === start) return 0;
  return ((t - start) / (end - start)) * 100;
}

function renderLanes(root: HTMLElement, vm: TimelineViewModel): void {
  root.textContent = "";
  for (const [kind, annotations] of visibleLanes(vm)) {
    const lane = el("div", "lane");
    lane.appendChild(el("span", "lane-label", kind));
    const track = el("div", "lane-track");
    for (const ann of annotations) {
      const left = spanPercent(vm, ann.t_start);
      const right = spanPercent(vm, ann.t_end ?? ann.t_start);
      const block = el("div", `ann ann-${ann.status}`);
      block.style.left = `${left}%`;
      block.style.width = `${Math.max(right - left, 0.4)}%`;
      block.title = `${ann.kind} ${JSON.stringify(ann.payload)} [${ann.status}]`;
      block.dataset.id = ann.id;
      if (vm.selectedId === ann.id) block.classList.add("selected");
      block.addEventListener("click", () => {
        vm.selectedId = ann.id;
        render();
      });
      track.appendChild(block);
    }
    lane.appendChild(track);
    root.appendChild(lane);
  }
}

function renderOverlays(vm: TimelineViewModel): void {
  const typed = document.getElementById("overlay-typed")!;
  typed.textContent = typedTextAt(state.events, vm.playhead);
  const fv = currentFunctionView(vm);
  document.getElementById("overlay-function")!.textContent = fv
    ? `${fv.payload["display_name"] ?? fv.payload["entry"]}`
    : "(no function)";
  const procs = topProcessesAt(state.events, vm.playhead);
  document.getElementById("overlay-procs")!.textContent = procs
    .map((p) => `${p.name} ${p.cpu_pct.toFixed(0)}%`)
    .join("  ");
}

function renderFrame(vm: TimelineViewModel): void {
  const img = document.getElementById("frame") as HTMLImageElement;
  const index = frameIndexAt(vm.detail.frames, vm.playhead);
  if (index !== null) img.src = api.frameUrl(vm.sessionId, index);
}

function render(): void {
  const vm = state.vm;
  if (!vm) return;
  renderLanes(document.getElementById("lanes")!, vm);
  renderFrame(vm);
  renderOverlays(vm);
  const scrubber = document.getElementById("scrubber") as HTMLInputElement;
  scrubber.min = String(vm.detail.manifest.start);
  scrubber.max = String(vm.detail.manifest.end);
  scrubber.value = String(vm.playhead);
  document.getElementById("playhead-label")!.textContent = new Date(vm.playhead).toISOString();
}

async function decide(decision: Decision): Promise<void> {
  if (!state.vm) return;
  const result = await submitAnnotationDecision(api, state.vm, decision);
  state.vm = result.vm;
  if (result.conflict) {
    // Stale edit: state has been refetched; ask before retrying.
    const again = window.confirm("Annotation changed on the server; retry on refreshed state?");
    if (again && decision.action !== "add") render();
  }
  render();
}

async function openSession(sessionId: string): Promise<void> {
  const { vm, events } = await loadSessionView(api, sessionId);
  state.vm = vm;
  state.events = events;
  state.playback = new PlaybackController(vm.detail, (playhead) => {
    if (state.vm) {
      state.vm.playhead = playhead;
      render();
    }
  });
  render();
}

async function renderSessionList(): Promise<void> {
  const sessions = await api.listSessions();
  const list = document.getElementById("sessions")!;
  list.textContent = "";
  for (const manifest of sessions) {
    const item = el("li");
    const link = el("a", "session-link", `${manifest.session_id} (${manifest.subject_pseudonym})`);
    link.addEventListener("click", () => void openSession(manifest.session_id));
    item.appendChild(link);
    list.appendChild(item);
  }
}

function wireControls(): void {
  document.getElementById("btn-play")!.addEventListener("click", () => state.playback?.toggle());
  document.getElementById("btn-confirm")!.addEventListener("click", () => {
    if (state.vm?.selectedId) void decide({ action: "confirm", id: state.vm.selectedId });
  });
  document.getElementById("btn-reject")!.addEventListener("click", () => {
    if (state.vm?.selectedId) void decide({ action: "reject", id: state.vm.selectedId });
  });
  document.getElementById("btn-add")!.addEventListener("click", () => {
    const vm = state.vm;
    if (!vm) return;
    const label = window.prompt("Task mark label:", "start");
    if (label) {
      void decide({ action: "add", kind: "TaskMark", t_start: vm.playhead, payload: { label } });
    }
  });
  const scrubber = document.getElementById("scrubber") as HTMLInputElement;
  scrubber.addEventListener("input", () => state.playback?.seek(Number(scrubber.value)));

  const statusFilter = document.getElementById("filter-status") as HTMLSelectElement;
  statusFilter.addEventListener("change", () => {
    if (state.vm) {
      state.vm.filter.status = (statusFilter.value || null) as never;
      render();
    }
  });

  window.addEventListener("keydown", (ev) => {
    if (!state.playback || !state.vm) return;
    if (ev.key === " ") {
      ev.preventDefault();
      state.playback.toggle();
    } else if (ev.key === "ArrowRight") {
      state.playback.stepFrame(1);
    } else if (ev.key === "ArrowLeft") {
      state.playback.stepFrame(-1);
    } else if (ev.key === "c" && state.vm.selectedId) {
      void decide({ action: "confirm", id: state.vm.selectedId });
    } else if (ev.key === "x" && state.vm.selectedId) {
      void decide({ action: "reject", id: state.vm.selectedId });
    }
  });
}

export function start(): void {
  wireControls();
  void renderSessionList();
}

if (typeof document !== "undefined" && document.getElementById("lanes")) {
  start();
}
