// Frame playback over the capture timeline: play/pause, scrubbing, and
// single-frame stepping. Time advances in session milliseconds; the
// clock/scheduler is injected so tests can drive it deterministically.

import type { FrameInfo, SessionDetail } from "./types.js";
import { clampPlayhead, frameIndexAt } from "./model.js";

export type Scheduler = (callback: () => void, ms: number) => unknown;

export class PlaybackController {
  playing = false;
  playhead: number;
  rate = 1.0;

  private timer: unknown = null;

  constructor(
    private readonly detail: SessionDetail,
    private readonly onSeek: (playhead: number) => void,
    private readonly schedule: Scheduler = (cb, ms) => setTimeout(cb, ms),
    private readonly tickMs = 200,
  ) {
    this.playhead = detail.manifest.start;
  }

  get frames(): FrameInfo[] {
    return this.detail.frames;
  }

  currentFrameIndex(): number | null {
    return frameIndexAt(this.frames, this.playhead);
  }

  seek(t: number): void {
    this.playhead = clampPlayhead(this.detail, t);
    this.onSeek(this.playhead);
  }

  /** Advance the playhead by wall-clock delta; pauses at session end. */
  advance(dtMs: number): void {
    const next = this.playhead + dtMs * this.rate;
    if (next >= this.detail.manifest.end) {
      this.seek(this.detail.manifest.end);
      this.pause();
      return;
    }
    this.seek(next);
  }

  stepFrame(direction: 1 | -1): void {
    const idx = this.currentFrameIndex();
    const frames = this.frames;
    if (!frames.length) return;
    if (idx === null) {
      this.seek(frames[0]!.t);
      return;
    }
    const target = Math.min(Math.max(idx + direction, 0), frames.length - 1);
    this.seek(frames[target]!.t);
  }

  play(): void {
    if (this.playing) return;
    this.playing = true;
    const tick = () => {
      if (!this.playing) return;
      this.advance(this.tickMs);
      this.timer = this.schedule(tick, this.tickMs);
    };
    this.timer = this.schedule(tick, this.tickMs);
  }

  pause(): void {
    this.playing = false;
    this.timer = null;
  }

  toggle(): void {
    this.playing ? this.pause() : this.play();
  }
}
