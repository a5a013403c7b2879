/** Rollout playback: frame stepping and scrubber clamping. */

export class Playback {
  private index = 0;
  playing = false;

  constructor(readonly frames: string[]) {
    if (frames.length === 0) {
      throw new Error("playback needs at least one frame");
    }
  }

  get frameCount(): number {
    return this.frames.length;
  }

  /** Scrubber maximum: the last valid frame index. */
  get maxIndex(): number {
    return this.frames.length - 1;
  }

  get current(): string {
    return this.frames[this.index];
  }

  get position(): number {
    return this.index;
  }

  scrubTo(i: number): void {
    this.index = Math.max(0, Math.min(this.maxIndex, Math.floor(i)));
  }

  /** Advance one frame; stops (returns false) at the end. */
  tick(): boolean {
    if (this.index >= this.maxIndex) {
      this.playing = false;
      return false;
    }
    this.index += 1;
    return true;
  }

  restart(): void {
    this.index = 0;
  }
}
