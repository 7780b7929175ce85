/** Timeline controls: scrub, play/pause, speed, display fps, loop.
 * Scrubbing while playing pauses; releasing the scrubber resumes. */

import { Command, commands } from "./protocol.js";

export class TimelineController {
  duration = 0;
  playing = false;
  private wasPlayingBeforeScrub = false;
  private scrubbing = false;

  constructor(
    private readonly send: (command: Command) => void,
    private readonly nextSeq: () => number,
  ) {}

  beginScrub(): void {
    this.scrubbing = true;
    this.wasPlayingBeforeScrub = this.playing;
    if (this.playing) {
      this.playing = false;
      this.send(commands.pause(this.nextSeq()));
    }
  }

  /** Scrubber position in [0,1] maps to Seek(p * duration). */
  scrub(position: number): void {
    const p = Math.min(Math.max(position, 0), 1);
    this.send(commands.seek(this.nextSeq(), p * this.duration));
  }

  endScrub(): void {
    if (this.scrubbing && this.wasPlayingBeforeScrub) {
      this.playing = true;
      this.send(commands.play(this.nextSeq()));
    }
    this.scrubbing = false;
  }

  togglePlay(): void {
    this.playing = !this.playing;
    this.send(this.playing ? commands.play(this.nextSeq())
                           : commands.pause(this.nextSeq()));
  }

  setSpeed(speed: number): void {
    this.send(commands.setSpeed(this.nextSeq(), speed));
  }

  setFps(fps: number): void {
    this.send(commands.setFps(this.nextSeq(), fps));
  }

  setLoop(loop: boolean): void {
    this.send(commands.setLoop(this.nextSeq(), loop));
  }
}
