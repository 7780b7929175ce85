/** Frame display ordering: frame_seq must be monotone non-decreasing on
 * screen, so anything at or below the last displayed sequence is dropped. */

export class FrameGate {
  lastDisplayedSeq = -1;

  /** Returns true when the frame should be displayed. */
  accept(frameSeq: number): boolean {
    if (frameSeq <= this.lastDisplayedSeq) {
      return false;
    }
    this.lastDisplayedSeq = frameSeq;
    return true;
  }

  reset(): void {
    this.lastDisplayedSeq = -1;
  }
}

/** Reconnect backoff: 1, 2, 4, 8 seconds, capped at 8. */
export function backoffSeconds(attempt: number): number {
  return Math.min(Math.pow(2, attempt), 8);
}
