/** Render-video dialog state: capture camera keyframes, launch an export,
 * track its progress events. */

import { orbitEye, OrbitState } from "./gestures.js";
import { lookAtQuat } from "./math.js";
import { Command, TrajectoryKeyframe, commands } from "./protocol.js";

export const KEYFRAME_SPACING_SECONDS = 1.0;

export class ExportPlanner {
  keyframes: TrajectoryKeyframe[] = [];
  fps = 30;
  running = false;
  framesDone = 0;
  frameCount: number | null = null;
  output: string | null = null;
  error: string | null = null;

  /** "Add keyframe from current camera": times step by a fixed spacing. */
  addKeyframeFromOrbit(state: OrbitState): void {
    const eye = orbitEye(state);
    this.keyframes.push({
      t: this.keyframes.length * KEYFRAME_SPACING_SECONDS,
      position: eye,
      quaternion: lookAtQuat(eye, state.target),
      vfov_deg: state.vfovDeg,
    });
  }

  clear(): void {
    this.keyframes = [];
  }

  get canExport(): boolean {
    return this.keyframes.length >= 1 && !this.running;
  }

  buildCommand(seq: number): Command {
    if (!this.canExport) {
      throw new Error("export unavailable: no keyframes or already running");
    }
    return commands.startExport(seq, {
      mode: "catmull_rom",
      keyframes: this.keyframes,
    }, this.fps);
  }

  onEvent(event: { type: string; [key: string]: unknown }): void {
    if (event.type === "ack") return;
    if (event.type === "export_progress") {
      this.running = true;
      this.framesDone = event["frames_done"] as number;
      this.frameCount = event["frame_count"] as number;
    } else if (event.type === "export_done") {
      this.running = false;
      this.output = event["output"] as string;
      this.frameCount = event["frames"] as number;
      this.framesDone = this.frameCount ?? this.framesDone;
    } else if (event.type === "error") {
      this.running = false;
      this.error = `${event["code"]}: ${event["message"] ?? ""}`;
    }
  }
}
