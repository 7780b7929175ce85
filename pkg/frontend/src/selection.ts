/** Pointer-event interpreters for the selection tools. Vertices are sent in
 * framebuffer pixel coordinates, scaled from canvas coordinates. Modifier
 * keys pick the combine mode: shift = add, alt = subtract, else replace. */

import { Command, SelectionMode, Vec2, commands } from "./protocol.js";

export type Tool = "orbit" | "rect" | "polygon" | "lasso" | "brush" | "sphere";

export interface CanvasMapping {
  canvasWidth: number;
  canvasHeight: number;
  fbWidth: number;
  fbHeight: number;
}

/** Matches the relevant subset of DOM pointer events. */
export interface Modifiers {
  shiftKey?: boolean;
  altKey?: boolean;
}

export function toFramebuffer(map: CanvasMapping, x: number, y: number): Vec2 {
  return [x * (map.fbWidth / map.canvasWidth), y * (map.fbHeight / map.canvasHeight)];
}

export function modsToMode(mods: Modifiers): SelectionMode {
  if (mods.shiftKey) return "add";
  if (mods.altKey) return "subtract";
  return "replace";
}

export interface DiscardNotice {
  reason: string;
}

/** Drives one selection tool at a time from pointer events; emits exactly
 * one Select command per completed gesture. */
export class SelectionDriver {
  tool: Tool = "orbit";
  brushRadiusPx = 8;
  sphereRadiusWorld = 0.25;

  private dragStart: Vec2 | null = null;
  private stroke: Vec2[] = [];
  private polygon: Vec2[] = [];

  constructor(
    private readonly send: (command: Command) => void,
    private readonly nextSeq: () => number,
    public mapping: CanvasMapping,
    private readonly onDiscard: (notice: DiscardNotice) => void = () => {},
  ) {}

  setTool(tool: Tool): void {
    this.tool = tool;
    this.dragStart = null;
    this.stroke = [];
    this.polygon = [];
  }

  pointerDown(x: number, y: number, _mods: Modifiers = {}): void {
    const p = toFramebuffer(this.mapping, x, y);
    if (this.tool === "rect") {
      this.dragStart = p;
    } else if (this.tool === "lasso" || this.tool === "brush") {
      this.stroke = [p];
    }
  }

  pointerMove(x: number, y: number): void {
    if (this.tool === "lasso" || this.tool === "brush") {
      if (this.stroke.length) {
        this.stroke.push(toFramebuffer(this.mapping, x, y));
      }
    }
  }

  pointerUp(x: number, y: number, mods: Modifiers = {}): void {
    const p = toFramebuffer(this.mapping, x, y);
    const mode = modsToMode(mods);
    if (this.tool === "rect" && this.dragStart) {
      this.send(commands.select(this.nextSeq(),
                                { kind: "rect", p0: this.dragStart, p1: p }, mode));
      this.dragStart = null;
    } else if (this.tool === "lasso" && this.stroke.length) {
      // freehand outline auto-closes on release
      if (this.stroke.length >= 3) {
        this.send(commands.select(this.nextSeq(),
                                  { kind: "lasso", vertices: this.stroke }, mode));
      } else {
        this.onDiscard({ reason: "lasso needs at least 3 points" });
      }
      this.stroke = [];
    } else if (this.tool === "brush" && this.stroke.length) {
      this.send(commands.select(this.nextSeq(),
                                { kind: "brush", stroke: this.stroke,
                                  radius: this.brushRadiusPx }, mode));
      this.stroke = [];
    } else if (this.tool === "sphere") {
      this.send(commands.select(this.nextSeq(),
                                { kind: "sphere", screen: p,
                                  radius: this.sphereRadiusWorld }, mode));
    }
  }

  /** Polygon tool: click to add a vertex. */
  polygonClick(x: number, y: number): void {
    if (this.tool !== "polygon") return;
    this.polygon.push(toFramebuffer(this.mapping, x, y));
  }

  /** Polygon tool: double-click closes; <3 vertices is discarded. */
  polygonClose(mods: Modifiers = {}): void {
    if (this.tool !== "polygon") return;
    if (this.polygon.length >= 3) {
      this.send(commands.select(this.nextSeq(),
                                { kind: "polygon", vertices: this.polygon },
                                modsToMode(mods)));
    } else {
      this.onDiscard({ reason: "polygon needs at least 3 vertices" });
    }
    this.polygon = [];
  }

  get pendingVertices(): Vec2[] {
    return this.tool === "polygon" ? [...this.polygon] : [...this.stroke];
  }
}
