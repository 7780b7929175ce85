/** DOM wiring: canvas display, toolbar, timeline, selection tools,
 * foveation controls, and the render-video dialog. Everything protocol-
 * shaped lives in the pure modules; this file only binds events. */

import { ViewerClient } from "./client.js";
import { ExportPlanner } from "./exporter.js";
import { CommandThrottle, defaultOrbit, orbitCameraCommand, orbitDrag,
         orbitZoom } from "./gestures.js";
import { buildOverlay, heatColor } from "./overlay.js";
import { FORMAT_RAW, commands } from "./protocol.js";
import { SelectionDriver, Tool } from "./selection.js";
import { TimelineController } from "./timeline.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function main(): void {
  const params = new URLSearchParams(window.location.search);
  const scene = params.get("scene") ?? "demo";
  const wsBase = (location.protocol === "https:" ? "wss://" : "ws://") + location.host;

  const canvas = el<HTMLCanvasElement>("view");
  const overlayCanvas = el<HTMLCanvasElement>("overlay");
  const ctx = canvas.getContext("2d")!;
  const overlayCtx = overlayCanvas.getContext("2d")!;
  const status = el<HTMLElement>("status");
  const scrubber = el<HTMLInputElement>("scrubber");
  const timeLabel = el<HTMLElement>("time-label");

  let orbit = defaultOrbit([0, 0, 0], 3);
  let overlayOn = false;
  let lastStats: { importance?: number[][]; foveal?: number[][] } | null = null;

  const exporter = new ExportPlanner();

  const client = new ViewerClient(wsBase, scene, {
    frameFormat: "png",
    onStatus: (s) => { status.textContent = s; },
    onHello: (hello) => {
      canvas.width = hello.width;
      canvas.height = hello.height;
      overlayCanvas.width = hello.width;
      overlayCanvas.height = hello.height;
      timeline.duration = hello.duration;
      driver.mapping = {
        canvasWidth: canvas.clientWidth, canvasHeight: canvas.clientHeight,
        fbWidth: hello.width, fbHeight: hello.height,
      };
    },
    onEvent: (event) => {
      exporter.onEvent(event);
      updateExportUi();
      if (event.type === "stats") {
        lastStats = event as never;
        drawOverlay();
      }
      if (event.type === "ack" && typeof event["selected"] === "number") {
        el<HTMLElement>("selected-count").textContent =
          `${event["selected"]} selected`;
      }
      if (event.type === "ack" && typeof event["time"] === "number") {
        syncScrubber(event["time"] as number);
      }
    },
    onFrame: (header, payload) => {
      if (header.format === FORMAT_RAW) {
        const image = ctx.createImageData(header.width, header.height);
        for (let i = 0, j = 0; i < payload.length; i += 3, j += 4) {
          image.data[j] = payload[i];
          image.data[j + 1] = payload[i + 1];
          image.data[j + 2] = payload[i + 2];
          image.data[j + 3] = 255;
        }
        ctx.putImageData(image, 0, 0);
      } else {
        const blob = new Blob([payload as BlobPart], { type: "image/png" });
        createImageBitmap(blob).then((bitmap) => {
          ctx.drawImage(bitmap, 0, 0);
          bitmap.close();
        });
      }
      syncScrubber(header.simTimeMs / 1000);
    },
  });

  const sendIfConnected = (command: Parameters<ViewerClient["send"]>[0]) => {
    client.send(command);
  };
  const throttle = new CommandThrottle(sendIfConnected, 30);
  setInterval(() => throttle.flush(), 16);

  const timeline = new TimelineController(sendIfConnected, () => client.nextSeq());
  const driver = new SelectionDriver(
    sendIfConnected, () => client.nextSeq(),
    { canvasWidth: 640, canvasHeight: 360, fbWidth: 640, fbHeight: 360 },
    (notice) => toast(notice.reason));

  function syncScrubber(time: number): void {
    if (timeline.duration > 0) {
      scrubber.valueAsNumber = time / timeline.duration;
    }
    timeLabel.textContent = `${time.toFixed(2)}s`;
  }

  function toast(message: string): void {
    const node = el<HTMLElement>("toast");
    node.textContent = message;
    node.classList.add("visible");
    setTimeout(() => node.classList.remove("visible"), 2500);
  }

  function drawOverlay(): void {
    overlayCtx.clearRect(0, 0, overlayCanvas.width, overlayCanvas.height);
    if (!overlayOn || !lastStats?.importance) return;
    const model = buildOverlay(lastStats.importance, lastStats.foveal ?? null);
    const tileW = overlayCanvas.width / model.cols;
    const tileH = overlayCanvas.height / model.rows;
    for (const cell of model.cells) {
      overlayCtx.fillStyle = heatColor(cell.value);
      overlayCtx.fillRect(cell.col * tileW, cell.row * tileH, tileW, tileH);
      if (cell.foveal) {
        overlayCtx.strokeStyle = "rgba(255, 255, 0, 0.9)";
        overlayCtx.strokeRect(cell.col * tileW + 0.5, cell.row * tileH + 0.5,
                              tileW - 1, tileH - 1);
      }
    }
  }

  function updateExportUi(): void {
    const bar = el<HTMLProgressElement>("export-progress");
    const label = el<HTMLElement>("export-status");
    const button = el<HTMLButtonElement>("export-start");
    button.disabled = !exporter.canExport || !client.connected;
    if (exporter.running && exporter.frameCount) {
      bar.max = exporter.frameCount;
      bar.value = exporter.framesDone;
      label.textContent = `${exporter.framesDone}/${exporter.frameCount}`;
    } else if (exporter.output) {
      label.textContent = `done: ${exporter.output}`;
    } else if (exporter.error) {
      label.textContent = exporter.error;
    }
  }

  // pointer handling: orbit vs selection tools
  let dragging = false;
  let lastX = 0;
  let lastY = 0;

  canvas.addEventListener("pointerdown", (e) => {
    canvas.setPointerCapture(e.pointerId);
    dragging = true;
    lastX = e.offsetX;
    lastY = e.offsetY;
    if (driver.tool !== "orbit" && driver.tool !== "polygon") {
      driver.pointerDown(e.offsetX, e.offsetY, e);
    }
  });
  canvas.addEventListener("pointermove", (e) => {
    if (!dragging) return;
    if (driver.tool === "orbit") {
      orbit = orbitDrag(orbit, e.offsetX - lastX, e.offsetY - lastY);
      throttle.offer(orbitCameraCommand(client.nextSeq(), orbit));
    } else {
      driver.pointerMove(e.offsetX, e.offsetY);
    }
    lastX = e.offsetX;
    lastY = e.offsetY;
  });
  canvas.addEventListener("pointerup", (e) => {
    dragging = false;
    if (driver.tool === "polygon") {
      driver.polygonClick(e.offsetX, e.offsetY);
    } else if (driver.tool !== "orbit") {
      driver.pointerUp(e.offsetX, e.offsetY, e);
    }
  });
  canvas.addEventListener("dblclick", (e) => {
    if (driver.tool === "polygon") driver.polygonClose(e);
  });
  canvas.addEventListener("wheel", (e) => {
    if (driver.tool !== "orbit") return;
    e.preventDefault();
    orbit = orbitZoom(orbit, -Math.sign(e.deltaY));
    throttle.offer(orbitCameraCommand(client.nextSeq(), orbit));
  });

  for (const tool of ["orbit", "rect", "polygon", "lasso", "brush", "sphere"]) {
    el<HTMLButtonElement>(`tool-${tool}`).addEventListener("click", () => {
      driver.setTool(tool as Tool);
      document.querySelectorAll(".tool").forEach((b) => b.classList.remove("active"));
      el(`tool-${tool}`).classList.add("active");
    });
  }

  el<HTMLButtonElement>("edit-delete").addEventListener("click", () => {
    sendIfConnected(commands.editDelete(client.nextSeq()));
  });
  el<HTMLButtonElement>("edit-undo").addEventListener("click", () => {
    sendIfConnected(commands.undo(client.nextSeq()));
  });

  el<HTMLButtonElement>("play-toggle").addEventListener("click", () => {
    timeline.togglePlay();
    el("play-toggle").textContent = timeline.playing ? "Pause" : "Play";
  });
  scrubber.addEventListener("pointerdown", () => timeline.beginScrub());
  scrubber.addEventListener("input", () => timeline.scrub(scrubber.valueAsNumber));
  scrubber.addEventListener("change", () => timeline.endScrub());
  el<HTMLInputElement>("speed").addEventListener("change", (e) => {
    timeline.setSpeed((e.target as HTMLInputElement).valueAsNumber);
  });
  el<HTMLSelectElement>("fps").addEventListener("change", (e) => {
    timeline.setFps(Number((e.target as HTMLSelectElement).value));
  });
  el<HTMLInputElement>("loop").addEventListener("change", (e) => {
    timeline.setLoop((e.target as HTMLInputElement).checked);
  });

  el<HTMLInputElement>("tau").addEventListener("change", (e) => {
    const tau = (e.target as HTMLInputElement).valueAsNumber;
    sendIfConnected(commands.setFoveation(client.nextSeq(), { threshold: tau }));
  });
  el<HTMLInputElement>("foveation-enabled").addEventListener("change", (e) => {
    sendIfConnected(commands.setFoveation(client.nextSeq(), {
      enabled: (e.target as HTMLInputElement).checked,
    }));
  });
  el<HTMLInputElement>("overlay-toggle").addEventListener("change", (e) => {
    overlayOn = (e.target as HTMLInputElement).checked;
    sendIfConnected(commands.setFoveation(client.nextSeq(), { overlay: overlayOn }));
    drawOverlay();
  });
  el<HTMLInputElement>("prompt").addEventListener("change", (e) => {
    sendIfConnected(commands.setPrompt(client.nextSeq(),
                                       (e.target as HTMLInputElement).value));
  });

  el<HTMLButtonElement>("export-add-keyframe").addEventListener("click", () => {
    exporter.addKeyframeFromOrbit(orbit);
    el("export-keyframes").textContent = `${exporter.keyframes.length} keyframes`;
    updateExportUi();
  });
  el<HTMLButtonElement>("export-start").addEventListener("click", () => {
    if (!exporter.canExport) return;
    sendIfConnected(exporter.buildCommand(client.nextSeq()));
    exporter.running = true;
    updateExportUi();
  });

  client.connect();
}

main();
