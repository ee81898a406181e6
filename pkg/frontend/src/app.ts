/**
 * Studio app: parameter panel on the left, sketch canvas over the rendered
 * model in the center, operation sequence on the right. The canvas draws the
 * server's PNG render underneath a stroke overlay; Enter confirms the pending
 * interpretation, Escape discards it, dragging with the right button orbits.
 */

import { StudioClient } from "./api.js";
import { orbit, zoom } from "./camera.js";
import { SessionStore } from "./store.js";
import { StrokeCapture } from "./strokes.js";

const CANVAS_SIZE = 512;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

export async function startApp(baseUrl: string): Promise<SessionStore> {
  const store = new SessionStore(new StudioClient(baseUrl));
  await store.start();

  const canvas = el<HTMLCanvasElement>("sketch-canvas");
  canvas.width = CANVAS_SIZE;
  canvas.height = CANVAS_SIZE;
  const ctx = canvas.getContext("2d")!;
  const capture = new StrokeCapture(CANVAS_SIZE);
  const renderImg = new Image();
  let drawing = false;
  let orbiting = false;
  let lastPointer: { x: number; y: number } | null = null;

  function requestRender(): void {
    if (!store.sid) return;
    renderImg.src = store.client.renderUrl(store.sid, store.camera) + `&_=${Date.now()}`;
  }

  renderImg.onload = () => redraw();

  function redraw(): void {
    ctx.clearRect(0, 0, CANVAS_SIZE, CANVAS_SIZE);
    ctx.fillStyle = "#1b1e23";
    ctx.fillRect(0, 0, CANVAS_SIZE, CANVAS_SIZE);
    if (renderImg.complete && renderImg.naturalWidth > 0) {
      ctx.imageSmoothingEnabled = false;
      ctx.drawImage(renderImg, 0, 0, CANVAS_SIZE, CANVAS_SIZE);
    }
    ctx.strokeStyle = "#ff9632";
    ctx.lineWidth = 2;
    ctx.lineJoin = "round";
    for (const stroke of capture.all()) {
      ctx.beginPath();
      stroke.forEach(([x, y], i) => {
        const px = x * CANVAS_SIZE;
        const py = (1 - y) * CANVAS_SIZE;
        if (i === 0) ctx.moveTo(px, py);
        else ctx.lineTo(px, py);
      });
      ctx.stroke();
    }
    if (store.pending) {
      ctx.fillStyle = "rgba(110, 190, 255, 0.25)";
      ctx.fillRect(0, 0, CANVAS_SIZE, 22);
      ctx.fillStyle = "#cfe8ff";
      ctx.font = "13px sans-serif";
      const p = store.pending;
      ctx.fillText(
        `pending: ${p.op_type}${p.ambiguous ? " (ambiguous, press O to switch)" : ""}` +
        ` - Enter confirms, Esc discards`, 8, 15);
    }
  }

  canvas.addEventListener("pointerdown", (ev) => {
    ev.preventDefault();
    canvas.setPointerCapture(ev.pointerId);
    if (ev.button === 2) {
      orbiting = true;
      lastPointer = { x: ev.offsetX, y: ev.offsetY };
    } else {
      drawing = true;
      capture.begin({ x: ev.offsetX, y: ev.offsetY });
    }
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (drawing) {
      capture.move({ x: ev.offsetX, y: ev.offsetY });
      redraw();
    } else if (orbiting && lastPointer) {
      const dx = ev.offsetX - lastPointer.x;
      const dy = ev.offsetY - lastPointer.y;
      lastPointer = { x: ev.offsetX, y: ev.offsetY };
      store.camera = orbit(store.camera, dx * 0.01, dy * 0.01);
      capture.clear(); // strokes are tied to the view they were drawn in
      requestRender();
    }
  });
  canvas.addEventListener("pointerup", (ev) => {
    if (drawing) {
      capture.end({ x: ev.offsetX, y: ev.offsetY });
      drawing = false;
      redraw();
    }
    orbiting = false;
  });
  canvas.addEventListener("contextmenu", (ev) => ev.preventDefault());
  canvas.addEventListener("wheel", (ev) => {
    ev.preventDefault();
    store.camera = zoom(store.camera, ev.deltaY > 0 ? 1.1 : 1 / 1.1);
    capture.clear();
    requestRender();
  });

  const status = el<HTMLDivElement>("status");
  const interpretBtn = el<HTMLButtonElement>("interpret");
  interpretBtn.addEventListener("click", async () => {
    if (capture.count === 0) return;
    try {
      await store.submitStrokes(capture.all());
    } catch {
      // the store records the diagnostic; keep the strokes for editing
    }
  });

  window.addEventListener("keydown", async (ev) => {
    if (ev.key === "Enter" && store.pending) {
      await store.confirm();
      capture.clear();
      requestRender();
    } else if (ev.key === "Escape") {
      if (store.pending) await store.undo();
      capture.clear();
      redraw();
    } else if ((ev.key === "o" || ev.key === "O") && store.pending) {
      await store.switchOption().catch(() => undefined);
    }
  });

  const stepsList = el<HTMLUListElement>("steps");
  const panel = el<HTMLDivElement>("params");

  function renderPanel(): void {
    const p = store.pending;
    panel.innerHTML = "";
    const source = p ? [{ op: p.op, params: p.params, label: null }] : store.steps.slice(-1);
    for (const step of source) {
      for (const [key, value] of Object.entries(step.params)) {
        if (typeof value !== "number") continue;
        const row = document.createElement("div");
        row.className = "param-row";
        const label = document.createElement("label");
        label.textContent = `${step.op}.${key}`;
        const input = document.createElement("input");
        input.type = "number";
        input.step = "0.01";
        input.value = String(value);
        input.addEventListener("change", async () => {
          const k = store.steps.length - 1;
          if (p || k < 0) return;
          try {
            await store.tune(k, key, Number(input.value));
            requestRender();
          } catch {
            input.value = String(value);
            status.textContent = store.lastError ?? "edit rejected";
          }
        });
        row.append(label, input);
        panel.append(row);
      }
    }
  }

  store.subscribe(() => {
    stepsList.innerHTML = "";
    store.steps.forEach((s, i) => {
      const li = document.createElement("li");
      li.textContent = `${i + 1}. ${s.op}${s.label ? ` (${s.label})` : ""}`;
      stepsList.append(li);
    });
    status.textContent = store.lastError
      ? `error: ${store.lastError}`
      : `volume ${store.state?.volume.toFixed(6) ?? "-"} | faces ${store.state?.face_count ?? "-"}`;
    renderPanel();
    redraw();
  });

  el<HTMLButtonElement>("undo").addEventListener("click", async () => {
    await store.undo().catch(() => undefined);
    capture.clear();
    requestRender();
  });
  el<HTMLButtonElement>("export").addEventListener("click", async () => {
    const text = await store.exportProtocol();
    const blob = new Blob([text], { type: "application/json" });
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = "model.s2c.json";
    a.click();
  });
  const regToggle = el<HTMLInputElement>("regularizer");
  regToggle.addEventListener("change", () => store.setRegularizer(regToggle.checked));

  requestRender();
  return store;
}
