import { ApiClient } from "./api.js";
import { AnnotationSession } from "./session.js";
import { curveToPolyline, disagreementsAt } from "./disagreements.js";
import { drawOverlay, toImage, viewTransform } from "./overlay.js";
import type { AnnotationRecord, FrameMeta, Meta, Vec2 } from "./types.js";

const api = new ApiClient(
  (window as unknown as { VOXHAND_API?: string }).VOXHAND_API ?? "",
);

interface AppState {
  meta: Meta;
  frameIds: string[];
  frameIndex: number;
  frame: FrameMeta | null;
  session: AnnotationSession | null;
  jointIndex: number;       // keyboard-selected joint, canonical order
  annotator: string;
  cursor: Vec2 | null;      // image coordinates, mirrored on both panes
}

let state: AppState;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

async function boot(): Promise<void> {
  const meta = await api.meta();
  const frames = await api.frames();
  state = {
    meta,
    frameIds: frames.frames.map((f) => f.id),
    frameIndex: 0,
    frame: null,
    session: null,
    jointIndex: 0,
    annotator: localStorage.getItem("voxhand.annotator") ?? "anonymous",
    cursor: null,
  };
  (el<HTMLInputElement>("annotator")).value = state.annotator;
  wireControls();
  await loadFrame(0);
}

async function loadFrame(index: number): Promise<void> {
  state.frameIndex = Math.max(0, Math.min(index, state.frameIds.length - 1));
  const frameId = state.frameIds[state.frameIndex];
  state.frame = await api.frame(frameId);
  state.session = new AnnotationSession(api, frameId, state.annotator);
  state.session.onChange(render);
  state.cursor = null;

  const depthImg = el<HTMLImageElement>("depth-img");
  depthImg.src = api.depthUrl(frameId);
  const rgbImg = el<HTMLImageElement>("rgb-img");
  if (state.frame.has_rgb) {
    rgbImg.src = api.rgbUrl(frameId);
    rgbImg.style.display = "";
  } else {
    rgbImg.removeAttribute("src");
    rgbImg.style.display = "none";
  }
  depthImg.onload = render;
  render();
}

function currentJoint(): string {
  return state.meta.joint_names[state.jointIndex];
}

function advanceJoint(step: number): void {
  const n = state.meta.joint_names.length;
  state.jointIndex = (state.jointIndex + step + n) % n;
  render();
}

function wireControls(): void {
  for (const pane of ["depth-canvas", "rgb-canvas"]) {
    const canvas = el<HTMLCanvasElement>(pane);
    canvas.addEventListener("mousemove", (ev) => {
      state.cursor = canvasToImage(canvas, [ev.offsetX, ev.offsetY]);
      render();
    });
    canvas.addEventListener("mouseleave", () => {
      state.cursor = null;
      render();
    });
    canvas.addEventListener("click", (ev) => {
      if (!state.session || !state.frame) return;
      const p = canvasToImage(canvas, [ev.offsetX, ev.offsetY]);
      if (p[0] < 0 || p[1] < 0 || p[0] >= state.frame.width || p[1] >= state.frame.height) {
        return;
      }
      void state.session.placeLabel(currentJoint(), p);
      advanceJoint(1);
    });
  }

  document.addEventListener("keydown", (ev) => {
    if (ev.target instanceof HTMLInputElement) return;
    switch (ev.key) {
      case "Tab":
        ev.preventDefault();
        advanceJoint(ev.shiftKey ? -1 : 1);   // skip without labeling
        break;
      case "Enter":
        void accept();
        break;
      case "Backspace":
        if (state.session) void state.session.removeLabel(currentJoint());
        break;
      case "ArrowRight":
        void loadFrame(state.frameIndex + 1);
        break;
      case "ArrowLeft":
        void loadFrame(state.frameIndex - 1);   // revisit earlier frames
        break;
    }
  });

  el<HTMLButtonElement>("accept").addEventListener("click", () => void accept());
  el<HTMLButtonElement>("retry").addEventListener("click", () => {
    if (state.session) void state.session.retryFit();
  });
  el<HTMLButtonElement>("prev").addEventListener("click",
    () => void loadFrame(state.frameIndex - 1));
  el<HTMLButtonElement>("next").addEventListener("click",
    () => void loadFrame(state.frameIndex + 1));
  el<HTMLInputElement>("annotator").addEventListener("change", (ev) => {
    state.annotator = (ev.target as HTMLInputElement).value || "anonymous";
    localStorage.setItem("voxhand.annotator", state.annotator);
    void loadFrame(state.frameIndex);
  });
  el<HTMLButtonElement>("show-disagreements").addEventListener("click",
    () => void showDisagreements());
}

async function accept(): Promise<void> {
  if (!state.session || !state.session.canAccept()) return;
  await state.session.acceptFrame();
  await loadFrame(state.frameIndex + 1);
}

function canvasToImage(canvas: HTMLCanvasElement, p: Vec2): Vec2 {
  if (!state.frame) return p;
  const t = viewTransform(state.frame.width, state.frame.height,
    canvas.width, canvas.height);
  return toImage(p, t);
}

function render(): void {
  if (!state.frame || !state.session) return;
  const snap = state.session.snapshot();
  const edges = state.meta.edges;

  for (const [paneId, imgId] of [
    ["depth-canvas", "depth-img"],
    ["rgb-canvas", "rgb-img"],
  ] as const) {
    const canvas = el<HTMLCanvasElement>(paneId);
    const img = el<HTMLImageElement>(imgId);
    const ctx = canvas.getContext("2d");
    if (!ctx) continue;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    const t = viewTransform(state.frame.width, state.frame.height,
      canvas.width, canvas.height);
    if (img.complete && img.src) {
      ctx.imageSmoothingEnabled = false;
      ctx.drawImage(img, t.offsetX, t.offsetY,
        state.frame.width * t.scale, state.frame.height * t.scale);
    }
    drawOverlay(ctx, snap.fit, snap.labels, edges, t, currentJoint());
    if (state.cursor) {
      const [cx, cy] = [state.cursor[0] * t.scale + t.offsetX,
        state.cursor[1] * t.scale + t.offsetY];
      ctx.strokeStyle = "rgba(255,255,255,0.6)";
      ctx.lineWidth = 0.75;
      ctx.beginPath();
      ctx.moveTo(cx, 0);
      ctx.lineTo(cx, canvas.height);
      ctx.moveTo(0, cy);
      ctx.lineTo(canvas.width, cy);
      ctx.stroke();
    }
  }

  el("frame-label").textContent =
    `frame ${state.frameIndex + 1}/${state.frameIds.length} (${snap.frameId})`;
  el("joint-label").textContent = `next joint: ${currentJoint()} ` +
    `(${Object.keys(snap.labels).length} labeled)`;
  const status = el("status");
  if (snap.connectionError) {
    status.textContent = `connection lost: ${snap.connectionError} - labels kept`;
    status.className = "error";
    el<HTMLButtonElement>("retry").style.display = "";
  } else {
    el<HTMLButtonElement>("retry").style.display = "none";
    if (snap.fitPending) {
      status.textContent = "fitting...";
      status.className = "busy";
    } else if (snap.warning === "under_constrained") {
      status.textContent = "under-constrained: place at least 3 labels";
      status.className = "warn";
    } else if (snap.status === "accepted") {
      status.textContent = "accepted";
      status.className = "ok";
    } else if (snap.fit) {
      status.textContent =
        `fit residual ${snap.fit.mean_residual_px.toFixed(2)} px`;
      status.className = "ok";
    } else {
      status.textContent = "click joints to begin";
      status.className = "";
    }
  }
  el<HTMLButtonElement>("accept").disabled = !state.session.canAccept();
}

async function showDisagreements(): Promise<void> {
  const panel = el("disagreements");
  panel.style.display = "";
  try {
    const curve = await api.agreement("max");
    const poly = curveToPolyline(curve, 360, 120);
    const byFrame = new Map<string, AnnotationRecord[]>();
    for (const id of state.frameIds) {
      const meta = await api.frame(id);
      if (meta.annotations.length >= 2) byFrame.set(id, meta.annotations);
    }
    const entries = disagreementsAt(byFrame, 20.0);
    el("agreement-plot").innerHTML =
      `<svg width="360" height="120" style="background:#111">` +
      `<polyline points="${poly}" fill="none" stroke="#4da6ff"/></svg>` +
      `<div>agreement over ${curve.n_frames} frames ` +
      `(proportion within threshold, 0-200mm)</div>`;
    el("disagreement-list").innerHTML = entries.length
      ? entries.map((e) =>
          `<li>${e.frameId}: ${e.annotators.join(" vs ")} differ by ` +
          `${e.maxJointDistanceMm === Infinity
            ? "an occlusion call"
            : e.maxJointDistanceMm.toFixed(0) + "mm"}</li>`).join("")
      : "<li>no disagreements above 20mm</li>";
  } catch (err) {
    el("agreement-plot").textContent = `not enough data: ${String(err)}`;
    el("disagreement-list").innerHTML = "";
  }
}

void boot();
