import init, { mask_view, roc_gaussian, roc_text } from "./pkg/rdalm_web.js";

const $ = (id) => document.getElementById(id);

// Spectrogram rows are frames; draw time left to right, low frequencies at the bottom.
function drawGrid(canvas, values, frames, bins, colour) {
  canvas.width = frames;
  canvas.height = bins;
  canvas.style.width = `${frames * 2}px`;
  canvas.style.height = `${bins / 2}px`;
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(frames, bins);
  for (let t = 0; t < frames; t++) {
    for (let f = 0; f < bins; f++) {
      const v = values[t * bins + f];
      const i = 4 * ((bins - 1 - f) * frames + t);
      const [r, g, b] = colour(v);
      img.data[i] = r;
      img.data[i + 1] = g;
      img.data[i + 2] = b;
      img.data[i + 3] = 255;
    }
  }
  ctx.putImageData(img, 0, 0);
}

const heat = (v) => [255 * Math.min(1, 2 * v), 255 * Math.max(0, 2 * v - 1), 80 * (1 - v)];
const mono = (v) => [255 * v, 255 * v, 255 * v];

function updateMask() {
  const level = Number($("m-level").value);
  const thr = Number($("m-thr").value);
  $("m-level-out").textContent = level;
  $("m-thr-out").textContent = thr.toFixed(2);
  try {
    const v = mask_view(Number($("m-class").value), level, thr, Number($("m-seed").value) >>> 0);
    drawGrid($("m-mix"), v.mixture, v.frames, v.bins, heat);
    drawGrid($("m-mask"), v.mask, v.frames, v.bins, mono);
    drawGrid($("m-out"), v.masked, v.frames, v.bins, heat);
    $("m-stats").className = "stat";
    $("m-stats").textContent =
      `SDR mixture ${v.sdr_mixture_db.toFixed(2)} dB, soft mask ${v.sdr_soft_db.toFixed(2)} dB, ` +
      `binary mask ${v.sdr_binary_db.toFixed(2)} dB; ${(100 * v.kept).toFixed(1)}% of bins kept`;
    v.free();
  } catch (e) {
    $("m-stats").className = "err";
    $("m-stats").textContent = String(e);
  }
}

function plotRoc(view) {
  const c = $("r-plot");
  const ctx = c.getContext("2d");
  const w = c.width, h = c.height;
  ctx.fillStyle = "#fff";
  ctx.fillRect(0, 0, w, h);
  ctx.strokeStyle = "#bbb";
  ctx.setLineDash([4, 4]);
  ctx.beginPath();
  ctx.moveTo(0, h);
  ctx.lineTo(w, 0);
  ctx.stroke();
  ctx.setLineDash([]);
  ctx.strokeStyle = "#1565c0";
  ctx.lineWidth = 2;
  ctx.beginPath();
  const fpr = view.fpr, tpr = view.tpr;
  for (let i = 0; i < fpr.length; i++) {
    const x = fpr[i] * w, y = h - tpr[i] * h;
    if (i === 0) ctx.moveTo(x, y); else ctx.lineTo(x, y);
  }
  ctx.stroke();
  $("r-stats").className = "stat";
  $("r-stats").textContent = `AUC ${view.auc.toFixed(4)} over ${fpr.length} ROC points`;
}

function showRocError(e) {
  $("r-stats").className = "err";
  $("r-stats").textContent = String(e);
}

function updateRoc() {
  const sep = Number($("r-sep").value);
  $("r-sep-out").textContent = sep.toFixed(1);
  try {
    const v = roc_gaussian(sep, Number($("r-n").value) >>> 0, 7);
    plotRoc(v);
    v.free();
  } catch (e) {
    showRocError(e);
  }
}

function pasted() {
  try {
    const v = roc_text($("r-text").value);
    plotRoc(v);
    v.free();
  } catch (e) {
    showRocError(e);
  }
}

await init();
for (const id of ["m-class", "m-level", "m-thr", "m-seed"]) $(id).addEventListener("input", updateMask);
for (const id of ["r-sep", "r-n"]) $(id).addEventListener("input", updateRoc);
$("r-go").addEventListener("click", pasted);
updateMask();
updateRoc();
