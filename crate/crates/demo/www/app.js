import init, { outage_curves, rate_vs_blocklength, aloha_collisions } from "./pkg/nomasim_demo.js";

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"];

function draw(canvas, plot, logX) {
  const ctx = canvas.getContext("2d");
  const W = canvas.width, H = canvas.height, L = 60, R = 170, T = 15, B = 40;
  ctx.clearRect(0, 0, W, H);
  const fx = logX ? Math.log10 : (v) => v;
  const fy = plot.log_y ? (v) => Math.log10(Math.max(v, 1e-6)) : (v) => v;
  const xs = plot.series.flatMap((s) => s.x.map(fx));
  const ys = plot.series.flatMap((s) => s.y.map(fy));
  const x0 = Math.min(...xs), x1 = Math.max(...xs);
  let y0 = Math.min(...ys), y1 = Math.max(...ys);
  if (y1 === y0) { y1 += 1; }
  if (!plot.log_y) { y0 = Math.min(0, y0); }
  const px = (v) => L + (fx(v) - x0) / (x1 - x0 || 1) * (W - L - R);
  const py = (v) => H - B - (fy(v) - y0) / (y1 - y0) * (H - T - B);

  ctx.strokeStyle = "#888";
  ctx.strokeRect(L, T, W - L - R, H - T - B);
  ctx.fillStyle = "#222";
  ctx.font = "12px sans-serif";
  ctx.textAlign = "center";
  ctx.fillText(plot.x_label, L + (W - L - R) / 2, H - 8);
  for (let i = 0; i <= 4; i++) {
    const v = x0 + (x1 - x0) * i / 4;
    const shown = logX ? 10 ** v : v;
    ctx.fillText(shown.toPrecision(3), L + (W - L - R) * i / 4, H - B + 15);
  }
  ctx.textAlign = "right";
  for (let i = 0; i <= 4; i++) {
    const v = y0 + (y1 - y0) * i / 4;
    const shown = plot.log_y ? 10 ** v : v;
    ctx.fillText(shown.toPrecision(2), L - 4, H - B - (H - T - B) * i / 4 + 4);
  }
  ctx.save();
  ctx.translate(14, T + (H - T - B) / 2);
  ctx.rotate(-Math.PI / 2);
  ctx.textAlign = "center";
  ctx.fillText(plot.y_label, 0, 0);
  ctx.restore();

  plot.series.forEach((s, k) => {
    ctx.strokeStyle = COLORS[k % COLORS.length];
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    s.x.forEach((x, i) => {
      const y = s.y[i];
      if (plot.log_y && y <= 0) { return; }
      i === 0 ? ctx.moveTo(px(x), py(y)) : ctx.lineTo(px(x), py(y));
    });
    ctx.stroke();
    ctx.fillStyle = ctx.strokeStyle;
    ctx.textAlign = "left";
    ctx.fillText(s.label, W - R + 10, T + 16 * (k + 1));
  });
}

function wire(id, compute, logX) {
  const box = document.getElementById(id);
  const err = box.querySelector(".err");
  const canvas = box.querySelector("canvas");
  const val = (name) => box.querySelector(`[name=${name}]`).value;
  const run = () => {
    err.textContent = "";
    try {
      draw(canvas, JSON.parse(compute(val)), logX);
    } catch (e) {
      err.textContent = e.message ?? String(e);
    }
  };
  box.querySelector("button").addEventListener("click", run);
  run();
}

await init();
wire("outage", (v) => outage_curves(v("users"), +v("rate"), +v("lo"), +v("hi"), +v("step"), +v("trials"), +v("seed")), false);
wire("rate", (v) => rate_vs_blocklength(+v("snr"), +v("eps"), +v("nmax")), true);
wire("aloha", (v) => aloha_collisions(+v("devices"), +v("pa"), +v("slots"), +v("seed")), true);
