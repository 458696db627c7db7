// Build with `wasm-pack build crates/web --target web --out-dir www/pkg`
// and serve this directory over HTTP.
import init, { sampleMarket, plan, simulate, demandCurve } from "./pkg/tatonnement_web.js";

const $ = (id) => document.getElementById(id);
const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"];

function status(msg, isError = false) {
  $("status").textContent = msg;
  $("status").className = isError ? "error" : "";
}

function call(fn, ...args) {
  try {
    return JSON.parse(fn(...args));
  } catch (e) {
    status(String(e.message || e), true);
    return null;
  }
}

// Draws series [{points: [[x, y]], color}] on a canvas with optional log axes.
function chart(canvas, series, { logX = false, logY = false, band = null } = {}) {
  const ctx = canvas.getContext("2d");
  const W = canvas.width, H = canvas.height, pad = 40;
  ctx.clearRect(0, 0, W, H);
  const fx = logX ? Math.log10 : (v) => v;
  const fy = logY ? Math.log10 : (v) => v;
  const pts = series.flatMap((s) => s.points).filter(([x, y]) => (!logX || x > 0) && (!logY || y > 0));
  if (pts.length === 0) return;
  let [x0, x1] = [Math.min(...pts.map((p) => fx(p[0]))), Math.max(...pts.map((p) => fx(p[0])))];
  let [y0, y1] = [Math.min(...pts.map((p) => fy(p[1]))), Math.max(...pts.map((p) => fy(p[1])))];
  if (band) { y0 = Math.min(y0, band[0]); y1 = Math.max(y1, band[1]); }
  if (x1 === x0) x1 = x0 + 1;
  if (y1 === y0) { y0 -= 0.5; y1 += 0.5; }
  const sx = (v) => pad + ((fx(v) - x0) / (x1 - x0)) * (W - 2 * pad);
  const sy = (v) => H - pad - ((fy(v) - y0) / (y1 - y0)) * (H - 2 * pad);

  if (band) {
    ctx.fillStyle = "#e8f5e9";
    ctx.fillRect(pad, sy(band[1]), W - 2 * pad, sy(band[0]) - sy(band[1]));
  }
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, W - 2 * pad, H - 2 * pad);
  ctx.fillStyle = "#444";
  ctx.font = "11px sans-serif";
  const label = (v, log) => (log ? "1e" + v.toFixed(1) : v.toPrecision(3));
  ctx.fillText(label(y1, logY), 2, pad + 4);
  ctx.fillText(label(y0, logY), 2, H - pad);
  ctx.fillText(label(x0, logX), pad, H - pad + 14);
  ctx.fillText(label(x1, logX), W - pad - 30, H - pad + 14);

  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.beginPath();
    let started = false;
    for (const [x, y] of s.points) {
      if ((logX && x <= 0) || (logY && y <= 0)) continue;
      started ? ctx.lineTo(sx(x), sy(y)) : ctx.moveTo(sx(x), sy(y));
      started = true;
    }
    ctx.stroke();
    if (s.marker) {
      ctx.fillStyle = s.color;
      ctx.beginPath();
      ctx.arc(sx(s.marker[0]), sy(s.marker[1]), 4, 0, 2 * Math.PI);
      ctx.fill();
    }
  }
}

function loadSample() {
  $("market").value = sampleMarket($("sample").value);
}

function onPlan() {
  const report = call(plan, $("market").value, Number($("f_init").value));
  if (!report) return;
  const { params, constants, sizing } = report;
  status(`λ = ${params.lambda.toPrecision(4)}, κ = ${params.kappa.toPrecision(4)}, ` +
    `δ = ${params.delta.toPrecision(4)}, warehouse ratio r = ${params.r.toFixed(0)}`);
  $("report").textContent = JSON.stringify({ constants, params, sizing }, null, 2);
}

function onSimulate() {
  const options = {
    scenario: $("scenario").value,
    scheduler: $("scheduler").value,
    seed: Number($("seed").value),
    days: Number($("days").value),
    f_init: Number($("f_init").value),
  };
  status("simulating...");
  // Yield so the status line paints before the synchronous run.
  setTimeout(() => {
    const result = call(simulate, $("market").value, JSON.stringify(options));
    if (!result) return;
    const { points, summary } = result;
    chart($("convergence"), [
      { points: points.map((p) => [p.t, p.f - 1]), color: COLORS[0] },
      { points: points.map((p) => [p.t, p.phi]), color: COLORS[1] },
    ], { logY: true });
    const n = points[0].fill.length;
    chart($("fill"), Array.from({ length: n }, (_, i) => ({
      points: points.map((p) => [p.t, p.fill[i]]),
      color: COLORS[i % COLORS.length],
    })), { band: n ? [0.25, 0.75] : null });
    status(`f − 1 in blue, φ in red. ${summary.violations} violations, ${summary.mismatches} mismatches` +
      (summary.days_to_phase_two == null ? "" : `, Phase 2 from day ${summary.days_to_phase_two.toFixed(1)}`));
    $("report").textContent = JSON.stringify(summary, null, 2);
  }, 10);
}

function onCurve() {
  const good = Number($("good").value);
  const curve = call(demandCurve, $("market").value, good, 8, 200);
  if (!curve) return;
  const pts = curve.points.map((p) => [p.price, p.demand]);
  const supply = curve.points.map((p) => [p.price, curve.supply]);
  chart($("demand"), [
    { points: pts, color: COLORS[0], marker: [curve.equilibrium_price, curve.supply] },
    { points: supply, color: "#aaa" },
  ], { logX: true, logY: true });
  status(`good ${good}: demand (blue) against supply (grey); equilibrium price ${curve.equilibrium_price.toPrecision(5)}`);
}

await init();
$("sample").addEventListener("change", loadSample);
$("plan").addEventListener("click", onPlan);
$("simulate").addEventListener("click", onSimulate);
$("curve").addEventListener("click", onCurve);
loadSample();
