import init, { community_payoffs, estimator_error_curve, pooled_schedule } from "./pkg/p2p_shapley_demo.js";

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function community() {
  return [num("players"), num("pv"), num("es"), num("seed")];
}

function guard(out, f) {
  try {
    f();
  } catch (e) {
    $(out).innerHTML = `<p class="err">${e}</p>`;
  }
}

// Line chart; series are {name, x, y}. logX spaces the x axis logarithmically.
function plot(canvas, series, { logX = false, xLabel = "", yLabel = "" } = {}) {
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, pad = 50;
  ctx.clearRect(0, 0, w, h);
  const tx = (v) => (logX ? Math.log10(v) : v);
  const xs = series.flatMap((s) => s.x.map(tx));
  const ys = series.flatMap((s) => s.y);
  const [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  let [y0, y1] = [Math.min(0, ...ys), Math.max(...ys)];
  if (y1 === y0) y1 = y0 + 1;
  const px = (v) => pad + ((tx(v) - x0) / (x1 - x0 || 1)) * (w - 2 * pad);
  const py = (v) => h - pad + ((y0 - v) / (y1 - y0)) * (h - 2 * pad);

  ctx.strokeStyle = "#999";
  ctx.beginPath();
  ctx.moveTo(pad, pad / 2);
  ctx.lineTo(pad, h - pad);
  ctx.lineTo(w - pad / 2, h - pad);
  ctx.stroke();
  if (y0 < 0) {
    ctx.setLineDash([3, 3]);
    ctx.beginPath();
    ctx.moveTo(pad, py(0));
    ctx.lineTo(w - pad / 2, py(0));
    ctx.stroke();
    ctx.setLineDash([]);
  }
  ctx.fillStyle = "#333";
  ctx.font = "12px sans-serif";
  ctx.fillText(y1.toPrecision(3), 4, py(y1) + 4);
  ctx.fillText(y0.toPrecision(3), 4, py(y0));
  for (const v of series[0].x) ctx.fillText(String(v), px(v) - 8, h - pad + 16);
  ctx.fillText(xLabel, w / 2 - 40, h - 8);
  ctx.fillText(yLabel, pad + 6, pad / 2 + 4);

  series.forEach((s, i) => {
    ctx.strokeStyle = COLORS[i % COLORS.length];
    ctx.lineWidth = 2;
    ctx.beginPath();
    s.x.forEach((v, j) => (j ? ctx.lineTo(px(v), py(s.y[j])) : ctx.moveTo(px(v), py(s.y[j]))));
    ctx.stroke();
    ctx.fillStyle = ctx.strokeStyle;
    ctx.fillText(s.name, w - 190, pad / 2 + 16 * (i + 1));
  });
  ctx.lineWidth = 1;
}

function showPayoffs() {
  guard("payoff-out", () => {
    const report = JSON.parse(community_payoffs(...community(), num("spp")));
    const s = report.summary;
    const body = report.rows
      .map(
        (r) => `<tr><td>${r.prosumer_id}</td><td>${r.owns_pv ? "yes" : ""}</td><td>${r.owns_es ? "yes" : ""}</td>` +
          `<td>${r.standalone_cost.toFixed(4)}</td><td>${r.payoff.toFixed(4)}</td></tr>`
      )
      .join("");
    $("payoff-out").innerHTML =
      `<p>mode ${s.mode}, saving v(N) = ${s.grand_value.toFixed(4)}, ` +
      `sum of payoffs minus v(N) = ${s.efficiency_residual.toExponential(2)}, ${s.lp_solves} LP solves</p>` +
      `<table><tr><th>id</th><th>PV</th><th>ES</th><th>alone</th><th>payoff</th></tr>${body}</table>`;
  });
}

function showCurve() {
  guard("curve-out", () => {
    const c = JSON.parse(estimator_error_curve(...community(), num("runs")));
    plot(
      $("curve"),
      c.series.map((s) => ({ name: s.name, x: c.samples_per_player, y: s.relative_mae })),
      { logX: true, xLabel: "samples per player", yLabel: "MAE / mean |payoff|" }
    );
    $("curve-out").innerHTML = "";
  });
}

function showSchedule() {
  guard("schedule-out", () => {
    const s = JSON.parse(pooled_schedule(...community()));
    plot(
      $("schedule"),
      [
        { name: "batteries idle", x: s.hour, y: s.idle_net_kwh },
        { name: "pooled schedule", x: s.hour, y: s.pooled_net_kwh },
        { name: "battery flow", x: s.hour, y: s.battery_kwh },
      ],
      { xLabel: "hour", yLabel: "kWh at the meter" }
    );
    $("schedule-out").innerHTML =
      `<p>standalone bills ${s.standalone_cost.toFixed(4)}, pooled bill ${s.pooled_cost.toFixed(4)}</p>`;
  });
}

await init();
$("run-payoffs").onclick = showPayoffs;
$("run-curve").onclick = showCurve;
$("run-schedule").onclick = showSchedule;
showPayoffs();
showSchedule();
