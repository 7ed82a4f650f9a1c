import init, { catalog_keys, axiom_residuals, path_transport, homotopy_discrepancy } from "./pkg/invalg_web.js";

const $ = (id) => document.getElementById(id);
const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

function fillSelect(sel, keys) {
  for (const k of keys) {
    const o = document.createElement("option");
    o.textContent = k;
    sel.appendChild(o);
  }
}

function fmt(x) {
  return x === null ? "NaN" : x.toExponential(2);
}

function showError(el, v) {
  el.textContent = "error: " + v.error;
}

function runAxioms() {
  const v = JSON.parse(axiom_residuals($("ax-key").value, Number($("ax-n").value), Number($("ax-seed").value)));
  const table = $("ax-out");
  table.innerHTML = "";
  if (v.error) return showError(table, v);
  table.innerHTML = "<tr><th></th><th>check</th><th>max residual</th><th>tolerance</th></tr>";
  for (const c of v.checks) {
    const row = table.insertRow();
    row.insertCell().innerHTML = c.passed ? '<span class="pass">PASS</span>' : '<span class="fail">FAIL</span>';
    row.insertCell().textContent = c.name.replace(/^\//, "");
    row.insertCell().textContent = fmt(c.max_residual);
    row.insertCell().textContent = fmt(c.tolerance);
  }
}

function plotLines(canvas, xs, series) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  let lo = Infinity, hi = -Infinity;
  for (const s of series) for (const y of s) { lo = Math.min(lo, y); hi = Math.max(hi, y); }
  if (hi - lo < 1e-12) { hi += 1; lo -= 1; }
  const pad = 30;
  const X = (x) => pad + (x - xs[0]) / (xs[xs.length - 1] - xs[0]) * (w - 2 * pad);
  const Y = (y) => h - pad - (y - lo) / (hi - lo) * (h - 2 * pad);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#444";
  ctx.font = "11px monospace";
  ctx.fillText(hi.toPrecision(3), 2, pad - 4);
  ctx.fillText(lo.toPrecision(3), 2, h - pad + 12);
  ctx.fillText("t", w - pad + 6, h - pad + 4);
  series.forEach((s, k) => {
    ctx.strokeStyle = COLORS[k % COLORS.length];
    ctx.beginPath();
    s.forEach((y, i) => (i ? ctx.lineTo(X(xs[i]), Y(y)) : ctx.moveTo(X(xs[i]), Y(y))));
    ctx.stroke();
    ctx.fillStyle = ctx.strokeStyle;
    ctx.fillText("b" + k, pad + 6 + 28 * k, pad + 14);
  });
}

function runTransport() {
  const v = JSON.parse(path_transport($("tr-key").value, Number($("tr-h").value)));
  if (v.error) return showError($("tr-info"), v);
  const last = v.b[v.b.length - 1];
  $("tr-info").textContent =
    `over ${v.algebroid}, ${v.times.length - 1} steps\n` +
    `final b = [${last.map((x) => x.toFixed(6)).join(", ")}]\n` +
    `anchor residual ${fmt(v.anchor_residual)}`;
  const series = v.b[0].map((_, k) => v.b.map((row) => row[k]));
  plotLines($("tr-plot"), v.times, series);
}

function heat(canvas, grid) {
  const ctx = canvas.getContext("2d");
  const n = grid.length;
  const cell = canvas.width / n;
  const logs = grid.flat().map((g) => Math.log10(Math.max(g, 1e-16)));
  const lo = -16, hi = Math.max(0, ...logs);
  for (let i = 0; i < n; i++) {
    for (let j = 0; j < n; j++) {
      const u = (Math.log10(Math.max(grid[i][j], 1e-16)) - lo) / (hi - lo);
      ctx.fillStyle = `hsl(${240 - 240 * u}, 80%, ${30 + 35 * u}%)`;
      // s to the right, t upward
      ctx.fillRect(i * cell, canvas.height - (j + 1) * cell, cell + 0.5, cell + 0.5);
    }
  }
}

function runHomotopy() {
  const key = $("ho-key").value;
  const v = JSON.parse(homotopy_discrepancy(key, Number($("ho-h").value), Number($("ho-seed").value)));
  if (v.error) return showError($("ho-info"), v);
  $("ho-info").textContent =
    `over ${v.algebroid}, ${v.grid.length}×${v.grid.length} grid\n` +
    `max |Φ₀ − Φ₁| = ${fmt(v.discrepancy)}\n` +
    `anchor residual ${fmt(v.anchor_residual)}`;
  heat($("ho-plot"), v.gap);
}

await init();
const entries = JSON.parse(catalog_keys());
const algebroids = entries
  .filter((e) => e.kind === "algebroid")
  .map((e) => e.key.replace("(m)", "(2)"));
fillSelect($("ax-key"), algebroids);
fillSelect(
  $("ho-key"),
  entries.filter((e) => e.kind === "homotopy").map((e) => e.key)
    .concat(algebroids.filter((k) => k !== "broken-jacobi" && k !== "incompatible-anchor")),
);
$("ax-run").onclick = runAxioms;
$("tr-run").onclick = runTransport;
$("ho-run").onclick = runHomotopy;
runAxioms();
runTransport();
runHomotopy();
