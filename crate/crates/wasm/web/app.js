import init, { exploreLoss, previewPartition, Simulation } from "./pkg/fedwsm_wasm.js";

const $ = (id) => document.getElementById(id);
const nums = (s) => s.split(",").map((v) => Number(v.trim())).filter((v) => !Number.isNaN(v));
const fmt = (v) => (v === null || v === undefined ? "" : v.toFixed(3));

function fail(el, e) {
  el.innerHTML = `<p class="err">${e.message ?? e}</p>`;
}

function table(header, rows) {
  const head = `<tr>${header.map((h) => `<th>${h}</th>`).join("")}</tr>`;
  const body = rows.map((r) => `<tr>${r.map((c) => `<td>${c}</td>`).join("")}</tr>`).join("");
  return `<table>${head}${body}</table>`;
}

function renderLoss() {
  const out = $("loss-out");
  try {
    const v = JSON.parse(exploreLoss(nums($("logits").value), nums($("beta").value), Number($("label").value)));
    const rows = v.softmax.map((p, c) => [c, fmt(p), fmt(v.weighted_softmax[c]), fmt(v.grad_ce[c]), fmt(v.grad_wsm[c])]);
    out.innerHTML =
      `<p>CE = ${v.ce.toFixed(4)} &nbsp; WSM = ${v.wsm.toFixed(4)}</p>` +
      table(["class", "softmax", "weighted softmax", "&part;CE/&part;z", "&part;WSM/&part;z"], rows);
  } catch (e) {
    fail(out, e);
  }
}

function heat(v, max, diverging) {
  if (v === null) return "#fff";
  if (diverging) {
    const t = Math.min(1, Math.abs(v) / max);
    return v >= 0 ? `rgb(255,${255 - 180 * t},${255 - 180 * t})` : `rgb(${255 - 180 * t},${255 - 180 * t},255)`;
  }
  const t = max > 0 ? v / max : 0;
  return `rgb(${255 - 200 * t},${255 - 120 * t},255)`;
}

function grid(rows, diverging, rowLabel) {
  const flat = rows.flat().filter((v) => v !== null);
  const max = Math.max(1e-9, ...flat.map(Math.abs));
  const body = rows
    .map((r, k) => `<tr><th>${rowLabel}${k}</th>${r.map((v) => `<td class="cell" title="${fmt(v)}" style="background:${heat(v, max, diverging)}"></td>`).join("")}</tr>`)
    .join("");
  return `<table>${body}</table>`;
}

function renderPartition() {
  const out = $("partition-out");
  try {
    const v = JSON.parse(
      previewPartition(Number($("p-alpha").value), Number($("p-clients").value), Number($("p-classes").value), Number($("p-seed").value)),
    );
    out.innerHTML = `<p>mean label entropy ${v.mean_label_entropy.toFixed(3)} nats (rows: clients, columns: classes)</p>` + grid(v.counts, false, "client ");
  } catch (e) {
    fail(out, e);
  }
}

let sim = null;
let history = [];

function resetSim() {
  const out = $("sim-out");
  try {
    sim?.free();
    sim = new Simulation(
      Number($("s-alpha").value),
      Number($("s-clients").value),
      Number($("s-frac").value),
      $("s-loss").value,
      $("s-strategy").value,
      Number($("s-seed").value),
    );
    history = [];
    drawChart();
    out.innerHTML = "<p>Ready.</p>";
  } catch (e) {
    sim = null;
    fail(out, e);
  }
}

function drawChart() {
  const c = $("s-chart");
  const g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  if (history.length === 0) return;
  const n = Math.max(20, history.length);
  const line = (key, color, lo, hi) => {
    g.strokeStyle = color;
    g.beginPath();
    history.forEach((r, i) => {
      const v = r[key] ?? 0;
      const x = ((i + 0.5) / n) * c.width;
      const y = c.height - ((v - lo) / (hi - lo)) * c.height;
      i === 0 ? g.moveTo(x, y) : g.lineTo(x, y);
    });
    g.stroke();
  };
  line("test_accuracy", "#1565c0", 0, 1);
  line("mean_forgetting", "#c62828", -0.5, 0.5);
  g.fillStyle = "#1565c0";
  g.fillText("test accuracy", 6, 12);
  g.fillStyle = "#c62828";
  g.fillText("mean forgetting", 6, 26);
}

function step(times) {
  const out = $("sim-out");
  if (!sim) resetSim();
  if (!sim) return;
  try {
    let last = null;
    for (let i = 0; i < times; i++) {
      last = JSON.parse(sim.step());
      history.push(last);
    }
    drawChart();
    out.innerHTML =
      `<p>round ${last.round}: test accuracy ${fmt(last.test_accuracy)}, mean forgetting ${fmt(last.mean_forgetting)}, ` +
      `clients ${last.participants.join(", ")}</p>` +
      `<p>Forgetting F<sub>ki</sub> (rows: data of client k, columns: model of client i; red is forgetting)</p>` +
      grid(last.forgetting, true, "data ");
  } catch (e) {
    fail(out, e);
  }
}

await init();
for (const id of ["logits", "beta", "label"]) $(id).addEventListener("input", renderLoss);
for (const id of ["p-alpha", "p-clients", "p-classes", "p-seed"]) $(id).addEventListener("input", renderPartition);
for (const id of ["s-alpha", "s-clients", "s-frac", "s-loss", "s-strategy", "s-seed"]) $(id).addEventListener("change", resetSim);
$("s-reset").addEventListener("click", resetSim);
$("s-step").addEventListener("click", () => step(1));
$("s-run").addEventListener("click", () => step(20));
renderLoss();
renderPartition();
resetSim();
