import init, { exampleRegion, exampleNorth, energyCompare, controlPriorities } from "./pkg/northrt_web.js";

const $ = (id) => document.getElementById(id);

function call(f, out, ...args) {
  try {
    return JSON.parse(f(...args));
  } catch (e) {
    out.textContent = String(e.message ?? e);
    out.className = "err";
    return null;
  }
}

function show(out, text) {
  out.textContent = text;
  out.className = "";
}

// ---- two-task example ----

const region = { cols: 120, rows: 90, data: null };

function toCanvas(cv, data, x) {
  const [lx, ly] = data.lower;
  const [ux, uy] = data.upper;
  return [((x[0] - lx) / (ux - lx)) * cv.width, cv.height - ((x[1] - ly) / (uy - ly)) * cv.height];
}

function drawRegion() {
  const cv = $("region");
  const g = cv.getContext("2d");
  const d = region.data;
  const w = cv.width / d.cols;
  const h = cv.height / d.rows;
  g.clearRect(0, 0, cv.width, cv.height);
  g.fillStyle = "#cfe3f7";
  for (let j = 0; j < d.rows; j++) {
    for (let i = 0; i < d.cols; i++) {
      if (d.feasible[j * d.cols + i]) g.fillRect(i * w, cv.height - (j + 1) * h, w + 0.5, h + 0.5);
    }
  }
  g.fillStyle = "#555";
  g.fillText(`c1 ∈ [${d.lower[0]}, ${d.upper[0]}]`, cv.width - 90, cv.height - 6);
  g.fillText(`c2 ∈ [${d.lower[1]}, ${d.upper[1]}]`, 6, 12);
}

function drawPath(path) {
  const cv = $("region");
  const g = cv.getContext("2d");
  g.strokeStyle = "#c33";
  g.fillStyle = "#c33";
  g.lineWidth = 2;
  g.beginPath();
  path.forEach((p, k) => {
    const [x, y] = toCanvas(cv, region.data, p.x);
    if (k === 0) g.moveTo(x, y);
    else g.lineTo(x, y);
  });
  g.stroke();
  for (const p of path) {
    const [x, y] = toCanvas(cv, region.data, p.x);
    g.beginPath();
    g.arc(x, y, 4, 0, 2 * Math.PI);
    g.fill();
  }
}

function onRegionClick(ev) {
  const cv = $("region");
  const out = $("region-out");
  const r = cv.getBoundingClientRect();
  const fx = (ev.clientX - r.left) / r.width;
  const fy = 1 - (ev.clientY - r.top) / r.height;
  const d = region.data;
  const c1 = d.lower[0] + fx * (d.upper[0] - d.lower[0]);
  const c2 = d.lower[1] + fy * (d.upper[1] - d.lower[1]);
  const res = call(exampleNorth, out, c1, c2);
  drawRegion();
  if (!res) return;
  drawPath(res.path);
  const lines = res.path.map(
    (p, k) => `${k === 0 ? "start" : "descent " + k}: (${p.x[0].toFixed(4)}, ${p.x[1].toFixed(4)})  objective ${p.objective.toPrecision(6)}`,
  );
  for (const s of res.rounds) {
    lines.push(`eliminated [${s.eliminated}] at d = 1e-5·1.5^${s.growths} = ${s.d.toExponential(3)}`);
  }
  lines.push(`${res.queries} oracle queries`);
  show(out, lines.join("\n"));
}

// ---- line plots ----

function plotSeries(cv, series) {
  const g = cv.getContext("2d");
  g.clearRect(0, 0, cv.width, cv.height);
  const all = series.flatMap((s) => s.values);
  if (all.length === 0) return;
  const lo = Math.min(...all);
  const hi = Math.max(...all);
  const span = hi - lo || 1;
  const pad = 30;
  g.strokeStyle = "#999";
  g.strokeRect(pad, 8, cv.width - pad - 8, cv.height - pad - 8);
  g.fillStyle = "#555";
  g.fillText(hi.toPrecision(4), 2, 16);
  g.fillText(lo.toPrecision(4), 2, cv.height - pad);
  series.forEach((s, k) => {
    const n = Math.max(s.values.length - 1, 1);
    g.strokeStyle = s.color;
    g.lineWidth = 2;
    g.beginPath();
    s.values.forEach((v, i) => {
      const x = pad + (i / n) * (cv.width - pad - 8);
      const y = 8 + (1 - (v - lo) / span) * (cv.height - pad - 16);
      if (i === 0) g.moveTo(x, y);
      else g.lineTo(x, y);
    });
    g.stroke();
    g.fillStyle = s.color;
    g.fillText(s.label, cv.width - 160, 24 + 14 * k);
  });
}

function runEnergy() {
  const out = $("energy-out");
  const res = call(
    energyCompare,
    out,
    Number($("en-n").value),
    Number($("en-u").value),
    Number($("en-seed").value),
    Number($("en-iters").value),
  );
  if (!res) return;
  plotSeries($("energy"), [
    { label: "NORTH (per descent)", values: res.north.trace, color: "#1f5fbf" },
    { label: "SA (best so far)", values: res.sa.trace, color: "#d07a00" },
  ]);
  show(
    out,
    [
      `NORTH: objective ${res.north.objective.toPrecision(8)}, ${res.north.queries} oracle queries, ${res.north.rounds} elimination rounds`,
      `SA:    objective ${res.sa.objective.toPrecision(8)}, ${res.sa.queries} oracle queries`,
      `frequencies (NORTH): ${res.north.x.map((f) => f.toFixed(3)).join(", ")}`,
    ].join("\n"),
  );
}

function runControl() {
  const out = $("control-out");
  const res = call(controlPriorities, out, Number($("ct-n").value), Number($("ct-seed").value));
  if (!res) return;
  plotSeries($("control"), [
    { label: "NORTH+ per outer step", values: res.northplus.outer, color: "#2a8a3a" },
    { label: "NORTH final", values: res.northplus.outer.map(() => res.north.objective), color: "#1f5fbf" },
  ]);
  const moves = res.northplus.moves.map(
    (m) => `  task ${m.task} ${m.raise ? "raised" : "lowered"} from rank ${m.from_rank}: objective ${m.objective.toPrecision(6)}`,
  );
  show(
    out,
    [
      `${res.dags} DAGs, ${res.tasks} nodes; initial objective ${res.initial.toPrecision(6)}`,
      `NORTH:  ${res.north.objective.toPrecision(8)}  periods ${res.north.x.map((t) => t.toFixed(0)).join(", ")}`,
      `NORTH+: ${res.northplus.objective.toPrecision(8)}  periods ${res.northplus.x.map((t) => t.toFixed(0)).join(", ")}`,
      `priority moves (${moves.length}):`,
      ...moves,
      `final order (highest first): ${res.northplus.priorities.join(", ")}`,
    ].join("\n"),
  );
}

await init();
region.data = call(exampleRegion, $("region-out"), region.cols, region.rows);
if (region.data) drawRegion();
$("region").addEventListener("click", onRegionClick);
$("en-run").addEventListener("click", runEnergy);
$("ct-run").addEventListener("click", runControl);
