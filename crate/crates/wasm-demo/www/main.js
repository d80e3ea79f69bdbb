import init, { fitness, fitness_grid, cif_graph, sample_cif, evolve_toy } from "./pkg/crystal_evolve_wasm.js";

const $ = (id) => document.getElementById(id);

// fitness surface

const V_RANGE = [-2, 2];
const DE_RANGE = [-1, 0.5];
const GRID = 100;

function colour(t) {
  // dark blue → yellow
  const r = Math.round(255 * Math.min(1, Math.max(0, 1.6 * t - 0.3)));
  const g = Math.round(255 * Math.min(1, Math.max(0, 1.2 * t)));
  const b = Math.round(255 * Math.max(0, 0.6 - 0.8 * t) + 60 * (1 - t));
  return [r, g, b];
}

function drawSurface() {
  const fe = Number($("fe").value);
  $("fe-val").textContent = fe;
  // grid rows run from low ΔE to high ΔE; draw high ΔE at the top
  const values = fitness_grid(fe, V_RANGE[0], V_RANGE[1], DE_RANGE[0], DE_RANGE[1], GRID);
  let lo = Infinity, hi = -Infinity;
  for (const v of values) { lo = Math.min(lo, v); hi = Math.max(hi, v); }
  const canvas = $("surface");
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(GRID, GRID);
  for (let r = 0; r < GRID; r++) {
    for (let c = 0; c < GRID; c++) {
      const t = (values[r * GRID + c] - lo) / (hi - lo || 1);
      const [R, G, B] = colour(t);
      const k = 4 * ((GRID - 1 - r) * GRID + c);
      img.data.set([R, G, B, 255], k);
    }
  }
  const off = new OffscreenCanvas(GRID, GRID);
  off.getContext("2d").putImageData(img, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
  $("surface-range").textContent = `fitness range ${lo.toFixed(2)} … ${hi.toFixed(2)}`;
}

$("surface").addEventListener("mousemove", (ev) => {
  const canvas = ev.target;
  const x = ev.offsetX / canvas.width, y = ev.offsetY / canvas.height;
  const v = V_RANGE[0] + x * (V_RANGE[1] - V_RANGE[0]);
  const de = DE_RANGE[1] - y * (DE_RANGE[1] - DE_RANGE[0]);
  const fe = Number($("fe").value);
  $("surface-readout").textContent =
    `FE ${fe}, V ${v.toFixed(2)}, ΔE ${de.toFixed(2)} → fitness ${fitness(fe, v, de).toFixed(3)}`;
});
$("fe").addEventListener("input", drawSurface);

// CIF → graph

const ELEMENT_COLOURS = { 6: "#444", 7: "#36c", 8: "#d22", 12: "#7b3", 29: "#c73", 30: "#889", 34: "#e90", 50: "#9ab" };
let graph = null;
let sampleIndex = 0;

function buildGraph() {
  try {
    graph = JSON.parse(cif_graph($("cif").value, Number($("cutoff").value), Number($("maxnb").value)));
  } catch (e) {
    graph = null;
    $("graph-summary").innerHTML = `<span class="err">${e}</span>`;
    $("graph").getContext("2d").clearRect(0, 0, 9999, 9999);
    $("expansion").getContext("2d").clearRect(0, 0, 9999, 9999);
    return;
  }
  const n = graph.positions.length;
  $("graph-summary").textContent =
    `${graph.id} (${graph.formula}): ${n} atoms, ${graph.edges.length} directed edges, ${graph.basis_centers.length} Gaussians per edge`;
  $("edge").max = Math.max(0, graph.edges.length - 1);
  $("edge").value = 0;
  drawGraph();
}

function drawGraph() {
  if (!graph) return;
  const canvas = $("graph");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const selected = Number($("edge").value);
  // xy projection of the unit-cell atoms; edges to periodic images bend by image
  const pts = graph.positions;
  const xs = pts.map((p) => p[0]), ys = pts.map((p) => p[1]);
  const pad = 60;
  const minX = Math.min(...xs), maxX = Math.max(...xs), minY = Math.min(...ys), maxY = Math.max(...ys);
  const scale = Math.min((canvas.width - 2 * pad) / (maxX - minX || 1), (canvas.height - 2 * pad) / (maxY - minY || 1), 60);
  const at = (p) => [pad + (p[0] - minX) * scale, canvas.height - pad - (p[1] - minY) * scale];
  graph.edges.forEach((e, k) => {
    const [x1, y1] = at(pts[e.i]);
    const [x2, y2] = at(pts[e.j]);
    ctx.strokeStyle = k === selected ? "#e00" : "rgba(0,0,0,0.12)";
    ctx.lineWidth = k === selected ? 2.5 : 1;
    ctx.beginPath();
    if (e.i === e.j || (x1 === x2 && y1 === y2)) {
      ctx.arc(x1 + 12, y1, 12, 0, 2 * Math.PI);
    } else {
      // bend edges to different images apart
      const mx = (x1 + x2) / 2, my = (y1 + y2) / 2;
      const off = 6 * (e.image[0] + 2 * e.image[1] + 3 * e.image[2]);
      ctx.moveTo(x1, y1);
      ctx.quadraticCurveTo(mx + off, my - off, x2, y2);
    }
    ctx.stroke();
  });
  pts.forEach((p, i) => {
    const [x, y] = at(p);
    ctx.fillStyle = ELEMENT_COLOURS[graph.atomic_numbers[i]] || "#888";
    ctx.beginPath();
    ctx.arc(x, y, 9, 0, 2 * Math.PI);
    ctx.fill();
    ctx.fillStyle = "#000";
    ctx.fillText(`${i} (Z=${graph.atomic_numbers[i]})`, x + 11, y - 8);
  });
  drawExpansion(selected);
}

function drawExpansion(k) {
  const canvas = $("expansion");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const e = graph.edges[k];
  if (!e) return;
  $("edge-label").textContent = `${e.i} → ${e.j} image [${e.image}] d = ${e.distance.toFixed(3)} Å`;
  const centres = graph.basis_centers;
  const w = canvas.width / centres.length;
  ctx.fillStyle = "#36c";
  e.expansion.forEach((v, m) => {
    const h = v * (canvas.height - 20);
    ctx.fillRect(m * w + 1, canvas.height - 15 - h, w - 2, h);
  });
  ctx.fillStyle = "#000";
  ctx.fillText(`${centres[0]} Å`, 2, canvas.height - 2);
  ctx.fillText(`${centres[centres.length - 1]} Å`, canvas.width - 30, canvas.height - 2);
}

$("build").addEventListener("click", buildGraph);
$("edge").addEventListener("input", drawGraph);
$("sample").addEventListener("click", () => {
  sampleIndex += 1;
  $("cif").value = sample_cif(sampleIndex);
  buildGraph();
});

// toy evolution

function runEvolution() {
  let out;
  try {
    out = JSON.parse(evolve_toy(BigInt($("seed").value), Number($("gens").value), Number($("elite").value)));
  } catch (e) {
    $("best").innerHTML = `<span class="err">${e}</span>`;
    return;
  }
  const recs = out.records;
  const canvas = $("history");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const lo = Math.min(...recs.map((r) => r.fitness_min));
  const hi = Math.max(...recs.map((r) => r.fitness_max));
  const pad = 35;
  const x = (g) => pad + (recs.length > 1 ? g / (recs.length - 1) : 0.5) * (canvas.width - 2 * pad);
  const y = (f) => canvas.height - pad - ((f - lo) / (hi - lo || 1)) * (canvas.height - 2 * pad);
  const series = [["fitness_max", "#c00"], ["fitness_mean", "#06c"], ["fitness_min", "#999"]];
  for (const [key, col] of series) {
    ctx.strokeStyle = col;
    ctx.beginPath();
    recs.forEach((r, g) => (g ? ctx.lineTo(x(g), y(r[key])) : ctx.moveTo(x(g), y(r[key]))));
    ctx.stroke();
    ctx.fillStyle = col;
    ctx.fillText(key.replace("fitness_", ""), canvas.width - pad + 2, y(recs[recs.length - 1][key]));
  }
  ctx.fillStyle = "#000";
  ctx.fillText(hi.toFixed(1), 2, y(hi) + 4);
  ctx.fillText(lo.toFixed(1), 2, y(lo));
  ctx.fillText("generation 1", pad, canvas.height - 10);
  ctx.fillText(`${recs.length}`, canvas.width - pad - 8, canvas.height - 10);
  const p = out.best_properties;
  $("best").textContent =
    `best ${out.best_id}: fitness ${out.best_fitness.toFixed(3)} (FE ${p.fe.toFixed(1)}, V ${p.v.toFixed(2)}, ΔE ${p.de.toFixed(2)})`;
  $("best-cif").textContent = out.best_cif;
}

$("evolve").addEventListener("click", runEvolution);

await init();
$("cif").value = sample_cif(0);
drawSurface();
buildGraph();
runEvolution();
