import init, { coneExplorer, annotateSweep, compareGroups } from "./pkg/emosteer_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const list = (id) => $(id).value.split(",").map((s) => s.trim()).filter(Boolean).map(Number);

function show(out, f, request) {
  out.classList.remove("error");
  try {
    const reply = JSON.parse(f(JSON.stringify(request)));
    out.textContent = JSON.stringify(reply, null, 2);
    return reply;
  } catch (e) {
    out.classList.add("error");
    out.textContent = String(e);
    return null;
  }
}

function heatmap(table, matrix) {
  table.replaceChildren();
  for (const row of matrix) {
    const tr = table.insertRow();
    for (const v of row) {
      const td = tr.insertCell();
      // red for positive, blue for negative
      const a = Math.min(1, Math.abs(v));
      td.style.background = v >= 0 ? `rgba(200,40,40,${a})` : `rgba(40,80,200,${a})`;
      td.textContent = v.toFixed(2);
    }
  }
}

await init();

$("cone-run").onclick = () => {
  const reply = show($("cone-out"), coneExplorer, {
    dim: num("cone-dim"),
    emotions: num("cone-k"),
    samples: num("cone-n"),
    shared: num("cone-shared"),
    signal: num("cone-signal"),
    seed: num("cone-seed"),
  });
  if (reply) {
    const { cosine_matrix, ...summary } = reply;
    $("cone-out").textContent = JSON.stringify(summary, null, 2);
    heatmap($("cone-heat"), cosine_matrix);
  }
};

$("dose-run").onclick = () => {
  const points = $("dose-in").value
    .split("\n")
    .map((l) => l.trim())
    .filter(Boolean)
    .map((l) => {
      const [strength, target_delta, ppl, repetition] = l.split(",").map(Number);
      return { strength, target_delta, ppl, repetition: repetition || 0 };
    });
  show($("dose-out"), annotateSweep, { points, sign: Number($("dose-sign").value) });
};

$("cmp-run").onclick = () => {
  show($("cmp-out"), compareGroups, {
    a: list("cmp-a"),
    b: list("cmp-b"),
    resamples: num("cmp-r"),
    seed: num("cmp-seed"),
  });
};

$("cone-run").click();
