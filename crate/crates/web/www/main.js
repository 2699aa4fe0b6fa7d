import init, { estimate, levelProfile, heavyHitters } from "./pkg/fpest_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function params() {
  return {
    kind: $("kind").value,
    n: num("n"),
    m: num("m"),
    del: num("del"),
    p: num("p"),
    eps: num("eps"),
    seed: num("seed"),
  };
}

function fail(target, e) {
  target.innerHTML = "";
  const span = document.createElement("span");
  span.className = "err";
  span.textContent = String(e);
  target.appendChild(span);
}

function table(headers, rows) {
  const t = document.createElement("table");
  const head = t.insertRow();
  for (const h of headers) {
    const th = document.createElement("th");
    th.textContent = h;
    head.appendChild(th);
  }
  for (const r of rows) {
    const tr = t.insertRow();
    for (const cell of r) {
      const td = tr.insertCell();
      if (cell instanceof Node) td.appendChild(cell);
      else td.textContent = cell;
    }
  }
  return t;
}

function bar(value, max, exact) {
  const span = document.createElement("span");
  span.className = exact ? "bar exact" : "bar";
  span.style.width = max > 0 ? `${(12 * value) / max}rem` : "0";
  return span;
}

const sci = (x) => Number(x).toExponential(3);

function runEstimate() {
  const q = params();
  const out = $("est-out");
  out.textContent = "running...";
  setTimeout(() => {
    try {
      const r = JSON.parse(estimate($("alg").value, q.kind, q.n, q.m, q.del, q.p, q.eps, q.seed));
      out.textContent =
        `estimate   ${sci(r.estimate)}\n` +
        `exact      ${sci(r.oracle)}\n` +
        `rel. error ${(100 * r.rel_err).toFixed(2)}%\n` +
        `counters   ${r.counters} (${(r.bits / 8 / 1024).toFixed(0)} KiB), exact needs ${r.oracle_counters}`;
    } catch (e) {
      fail(out, e);
    }
  });
}

function runLevels() {
  const q = params();
  const out = $("levels-out");
  out.textContent = "running...";
  setTimeout(() => {
    try {
      const rows = JSON.parse(levelProfile(q.kind, q.n, q.m, q.p, q.eps, q.seed));
      const max = Math.max(...rows.map((r) => Math.max(r.exact, r.estimated)));
      out.replaceChildren(
        table(
          ["level", "range of |f|^p", "exact", "", "estimated", ""],
          rows.map((r) => [
            r.level,
            `[${sci(r.lower)}, ${sci(r.upper)})`,
            sci(r.exact),
            bar(r.exact, max, true),
            sci(r.estimated),
            bar(r.estimated, max, false),
          ]),
        ),
      );
    } catch (e) {
      fail(out, e);
    }
  });
}

function runHeavy() {
  const q = params();
  const out = $("hh-out");
  out.textContent = "running...";
  setTimeout(() => {
    try {
      const rows = JSON.parse(heavyHitters(q.kind, q.n, q.m, q.del, q.eps, q.seed));
      out.replaceChildren(
        table(
          ["item", "frequency", "sketch estimate", "reported"],
          rows.map((r) => [r.item, r.frequency, r.estimate.toFixed(1), r.reported ? "yes" : "no"]),
        ),
      );
    } catch (e) {
      fail(out, e);
    }
  });
}

await init();
$("run-est").onclick = runEstimate;
$("run-levels").onclick = runLevels;
$("run-hh").onclick = runHeavy;
