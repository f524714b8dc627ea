import init, { thresholds, simulate_chain, overlap_profile } from './pkg/sparse_mcmc_web.js';

const NS = 'http://www.w3.org/2000/svg';

function values(form) {
  return Object.fromEntries(new FormData(form).entries());
}

function show(el, text, isError = false) {
  el.textContent = text;
  el.className = isError ? 'error' : '';
}

function node(tag, attrs, text) {
  const el = document.createElementNS(NS, tag);
  for (const [k, v] of Object.entries(attrs)) el.setAttribute(k, v);
  if (text !== undefined) el.textContent = text;
  return el;
}

// Line plot of one or more series of [x, y] points.
function plot(svg, series, xLabel, yLabel) {
  svg.replaceChildren();
  const w = +svg.getAttribute('width'), h = +svg.getAttribute('height');
  const m = { l: 60, r: 20, t: 15, b: 40 };
  const pts = series.flatMap(s => s.points);
  if (!pts.length) return;
  let [x0, x1] = [Math.min(...pts.map(p => p[0])), Math.max(...pts.map(p => p[0]))];
  let [y0, y1] = [Math.min(...pts.map(p => p[1])), Math.max(...pts.map(p => p[1]))];
  if (x1 === x0) x1 = x0 + 1;
  if (y1 === y0) { y0 -= 0.5; y1 += 0.5; }
  const sx = x => m.l + (x - x0) / (x1 - x0) * (w - m.l - m.r);
  const sy = y => h - m.b - (y - y0) / (y1 - y0) * (h - m.t - m.b);
  svg.append(node('line', { x1: m.l, y1: h - m.b, x2: w - m.r, y2: h - m.b, stroke: '#888' }));
  svg.append(node('line', { x1: m.l, y1: m.t, x2: m.l, y2: h - m.b, stroke: '#888' }));
  for (const [v, anchor] of [[x0, 'start'], [x1, 'end']]) {
    svg.append(node('text', { x: sx(v), y: h - m.b + 15, 'text-anchor': anchor, 'font-size': 11 }, +v.toPrecision(4)));
  }
  for (const v of [y0, y1]) {
    svg.append(node('text', { x: m.l - 5, y: sy(v) + 4, 'text-anchor': 'end', 'font-size': 11 }, +v.toPrecision(4)));
  }
  svg.append(node('text', { x: (w + m.l) / 2, y: h - 5, 'text-anchor': 'middle', 'font-size': 12 }, xLabel));
  svg.append(node('text', { x: 12, y: h / 2, transform: `rotate(-90 12 ${h / 2})`, 'text-anchor': 'middle', 'font-size': 12 }, yLabel));
  series.forEach((s, i) => {
    const d = s.points.map((p, j) => `${j ? 'L' : 'M'}${sx(p[0]).toFixed(1)},${sy(p[1]).toFixed(1)}`).join('');
    svg.append(node('path', { d, fill: 'none', stroke: s.color, 'stroke-width': 1.8, 'stroke-dasharray': s.dash || '' }));
    svg.append(node('text', { x: w - m.r - 5, y: m.t + 14 * (i + 1), 'text-anchor': 'end', fill: s.color, 'font-size': 12 }, s.name));
  });
}

function onThresholds(e) {
  e?.preventDefault();
  const v = values(e?.target ?? document.getElementById('thresholds-form'));
  const out = document.getElementById('thresholds-out');
  try {
    const th = JSON.parse(thresholds(v.model, +v.t, +v.k, +v.p, +v.sigma2));
    const lines = [`stats = ${th.stats.toFixed(3)}`, `alg   = ${th.alg.toFixed(3)}`];
    if (th.mcmc !== null) lines.push(`mcmc  = ${th.mcmc.toFixed(3)}`, `sqrt(mcmc * stats) / alg = ${th.geometric_gap.toFixed(12)}`);
    if (th.lasso !== null) lines.push(`lasso = ${th.lasso.toFixed(3)}`);
    lines.push(`(${th.convention})`);
    show(out, lines.join('\n'));
  } catch (err) {
    show(out, String(err), true);
  }
}

function onChain(e) {
  e.preventDefault();
  const v = values(e.target);
  const out = document.getElementById('chain-out');
  show(out, 'running...');
  setTimeout(() => {
    try {
      const r = JSON.parse(simulate_chain(+v.p, +v.k, +v.x, +v.beta, +v.iters, +v.seed));
      plot(document.getElementById('chain-plot'), [
        { name: 'overlap fraction', color: '#1f77b4', points: r.rows.map(row => [row.iter, row.overlap_fraction]) },
      ], 'iteration', 'overlap / k');
      const o = r.outcome.outcome === 'recovered' ? `recovered at iteration ${r.outcome.iteration}` : `censored at ${r.outcome.max_iters}`;
      show(out, `lambda = ${r.lambda.toFixed(3)}; ${o}; best overlap ${r.max_overlap}; ${r.accepted} accepted moves`);
    } catch (err) {
      show(out, String(err), true);
    }
  }, 10);
}

function onProfile(e) {
  e.preventDefault();
  const v = values(e.target);
  const out = document.getElementById('profile-out');
  try {
    const r = JSON.parse(overlap_profile(+v.p, +v.k, +v.lambda, +v.seed));
    plot(document.getElementById('profile-plot'), [
      { name: 'best energy at overlap', color: '#d62728', points: r.ell.map((l, i) => [l, r.gamma[i]]) },
      { name: 'running maximum', color: '#555', dash: '4 3', points: r.ell.map((l, i) => [l, r.gamma_prefix_max[i]]) },
    ], 'overlap with planted support', 'energy');
    const star = r.ell_star === null ? 'undefined' : r.ell_star;
    show(out, `bottleneck overlap l* = ${star}\n` + r.ell.map((l, i) => `${l}: ${r.gamma[i].toFixed(4)}`).join('\n'));
  } catch (err) {
    show(out, String(err), true);
  }
}

await init();
document.getElementById('thresholds-form').addEventListener('submit', onThresholds);
document.getElementById('chain-form').addEventListener('submit', onChain);
document.getElementById('profile-form').addEventListener('submit', onProfile);
onThresholds();
