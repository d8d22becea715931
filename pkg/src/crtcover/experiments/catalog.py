"""Replica functions and reducers for every registered experiment.

Each experiment splits into groups (usually one per tree size).  A replica
function computes records for replicas ``lo..hi-1`` of one group from
streams keyed by (seed, experiment, group, replica) alone, so scheduling
never changes the output.  A reducer turns the ordered records into a
summary dictionary and CSV rows.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .. import besq, crt, gaussian_field, rand_tree, stats, walk_engine
from .._rng import generator, stream_id, stream_key
from .config import ExperimentConfig

ALDOUS_CONSTANT = 6.0 * math.sqrt(2.0 * math.pi)
MOMENT_ORDERS = (1, 2, 4)


def scaling_constants(sigma: float, n: int) -> dict:
    """a_n, b_n for both speed measures, and the cover-time scale a_n b_n^C."""
    a_n = math.sqrt(n) / (2.0 * sigma)
    return {
        "n": n,
        "a_n": a_n,
        "b_n_V": float(n),
        "b_n_C": 2.0 * n,
        "a_n_b_n_C": a_n * 2.0 * n,
        "n32_over_sigma": n**1.5 / sigma,
    }


def cover_scale(cfg: ExperimentConfig, n: int) -> float:
    """Divide a cover time by this to get the rescaled observable."""
    sigma = cfg.offspring_law().sigma
    c = scaling_constants(sigma, n)
    mode = cfg.walk_mode()
    b_n = c["b_n_V"] if mode.measure is walk_engine.Measure.COUNTING else c["b_n_C"]
    return c["a_n"] * b_n


def _base(cfg: ExperimentConfig, group, replica: int) -> dict:
    return {"experiment": cfg.experiment, "group": group,
            "n": group if isinstance(group, int) else None,
            "replica": replica, "stream": stream_id(cfg.experiment, group, replica)}


def _rows(cfg: ExperimentConfig, group, values) -> dict:
    s = stats.summarize(values)
    return {"experiment": cfg.experiment, "n": group, "count": s.count, "mean": s.mean,
            "stderr": s.stderr, "q05": s.quantiles[0.05], "q50": s.quantiles[0.5],
            "q95": s.quantiles[0.95]}


# ---------------------------------------------------------------------------
# cover-time family


@lru_cache(maxsize=8)
def _quenched_tree(seed: int, experiment: str, law_key: str, n: int) -> rand_tree.DiscreteTree:
    import json

    law = rand_tree.OffspringLaw.from_spec(json.loads(law_key))
    return rand_tree.sample_conditioned_gw(law, n, generator(seed, experiment, n, "tree"))


def quenched_tree(cfg: ExperimentConfig, n: int) -> rand_tree.DiscreteTree:
    import json

    return _quenched_tree(cfg.seed, cfg.experiment, json.dumps(cfg.law, sort_keys=True), n)


def cover_groups(cfg: ExperimentConfig):
    return [(n, cfg.replicas) for n in cfg.sizes]


def cover_replicas(cfg: ExperimentConfig, n: int, lo: int, hi: int) -> list[dict]:
    law = cfg.offspring_law()
    mode = cfg.walk_mode()
    until_return = bool(cfg.param("return", True))
    scale = cover_scale(cfg, n)
    out = []
    if cfg.quenched:
        tree = quenched_tree(cfg, n)
        batch = walk_engine.cover_batch(tree, mode, tree.root,
                                        stream_key(cfg.seed, cfg.experiment, n), lo, hi - lo,
                                        until_return=until_return)
        batches = [(r, batch, r - lo) for r in range(lo, hi)]
    else:
        batches = []
        for r in range(lo, hi):
            tree = rand_tree.sample_conditioned_gw(law, n, generator(cfg.seed, cfg.experiment, n, r))
            b = walk_engine.cover_batch(tree, mode, tree.root,
                                        stream_key(cfg.seed, cfg.experiment, n, r), 0, 1,
                                        until_return=until_return)
            batches.append((r, b, 0))
    for r, b, i in batches:
        rec = _base(cfg, n, r)
        tau = float(b.tau_cov[i])
        plus = float(b.tau_cov_plus[i])
        rec.update({
            "tau_cov": tau,
            "tau_cov_plus": plus if until_return else None,
            "scaled_cov": tau / scale,
            "scaled_plus": plus / scale if until_return else None,
            "last_covered": int(b.last_covered[i]),
        })
        out.append(rec)
    return out


def _by_group(records, key="group"):
    groups: dict = {}
    for rec in records:
        groups.setdefault(rec[key], []).append(rec)
    return groups


def _cover_common(cfg, records):
    groups = _by_group(records)
    per_n = {}
    rows = []
    sizes = list(groups)
    for n in sizes:
        cov = np.array([r["scaled_cov"] for r in groups[n]])
        entry = {"scaled_cov": stats.summarize(cov).as_dict(),
                 "moments": {str(p): float(np.mean(cov**p)) for p in MOMENT_ORDERS}}
        plus = [r["scaled_plus"] for r in groups[n] if r["scaled_plus"] is not None]
        if plus:
            entry["scaled_plus"] = stats.summarize(plus).as_dict()
            entry["moments_plus"] = {str(p): float(np.mean(np.array(plus) ** p))
                                     for p in MOMENT_ORDERS}
        per_n[str(n)] = entry
        rows.append(_rows(cfg, n, cov))
    return groups, sizes, per_n, rows


def cover_scaling_summary(cfg, records):
    groups, sizes, per_n, rows = _cover_common(cfg, records)
    ks = []
    for a, b in zip(sizes, sizes[1:]):
        xa = [r["scaled_cov"] for r in groups[a]]
        xb = [r["scaled_cov"] for r in groups[b]]
        ks.append({"pair": [a, b], "ks": stats.ks_distance(xa, xb)})
    seq = [k["ks"] for k in ks]
    summary = {
        "per_n": per_n,
        "ks_consecutive": ks,
        "ks_nonincreasing": all(y <= x for x, y in zip(seq, seq[1:])),
        "ks_last": seq[-1] if seq else None,
    }
    return summary, rows


def aldous_summary(cfg, records):
    groups, sizes, per_n, rows = _cover_common(cfg, records)
    sigma = cfg.offspring_law().sigma
    probe = {}
    for n in sizes:
        plus = np.array([r["tau_cov_plus"] for r in groups[n]], dtype=float) / n**1.5
        s = stats.summarize(plus)
        probe[str(n)] = {
            "mean_n32_tau_plus": s.mean,
            "stderr": s.stderr,
            "ci95": [s.mean - 1.96 * s.stderr, s.mean + 1.96 * s.stderr],
            "sigma_scaled_mean": s.mean * sigma,
            "conjectured_constant": ALDOUS_CONSTANT,
            "ratio": s.mean * sigma / ALDOUS_CONSTANT,
            "in_band_0.8_1.2": 0.8 <= s.mean * sigma / ALDOUS_CONSTANT <= 1.2,
        }
    return {"per_n": per_n, "aldous": probe}, rows


def moments_summary(cfg, records):
    groups, sizes, per_n, rows = _cover_common(cfg, records)
    ratios = {}
    for p in MOMENT_ORDERS:
        vals = [per_n[str(n)]["moments"][str(p)] for n in sizes]
        ratios[str(p)] = [b / a for a, b in zip(vals, vals[1:])]
    bounded = all(0.8 <= x <= 1.25 for v in ratios.values() for x in v)
    return {"per_n": per_n, "moment_ratios": ratios, "ratios_in_band": bounded}, rows


def tail_check(samples, lam_grid, body_fraction: float = 0.5) -> dict:
    """Exponential-or-better tail: fit a line to the body of log-survival and
    require the far tail to stay under it (up to 4 binomial standard errors)."""
    fit = stats.tail_fit(samples, lam_grid)
    k = max(2, int(len(fit.grid) * body_fraction))
    slope_b, icpt_b = np.polyfit(fit.grid[:k], fit.log_survival[:k], 1)
    count = len(samples)
    surv = np.exp(fit.log_survival)
    se_log = np.sqrt((1 - surv) / (count * surv))
    line = icpt_b + slope_b * fit.grid
    excess = fit.log_survival - line - 4 * se_log
    tail_ok = bool(np.all(excess[k:] <= 0)) if k < len(fit.grid) else True
    return {"slope": fit.slope, "intercept": fit.intercept, "body_slope": float(slope_b),
            "grid": fit.grid.tolist(), "log_survival": fit.log_survival.tolist(),
            "tail_dominated": tail_ok, "negative_slope": fit.slope < 0}


def concentration_summary(cfg, records):
    groups = _by_group(records)
    rows = []
    out = {}
    lam = np.asarray(cfg.param("lambda_grid", list(np.round(np.arange(1.0, 4.01, 0.05), 4))))
    for n, recs in groups.items():
        tau = np.array([r["tau_cov"] for r in recs])
        rows.append(_rows(cfg, n, [r["scaled_cov"] for r in recs]))
        entry = {"tau_cov": stats.summarize(tau).as_dict()}
        try:
            entry["tail"] = tail_check(tau, lam)
        except stats.InsufficientTailError as exc:
            entry["tail"] = {"error": str(exc)}
        out[str(n)] = entry
    return {"per_n": out}, rows


# ---------------------------------------------------------------------------
# Ray-Knight / Gaussian checks


def _random_config(tree, rng):
    n = tree.n
    x, y = (int(v) for v in rng.choice(n, 2, replace=False))
    others = [v for v in range(n) if v != y]
    k = int(rng.integers(1, len(others) + 1))
    marks = rng.choice(others, k, replace=False)
    return x, y, marks


def rayknight_groups(cfg):
    sizes = cfg.sizes or list(range(2, 9))
    if cfg.param("exhaustive", True):
        return [(n, len(rand_tree.enumerate_rooted_trees(n))) for n in sizes]
    return [(n, cfg.replicas) for n in sizes]


@lru_cache(maxsize=16)
def _shapes(n):
    return rand_tree.enumerate_rooted_trees(n)


def rayknight_replicas(cfg, n, lo, hi):
    configs = int(cfg.param("configs", 5))
    lambdas = int(cfg.param("lambdas", 5))
    out = []
    for r in range(lo, hi):
        rng = generator(cfg.seed, cfg.experiment, n, r)
        if cfg.param("exhaustive", True):
            tree = _shapes(n)[r]
        else:
            tree = rand_tree.sample_conditioned_gw(cfg.offspring_law(), n, rng)
        worst = 0.0
        for _ in range(configs):
            x, y, marks = _random_config(tree, rng)
            m = gaussian_field.build_sigma_matrices(tree, x, y, marks)
            bound = gaussian_field.admissible_lambda_bound(m)
            for _ in range(lambdas):
                lam = rng.uniform(-1.0, 0.9, marks.size) * bound
                det = gaussian_field.mgf_determinant(m, lam, order="input")
                fk = walk_engine.mgf_local_times_exact(tree, "conductance", x, y, marks, lam)
                worst = max(worst, abs(det - fk))
        rec = _base(cfg, n, r)
        rec.update({"shape": rand_tree.canonical_form(tree), "max_abs_diff": worst})
        out.append(rec)
    return out


def rayknight_summary(cfg, records):
    worst = max(r["max_abs_diff"] for r in records)
    rows = [_rows(cfg, n, [r["max_abs_diff"] for r in recs]) for n, recs in _by_group(records).items()]
    return {"trees": len(records), "max_abs_diff": worst, "pass_1e-8": worst < 1e-8}, rows


def isomorphism_groups(cfg):
    return [(n, int(cfg.param("configs", 10))) for n in (cfg.sizes or [20])]


def isomorphism_replicas(cfg, n, lo, hi):
    out = []
    max_marks = int(cfg.param("max_marks", 8))
    for r in range(lo, hi):
        rng = generator(cfg.seed, cfg.experiment, n, r)
        tree = rand_tree.sample_conditioned_gw(cfg.offspring_law(), n, rng)
        x, y = (int(v) for v in rng.choice(n, 2, replace=False))
        others = [v for v in range(n) if v != y]
        marks = rng.choice(others, min(max_marks, len(others)), replace=False)
        mode = cfg.walk_mode() if cfg.walk_mode().continuous else walk_engine.CSRW
        rep = gaussian_field.check_isomorphism(tree, x, y, marks, cfg.replicas, rng, mode)
        rec = _base(cfg, n, r)
        rec.update({"x": x, "y": y, "marks": marks.tolist(),
                    "lhs_mean": rep.lhs_mean.tolist(), "rhs_mean": rep.rhs_mean.tolist(),
                    "z_mean": rep.z_mean.tolist(), "z_second": rep.z_second.tolist(),
                    "max_abs_z": rep.max_abs_z})
        out.append(rec)
    return out


def isomorphism_summary(cfg, records):
    worst = max(r["max_abs_z"] for r in records)
    rows = [_rows(cfg, n, [r["max_abs_z"] for r in recs]) for n, recs in _by_group(records).items()]
    return {"configs": len(records), "max_abs_z": worst, "pass_4se": worst < 4}, rows


# ---------------------------------------------------------------------------
# BESQ, Williams, components, snake


DEFAULT_BESQ_CASES = [
    {"x": 1.0, "t": 1.0, "dim": 0.0},
    {"x": 2.0, "t": 0.5, "dim": 0.0},
    {"x": 1.0, "t": 1.0, "dim": 2.0},
    {"x": 0.5, "t": 2.0, "dim": 3.0},
]


def besq_groups(cfg):
    return [(i, 1) for i in range(len(cfg.param("cases", DEFAULT_BESQ_CASES)))]


def besq_replicas(cfg, case, lo, hi):
    spec = cfg.param("cases", DEFAULT_BESQ_CASES)[case]
    x, t, dim = float(spec["x"]), float(spec["t"]), float(spec["dim"])
    rng = generator(cfg.seed, cfg.experiment, case, 0)
    draws = besq.besq_transition(np.full(cfg.replicas, x), t, dim, rng)
    k = draws.size
    mean_t = x + dim * t
    var_t = 4 * t * x + 2 * dim * t * t
    absorb_t = math.exp(-x / (2 * t)) if dim == 0 else 0.0
    absorb = float(np.mean(draws == 0))
    absorb_se = math.sqrt(max(absorb_t * (1 - absorb_t), 1e-300) / k)
    m4 = float(np.mean((draws - draws.mean()) ** 4))
    var = float(draws.var(ddof=1))
    rec = _base(cfg, case, 0)
    rec.update({
        "x": x, "t": t, "dim": dim, "draws": k,
        "absorption": absorb, "absorption_target": absorb_t,
        "z_absorption": stats.z_score(absorb, absorb_t, absorb_se),
        "mean": float(draws.mean()), "mean_target": mean_t,
        "z_mean": stats.z_score(float(draws.mean()), mean_t, math.sqrt(var_t / k)),
        "variance": var, "variance_target": var_t,
        "z_variance": stats.z_score(var, var_t, math.sqrt(max(m4 - var_t**2, 0) / k)),
    })
    em_paths = int(cfg.param("em_paths", 10_000))
    if em_paths:
        em = besq.euler_maruyama_terminal(x, float(cfg.param("em_step", 1e-4)), t, dim,
                                          em_paths, rng)
        rec.update({"em_paths": em_paths, "ks_exact_vs_em": stats.ks_distance(draws, em)})
    return [rec]


def besq_summary(cfg, records):
    zs = [abs(r[k]) for r in records for k in ("z_absorption", "z_mean", "z_variance")]
    ks = [r["ks_exact_vs_em"] for r in records if "ks_exact_vs_em" in r]
    rows = [{"experiment": cfg.experiment, "n": r["n"], "count": r["draws"], "mean": r["mean"],
             "stderr": math.sqrt(r["variance"] / r["draws"]), "q05": None, "q50": None,
             "q95": None} for r in records]
    return {"cases": len(records), "max_abs_z": max(zs), "max_ks": max(ks) if ks else None,
            "pass": max(zs) < 4 and (not ks or max(ks) < 0.02)}, rows


def williams_groups(cfg):
    return [(0, cfg.replicas)]


def williams_replicas(cfg, group, lo, hi):
    h = float(cfg.param("h", 1.0))
    a = float(cfg.param("a", 0.1))
    delta = float(cfg.param("delta", 1e-3)) * h
    out = []
    for r in range(lo, hi):
        rng = generator(cfg.seed, cfg.experiment, group, r)
        _, _, heights, _ = crt.sample_spine_atoms_batch(h, delta, 1, rng)
        rec = _base(cfg, group, r)
        rec.update({"count_above_a": int(np.sum(heights > a)),
                    "sum_sq": float(np.sum(heights**2)),
                    "max_height": float(heights.max()) if heights.size else 0.0})
        out.append(rec)
    return out


def williams_summary(cfg, records):
    h = float(cfg.param("h", 1.0))
    a = float(cfg.param("a", 0.1))
    delta = float(cfg.param("delta", 1e-3)) * h
    counts = np.array([r["count_above_a"] for r in records], dtype=float)
    sq = np.array([r["sum_sq"] for r in records])
    c_target = crt.spine_atom_mean_count(h, a)
    s_target = h * h / 4 - (delta * h / 2 - delta * delta / 4)
    sc, ss = stats.summarize(counts), stats.summarize(sq)
    summary = {
        "count_mean": sc.mean, "count_target": c_target,
        "z_count": stats.z_score(sc.mean, c_target, sc.stderr),
        "sum_sq_mean": ss.mean, "sum_sq_target": s_target,
        "z_sum_sq": stats.z_score(ss.mean, s_target, ss.stderr),
    }
    summary["pass_4se"] = abs(summary["z_count"]) < 4 and abs(summary["z_sum_sq"]) < 4
    return summary, [_rows(cfg, 0, counts)]


def component_groups(cfg):
    return [(0, cfg.replicas)]


def component_replicas(cfg, group, lo, hi):
    h = float(cfg.param("h", 1.0))
    eps = float(cfg.param("eps", 0.05))
    bands = np.asarray(cfg.param("bands", [0.005, 0.01, 0.02, 0.05]), dtype=float)
    out = []
    for r in range(lo, hi):
        rng = generator(cfg.seed, cfg.experiment, group, r)
        sk = crt.sample_williams_skeleton(h, eps, rng)
        comp = crt.sample_poisson_components(sk, eps, rng, min_height=float(bands[0]))
        lengths = sk.tree.edge_length
        # portion of each edge where h_x >= eps
        eligible = np.clip(sk.top_distance + lengths - eps, 0, lengths)
        eligible[0] = 0.0
        in_region = comp.offset <= (sk.top_distance[comp.edge] + lengths[comp.edge] - eps)
        counts = np.histogram(comp.height[in_region], bins=bands)[0]
        expected = 0.5 * eligible.sum() * (1 / bands[:-1] - 1 / bands[1:])
        rec = _base(cfg, group, r)
        rec.update({"eligible_length": float(eligible.sum()),
                    "band_counts": counts.tolist(), "band_expected": expected.tolist(),
                    "kept": int(comp.height.size), "dominating": comp.dominating})
        out.append(rec)
    return out


def component_summary(cfg, records):
    counts = np.array([r["band_counts"] for r in records], dtype=float).sum(axis=0)
    expected = np.array([r["band_expected"] for r in records]).sum(axis=0)
    z = (counts - expected) / np.sqrt(expected)
    dominated = all(r["kept"] <= r["dominating"] for r in records)
    rows = [_rows(cfg, 0, [r["kept"] for r in records])]
    return {"band_counts": counts.tolist(), "band_expected": expected.tolist(),
            "z": z.tolist(), "dominated": dominated,
            "pass_4se": bool(np.all(np.abs(z) < 4)) and dominated}, rows


def snake_groups(cfg):
    return [(cfg.grid, cfg.replicas)]


def snake_replicas(cfg, m, lo, hi):
    out = []
    for r in range(lo, hi):
        rng = generator(cfg.seed, cfg.experiment, m, r)
        hits = crt.snake_replica_hits(cfg.v_grid, m, rng)[0]
        rec = _base(cfg, m, r)
        rec["hits"] = [int(h) for h in hits]
        out.append(rec)
    return out


def snake_summary(cfg, records):
    hits = np.array([r["hits"] for r in records], dtype=float)
    f = hits.mean(axis=0)
    se = np.sqrt(f * (1 - f) / hits.shape[0])
    est = crt.snake_integral_estimate(cfg.v_grid, f)
    rel = (est["total"] - crt.SNAKE_INTEGRAL) / crt.SNAKE_INTEGRAL
    rows = [{"experiment": cfg.experiment, "n": v, "count": hits.shape[0], "mean": fv,
             "stderr": s, "q05": None, "q50": None, "q95": None}
            for v, fv, s in zip(cfg.v_grid, f.tolist(), se.tolist())]
    return {"v_grid": cfg.v_grid, "F": f.tolist(), "F_stderr": se.tolist(), "integral": est,
            "relative_error": rel, "within_10pct": abs(rel) < 0.10}, rows


# ---------------------------------------------------------------------------
# covering bound, oracle cross-checks


def covering_groups(cfg):
    groups = [(n, cfg.replicas) for n in (cfg.sizes or [2**k for k in range(7, 13)])]
    if cfg.param("sandwich_sizes"):
        groups += [(f"sandwich-{n}", int(cfg.param("sandwich_trees", 5)))
                   for n in cfg.param("sandwich_sizes")]
    return groups


def covering_replicas(cfg, group, lo, hi):
    walks = int(cfg.param("walks", 10))
    mode = cfg.walk_mode()
    out = []
    for r in range(lo, hi):
        rng = generator(cfg.seed, cfg.experiment, group, r)
        rec = _base(cfg, group, r)
        if isinstance(group, str):
            n = int(group.split("-")[1])
            tree = rand_tree.sample_conditioned_gw(cfg.offspring_law(), n, rng)
            worst = max(walk_engine.expected_cover_exact_small(tree, mode, v)
                         for v in range(n))
            eta, eta_se = gaussian_field.gff_max_expectation(
                tree, tree.root, int(cfg.param("field_draws", 4000)), rng)
            rec.update({"n": n, "t_cov_exact": worst, "eta": eta, "eta_stderr": eta_se,
                        "sandwich_ratio": worst / ((n - 1) * eta * eta)})
        else:
            tree = rand_tree.sample_conditioned_gw(cfg.offspring_law(), group, rng)
            counts, dia = gaussian_field.bdnp_terms(tree)
            functional = gaussian_field.bdnp_bound(tree)
            b = walk_engine.cover_batch(tree, mode, tree.root, stream_key(cfg.seed, cfg.experiment,
                                        group, r), 0, walks, until_return=False)
            t_hat = float(b.tau_cov.mean())
            rec.update({"diameter": dia, "covering_numbers": counts.tolist(),
                        "functional": functional, "t_cov_hat": t_hat,
                        "ratio": t_hat / (functional * group * dia) if functional > 0 else None})
        out.append(rec)
    return out


def covering_summary(cfg, records):
    out = {}
    rows = []
    for g, recs in _by_group(records).items():
        key = "sandwich_ratio" if isinstance(g, str) else "ratio"
        vals = [r[key] for r in recs if r.get(key) is not None]
        if not vals:
            continue
        s = stats.summarize(vals)
        out[g] = {"statistic": key, "min": min(vals), "max": max(vals), "mean": s.mean,
                  "stderr": s.stderr}
        rows.append(_rows(cfg, g, vals))
    ratios = [v for g, v in out.items() if v["statistic"] == "ratio"]
    band = [min(v["min"] for v in ratios), max(v["max"] for v in ratios)] if ratios else None
    return {"groups": out, "ratio_band": band}, rows


def oracle_groups(cfg):
    groups = [(n, len(_shapes(n))) for n in range(1, int(cfg.param("exhaustive_max", 8)) + 1)]
    if int(cfg.param("random_trees", 20)):
        groups.append(("random", int(cfg.param("random_trees", 20))))
    if int(cfg.param("commute_trees", 50)):
        groups.append(("commute", int(cfg.param("commute_trees", 50))))
    return groups


def oracle_replicas(cfg, group, lo, hi):
    mode = cfg.walk_mode()
    out = []
    for r in range(lo, hi):
        rng = generator(cfg.seed, cfg.experiment, group, r)
        rec = _base(cfg, group, r)
        if group == "commute":
            n = int(rng.integers(2, int(cfg.param("commute_max", 200)) + 1))
            tree = rand_tree.sample_conditioned_gw(cfg.offspring_law(), n, rng)
            pairs = int(cfg.param("commute_pairs", 20))
            worst = 0.0
            for _ in range(pairs):
                x, y = (int(v) for v in rng.choice(n, 2, replace=False))
                lhs = (walk_engine.expected_hitting_exact(tree, walk_engine.DTRW, x, y)
                       + walk_engine.expected_hitting_exact(tree, walk_engine.DTRW, y, x))
                worst = max(worst, abs(lhs - 2 * (n - 1) * tree.index.distance(x, y)))
            rec.update({"n": n, "pairs": pairs, "max_abs_error": worst})
            out.append(rec)
            continue
        if group == "random":
            n = int(rng.integers(2, int(cfg.param("random_max", 12)) + 1))
            tree = rand_tree.sample_conditioned_gw(cfg.offspring_law(), n, rng)
        else:
            n = group
            tree = _shapes(n)[r]
        exact = walk_engine.expected_cover_exact_small(tree, mode, tree.root)
        b = walk_engine.cover_batch(tree, mode, tree.root,
                                    stream_key(cfg.seed, cfg.experiment, group, r), 0,
                                    cfg.replicas, until_return=False)
        s = stats.summarize(b.tau_cov)
        rec.update({"n": n, "shape": rand_tree.canonical_form(tree), "exact": exact,
                    "mc_mean": s.mean, "mc_stderr": s.stderr,
                    "z": stats.z_score(s.mean, exact, s.stderr)})
        out.append(rec)
    return out


def oracle_summary(cfg, records):
    cover = [r for r in records if "z" in r]
    commute = [r for r in records if "max_abs_error" in r]
    zs = [abs(r["z"]) for r in cover]
    summary = {
        "cover_trees": len(cover),
        "max_abs_z": max(zs) if zs else None,
        "commute_trees": len(commute),
        "commute_max_abs_error": max((r["max_abs_error"] for r in commute), default=None),
    }
    summary["pass"] = (not zs or max(zs) < 4) and (
        not commute or summary["commute_max_abs_error"] < 1e-9)
    rows = [_rows(cfg, g, [r.get("z", r.get("max_abs_error")) for r in recs])
            for g, recs in _by_group(records).items()]
    return summary, rows
