"""Experiment driver: specs, Monte Carlo runners, and CSV/JSON persistence.

An experiment is described by an ``ExperimentSpec`` (kind, parameterization,
swept grid, trial count, master seed) and produces ``ResultRow`` records with
a fixed per-kind column layout:

    experiment,<kind-specific coordinates>,estimate,ci,trials,seconds

Confidence intervals are normal-approximation half-widths with z = 2.576
(99%).  Every runner is a pure function of (spec, seed): independent jobs get
streams derived from the master seed by key, results are merged in a fixed
order, and deterministic mode zeroes the wall-time column, so reruns are
byte-identical.

Config files are JSON objects with exactly the keys
{"kind", "params", "grid", "trials", "seed"} (the last two optional);
unknown keys anywhere are rejected.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import popdyn
from .params import ModelParams, derive_tree_params
from .pipeline import AlgoConfig, recover
from .popdyn import Z99, ci_half_width
from .randgraph import sample_sbm
from .seeding import derived_rng

__all__ = [
    "KINDS",
    "ExperimentSpec",
    "ResultRow",
    "run_experiment",
    "write_results",
    "default_spec",
    "Z99",
    "ci_half_width",
]

KINDS = (
    "tree-accuracy",
    "robust-accuracy",
    "moments-check",
    "contraction-check",
    "threshold-sweep",
    "conductance-check",
    "graph-recover",
)

_TREE_PARAM_KEYS = {"a", "b", "d", "theta", "tree_kind", "clamp"}

_ALLOWED = {
    "tree-accuracy": (_TREE_PARAM_KEYS, {"k"}),
    "robust-accuracy": (_TREE_PARAM_KEYS, {"k", "delta"}),
    "moments-check": ({"extra_configs"}, {"d", "theta", "delta", "k"}),
    "contraction-check": (set(), {"regimes"}),
    "threshold-sweep": ({"base_d", "k"}, {"ksig"}),
    "conductance-check": (_TREE_PARAM_KEYS | {"delta", "threshold"}, {"k"}),
    "graph-recover": (
        {"n", "a", "b", "impl", "delta0", "R", "R_mode", "K", "batch",
         "u_size", "weights_delta", "tree_k"},
        {"rep"},
    ),
}

COORD_COLUMNS = {
    "tree-accuracy": ("tree_kind", "d", "theta", "k"),
    "robust-accuracy": ("tree_kind", "d", "theta", "delta", "k"),
    "moments-check": ("d", "theta", "delta", "k", "stat", "target"),
    "contraction-check": ("tree_kind", "d", "theta", "delta", "level", "metric"),
    "threshold-sweep": ("d", "theta", "ksig", "k"),
    "conductance-check": ("tree_kind", "d", "theta", "delta", "k", "threshold", "metric"),
    "graph-recover": ("n", "a", "b", "impl", "delta0", "R", "K", "rep", "metric"),
}


@dataclass(frozen=True)
class ExperimentSpec:
    """One experiment: what to sweep, how many trials, which master seed."""

    kind: str
    params: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    trials: int = 20_000
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind in {KINDS}: {self.kind!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        allowed_params, allowed_grid = _ALLOWED[self.kind]
        bad = set(self.params) - allowed_params
        if bad:
            raise ValueError(f"unknown params keys for {self.kind}: {sorted(bad)}")
        bad = set(self.grid) - allowed_grid
        if bad:
            raise ValueError(f"unknown grid keys for {self.kind}: {sorted(bad)}")
        if not self.grid or any(len(v) == 0 for v in self.grid.values()):
            raise ValueError("grid must be present and nonempty")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        allowed = {"kind", "params", "grid", "trials", "seed"}
        bad = set(data) - allowed
        if bad:
            raise ValueError(f"unknown config keys: {sorted(bad)}")
        if "kind" not in data:
            raise ValueError("config needs a 'kind'")
        return cls(
            kind=data["kind"],
            params=dict(data.get("params", {})),
            grid={k: list(v) for k, v in data.get("grid", {}).items()},
            trials=int(data.get("trials", 20_000)),
            seed=int(data.get("seed", 0)),
        )

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": self.params,
            "grid": self.grid,
            "trials": self.trials,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    coords: dict
    estimate: float
    ci: float
    trials: int
    seconds: float


def _tree_parameterization(spec: ExperimentSpec):
    """(tree kind, d, theta) from either (a, b) or direct (d, theta) params."""
    p = spec.params
    kind = p.get("tree_kind", "gw")
    if kind not in ("gw", "dary"):
        raise ValueError("tree_kind must be 'gw' or 'dary'")
    has_ab = "a" in p or "b" in p
    has_dt = "d" in p or "theta" in p
    if has_ab == has_dt:
        raise ValueError("give exactly one of (a, b) or (d, theta)")
    if has_ab:
        tp = derive_tree_params(ModelParams(n=10 ** 9, a=p["a"], b=p["b"]))
        return kind, tp.d, tp.theta
    return kind, float(p["d"]), float(p["theta"])


# --- runners ---------------------------------------------------------------


def _accuracy_rows(spec: ExperimentSpec, deltas) -> list[ResultRow]:
    kind, d, theta = _tree_parameterization(spec)
    ks = sorted(int(k) for k in spec.grid["k"])
    clamp = float(spec.params.get("clamp", 1e-12))
    out = []
    for delta in deltas:
        t0 = time.perf_counter()
        # the chain stream does not depend on delta, so different noise
        # levels share tree structure and spins (and delta=0 reproduces the
        # noiseless rows exactly)
        rows, _ = popdyn.magnetization_chain(
            kind, d, theta, max(ks), spec.trials, derived_rng(spec.seed, "chain"),
            delta=0.0 if delta is None else delta, clamp=clamp,
        )
        dt = time.perf_counter() - t0
        for k in ks:
            r = rows[k]
            coords = {"tree_kind": kind, "d": d, "theta": theta, "k": k}
            if delta is not None:
                coords["delta"] = delta
            out.append(ResultRow(
                experiment=spec.kind, coords=coords,
                estimate=0.5 * (1.0 + r["absy_mean"]), ci=0.5 * r["absy_ci"],
                trials=spec.trials, seconds=dt,
            ))
    return out


def run_tree_accuracy(spec: ExperimentSpec) -> list[ResultRow]:
    return _accuracy_rows(spec, [None])


def run_robust_accuracy(spec: ExperimentSpec) -> list[ResultRow]:
    deltas = [float(x) for x in spec.grid["delta"]]
    return _accuracy_rows(spec, deltas)


def run_moments_check(spec: ExperimentSpec) -> list[ResultRow]:
    from .estimators import majority_moments

    ds = [int(x) for x in spec.grid["d"]]
    thetas = [float(x) for x in spec.grid["theta"]]
    deltas = [float(x) for x in spec.grid["delta"]]
    ks = sorted(int(x) for x in spec.grid["k"])
    configs = [(d, th) for d in ds for th in thetas]
    configs += [tuple(c) for c in spec.params.get("extra_configs", [])]
    out = []
    for cfg_idx, (d, theta) in enumerate(configs):
        for delta in deltas:
            t0 = time.perf_counter()
            # independent trials (not the population chain): exact CIs
            s, sn = popdyn.dary_sum_trials(
                int(d), theta, max(ks), spec.trials,
                derived_rng(spec.seed, "sums", cfg_idx), delta=delta,
            )
            dt = time.perf_counter() - t0
            for k in ks:
                mom = majority_moments(int(d), theta, k, delta=delta)
                quads = []
                for stat, vals, target in (("s", s[k], (mom.mean, mom.var)),
                                           ("sn", sn[k], (mom.noisy_mean, mom.noisy_var))):
                    mean_tgt, var_tgt = target
                    quads.append((f"{stat}_mean", float(vals.mean()),
                                  ci_half_width(float(vals.std()), spec.trials),
                                  mean_tgt))
                    sq = (vals - vals.mean()) ** 2
                    quads.append((f"{stat}_var", float(sq.mean()),
                                  ci_half_width(float(sq.std()), spec.trials),
                                  var_tgt))
                for stat, est, half, target in quads:
                    out.append(ResultRow(
                        experiment=spec.kind,
                        coords={"d": int(d), "theta": theta, "delta": delta,
                                "k": k, "stat": stat, "target": target},
                        estimate=est, ci=half, trials=spec.trials, seconds=dt,
                    ))
    return out


def _ratio_and_ci(num_mean, num_ci, den_mean, den_ci):
    """Delta-method CI for a ratio of two means; nan when degenerate."""
    if den_mean <= 0.0 or num_mean < 0.0:
        return float("nan"), float("nan")
    r = num_mean / den_mean
    if num_mean == 0.0:
        return 0.0, num_ci / den_mean
    rel = math.sqrt((num_ci / num_mean) ** 2 + (den_ci / den_mean) ** 2)
    return r, r * rel


def run_contraction_check(spec: ExperimentSpec) -> list[ResultRow]:
    out = []
    for idx, regime in enumerate(spec.grid["regimes"]):
        allowed = {"tree_kind", "d", "theta", "delta", "k"}
        bad = set(regime) - allowed
        if bad:
            raise ValueError(f"unknown regime keys: {sorted(bad)}")
        kind = regime.get("tree_kind", "gw")
        d, theta = float(regime["d"]), float(regime["theta"])
        delta = float(regime.get("delta", 0.4))
        kmax = int(regime.get("k", 8))
        t0 = time.perf_counter()
        rows, _ = popdyn.magnetization_chain(
            kind, d, theta, kmax, spec.trials,
            derived_rng(spec.seed, "contraction", idx), delta=delta,
        )
        dt = time.perf_counter() - t0
        base = {"tree_kind": kind, "d": d, "theta": theta, "delta": delta}
        for lev in range(1, kmax + 1):
            cur, prev = rows[lev], rows[lev - 1]
            metrics = [
                ("diff2", cur["diff2_mean"], cur["diff2_ci"]),
                ("sqrtdiff", cur["sqrtdiff_mean"], cur["sqrtdiff_ci"]),
                ("diff2_ratio", *_ratio_and_ci(cur["diff2_mean"], cur["diff2_ci"],
                                               prev["diff2_mean"], prev["diff2_ci"])),
                ("sqrtdiff_ratio", *_ratio_and_ci(cur["sqrtdiff_mean"], cur["sqrtdiff_ci"],
                                                  prev["sqrtdiff_mean"], prev["sqrtdiff_ci"])),
            ]
            for metric, est, half in metrics:
                out.append(ResultRow(
                    experiment=spec.kind,
                    coords={**base, "level": lev, "metric": metric},
                    estimate=est, ci=half, trials=spec.trials, seconds=dt,
                ))
    return out


def run_threshold_sweep(spec: ExperimentSpec) -> list[ResultRow]:
    base_d = float(spec.params.get("base_d", 2.5))
    k = int(spec.params.get("k", 12))
    out = []
    for idx, ksig in enumerate(float(x) for x in spec.grid["ksig"]):
        theta = math.sqrt(ksig / base_d)
        if theta >= 1.0:
            raise ValueError(
                f"theta^2 d = {ksig:g} is unreachable with base_d = {base_d:g}"
            )
        t0 = time.perf_counter()
        rows, _ = popdyn.magnetization_chain(
            "gw", base_d, theta, k, spec.trials,
            derived_rng(spec.seed, "sweep", idx), delta=0.0,
        )
        dt = time.perf_counter() - t0
        r = rows[k]
        out.append(ResultRow(
            experiment=spec.kind,
            coords={"d": base_d, "theta": theta, "ksig": ksig, "k": k},
            estimate=0.5 * r["absx_mean"], ci=0.5 * r["absx_ci"],
            trials=spec.trials, seconds=dt,
        ))
    return out


def run_conductance_check(spec: ExperimentSpec) -> list[ResultRow]:
    kind, d, theta = _tree_parameterization(spec)
    delta = spec.params.get("delta")
    delta = float(delta) if delta is not None else None
    ks = sorted(int(x) for x in spec.grid["k"])
    eta = 0.5 * (1.0 - theta)
    threshold = float(spec.params.get("threshold", theta * theta * d / (16.0 * eta)))
    t0 = time.perf_counter()
    _, pools = popdyn.conductance_chain(
        kind, d, theta, max(ks), spec.trials,
        derived_rng(spec.seed, "conductance"), delta=delta, keep_levels=set(ks),
    )
    dt = time.perf_counter() - t0
    out = []
    for k in ks:
        pool = pools[k]
        base = {"tree_kind": kind, "d": d, "theta": theta,
                "delta": delta if delta is not None else 0.0, "k": k,
                "threshold": threshold}
        frac = float((pool >= threshold).mean())
        out.append(ResultRow(
            experiment=spec.kind, coords={**base, "metric": "frac_above"},
            estimate=frac,
            ci=ci_half_width(math.sqrt(frac * (1.0 - frac)), spec.trials),
            trials=spec.trials, seconds=dt,
        ))
        out.append(ResultRow(
            experiment=spec.kind, coords={**base, "metric": "ceff_mean"},
            estimate=float(pool.mean()),
            ci=ci_half_width(float(pool.std()), spec.trials),
            trials=spec.trials, seconds=dt,
        ))
    return out


def _recover_rep(spec_dict: dict, rep: int) -> dict:
    spec = ExperimentSpec.from_dict(spec_dict)
    p = spec.params
    params = ModelParams(n=int(p["n"]), a=float(p["a"]), b=float(p["b"]))
    cfg = AlgoConfig(
        R=p.get("R"),
        R_mode=p.get("R_mode", "fixed" if p.get("R") is not None else "auto"),
        K=int(p.get("K", 1)),
        u_size=p.get("u_size"),
        batch=p.get("batch"),
        weights_delta=p.get("weights_delta"),
    )
    g = sample_sbm(params, seed=derived_rng(spec.seed, "graph", rep))
    rep_seed = int(derived_rng(spec.seed, "recover", rep).integers(2 ** 62))
    t0 = time.perf_counter()
    res = recover(g, cfg, params, impl=p.get("impl", "spectral"),
                  seed=rep_seed, delta0=p.get("delta0"))
    return {
        "rep": rep,
        "accuracy": res.accuracy,
        "delta_frac": res.report.delta_frac,
        "r_used": res.diagnostics.r_used,
        "seconds": time.perf_counter() - t0,
    }


def run_graph_recover(spec: ExperimentSpec, threads: int = 1) -> list[ResultRow]:
    p = spec.params
    reps = [int(r) for r in spec.grid["rep"]]
    jobs = [(spec.to_dict(), rep) for rep in reps]
    results = _pmap(_recover_rep, jobs, threads)
    r_used = results[0]["r_used"]
    base = {
        "n": int(p["n"]), "a": float(p["a"]), "b": float(p["b"]),
        "impl": p.get("impl", "spectral"),
        "delta0": p.get("delta0") if p.get("delta0") is not None else -1.0,
        "R": r_used, "K": int(p.get("K", 1)),
    }
    out = []
    for res in results:
        out.append(ResultRow(
            experiment=spec.kind,
            coords={**base, "rep": res["rep"], "metric": "accuracy"},
            estimate=res["accuracy"], ci=0.0, trials=1, seconds=res["seconds"],
        ))
    accs = np.array([res["accuracy"] for res in results])
    out.append(ResultRow(
        experiment=spec.kind, coords={**base, "rep": -1, "metric": "mean_accuracy"},
        estimate=float(accs.mean()),
        ci=ci_half_width(float(accs.std()), len(accs)),
        trials=len(accs), seconds=float(sum(r["seconds"] for r in results)),
    ))
    # matched tree simulation at the same depth
    tp = derive_tree_params(ModelParams(n=int(p["n"]), a=float(p["a"]), b=float(p["b"])))
    tree_k = int(p.get("tree_k", r_used))
    t0 = time.perf_counter()
    rows, _ = popdyn.magnetization_chain(
        "gw", tp.d, tp.theta, tree_k, spec.trials,
        derived_rng(spec.seed, "tree-sim"), delta=0.0,
    )
    r = rows[tree_k]
    p_hat = 0.5 * (1.0 + r["absx_mean"])
    out.append(ResultRow(
        experiment=spec.kind, coords={**base, "rep": -1, "metric": "tree_p_hat"},
        estimate=p_hat, ci=0.5 * r["absx_ci"], trials=spec.trials,
        seconds=time.perf_counter() - t0,
    ))
    out.append(ResultRow(
        experiment=spec.kind, coords={**base, "rep": -1, "metric": "gap"},
        estimate=float(accs.mean()) - p_hat,
        ci=ci_half_width(float(accs.std()), len(accs)) + 0.5 * r["absx_ci"],
        trials=len(accs), seconds=0.0,
    ))
    return out


def _pmap(fn, jobs, threads: int):
    """Order-preserving map over (args...) tuples, optionally in processes."""
    if threads == 1 or len(jobs) <= 1:
        return [fn(*args) for args in jobs]
    workers = threads if threads > 0 else None
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_call_star, [(fn, args) for args in jobs]))


def _call_star(packed):
    fn, args = packed
    return fn(*args)


_RUNNERS = {
    "tree-accuracy": run_tree_accuracy,
    "robust-accuracy": run_robust_accuracy,
    "moments-check": run_moments_check,
    "contraction-check": run_contraction_check,
    "threshold-sweep": run_threshold_sweep,
    "conductance-check": run_conductance_check,
}


def run_experiment(spec: ExperimentSpec, threads: int = 1,
                   deterministic: bool = False) -> list[ResultRow]:
    """Dispatch a spec to its runner; deterministic mode zeroes wall times."""
    if spec.kind == "graph-recover":
        rows = run_graph_recover(spec, threads=threads)
    else:
        rows = _RUNNERS[spec.kind](spec)
    if deterministic:
        rows = [ResultRow(r.experiment, r.coords, r.estimate, r.ci, r.trials, 0.0)
                for r in rows]
    return rows


# --- persistence -----------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))  # shortest exact round-trip
    return str(x)


def _jsonable(x):
    if isinstance(x, (float, np.floating)):
        return None if math.isnan(float(x)) else float(x)
    if isinstance(x, (int, np.integer, bool)):
        return int(x)
    return x


def write_results(rows: list[ResultRow], spec: ExperimentSpec, path,
                  deterministic: bool = False) -> Path:
    """Write the CSV table and a JSON mirror (same stem, .json suffix).

    The JSON mirror embeds the full spec so a result file alone is enough to
    reproduce the run.  NaN estimates (degenerate ratio rows) appear as "nan"
    in the CSV and null in the JSON.
    """
    path = Path(path)
    coord_cols = COORD_COLUMNS[spec.kind]
    header = ["experiment", *coord_cols, "estimate", "ci", "trials", "seconds"]
    lines = [",".join(header)]
    for r in rows:
        vals = [r.experiment]
        vals += [_fmt(r.coords.get(c, "")) for c in coord_cols]
        vals += [_fmt(r.estimate), _fmt(r.ci), _fmt(r.trials),
                 _fmt(0.0 if deterministic else r.seconds)]
        lines.append(",".join(vals))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
    mirror = {
        "spec": spec.to_dict(),
        "deterministic": deterministic,
        "rows": [
            {
                "experiment": r.experiment,
                **{c: _jsonable(r.coords.get(c)) for c in coord_cols},
                "estimate": _jsonable(r.estimate),
                "ci": _jsonable(r.ci),
                "trials": r.trials,
                "seconds": 0.0 if deterministic else r.seconds,
            }
            for r in rows
        ],
    }
    path.with_suffix(".json").write_text(
        json.dumps(mirror, indent=2, sort_keys=True) + "\n"
    )
    return path


def default_spec(kind: str, trials: int | None = None, seed: int = 0) -> ExperimentSpec:
    """Ready-to-run spec per subcommand; the CLI's starting point."""
    base = {
        "tree-accuracy": dict(
            params={"a": 5.0, "b": 1.0}, grid={"k": list(range(2, 11))},
            trials=20_000,
        ),
        "robust-accuracy": dict(
            params={"a": 30.0, "b": 4.0},
            grid={"k": [2, 4, 6, 8], "delta": [0.0, 0.2, 0.4]},
            trials=20_000,
        ),
        "moments-check": dict(
            params={"extra_configs": [[4, 0.5]]},
            grid={"d": [2, 3], "theta": [0.5, 0.8], "delta": [0.0, 0.2],
                  "k": [1, 2, 3, 4, 5]},
            trials=20_000,
        ),
        "contraction-check": dict(
            params={},
            grid={"regimes": [
                {"tree_kind": "gw", "d": 64.0, "theta": 0.3, "delta": 0.4, "k": 8},
                {"tree_kind": "gw", "d": 40.0, "theta": 0.9, "delta": 0.4, "k": 8},
                {"tree_kind": "dary", "d": 64, "theta": 0.3, "delta": 0.4, "k": 8},
                {"tree_kind": "dary", "d": 40, "theta": 0.9, "delta": 0.4, "k": 8},
            ]},
            trials=20_000,
        ),
        "threshold-sweep": dict(
            params={"base_d": 2.5, "k": 12},
            grid={"ksig": [0.5, 0.8, 1.0, 1.25, 2.0]},
            trials=20_000,
        ),
        "conductance-check": dict(
            params={"a": 30.0, "b": 4.0}, grid={"k": [2, 4, 6]}, trials=20_000,
        ),
        "graph-recover": dict(
            params={"n": 2000, "a": 30.0, "b": 4.0, "impl": "oracle-noise",
                    "delta0": 0.25, "R": 2, "R_mode": "fixed", "K": 1},
            grid={"rep": [0, 1, 2]},
            trials=20_000,
        ),
    }
    if kind not in base:
        raise ValueError(f"unknown experiment kind in {KINDS}: {kind!r}")
    cfg = base[kind]
    return ExperimentSpec(
        kind=kind, params=cfg["params"], grid=cfg["grid"],
        trials=trials if trials is not None else cfg["trials"], seed=seed,
    )
