"""Experiment orchestration: multi-seed benchmarks, ablations, and sweeps.

Each (seed, method) task is fully self-contained - it regenerates its
dataset from the seed, derives the train/test split from the same seed,
trains, and scores - so tasks can fan out to a process pool and the result
never depends on which other tasks ran.  Rows are sorted before writing,
and floats are serialized with shortest round-trip repr, so identical plans
produce byte-identical outputs.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from threadpoolctl import threadpool_limits

from .data import Dataset, split_indices
from .errors import ConfigError, ContractError, RunError
from .estimands import effect_errors, estimate_effects, true_effects
from .model import METHODS, ModelBundle, TrainConfig, task_embedding, train
from .patterns import all_patterns, jaccard, pattern_to_index
from .simgen import draw_spec, generate

FAILURE_TOLERANCE = 0.2
_KIND_ORDER = {"ase": 0, "aie": 1}

ABLATION_VARIANTS = [
    ("cisi_te0_bp0", {"use_task_embedding": False, "alpha": 0.0}),
    ("cisi_te1_bp0", {"alpha": 0.0}),
    ("cisi_te0_bp1", {"use_task_embedding": False, "alpha": 0.1}),
    ("cisi_te1_bp1", {"alpha": 0.1}),
]


@dataclass
class ExperimentPlan:
    """What to run: scenario, scale, seeds, methods, config overrides."""

    scenario: int = 1
    n: int = 50_000
    seeds: list[int] = field(default_factory=lambda: list(range(10)))
    methods: list[str] = field(default_factory=lambda: ["cisi"])
    config_overrides: dict = field(default_factory=dict)
    split_frac: float = 0.7
    workers: int = 1

    def __post_init__(self):
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if not 0.0 < self.split_frac < 1.0:
            raise ConfigError(f"split fraction must be in (0,1), got {self.split_frac}")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method '{m}', expected one of {METHODS}")
        if "seed" in self.config_overrides:
            raise ConfigError("config seed is derived from the data seed; "
                              "do not override it")


@dataclass
class MetricsRow:
    method: str
    seed: int
    kind: str          # "ase" or "aie"
    key: str           # treatment index or subset key
    error: float
    param_value: float | None = None


@dataclass
class AggregateRow:
    method: str
    kind: str
    key: str
    mean: float
    sd: float
    n: int
    param_value: float | None = None


@dataclass
class MetricsTable:
    """Long-format per-seed errors plus failure log and task timings."""

    rows: list[MetricsRow] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)
    timings: list[dict] = field(default_factory=list)
    param_name: str | None = None

    def sort(self) -> None:
        self.rows.sort(key=lambda r: (
            r.param_value if r.param_value is not None else float("-inf"),
            r.method, r.seed, _KIND_ORDER[r.kind], r.key))
        self.failures.sort(key=lambda f: (f["method"], f["seed"]))
        self.timings.sort(key=lambda t: (
            t.get("param_value") or float("-inf"), t["method"], t["seed"]))

    def aggregate(self) -> list[AggregateRow]:
        """Mean/sd per (param value, method, metric); recomputable from rows."""
        groups: dict[tuple, list[float]] = {}
        for r in self.rows:
            groups.setdefault((r.param_value, r.method, r.kind, r.key), []).append(r.error)
        out = []
        for (pv, method, kind, key), errors in sorted(
                groups.items(), key=lambda kv: (
                    kv[0][0] if kv[0][0] is not None else float("-inf"),
                    kv[0][1], _KIND_ORDER[kv[0][2]], kv[0][3])):
            arr = np.asarray(errors)
            sd = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
            out.append(AggregateRow(method=method, kind=kind, key=key,
                                    mean=float(arr.mean()), sd=sd, n=len(arr),
                                    param_value=pv))
        return out

    def csv_text(self) -> str:
        self.sort()
        lines = []
        if self.param_name is None:
            lines.append("method,seed,kind,key,error")
            for r in self.rows:
                lines.append(f"{r.method},{r.seed},{r.kind},\"{r.key}\",{r.error!r}")
        else:
            lines.append(f"param,value,method,seed,kind,key,error")
            for r in self.rows:
                lines.append(f"{self.param_name},{r.param_value!r},{r.method},"
                             f"{r.seed},{r.kind},\"{r.key}\",{r.error!r}")
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.csv_text())

    def summary_dict(self) -> dict:
        aggs = []
        for a in self.aggregate():
            doc = {"method": a.method, "kind": a.kind, "key": a.key,
                   "mean": a.mean, "sd": a.sd, "n": a.n}
            if self.param_name is not None:
                doc["param"] = self.param_name
                doc["value"] = a.param_value
            aggs.append(doc)
        return {"aggregates": aggs, "failures": self.failures,
                "timings": self.timings}

    def errors_for(self, method: str, kind: str, key: str,
                   param_value: float | None = None) -> list[float]:
        return [r.error for r in self.rows
                if r.method == method and r.kind == kind and r.key == key
                and r.param_value == param_value]


def method_config(method: str, seed: int, overrides: dict | None = None,
                  variant: dict | None = None) -> TrainConfig:
    """Per-method defaults (balancing weight 1.0 for cfr_wass), then overrides."""
    cfg = TrainConfig(seed=seed)
    if method == "cfr_wass":
        cfg = replace(cfg, alpha=1.0)
    merged: dict = {}
    if overrides:
        merged.update(overrides)
    if variant:
        merged.update(variant)
    merged.pop("seed", None)
    if merged:
        cfg = replace(cfg, **merged)
    return cfg


def run_single(scenario: int, n: int, seed: int, method: str,
               overrides: dict | None = None, variant: dict | None = None,
               split_frac: float = 0.7, label: str | None = None
               ) -> tuple[list[MetricsRow], ModelBundle, float]:
    """Generate, split, train, estimate, and score one (seed, method) cell."""
    label = label or method
    spec = draw_spec(scenario, n, seed)
    sim = generate(spec)
    tr_idx, te_idx = split_indices(n, split_frac, seed)
    ds = Dataset(sim.x_o, sim.t, sim.y)
    cfg = method_config(method, seed, overrides, variant)
    t0 = time.perf_counter()
    bundle = train(ds.subset(tr_idx), cfg, method)
    seconds = time.perf_counter() - t0
    with threadpool_limits(limits=1):
        est = estimate_effects(bundle, sim.x_o[te_idx], spec.k,
                               method=label, seed=seed)
    truth = true_effects(spec, sim.x_t[te_idx])
    err = effect_errors(truth, est)
    rows = [MetricsRow(method=label, seed=seed, kind="ase", key=str(j), error=v)
            for j, v in sorted(err.eps_ase.items())]
    rows += [MetricsRow(method=label, seed=seed, kind="aie", key=key, error=v)
             for key, v in err.eps_aie.items()]
    return rows, bundle, seconds


def _task(args: dict) -> dict:
    """Worker entry; BLAS pinned to one thread so pooling stays deterministic."""
    try:
        with threadpool_limits(limits=1):
            rows, _, seconds = run_single(
                args["scenario"], args["n"], args["seed"], args["method"],
                overrides=args.get("overrides"), variant=args.get("variant"),
                split_frac=args["split_frac"], label=args["label"])
        pv = args.get("param_value")
        if pv is not None:
            for r in rows:
                r.param_value = pv
        return {"status": "ok", "rows": rows,
                "timing": {"method": args["label"], "seed": args["seed"],
                           "seconds": seconds, "param_value": args.get("param_value")}}
    except Exception as exc:  # noqa: BLE001 - failed seeds are logged, not fatal
        return {"status": "fail",
                "failure": {"method": args["label"], "seed": args["seed"],
                            "message": f"{type(exc).__name__}: {exc}",
                            "param_value": args.get("param_value")}}


def _execute(tasks: list[dict], workers: int, param_name: str | None) -> MetricsTable:
    table = MetricsTable(param_name=param_name)
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_task, tasks))
    else:
        results = [_task(t) for t in tasks]
    for res in results:
        if res["status"] == "ok":
            table.rows.extend(res["rows"])
            table.timings.append(res["timing"])
        else:
            table.failures.append(res["failure"])
    if tasks and len(table.failures) / len(tasks) >= FAILURE_TOLERANCE:
        msgs = "; ".join(f["message"] for f in table.failures[:3])
        raise RunError(
            f"{len(table.failures)}/{len(tasks)} runs failed (first: {msgs})")
    table.sort()
    return table


def run_benchmark(plan: ExperimentPlan) -> MetricsTable:
    """Per-seed train/estimate/score for every method; aggregates mean and sd."""
    tasks = [dict(scenario=plan.scenario, n=plan.n, seed=seed, method=method,
                  label=method, overrides=plan.config_overrides,
                  split_frac=plan.split_frac)
             for seed in plan.seeds for method in plan.methods]
    return _execute(tasks, plan.workers, None)


def run_ablation(plan: ExperimentPlan) -> MetricsTable:
    """The four task-embedding x balancing-penalty configurations on scenario 1."""
    if plan.scenario != 1:
        raise ConfigError("the ablation is defined on scenario 1")
    tasks = [dict(scenario=1, n=plan.n, seed=seed, method="cisi", label=label,
                  overrides=plan.config_overrides, variant=variant,
                  split_frac=plan.split_frac)
             for seed in plan.seeds for label, variant in ABLATION_VARIANTS]
    return _execute(tasks, plan.workers, None)


def sweep(plan: ExperimentPlan, param: str, values: list[float]) -> MetricsTable:
    """Benchmark at each value of ``alpha`` or ``n``; rows keyed by the value."""
    if param not in ("alpha", "n"):
        raise ConfigError(f"sweep parameter must be 'alpha' or 'n', got '{param}'")
    if not values:
        raise ConfigError("sweep needs at least one value")
    tasks = []
    for value in values:
        for seed in plan.seeds:
            for method in plan.methods:
                task = dict(scenario=plan.scenario, n=plan.n, seed=seed,
                            method=method, label=method,
                            overrides=dict(plan.config_overrides),
                            split_frac=plan.split_frac, param_value=float(value))
                if param == "alpha":
                    task["variant"] = {"alpha": float(value)}
                else:
                    task["n"] = int(value)
                tasks.append(task)
    return _execute(tasks, plan.workers, param)


def embedding_similarity(bundle: ModelBundle) -> list[dict]:
    """Jaccard vs embedding cosine for unordered pattern pairs.

    Pairs involving the all-zero pattern are excluded (their Jaccard is
    0/0), as are pairs where an embedding has zero norm.
    """
    if bundle.method != "cisi" or not bundle.use_task_embedding:
        raise ContractError("embedding similarity requires a cisi model with "
                            "its task embedding enabled")
    patterns = [p for p in all_patterns(bundle.k) if any(p)]
    embeds = {p: task_embedding(bundle, p) for p in patterns}
    rows = []
    for i, pa in enumerate(patterns):
        for pb in patterns[i + 1:]:
            ea, eb = embeds[pa], embeds[pb]
            na, nb = np.linalg.norm(ea), np.linalg.norm(eb)
            if na == 0.0 or nb == 0.0:
                continue
            rows.append({
                "pattern_a": "".join(map(str, pa)),
                "pattern_b": "".join(map(str, pb)),
                "jaccard": jaccard(pa, pb),
                "cosine": float(ea @ eb / (na * nb)),
            })
    rows.sort(key=lambda r: (pattern_to_index(tuple(map(int, r["pattern_a"]))),
                             pattern_to_index(tuple(map(int, r["pattern_b"])))))
    return rows


def embedding_csv_text(rows: list[dict]) -> str:
    lines = ["pattern_a,pattern_b,jaccard,cosine"]
    for r in rows:
        lines.append(f"{r['pattern_a']},{r['pattern_b']},{r['jaccard']!r},{r['cosine']!r}")
    return "\n".join(lines) + "\n"
