"""Command-line interface.

Subcommands: simulate, train, estimate, evaluate, ablate, sweep, embedsim,
ingest.  Exit codes: 0 success, 2 configuration error, 3 data error,
4 numeric/run error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .data import (Dataset, ingest_csv, load_schema, read_dataset_csv,
                   write_dataset_csv)
from .errors import (ConfigError, ContractError, DataError, NumericError,
                     RunError, ShapeError)
from .estimands import estimate_effects, true_effects
from .harness import (ExperimentPlan, embedding_csv_text,
                      embedding_similarity, run_ablation, run_benchmark,
                      sweep)
from .model import METHODS, ModelBundle, TrainConfig, train
from .simgen import draw_spec, generate

_CLI_METHODS = {m.replace("_", "-"): m for m in METHODS}


def _parse_methods(text: str) -> list[str]:
    out = []
    for name in text.split(","):
        name = name.strip()
        if not name:
            continue
        if name not in _CLI_METHODS and name not in METHODS:
            raise ConfigError(f"unknown method '{name}'; choose from "
                              f"{sorted(_CLI_METHODS)}")
        out.append(_CLI_METHODS.get(name, name))
    if not out:
        raise ConfigError("no methods given")
    return out


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        doc = json.load(fh)
    TrainConfig.from_dict({**doc, "seed": 0} if "seed" not in doc else doc)
    return doc


def _write_json(path: str, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def cmd_simulate(args) -> int:
    spec = draw_spec(args.scenario, args.n, args.seed)
    sim = generate(spec)
    write_dataset_csv(args.out, Dataset(sim.x_o, sim.t, sim.y))
    if args.truth_out:
        _write_json(args.truth_out, true_effects(spec, sim.x_t).to_dict())
    if args.spec_out:
        _write_json(args.spec_out, spec.to_dict())
    print(f"wrote {args.out} (N={sim.x_o.shape[0]}, d={sim.x_o.shape[1]})")
    return 0


def cmd_train(args) -> int:
    ds = read_dataset_csv(args.data)
    overrides = _load_config(args.config)
    cfg = TrainConfig(**{**overrides})
    method = _parse_methods(args.method)[0]
    bundle = train(ds, cfg, method)
    with open(args.model_out, "w") as fh:
        fh.write(bundle.to_json())
        fh.write("\n")
    print(f"trained {method} for {bundle.train_steps} steps "
          f"({bundle.n_params()} parameters) -> {args.model_out}")
    return 0


def cmd_estimate(args) -> int:
    with open(args.model) as fh:
        bundle = ModelBundle.from_json(fh.read())
    ds = read_dataset_csv(args.data)
    if ds.d != bundle.d:
        raise DataError(f"data has d={ds.d} but model expects d={bundle.d}")
    report = estimate_effects(bundle, ds.x, bundle.k, method=bundle.method)
    _write_json(args.out, report.to_dict())
    print(f"wrote effect estimates for {bundle.method} -> {args.out}")
    return 0


def _finish_table(table, args) -> None:
    table.write_csv(args.out)
    summary_path = args.summary_out or args.out + ".summary.json"
    _write_json(summary_path, table.summary_dict())
    print(f"wrote {len(table.rows)} rows -> {args.out}; summary -> {summary_path}")
    if table.failures:
        print(f"{len(table.failures)} failed runs logged in the summary")


def cmd_evaluate(args) -> int:
    plan = ExperimentPlan(scenario=args.scenario, n=args.n,
                          seeds=list(range(args.seeds)),
                          methods=_parse_methods(args.methods),
                          config_overrides=_load_config(args.config),
                          workers=args.workers)
    _finish_table(run_benchmark(plan), args)
    return 0


def cmd_ablate(args) -> int:
    plan = ExperimentPlan(scenario=1, n=args.n, seeds=list(range(args.seeds)),
                          methods=["cisi"],
                          config_overrides=_load_config(args.config),
                          workers=args.workers)
    _finish_table(run_ablation(plan), args)
    return 0


def cmd_sweep(args) -> int:
    values = [float(v) for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("no sweep values given")
    plan = ExperimentPlan(scenario=args.scenario, n=args.n,
                          seeds=list(range(args.seeds)),
                          methods=_parse_methods(args.methods),
                          config_overrides=_load_config(args.config),
                          workers=args.workers)
    _finish_table(sweep(plan, args.param, values), args)
    return 0


def cmd_embedsim(args) -> int:
    with open(args.model) as fh:
        bundle = ModelBundle.from_json(fh.read())
    rows = embedding_similarity(bundle)
    with open(args.out, "w") as fh:
        fh.write(embedding_csv_text(rows))
    print(f"wrote {len(rows)} pattern pairs -> {args.out}")
    return 0


def cmd_ingest(args) -> int:
    schema = load_schema(args.schema)
    ds, scaler = ingest_csv(args.data, schema)
    write_dataset_csv(args.out, ds)
    if scaler is not None:
        _write_json(args.out + ".scaler.json", scaler)
        print(f"outcome standardized (mean={scaler['mean']:.6g}, "
              f"sd={scaler['std']:.6g}); scaler -> {args.out}.scaler.json")
    print(f"ingested {ds.n} rows (d={ds.d}, K={ds.k}) -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cisinet",
        description="Single and interaction treatment effect estimation "
                    "under multiple concurrent binary treatments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a benchmark dataset")
    p.add_argument("--scenario", type=int, required=True, choices=(1, 2, 3))
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="dataset CSV path")
    p.add_argument("--truth-out", help="ground-truth effects JSON path")
    p.add_argument("--spec-out", help="generative spec JSON path (for replay)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="fit one method on a dataset CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--method", required=True,
                   help="cisi | tarnet | cfr-wass | ncore")
    p.add_argument("--config", help="JSON file mirroring TrainConfig fields")
    p.add_argument("--model-out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("estimate", help="effect estimates from a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("evaluate", help="multi-seed benchmark vs ground truth")
    p.add_argument("--scenario", type=int, required=True, choices=(1, 2, 3))
    p.add_argument("--seeds", type=int, required=True,
                   help="number of replicate seeds (0..seeds-1)")
    p.add_argument("--methods", required=True, help="comma-separated list")
    p.add_argument("--n", type=int, default=50_000)
    p.add_argument("--config", help="TrainConfig overrides JSON")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True, help="long-format metrics CSV")
    p.add_argument("--summary-out", help="summary JSON (default <out>.summary.json)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="task-embedding / balancing-penalty ablation")
    p.add_argument("--seeds", type=int, required=True)
    p.add_argument("--n", type=int, default=50_000)
    p.add_argument("--config", help="TrainConfig overrides JSON")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--summary-out")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", help="benchmark across alpha or sample size")
    p.add_argument("--param", required=True, choices=("alpha", "n"))
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--scenario", type=int, default=1, choices=(1, 2, 3))
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--n", type=int, default=50_000)
    p.add_argument("--methods", default="cisi")
    p.add_argument("--config", help="TrainConfig overrides JSON")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--summary-out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("embedsim", help="pattern similarity vs embedding cosine")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_embedsim)

    p = sub.add_parser("ingest", help="normalize a user CSV through a schema")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True, help="column-role schema JSON")
    p.add_argument("--out", required=True, help="canonical dataset CSV")
    p.set_defaults(func=cmd_ingest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ContractError, ShapeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (NumericError, RunError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
