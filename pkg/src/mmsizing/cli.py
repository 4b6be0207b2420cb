"""``mmsizing`` command line.

Settings come from, in decreasing priority: command-line flags, environment
variables named ``MMSIZING_<KEY>`` (``MMSIZING_SEED=3``, ``MMSIZING_K_GM=900``),
a flat ``key = value`` file given with ``--config``, and built-in defaults.
Keys are the run settings in ``RUN_KEYS`` plus every device-constant and
operating-point field.

Exit status: 0 success, 1 runtime failure, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import shlex
import sys

from mmsizing import dataset, oceangen, pipeline, rfmodel
from mmsizing.errors import SchemaError, SizingError
from mmsizing.regress import container
from mmsizing.regress import model as regress_model
from mmsizing.regress.networks import TrainConfig

ENV_PREFIX = "MMSIZING_"

# run setting -> (parser, default)
RUN_KEYS = {
    "seed": (int, 0),
    "test_fraction": (float, 0.2),
    "workers": (int, 1),
    "mode": (str, "norm"),
    "max_iter": (int, 2000),
    "lr": (float, 1e-3),
    "batch_size": (int, None),
    "patience": (int, 200),
}


class UsageError(Exception):
    pass


def _typed(key, raw, source):
    kind = RUN_KEYS[key][0]
    try:
        return kind(raw)
    except ValueError:
        raise UsageError(f"{source}: {key} expects {kind.__name__}, got {raw!r}") from None


def resolve(args, environ=None):
    """Merge defaults, config file, environment and flags.

    Returns ``(run, dc, op)`` where ``run`` maps every ``RUN_KEYS`` entry to
    its final value.
    """
    environ = os.environ if environ is None else environ
    known = set(RUN_KEYS) | set(rfmodel.DEVICE_KEYS) | set(rfmodel.OPERATING_KEYS)
    layers = []
    path = getattr(args, "config", None)
    if path:
        with open(path, encoding="utf-8") as fh:
            layers.append((path, rfmodel.parse_kv(fh.read(), path)))
    env = {k[len(ENV_PREFIX):].lower(): v for k, v in environ.items() if k.startswith(ENV_PREFIX)}
    layers.append(("environment", env))
    flags = {k: getattr(args, k) for k in RUN_KEYS if getattr(args, k, None) is not None}
    layers.append(("flags", flags))

    run = {k: default for k, (_, default) in RUN_KEYS.items()}
    physical = {}
    for source, mapping in layers:
        for key, value in mapping.items():
            if key not in known:
                raise UsageError(f"{source}: unknown configuration key {key!r}")
            if key in RUN_KEYS:
                run[key] = value if source == "flags" else _typed(key, value, source)
            else:
                physical[key] = value
    try:
        dc, op = rfmodel.constants_from_mapping(physical)
    except SchemaError as exc:
        raise UsageError(str(exc)) from None
    return run, dc, op


def _pairs(items, what):
    out = {}
    for item in items or ():
        name, sep, value = item.partition("=")
        if not sep or not name.strip():
            raise UsageError(f"{what} expects name=value, got {item!r}")
        out[name.strip()] = value.strip()
    return out


def _hyper_value(raw):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


# --------------------------------------------------------------------------
# commands


def cmd_gen_data(args):
    if args.block not in rfmodel.BLOCKS:
        raise UsageError(f"unknown block {args.block!r}; expected one of {', '.join(rfmodel.BLOCKS)}")
    run, dc, op = resolve(args)
    ds = dataset.generate_dataset(dataset.builtin_plan(args.block), dc, op, workers=run["workers"])
    dataset.save_csv(ds, args.out)
    print(f"{args.block}: {len(ds)} rows written to {args.out}")
    return 0


def cmd_train(args):
    if args.model not in regress_model.ESTIMATORS:
        raise UsageError(f"unknown model kind {args.model!r}; expected one of {', '.join(regress_model.ESTIMATORS)}")
    run, _, _ = resolve(args)
    ds = dataset.load_csv(args.data)
    sp = dataset.split(ds, run["seed"], run["test_fraction"])
    cfg = TrainConfig(max_iter=run["max_iter"], lr=run["lr"], batch_size=run["batch_size"],
                      seed=run["seed"], patience=run["patience"])
    hyper = {k: _hyper_value(v) for k, v in _pairs(args.hyper, "--hyper").items()}
    try:
        model = pipeline.train(args.model, ds, sp, cfg, **hyper)
    except TypeError as exc:
        raise UsageError(f"bad hyperparameter for {args.model}: {exc}") from None
    digest = container.save_model(model, args.out)
    with open(args.out + ".split.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(sp.to_dict(), fh, sort_keys=True)
        fh.write("\n")
    print(f"trained {args.model} on {len(sp.train)} {ds.block} rows ({len(sp.test)} held out)")
    print(f"final train loss: {model.history[-1]!r}")
    print(f"model sha256: {digest}")
    return 0


def _simulator(args, dc, op):
    if getattr(args, "ocean_cmd", None):
        return oceangen.OceanSimulator(shlex.split(args.ocean_cmd))
    return oceangen.AnalyticSimulator(dc, op)


def cmd_eval(args):
    run, dc, op = resolve(args)
    model = container.load_model(args.model_file)
    ds = dataset.load_csv(args.data)
    if args.split:
        with open(args.split, encoding="utf-8") as fh:
            sp = dataset.Split.from_dict(json.load(fh))
    elif model.split:
        sp = dataset.Split.from_dict(model.split)
    else:
        sp = dataset.split(ds, run["seed"], run["test_fraction"])
    if run["mode"] not in pipeline.AGGREGATE_MODES:
        raise UsageError(f"unknown mode {run['mode']!r}; expected one of {', '.join(pipeline.AGGREGATE_MODES)}")
    report = pipeline.evaluate(model, ds, sp, _simulator(args, dc, op), run["mode"])
    report.write(args.report)
    s = report.summary()
    print(f"scored {s['scored']} of {s['rows']} test rows ({s['excluded']} infeasible, {s['clamped']} clamped)")
    print(f"median aggregated error: {s['err.median']!r}")
    return 0


def _format_vector(v):
    return "".join(f"  {n} = {x!r} {u}\n" for n, x, u in v.values)


def cmd_predict(args):
    _, dc, op = resolve(args)
    model = container.load_model(args.model_file)
    given = _pairs(args.spec, "--spec")
    names = list(model.spec_names)
    missing = [n for n in names if n not in given]
    extra = [n for n in given if n not in names]
    if missing or extra:
        raise UsageError(f"{model.block} model needs --spec for: {', '.join(names)}"
                         + (f"; missing {', '.join(missing)}" if missing else "")
                         + (f"; unknown {', '.join(extra)}" if extra else ""))
    try:
        desired = rfmodel.SpecVector.from_values(model.block, {n: float(given[n]) for n in names})
    except ValueError as exc:
        raise UsageError(f"--spec values must be numbers: {exc}") from None
    if args.no_simulate:
        params, clamped = regress_model.predict_with_flags(model, desired)
        sys.stdout.write("params:\n" + _format_vector(params))
        if clamped:
            print("note: prediction was clamped to the parameter grid bounds")
        return 0
    res = pipeline.inverse_design(model, desired, _simulator(args, dc, op))
    sys.stdout.write("params:\n" + _format_vector(res.params))
    if res.clamped:
        print("note: prediction was clamped to the parameter grid bounds")
    if not res.feasible:
        print(f"simulation failed: {res.message}", file=sys.stderr)
        return 1
    sys.stdout.write("achieved:\n" + _format_vector(res.achieved))
    print("relative error:")
    for n, e in zip(names, res.errors):
        print(f"  {n} = {e!r}")
    print(f"  aggregated = {res.aggregated!r}")
    return 0


def cmd_emit_ocean(args):
    valid = oceangen.metric_names(args.system)
    metrics = [m.strip() for m in (args.metrics or "").split(",") if m.strip()]
    if not metrics:
        raise UsageError(f"--metrics is empty; valid {args.system} metrics: {', '.join(valid)} (or 'all')")
    if metrics == ["all"]:
        metrics = list(valid)
    unknown = [m for m in metrics if m not in valid]
    if unknown:
        raise UsageError(f"unknown {args.system} metric(s) {', '.join(unknown)}; valid: {', '.join(valid)}")
    script = oceangen.emit_script(args.system, metrics, _pairs(args.bind, "--bind"))
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(script)
    print(f"wrote {len(metrics)} measurement(s) to {args.out}")
    return 0


# --------------------------------------------------------------------------
# parser


def _add_config(p):
    p.add_argument("--config", help="flat key=value settings file")


def _add_training_flags(p):
    p.add_argument("--test-fraction", dest="test_fraction", type=float, help="held-out fraction (default 0.2)")
    p.add_argument("--max-iter", dest="max_iter", type=int, help="network training iterations (default 2000)")
    p.add_argument("--lr", type=float, help="Adam learning rate (default 1e-3)")
    p.add_argument("--batch-size", dest="batch_size", type=int, help="mini-batch rows (default: full batch up to 1024)")
    p.add_argument("--patience", type=int, help="early-stopping patience in iterations (default 200)")


def build_parser():
    parser = argparse.ArgumentParser(prog="mmsizing", description="Inverse sizing of 28 GHz transceiver blocks.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("gen-data", help="write the sweep dataset of a block")
    p.add_argument("--block", required=True, help=f"one of {', '.join(rfmodel.BLOCKS)}")
    p.add_argument("--out", required=True, help="CSV path to write")
    p.add_argument("--workers", type=int, help="worker processes (default 1)")
    _add_config(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="fit an inverse model on a dataset")
    p.add_argument("--data", required=True, help="dataset CSV")
    p.add_argument("--model", required=True, help=f"model kind: {', '.join(regress_model.ESTIMATORS)}")
    p.add_argument("--seed", type=int, help="split and initialisation seed (default 0)")
    p.add_argument("--out", required=True, help="model file to write; the split goes to <out>.split.json")
    p.add_argument("--hyper", action="append", metavar="NAME=VALUE", help="estimator hyperparameter (repeatable)")
    _add_training_flags(p)
    _add_config(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="re-simulate test-set predictions and score them")
    p.add_argument("--data", required=True, help="dataset CSV")
    p.add_argument("--model-file", dest="model_file", required=True, help="trained model")
    p.add_argument("--report", required=True, help="report CSV; summary goes to <report>.summary")
    p.add_argument("--split", help="split JSON (default: the split stored in the model)")
    p.add_argument("--mode", help="aggregation: norm (default) or mean")
    p.add_argument("--ocean-cmd", dest="ocean_cmd", help="external simulator command taking a script path")
    _add_config(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="predict parameters for one desired spec")
    p.add_argument("--model-file", dest="model_file", required=True, help="trained model")
    p.add_argument("--spec", action="append", metavar="NAME=VALUE", help="desired spec value (repeatable)")
    p.add_argument("--no-simulate", dest="no_simulate", action="store_true", help="print parameters only")
    p.add_argument("--ocean-cmd", dest="ocean_cmd", help="external simulator command taking a script path")
    _add_config(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("emit-ocean", help="write an OCEAN measurement script")
    p.add_argument("--system", required=True, choices=("tx", "rx"))
    p.add_argument("--metrics", required=True, help="comma-separated metric names, or 'all'")
    p.add_argument("--out", required=True, help="script path to write")
    p.add_argument("--bind", action="append", metavar="NAME=VALUE", help="override a net or path binding")
    p.set_defaults(func=cmd_emit_ocean)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, OSError) as exc:
        print(f"mmsizing {args.command}: {exc}", file=sys.stderr)
        return 2
    except (SizingError, ValueError) as exc:
        print(f"mmsizing {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
