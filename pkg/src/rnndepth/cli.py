"""Command-line front end.

Subcommands: generate (datasets), construct (theorem-built weights), verify
(oracle campaign), train (single run config), sweep (grid), count-params,
crossover.  Train/sweep configs are JSON files; any field can be overridden
on the command line with --set dotted.key=value.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import constructions as con
from . import experiments as ex
from . import tasks
from . import training as tr
from .params import load_params, save_params


def _set_nested(d: dict, dotted: str, raw: str) -> None:
    keys = dotted.split(".")
    cur = d
    for k in keys[:-1]:
        cur = cur.setdefault(k, {})
    try:
        cur[keys[-1]] = json.loads(raw)
    except json.JSONDecodeError:
        cur[keys[-1]] = raw


def _load_config(path: str, overrides: list[str]) -> dict:
    with open(path) as fh:
        conf = json.load(fh)
    for item in overrides or []:
        if "=" not in item:
            raise SystemExit(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        _set_nested(conf, key, raw)
    return conf


def _apply_paper_scale(conf: dict) -> dict:
    conf = dict(conf)
    task = dict(conf.get("task", {}))
    task["sizes"] = [10000, 2000, 2000]
    conf["task"] = task
    train = dict(conf.get("train", {}))
    train.update(tr.paper_scale_settings().to_dict())
    conf["train"] = train
    return conf


def cmd_generate(args) -> int:
    overrides = {}
    for name in ("d", "T", "p", "omega", "seed"):
        val = getattr(args, name)
        if val is not None:
            overrides[name] = val
    if args.sizes is not None:
        overrides["sizes"] = tuple(args.sizes)
    spec = tasks.TaskSpec.for_kind(args.kind, **overrides)
    dataset = tasks.generate(spec)
    paths = tasks.save_dataset(args.out, dataset)
    for p in paths:
        print(p)
    return 0


def cmd_construct(args) -> int:
    if args.what == "copier":
        model, readout = con.build_copier(args.hidden, args.lag)
        save_params(model, args.out)
        if args.readout_out:
            with open(args.readout_out, "w") as fh:
                json.dump({"readout": readout.tolist()}, fh)
        print(
            f"copier: width {args.hidden}, lag {args.lag} -> depth {model.config.depth}, "
            f"readout slot {int(np.argmax(readout)) + 1}"
        )
    elif args.what == "flatten":
        deep = load_params(args.model)
        flat = con.build_flattened(deep)
        save_params(flat, args.out)
        print(f"flattened to single layer of width {flat.config.hidden}")
    elif args.what == "diag-power":
        model = con.build_diag_power(args.hidden, args.input_dim, args.depth)
        save_params(model, args.out)
        print(f"diagonal power net: depth {args.depth}, width {args.hidden}")
    elif args.what == "parity":
        model = con.build_parity(args.dim)
        save_params(model, args.out)
        print(f"parity net: width {args.dim}")
    else:
        raise SystemExit(f"unknown construction {args.what!r}")
    return 0


def cmd_verify(args) -> int:
    verdicts = ex.verify_campaign(seed=args.seed)
    print(ex.campaign_report(verdicts), end="")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump([v.to_dict() for v in verdicts], fh, indent=2)
        print(f"wrote {args.out}")
    return 0 if all(v.passed for v in verdicts) else 1


def cmd_train(args) -> int:
    conf = _load_config(args.config, args.set)
    if args.paper_scale:
        conf = _apply_paper_scale(conf)
    config = tr.RunConfig.from_dict(conf)
    record = tr.run(config)
    out = record.to_dict()
    print(
        f"config {record.config_hash}: mean test {record.mean_test:.6g} "
        f"(std {record.std_test:.3g}) over {len(record.test_losses)} seeds, "
        f"{record.param_count} weights"
    )
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(out, fh, indent=2)
        print(f"wrote {args.out}")
    return 0


def cmd_sweep(args) -> int:
    conf = _load_config(args.config, args.set)
    if args.paper_scale:
        conf = _apply_paper_scale(conf)
    task = tasks.TaskSpec.from_dict(conf["task"])
    grid_conf = conf["grid"]
    grid = ex.SweepGrid(
        depths=tuple(grid_conf["depths"]),
        widths=tuple(grid_conf["widths"]),
        families=tuple(grid_conf.get("families", ["rnn"])),
        placements=tuple(grid_conf.get("placements", ["recurrent"])),
        activation=grid_conf.get("activation", "identity"),
        rank=grid_conf.get("rank"),
    )
    train = tr.TrainSettings.from_dict(conf.get("train", {}))
    readout = conf.get("readout", True)

    def progress(rec):
        m = rec.config.model
        print(
            f"  {m.family} {m.placement} L={m.depth} n={m.hidden}: "
            f"mean test {rec.mean_test:.6g}",
            flush=True,
        )

    records = ex.sweep(task, grid, train, readout, progress=progress)
    csv = ex.sweep_csv(records)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(csv)
        print(f"wrote {args.out}")
    else:
        print(csv, end="")
    if args.plot_dir:
        os.makedirs(args.plot_dir, exist_ok=True)
        for x_axis in ("n", "units", "params"):
            for key, text in ex.plot_data(records, x_axis).items():
                path = os.path.join(args.plot_dir, f"{key}_by_{x_axis}.csv")
                with open(path, "w") as fh:
                    fh.write(text)
        print(f"wrote plot data under {args.plot_dir}")
    return 0


def cmd_count_params(args) -> int:
    print(con.param_count(args.hidden, args.depth, include_h0=args.include_h0))
    return 0


def cmd_crossover(args) -> int:
    rows = con.crossover_table(args.max_hidden, args.max_depth)
    csv = con.crossover_csv(rows)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(csv)
        print(f"wrote {args.out}")
    else:
        print(csv, end="")
    ok = con.crossover_always_positive(rows)
    print(f"deep net cheaper at every width >= 4: {ok}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rnndepth", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic dataset to disk")
    g.add_argument("--kind", required=True, choices=tasks.KINDS)
    g.add_argument("--d", type=int)
    g.add_argument("--T", type=int)
    g.add_argument("--p", type=int)
    g.add_argument("--omega", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--sizes", type=int, nargs=3, metavar=("TRAIN", "VAL", "TEST"))
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(func=cmd_generate)

    c = sub.add_parser("construct", help="emit theorem-built model weights")
    c.add_argument("what", choices=["copier", "flatten", "diag-power", "parity"])
    c.add_argument("--hidden", type=int)
    c.add_argument("--lag", type=int)
    c.add_argument("--depth", type=int)
    c.add_argument("--input-dim", type=int, dest="input_dim")
    c.add_argument("--dim", type=int)
    c.add_argument("--model", help="input model JSON (for flatten)")
    c.add_argument("--out", required=True)
    c.add_argument("--readout-out", dest="readout_out")
    c.set_defaults(func=cmd_construct)

    v = sub.add_parser("verify", help="run the construction/oracle campaign")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    t = sub.add_parser("train", help="train one configuration")
    t.add_argument("--config", required=True)
    t.add_argument("--set", action="append", metavar="KEY=VALUE")
    t.add_argument("--paper-scale", action="store_true")
    t.add_argument("--out")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="train a grid of model shapes")
    s.add_argument("--config", required=True)
    s.add_argument("--set", action="append", metavar="KEY=VALUE")
    s.add_argument("--paper-scale", action="store_true")
    s.add_argument("--out")
    s.add_argument("--plot-dir")
    s.set_defaults(func=cmd_sweep)

    p = sub.add_parser("count-params", help="weight count of a scalar-input net")
    p.add_argument("--hidden", type=int, required=True)
    p.add_argument("--depth", type=int, required=True)
    p.add_argument("--include-h0", action="store_true", dest="include_h0")
    p.set_defaults(func=cmd_count_params)

    x = sub.add_parser("crossover", help="deep vs shallow parameter table")
    x.add_argument("--max-hidden", type=int, default=12)
    x.add_argument("--max-depth", type=int, default=5)
    x.add_argument("--out")
    x.set_defaults(func=cmd_crossover)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
