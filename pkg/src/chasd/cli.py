"""Command line interface.

    chasd run    --config cfg.yaml --dataset jobs.jsonl --out runs/a
    chasd sweep  --config cfg.yaml --dataset jobs.jsonl --axis tau --values 0,0.5,1
    chasd synth  --jobs 100 --out jobs.jsonl
    chasd eval   --predictions preds.jsonl --golds golds.jsonl
    chasd amber  --chair-i 10 --f1 80
    chasd mme    --categories cats.json
    chasd mmhal  --scores ratings.json

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

from . import metrics
from .config import Config, ConfigError, dump_config, from_mapping, parse_config
from .runner import SWEEP_AXES, DataError, load_dataset, record_to_json, run, sweep, synth_dataset

log = logging.getLogger("chasd")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _pair(text: str) -> tuple[int, int]:
    try:
        a, b = text.lower().split("x")
        return int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected ROWSxCOLS, got {text!r}") from None


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat YAML config file")
    g = p.add_argument_group("decoder overrides")
    g.add_argument("--alpha", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--tau", type=float)
    g.add_argument("--k", type=float)
    g.add_argument("--sigma", type=float)
    g.add_argument("--mode", choices=["greedy", "sample"])
    g.add_argument("--temperature", type=float)
    g.add_argument("--max-len", dest="max_len", type=int)
    g.add_argument("--eos", dest="eos_token", type=int)
    g.add_argument("--seed", type=int)
    g = p.add_argument_group("toy backend overrides")
    g.add_argument("--backend-seed", dest="backend_seed", type=int)
    g.add_argument("--vocab", dest="vocab_size", type=int)
    g.add_argument("--grid", type=_pair, help="visual token grid, ROWSxCOLS")
    g.add_argument("--patch", type=_pair, help="pixels per patch, HxW")
    g.add_argument("--channels", type=int)
    g.add_argument("--embed-dim", dest="embed_dim", type=int)
    g.add_argument("--heads", type=int)
    g.add_argument("--yes-token", dest="yes_token", type=int)


_FLAG_KEYS = (
    "alpha", "beta", "tau", "k", "sigma", "mode", "temperature", "max_len", "eos_token", "seed",
    "backend_seed", "vocab_size", "channels", "embed_dim", "heads", "yes_token",
)


def load_config(args) -> Config:
    text = ""
    if args.config is not None:
        try:
            text = args.config.read_text()
        except OSError as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
    base = parse_config(text).to_dict()
    for key in _FLAG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            base[key] = value
    if getattr(args, "grid", None):
        base["grid_rows"], base["grid_cols"] = args.grid
    if getattr(args, "patch", None):
        base["patch_px_h"], base["patch_px_w"] = args.patch
    return from_mapping(base)


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2))


def cmd_run(args) -> int:
    cfg = load_config(args)
    report = run(cfg, args.dataset, args.out, workers=args.workers)
    _emit({"out": str(args.out), "aggregate": report["aggregate"], "metrics": report["metrics"],
           "wall_clock_s": report["wall_clock_s"]})
    return EXIT_OK


def _parse_values(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--values must be comma-separated numbers, got {text!r}") from None


def cmd_sweep(args) -> int:
    cfg = load_config(args)
    values = _parse_values(args.values)
    jobs = load_dataset(args.dataset, cfg)
    rows = sweep(cfg, jobs, args.axis, values, workers=args.workers)
    if args.out is not None and args.out.suffix == ".json":
        args.out.write_text(json.dumps(rows, indent=2) + "\n")
    else:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        if args.out is not None:
            args.out.write_text(buf.getvalue())
        else:
            sys.stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = load_config(args)
    jobs = synth_dataset(cfg, args.jobs, seed=args.data_seed)
    with open(args.out, "w") as fh:
        for rec in jobs:
            fh.write(json.dumps(record_to_json(rec)) + "\n")
    if args.write_config is not None:
        args.write_config.write_text(dump_config(cfg))
    return EXIT_OK


def _read_jsonl(path: Path) -> list[dict]:
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    out = []
    for n, line in enumerate(lines, 1):
        if line.strip():
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{n}: invalid JSON: {exc}") from None
    return out


def _answers(rows: list[dict], keys: tuple[str, ...], path: Path) -> dict[str, str]:
    out = {}
    for row in rows:
        key = next((k for k in keys if k in row), None)
        if "id" not in row or key is None:
            raise DataError(f"{path}: each line needs 'id' and one of {keys}")
        out[str(row["id"])] = metrics.normalize_answer(row[key])
    return out


def cmd_eval(args) -> int:
    preds = _answers(_read_jsonl(args.predictions), ("prediction", "answer"), args.predictions)
    golds = _answers(_read_jsonl(args.golds), ("gold", "label", "answer"), args.golds)
    missing = sorted(set(golds) - set(preds))
    if missing:
        raise DataError(f"{len(missing)} gold ids have no prediction, e.g. {missing[0]!r}")
    ids = sorted(golds)
    cm = metrics.confusion([preds[i] for i in ids], [golds[i] for i in ids])
    report = {"n": cm.total, "tp": cm.tp, "tn": cm.tn, "fp": cm.fp, "fn": cm.fn, "accuracy": metrics.accuracy(cm)}
    try:
        report["f1"] = metrics.f1(cm)
    except metrics.UndefinedMetricError as exc:
        raise DataError(str(exc)) from None
    _emit(report)
    return EXIT_OK


def cmd_amber(args) -> int:
    _emit({"chair_i": args.chair_i, "f1": args.f1, "amber_score": metrics.amber_score(args.chair_i, args.f1)})
    return EXIT_OK


def _read_json(path: Path):
    try:
        return json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot load {path}: {exc}") from None


def cmd_mme(args) -> int:
    data = _read_json(args.categories)
    if not isinstance(data, list):
        raise DataError("categories file must hold a JSON list")
    cats = []
    for entry in data:
        try:
            if "pairs" in entry:
                cats.append(metrics.mme_category_from_pairs(entry["name"], entry["pairs"]))
            else:
                cats.append(metrics.MmeCategory(entry["name"], float(entry["acc"]), float(entry["acc_plus"])))
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed MME category {entry!r}: {exc}") from None
    _emit(
        {
            "categories": [{"name": c.name, "acc": c.acc, "acc_plus": c.acc_plus, "score": 100 * (c.acc + c.acc_plus)} for c in cats],
            "mme_score": metrics.mme_score(cats),
        }
    )
    return EXIT_OK


def cmd_mmhal(args) -> int:
    try:
        text = args.scores.read_text()
    except OSError as exc:
        raise DataError(f"cannot read {args.scores}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        data = [line for line in text.split() if line]
    try:
        scores = [float(s) for s in data]
    except (TypeError, ValueError) as exc:
        raise DataError(f"scores must be numbers: {exc}") from None
    _emit({"n": len(scores), "mmhal_score": metrics.mmhal_average(scores)})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chasd", description="Confidence-gated localized contrastive decoding on a toy VLM")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="decode a JSON-lines dataset and write traces + report")
    _add_config_flags(p)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="re-run a dataset across values of tau or k")
    _add_config_flags(p)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--axis", choices=SWEEP_AXES, required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--out", type=Path, help="write rows here (.json or .csv); default CSV on stdout")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", help="write a random toy dataset")
    _add_config_flags(p)
    p.add_argument("--jobs", type=int, default=100)
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--write-config", type=Path, help="also dump the effective config")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="POPE accuracy / F1 from yes-no predictions")
    p.add_argument("--predictions", type=Path, required=True)
    p.add_argument("--golds", type=Path, required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("amber", help="AMBER score from CHAIR_i and F1 (percent)")
    p.add_argument("--chair-i", type=float, required=True)
    p.add_argument("--f1", type=float, required=True)
    p.set_defaults(func=cmd_amber)

    p = sub.add_parser("mme", help="MME total from per-category accuracies or raw question pairs")
    p.add_argument("--categories", type=Path, required=True)
    p.set_defaults(func=cmd_mme)

    p = sub.add_parser("mmhal", help="MMHal-Bench average judge rating")
    p.add_argument("--scores", type=Path, required=True)
    p.set_defaults(func=cmd_mmhal)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"chasd: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ValueError) as exc:
        print(f"chasd: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"chasd: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
