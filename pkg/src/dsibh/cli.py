"""Command-line front end.

Subcommands: synth | train | encode | retrieve | eval. All work is done
through the service layer; by default an in-process instance, or a
remote one via --server. Exit codes: 0 success, 1 usage error, 2 I/O or
file-format error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .client import ServiceClient, ServiceError
from .errors import DSIBHError, FormatError, InvalidArgumentError

EXIT_BY_KIND = {"usage": 1, "io": 2, "numeric": 3}


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; the contract here is 1
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="experiment config JSON (train)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--threads", type=int, help="worker threads for evaluation")
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("--server", help="base URL of a running service")

    parser = _Parser(prog="dsibh", description=__doc__, parents=[common])
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--per-class", type=int, default=250)
    p.add_argument("--d1", type=int, default=32)
    p.add_argument("--d2", type=int, default=32)
    p.add_argument("--label-dim", type=int, default=None)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--multilabel-rate", type=float, default=0.0)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("train", parents=[common], help="run the training pipeline")
    p.add_argument("--out-dir", help="override the config's output directory")

    p = sub.add_parser("encode", parents=[common], help="binarize features into a code DB")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--labels", default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("retrieve", parents=[common], help="top-k Hamming search")
    p.add_argument("--query", required=True, help="query feature file")
    p.add_argument("--model", required=True)
    p.add_argument("--db", required=True)
    p.add_argument("--k", type=int, default=10)

    p = sub.add_parser("eval", parents=[common], help="mean average precision report")
    p.add_argument("--query-db", required=True)
    p.add_argument("--db", required=True)
    p.add_argument("--direction", choices=("x->r", "r->x"), default="x->r")
    p.add_argument("--radius", type=int, default=None)
    p.add_argument("--csv", default=None, help="also write a CSV row to this path")

    return parser


def _resolve_threads(args) -> int:
    if args.threads is not None:
        threads = args.threads
    else:
        env = os.environ.get("DSIBH_THREADS")
        if env is None:
            return 1
        try:
            threads = int(env)
        except ValueError:
            raise InvalidArgumentError(f"DSIBH_THREADS must be an integer, got {env!r}")
    if threads < 1:
        raise InvalidArgumentError("--threads must be >= 1")
    return threads


def _load_config(args) -> dict:
    if not args.config:
        raise InvalidArgumentError("train requires --config with an experiment JSON")
    with open(args.config) as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{args.config}: invalid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise FormatError(f"{args.config}: config must be a JSON object")
    if args.seed is not None:
        cfg.setdefault("train", {})["seed"] = args.seed
    if args.out_dir:
        cfg["out_dir"] = args.out_dir
    return cfg


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not args.command:
        parser.print_usage(sys.stderr)
        print("dsibh: error: a command is required", file=sys.stderr)
        return 1
    try:
        payload, endpoint = _prepare(args)
        with ServiceClient(args.server) as client:
            response = getattr(client, endpoint)(payload)
        _report(args, response)
        return 0
    except ServiceError as exc:
        print(f"dsibh: error: {exc}", file=sys.stderr)
        return EXIT_BY_KIND.get(exc.kind, 1)
    except DSIBHError as exc:
        print(f"dsibh: error: {exc}", file=sys.stderr)
        return EXIT_BY_KIND.get(exc.kind, 1)
    except BrokenPipeError:
        # downstream reader (head, less) closed the stream; exit quietly
        try:
            os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        except (OSError, ValueError):
            pass
        return 0
    except OSError as exc:
        print(f"dsibh: error: {exc}", file=sys.stderr)
        return 2


def _prepare(args) -> tuple[dict, str]:
    threads = _resolve_threads(args)
    if args.command == "synth":
        seed = args.seed if args.seed is not None else 0
        payload = {
            "synth": {
                "classes": args.classes,
                "per_class": args.per_class,
                "d1": args.d1,
                "d2": args.d2,
                "label_dim": args.label_dim,
                "noise": args.noise,
                "multilabel_rate": args.multilabel_rate,
                "seed": seed,
            },
            "out_dir": args.out_dir,
        }
        return payload, "synth"
    if args.command == "train":
        return {"config": _load_config(args), "threads": threads}, "train"
    if args.command == "encode":
        payload = {
            "model_path": args.model,
            "features_path": args.features,
            "labels_path": args.labels,
            "out_path": args.out,
        }
        return payload, "encode"
    if args.command == "retrieve":
        payload = {
            "model_path": args.model,
            "query_features_path": args.query,
            "db_path": args.db,
            "k": args.k,
        }
        return payload, "retrieve"
    payload = {
        "query_db_path": args.query_db,
        "db_path": args.db,
        "direction": args.direction,
        "radius": args.radius,
        "threads": threads,
        "csv_path": args.csv,
    }
    return payload, "evaluate"


def _report(args, response: dict) -> None:
    if args.json:
        print(json.dumps(response, sort_keys=True, indent=2))
        return
    if args.command == "synth":
        print(f"wrote {response['rows']} rows "
              f"(d1={response['d1']}, d2={response['d2']}, labels={response['label_dim']})")
        for name, path in sorted(response["files"].items()):
            print(f"  {name}: {path}")
    elif args.command == "train":
        metrics = response["metrics"]
        state = "converged" if metrics["converged"] else "round cap reached"
        print(f"trained {metrics['rounds_run']} rounds ({state})")
        for direction, score in sorted(metrics["map"].items()):
            skipped = metrics["skipped_queries"][direction]
            print(f"  MAP {direction}: {score:.4f} (skipped queries: {skipped})")
        for name, path in sorted(response["files"].items()):
            print(f"  {name}: {path}")
    elif args.command == "encode":
        print(f"wrote {response['count']} codes of {response['code_bits']} bits "
              f"to {response['path']}")
    elif args.command == "retrieve":
        for result in response["results"]:
            print(f"query {result['query_id']}:")
            for item in result["items"]:
                print(f"  id={item['id']} distance={item['distance']}")
    else:
        print("direction  bits  map     skipped")
        print(f"{response['direction']:<9}  {response['code_bits']:<4}  "
              f"{response['map']:.4f}  {response['skipped']}")


def entrypoint() -> None:
    raise SystemExit(main(sys.argv[1:]))


if __name__ == "__main__":
    entrypoint()
