"""Command-line interface.

Commands:

    generate       write a test-suite manifest
    run            execute (test, setup) pairings into a database
    reference      compute tuned-SGD references only
    classify       normalize records and attach color annotations
    filter         select run records by test/setup properties
    report         render heatmaps (PPM and/or SVG)
    add-algo-grid  expand a hyperparameter grid into a setups file
    chain          run a multi-stage sequence with persistent optimizer state

The database path can also come from the OPTBENCH_DB environment variable.
Exit codes: 0 success, 1 configuration/usage error, 2 I/O or database error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .harness import (
    RUN_REPEATS,
    RUN_STEPS,
    DbFormatError,
    ExperimentDB,
    classify_db,
    filter_records,
    run_chain,
    run_suite,
)
from .optimizers import (
    AlgorithmSetup,
    default_grid,
    default_setups,
    family_names,
    grid_setups,
)
from .report import build_layout, render_ppm, render_svg
from .suite import generate_suite, manifest_tests


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; here 2 means I/O, so remap to 1.
    def error(self, message):
        self.exit(1, f"{self.prog}: error: {message}\n")


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


def _dump_json(doc, path):
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    if path == "-":
        sys.stdout.write(text + "\n")
    else:
        with open(path, "w") as fh:
            fh.write(text + "\n")


def _open_db(args, create_seed=None):
    if not args.db:
        raise ValueError("no database path: pass --db or set OPTBENCH_DB")
    if os.path.exists(args.db):
        return ExperimentDB.load(args.db)
    if create_seed is None:
        raise FileNotFoundError(args.db)
    return ExperimentDB(suite_seed=create_seed)


def _load_setups(args):
    if args.setups == "default":
        setups = default_setups()
    else:
        docs = _load_json(args.setups)
        setups = [AlgorithmSetup.from_dict(d) for d in docs]
    if args.families:
        wanted = set(args.families.split(","))
        unknown = wanted - set(family_names())
        if unknown:
            raise ValueError(f"unknown families: {sorted(unknown)}")
        setups = [s for s in setups if s.family in wanted]
    return setups


# -- commands -----------------------------------------------------------------


def _cmd_generate(args):
    dims = tuple(int(d) for d in args.dims.split(","))
    manifest = generate_suite(seed=args.seed, dims=dims)
    _dump_json(manifest, args.output)
    print(f"{len(manifest['tests'])} tests", file=sys.stderr)
    return 0


def _cmd_run(args):
    manifest = _load_json(args.manifest)
    if args.max_tests is not None:
        manifest = dict(manifest, tests=manifest["tests"][: args.max_tests])
    setups = _load_setups(args)
    db = _open_db(args, create_seed=manifest.get("suite_seed", 0))
    run_suite(
        manifest,
        setups,
        db=db,
        workers=args.workers,
        steps=args.steps,
        repeats=args.repeats,
        with_references=not args.no_references,
    )
    db.save(args.db)
    print(f"{len(db.records)} records in {args.db}", file=sys.stderr)
    return 0


def _cmd_reference(args):
    manifest = _load_json(args.manifest)
    if args.max_tests is not None:
        manifest = dict(manifest, tests=manifest["tests"][: args.max_tests])
    db = _open_db(args, create_seed=manifest.get("suite_seed", 0))
    run_suite(
        manifest,
        [],
        db=db,
        workers=args.workers,
        steps=args.steps,
        repeats=args.repeats,
    )
    db.save(args.db)
    print(f"{len(db.references)} references in {args.db}", file=sys.stderr)
    return 0


def _cmd_classify(args):
    db = _open_db(args)
    classify_db(db, repeats=args.repeats)
    db.save(args.db)
    print(f"{len(db.classes)} pairings classified", file=sys.stderr)
    return 0


def _parse_scalar(text):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def _cmd_filter(args):
    db = _open_db(args)
    query = {}
    if args.fun:
        query["fun"] = args.fun.split(",")
    if args.noise:
        query["noise"] = args.noise.split(",")
    if args.scale:
        query["scale"] = [float(s) for s in args.scale.split(",")]
    if args.dims:
        query["dims"] = [int(d) for d in args.dims.split(",")]
    if args.algo:
        query["algo"] = args.algo.split(",")
    for clause in args.where or []:
        if "=" not in clause:
            raise ValueError(f"bad --where clause {clause!r}; expected name=value")
        name, _, value = clause.partition("=")
        query.setdefault(name, []).append(_parse_scalar(value))
    records = filter_records(db, query)
    if args.count:
        print(len(records))
    else:
        for rec in records:
            print(json.dumps(rec.to_dict(), sort_keys=True, separators=(",", ":")))
    return 0


def _cmd_report(args):
    if not args.ppm and not args.svg:
        raise ValueError("nothing to do: pass --ppm and/or --svg")
    db = _open_db(args)
    if not db.classes:
        classify_db(db)
    layout = build_layout(db)
    if args.ppm:
        with open(args.ppm, "wb") as fh:
            fh.write(render_ppm(db, layout))
    if args.svg:
        with open(args.svg, "w") as fh:
            fh.write(render_svg(db, layout))
    print(f"{layout.width}x{layout.height} cells", file=sys.stderr)
    return 0


def _cmd_add_algo_grid(args):
    if args.family not in family_names():
        raise ValueError(
            f"unknown family {args.family!r}; known: {family_names()}"
        )
    grid = _load_json(args.grid) if args.grid else default_grid(args.family)
    setups = grid_setups(args.family, grid)
    docs = [s.to_dict() for s in setups]
    if args.append and os.path.exists(args.append):
        existing = _load_json(args.append)
        seen = {json.dumps(d, sort_keys=True) for d in existing}
        docs = existing + [
            d for d in docs if json.dumps(d, sort_keys=True) not in seen
        ]
    _dump_json(docs, args.append or args.output)
    print(f"{len(docs)} setups", file=sys.stderr)
    return 0


def _cmd_chain(args):
    manifest = _load_json(args.manifest)
    spec = _load_json(args.chain)
    tests = manifest_tests(manifest)
    by_name = {}
    for uid, t in tests.items():
        by_name.setdefault(t.name, []).append(uid)
    stages = []
    for stage in spec["stages"]:
        key = stage["test"]
        if key in tests:
            uid = key
        elif key in by_name:
            if len(by_name[key]) > 1:
                raise ValueError(f"ambiguous test name {key!r}; use its id")
            uid = by_name[key][0]
        else:
            raise ValueError(f"unknown test {key!r}")
        stages.append((tests[uid], int(stage.get("steps", RUN_STEPS))))
    setup = AlgorithmSetup.from_dict(spec["setup"])
    result = run_chain(
        stages,
        setup,
        suite_seed=manifest.get("suite_seed", 0),
        repeat_index=int(spec.get("repeat_index", 0)),
    )
    print(json.dumps(result, sort_keys=True, separators=(",", ":")))
    if args.db:
        db = _open_db(args, create_seed=manifest.get("suite_seed", 0))
        db.chains.append(result)
        db.save(args.db)
    return 0


# -- parser -------------------------------------------------------------------


def build_parser():
    parser = _Parser(prog="optbench", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command")

    def add_db(p, required=False):
        p.add_argument(
            "--db",
            default=os.environ.get("OPTBENCH_DB"),
            help="database path (default: $OPTBENCH_DB)",
        )

    def add_protocol(p):
        p.add_argument("--steps", type=int, default=RUN_STEPS)
        p.add_argument("--repeats", type=int, default=RUN_REPEATS)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--max-tests", type=int, default=None,
                       help="truncate the manifest (smoke runs)")

    p = sub.add_parser("generate", help="write a suite manifest")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dims", default="1,2,10", help="comma list, e.g. 1,2,10")
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("run", help="execute pairings into a database")
    p.add_argument("--manifest", required=True)
    p.add_argument("--setups", default="default",
                   help="'default' or a setups JSON file")
    p.add_argument("--families", default=None,
                   help="comma list restricting setup families")
    p.add_argument("--no-references", action="store_true")
    add_protocol(p)
    add_db(p)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("reference", help="compute tuned-SGD references only")
    p.add_argument("--manifest", required=True)
    add_protocol(p)
    add_db(p)
    p.set_defaults(func=_cmd_reference)

    p = sub.add_parser("classify", help="annotate pairings with colors")
    p.add_argument("--repeats", type=int, default=RUN_REPEATS)
    add_db(p)
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("filter", help="select run records")
    p.add_argument("--fun", default=None, help="comma list of shape names")
    p.add_argument("--noise", default=None)
    p.add_argument("--scale", default=None)
    p.add_argument("--dims", default=None)
    p.add_argument("--algo", default=None)
    p.add_argument("--where", action="append", metavar="NAME=VALUE",
                   help="hyperparameter equality, repeatable")
    p.add_argument("--count", action="store_true", help="print only the count")
    add_db(p)
    p.set_defaults(func=_cmd_filter)

    p = sub.add_parser("report", help="render heatmaps")
    p.add_argument("--ppm", default=None)
    p.add_argument("--svg", default=None)
    add_db(p)
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("add-algo-grid", help="expand a grid into setups JSON")
    p.add_argument("--family", required=True)
    p.add_argument("--grid", default=None,
                   help="JSON file of {hyper: [values]}; default grid if omitted")
    p.add_argument("-o", "--output", default="-")
    p.add_argument("--append", default=None,
                   help="merge into this setups file instead")
    p.set_defaults(func=_cmd_add_algo_grid)

    p = sub.add_parser("chain", help="run a staged sequence")
    p.add_argument("--manifest", required=True)
    p.add_argument("--chain", required=True, help="chain spec JSON file")
    add_db(p)
    p.set_defaults(func=_cmd_chain)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "func", None):
        parser.print_help(sys.stderr)
        return 1
    try:
        return args.func(args) or 0
    except DbFormatError as e:
        print(f"optbench: database error: {e}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as e:
        print(f"optbench: unreadable JSON input: {e}", file=sys.stderr)
        return 2
    except (FileNotFoundError, IsADirectoryError, PermissionError) as e:
        print(f"optbench: i/o error: {e}", file=sys.stderr)
        return 2
    except (ValueError, KeyError) as e:
        print(f"optbench: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
