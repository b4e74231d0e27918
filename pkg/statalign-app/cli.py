"""
Командная строка стенда.

    python cli.py simulate --spec specs/case1_source.conf --counts 0:200,1:200 --seed 1 --out data/source.csv
    python cli.py bench case1 --out-dir results/case1
    python cli.py sensitivity --in specs/case1_source.conf --sizes 10:500:10 --out results/sensitivity.csv
    python cli.py plotdata --report results/case1/report.json

Код возврата 0 при успехе; при ошибке JSON ошибки печатается в stdout
и код возврата равен 1.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from core.exceptions import ConfigError, StatAlignError
from core.log import setup_logging
from core.settings import get_settings
from services.bench import CASES, CaseConfig, default_case_config, parse_counts, parse_grid, run_case, run_sensitivity
from services.dataset import save_dataset
from services.plotdata import export_plotdata
from services.simulator import generate_domain, load_structure_spec

logger = logging.getLogger(__name__)


def _emit(payload) -> None:
    print(json.dumps(payload, indent=2, default=str))


def cmd_simulate(args: argparse.Namespace) -> None:
    spec = load_structure_spec(args.spec)
    ds = generate_domain(spec, parse_counts(args.counts), args.seed, domain_tag=args.tag or Path(args.spec).stem)
    csv_path, manifest_path = save_dataset(ds, args.out)
    _emit({"csv": str(csv_path), "manifest": str(manifest_path), **ds.manifest()})


def cmd_bench(args: argparse.Namespace) -> None:
    if args.config:
        config = CaseConfig.from_file(args.config)
        if config.case != args.case:
            raise ConfigError(
                f"config {args.config} describes case '{config.case}', not '{args.case}'",
                case=config.case,
            )
    else:
        config = default_case_config(args.case)

    overrides = {}
    if args.repeats is not None:
        overrides["repeats"] = args.repeats
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        config = CaseConfig(**{**config.model_dump(), **overrides})

    out_dir = Path(args.out_dir or Path(get_settings().bench.out_dir) / args.case)
    report = run_case(config, out_dir)
    _emit({
        "case": report.case,
        "out_dir": str(out_dir),
        "summary": [s.model_dump() for s in report.summary],
    })


def cmd_sensitivity(args: argparse.Namespace) -> None:
    sizes = parse_grid(args.sizes) if args.sizes else None
    table = run_sensitivity(args.input, sizes, seed=args.seed, out_path=args.out)
    if args.out:
        _emit({"csv": args.out, "rows": len(table)})
    else:
        print(table.to_csv(index=False), end="")


def cmd_plotdata(args: argparse.Namespace) -> None:
    written = export_plotdata(args.report, args.out_dir, fraction=args.fraction, seed=args.seed)
    _emit({name: str(path) for name, path in written.items()})


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="statalign",
        description="Statistic alignment and domain adaptation benchmark",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Simulate a population of structures")
    p.add_argument("--spec", required=True, help="Structure spec file (KEY=VALUE)")
    p.add_argument("--counts", required=True, help="Class counts, e.g. 0:200,1:200,2:200,3:200")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="Output CSV path")
    p.add_argument("--tag", default=None, help="Domain tag (defaults to the spec file name)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="Run a benchmark case")
    p.add_argument("case", choices=CASES)
    p.add_argument("--config", default=None, help="Case config file (defaults to cases/<case>.conf)")
    p.add_argument("--out-dir", default=None, help="Directory for report.json, CSVs and plot data")
    p.add_argument("--repeats", type=int, default=None, help="Override the number of seeded repeats")
    p.add_argument("--seed", type=int, default=None, help="Override the case seed")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sensitivity", help="Moments against sample size")
    p.add_argument("--in", dest="input", required=True, help="Dataset CSV or structure spec (.conf)")
    p.add_argument("--sizes", default=None, help="Grid start:stop:step (default 10:500:10)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="Output CSV (stdout if omitted)")
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("plotdata", help="Export scatter, KDE and bar-chart data")
    p.add_argument("--report", required=True, help="report.json written by 'bench'")
    p.add_argument("--out-dir", default=None)
    p.add_argument("--fraction", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_plotdata)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(get_settings())
    try:
        args.func(args)
    except StatAlignError as exc:
        logger.error(f"{args.command} failed: {exc}")
        _emit(exc.to_dict())
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
