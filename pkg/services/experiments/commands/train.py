import json
from pathlib import Path

from services.experiments.runs import format_table, report_payload, resolve_config, run_experiment


def add_parser(subparsers, common):
    parser = subparsers.add_parser("train", parents=[common], help="train one configuration")
    parser.set_defaults(handler=run)


def run(args) -> int:
    cfg = resolve_config(args)
    out = Path(args.out or f"runs/{cfg.method}-seed{cfg.seed}")
    model, reports = run_experiment(cfg, out)
    if args.json:
        print(json.dumps(report_payload(reports, method=cfg.method, swad=model.swad_events), sort_keys=True, indent=2))
    else:
        print(format_table(reports))
    return 0
