import json

import numpy as np

from sdk.checkpoint import load_checkpoint
from sdk.datasets import get_domains, get_split
from sdk.trainer import evaluate
from services.experiments.runs import format_table, report_payload, with_overrides


def add_parser(subparsers, common):
    parser = subparsers.add_parser("eval", parents=[common], help="evaluate a checkpoint on every domain")
    parser.add_argument("--checkpoint", required=True)
    parser.add_argument("--dataset", help="dataset name; defaults to the one the checkpoint was trained on")
    parser.set_defaults(handler=run)


def run(args) -> int:
    model = load_checkpoint(args.checkpoint)
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.dataset:
        overrides.append(f'data.dataset="{args.dataset}"')
    cfg = with_overrides(model.config, overrides)

    domains = get_domains(cfg.data, cfg.model.image_size, cfg.model.channels)
    targets = {d.domain_id for d in get_split(cfg.data, domains).targets}
    reports = [evaluate(model, d, rng=np.random.default_rng(cfg.seed)) for d in domains]

    if args.json:
        payload = report_payload(reports, checkpoint=str(args.checkpoint), method=cfg.method,
                                 dataset=cfg.data.dataset)
        for entry, d in zip(payload["domains"], domains):
            entry["domain_id"] = d.domain_id
            entry["role"] = "target" if d.domain_id in targets else "source"
        print(json.dumps(payload, sort_keys=True, indent=2))
    else:
        print(format_table(reports))
    return 0
