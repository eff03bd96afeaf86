"""Sensitivity sweeps: retrain with every domain held out once per value."""
import csv
import json
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from loguru import logger

from sdk.config import TrainConfig
from sdk.datasets import get_domains
from sdk.errors import ConfigError
from services.experiments.runs import resolve_config, run_experiment, with_overrides

SWEEP_PARAMS = ("eta", "alpha_mix")


def add_parser(subparsers, common):
    parser = subparsers.add_parser("sweep", parents=[common], help="sweep eta or alpha_mix over all targets")
    parser.add_argument("--param", required=True)
    parser.add_argument("--values", required=True, help="comma separated values, e.g. 0,0.1,0.5")
    parser.add_argument("--parallel", type=int, default=0, help="worker processes (0 = sequential)")
    parser.set_defaults(handler=run)


def parse_values(raw: str) -> list[float]:
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if not parts:
        raise ConfigError("sweep needs at least one value")
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise ConfigError(f"sweep values must be numbers, got '{raw}'") from None


def _job(config: dict, out: str) -> dict[str, float]:
    _, reports = run_experiment(TrainConfig.model_validate(config), Path(out))
    return {r.name: r.accuracy for r in reports}


def _mean(accuracies: dict[str, float]) -> float:
    return sum(accuracies.values()) / len(accuracies)


def _cell(value) -> str:
    return repr(value) if isinstance(value, float) else str(value)


def run(args) -> int:
    if args.param not in SWEEP_PARAMS:
        raise ConfigError(f"Unknown sweep parameter: {args.param} (choose from {', '.join(SWEEP_PARAMS)})")
    values = parse_values(args.values)
    base = resolve_config(args)
    out = Path(args.out or f"runs/sweep-{args.param}")
    domains = get_domains(base.data, base.model.image_size, base.model.channels)
    names = [d.name for d in domains]
    single_source = base.data.protocol == "single_source"
    role = "source" if single_source else "target"

    jobs = []
    for value in values:
        for d in domains:
            cfg = with_overrides(base, [f"{args.param}={value!r}", f"data.target={d.domain_id}"])
            jobs.append((cfg.model_dump(mode="json"), str(out / f"{args.param}={value:g}" / f"{role}-{d.name}")))
    logger.info(f"Sweep over {args.param}: {len(values)} values x {len(domains)} {role}s")

    if args.parallel > 0:
        with ProcessPoolExecutor(max_workers=args.parallel) as pool:
            results = list(pool.map(_job, *zip(*jobs)))
    else:
        results = [_job(config, path) for config, path in jobs]

    rows = []
    for i, value in enumerate(values):
        chunk = results[i * len(domains):(i + 1) * len(domains)]
        if single_source:
            # One row per source domain; its own column stays empty.
            rows.extend({"value": value, "source": d.name, **accuracies, "mean": _mean(accuracies)}
                        for d, accuracies in zip(domains, chunk))
        else:
            held_out = {d.name: accuracies[d.name] for d, accuracies in zip(domains, chunk)}
            rows.append({"value": value, **held_out, "mean": _mean(held_out)})

    fieldnames = ["value", *(["source"] if single_source else []), *names, "mean"]
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames, restval="", lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _cell(v) for k, v in row.items()})

    if args.json:
        print(json.dumps({"param": args.param, "protocol": base.data.protocol, "rows": rows}, sort_keys=True, indent=2))
    else:
        for row in rows:
            source = f" ({row['source']})" if single_source else ""
            print(f"{args.param}={row['value']:g}{source}: mean {100 * row['mean']:.2f}")
    return 0
