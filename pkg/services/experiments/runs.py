"""Shared plumbing for the experiment commands: config resolution, manifests, metrics files."""
import csv
import json
import subprocess
from datetime import datetime, timezone
from pathlib import Path

from loguru import logger

from sdk.checkpoint import save_checkpoint
from sdk.config import TrainConfig, build_config, load_config
from sdk.datasets import get_domains, get_split
from sdk.trainer import METRICS_COLUMNS, METRICS_SCHEMA_VERSION, EvalReport, MetricsRow, TrainedModel, evaluate, train

REPORT_SCHEMA_VERSION = 1


def resolve_config(args) -> TrainConfig:
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    return load_config(args.config, overrides)


def with_overrides(cfg: TrainConfig, overrides: list[str]) -> TrainConfig:
    return build_config(cfg.model_dump(mode="json"), overrides)


def build_id() -> str:
    try:
        result = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            capture_output=True, text=True, timeout=5, check=True,
        )
        return result.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _dump(path: Path, payload: dict):
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def write_manifest(out: Path, cfg: TrainConfig, **extra) -> dict:
    manifest = {
        "build": build_id(),
        "config": cfg.model_dump(mode="json"),
        "metrics_schema_version": METRICS_SCHEMA_VERSION,
        "out_dir": str(out),
        "seed": cfg.seed,
        "started_at": _now(),
        "finished_at": None,
        **extra,
    }
    out.mkdir(parents=True, exist_ok=True)
    _dump(out / "manifest.json", manifest)
    (out / "config.json").write_text(cfg.echo() + "\n")
    return manifest


def finish_manifest(out: Path, manifest: dict):
    manifest["finished_at"] = _now()
    _dump(out / "manifest.json", manifest)


def write_metrics(path: Path, rows: list[MetricsRow]):
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=METRICS_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row.as_row())


def report_payload(reports: list[EvalReport], **extra) -> dict:
    accuracies = [r.accuracy for r in reports]
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "domains": [r.to_dict() for r in reports],
        "mean_accuracy": sum(accuracies) / len(accuracies) if accuracies else None,
        **extra,
    }


def format_table(reports: list[EvalReport]) -> str:
    """One header row of domain names, one row of accuracies in percent plus the mean."""
    names = [r.name for r in reports] + ["avg"]
    values = [100.0 * r.accuracy for r in reports]
    values.append(sum(values) / len(values) if values else float("nan"))
    width = max(8, *(len(n) for n in names))
    header = "  ".join(n.rjust(width) for n in names)
    row = "  ".join(f"{v:.2f}".rjust(width) for v in values)
    return f"{header}\n{row}"


def run_experiment(cfg: TrainConfig, out: Path) -> tuple[TrainedModel, list[EvalReport]]:
    """Manifest first, then data, training, metrics, checkpoint and target reports."""
    out = Path(out)
    manifest = write_manifest(out, cfg)
    domains = get_domains(cfg.data, cfg.model.image_size, cfg.model.channels)
    split = get_split(cfg.data, domains)
    model = train(cfg, split)
    write_metrics(out / "metrics.csv", model.metrics)
    save_checkpoint(out / "checkpoint.npz", model)
    reports = [evaluate(model, target) for target in split.targets]
    _dump(out / "results.json", report_payload(reports, method=cfg.method, swad=model.swad_events))
    finish_manifest(out, manifest)
    logger.info(f"Run finished in {out}: " + ", ".join(f"{r.name}={r.accuracy:.4f}" for r in reports))
    return model, reports
