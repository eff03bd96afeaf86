"""
Checkpoint container: an uncompressed numpy .npz archive.

Arrays, all little-endian float64 ('<f8'):
  theta/layers.<i>.weight, theta/layers.<i>.bias   feature extractor
  head/mean, head/log_var                          variational head (C, d)
  nu/weight, nu/bias[, nu/hidden_weight, nu/hidden_bias]   generator, when trained
plus `meta`, a 0-d unicode array holding sorted-key JSON with
format_version, extractor kind, the resolved config and the SWAD events.
"""
import json
import zipfile
from pathlib import Path

import numpy as np
from loguru import logger
from pydantic import ValidationError

from sdk.bayes import VariationalHead
from sdk.config import TrainConfig
from sdk.errors import CheckpointError
from sdk.generator import GeneratorParams
from sdk.models import FeatureExtractor
from sdk.tensor import Tensor
from sdk.trainer import TrainedModel

FORMAT_VERSION = 1
DTYPE = np.dtype("<f8")


def save_checkpoint(path: str | Path, model: TrainedModel) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {f"theta/{k}": v.data.astype(DTYPE) for k, v in model.extractor.parameters().items()}
    arrays.update({f"head/{k}": v.data.astype(DTYPE) for k, v in model.head.parameters().items()})
    if model.generator is not None:
        arrays.update({f"nu/{k}": v.data.astype(DTYPE) for k, v in model.generator.parameters().items()})
    meta = {
        "format_version": FORMAT_VERSION,
        "extractor": model.extractor.kind,
        "config": model.config.model_dump(mode="json"),
        "swad": model.swad_events,
    }
    arrays["meta"] = np.array(json.dumps(meta, sort_keys=True))
    with open(path, "wb") as f:
        np.savez(f, **arrays)
    logger.info(f"Saved checkpoint to {path}")
    return path


def _group(arrays: dict[str, np.ndarray], prefix: str) -> dict[str, np.ndarray]:
    return {k[len(prefix) + 1:]: v for k, v in arrays.items() if k.startswith(prefix + "/")}


def load_checkpoint(path: str | Path) -> TrainedModel:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as archive:
            arrays = {k: archive[k] for k in archive.files}
    except (zipfile.BadZipFile, ValueError, OSError) as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    if "meta" not in arrays:
        raise CheckpointError(f"{path} has no meta record")

    meta = json.loads(arrays.pop("meta").item())
    version = meta.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path} has format version {version}, this build reads {FORMAT_VERSION}")
    try:
        config = TrainConfig.model_validate(meta["config"])
    except ValidationError as e:
        raise CheckpointError(f"{path} carries an invalid config: {e}") from e

    head = _group(arrays, "head")
    nu = _group(arrays, "nu")
    return TrainedModel(
        extractor=FeatureExtractor.from_arrays(meta["extractor"], _group(arrays, "theta")),
        head=VariationalHead(Tensor(head["mean"], requires_grad=True), Tensor(head["log_var"], requires_grad=True)),
        generator=GeneratorParams(**{k: Tensor(v, requires_grad=True) for k, v in nu.items()}) if nu else None,
        config=config,
        swad_events=meta.get("swad", {}),
    )
