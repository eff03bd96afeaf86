"""
On-disk cache for built domains.

`<stem>.bin` holds, domain after domain, the images as little-endian float64
followed by the labels as little-endian int64. `<stem>.json` describes the
blob: format version, dtypes, builder parameters and per-domain name, id,
image shape and class count.
"""
import hashlib
import json
from collections.abc import Callable
from pathlib import Path

import numpy as np
from loguru import logger

from sdk.datasets.base import DomainDataset
from sdk.errors import DataError

CACHE_VERSION = 1
IMAGE_DTYPE = np.dtype("<f8")
LABEL_DTYPE = np.dtype("<i8")


def cache_key(params: dict) -> str:
    return hashlib.sha256(json.dumps(params, sort_keys=True, default=str).encode()).hexdigest()[:16]


def save_domains(stem: Path, domains: list[DomainDataset], params: dict):
    stem.parent.mkdir(parents=True, exist_ok=True)
    entries = []
    with open(stem.with_suffix(".bin"), "wb") as f:
        for d in domains:
            f.write(np.ascontiguousarray(d.images, dtype=IMAGE_DTYPE).tobytes())
            f.write(np.ascontiguousarray(d.labels, dtype=LABEL_DTYPE).tobytes())
            entries.append({
                "name": d.name,
                "domain_id": d.domain_id,
                "shape": list(d.images.shape),
                "class_count": d.class_count,
            })
    sidecar = {
        "format_version": CACHE_VERSION,
        "image_dtype": IMAGE_DTYPE.str,
        "label_dtype": LABEL_DTYPE.str,
        "params": params,
        "domains": entries,
    }
    stem.with_suffix(".json").write_text(json.dumps(sidecar, sort_keys=True, indent=2, default=str))


def load_domains(stem: Path) -> list[DomainDataset] | None:
    """None when nothing is cached under `stem`."""
    meta_path, blob_path = stem.with_suffix(".json"), stem.with_suffix(".bin")
    if not meta_path.is_file() or not blob_path.is_file():
        return None
    meta = json.loads(meta_path.read_text())
    if meta.get("format_version") != CACHE_VERSION:
        raise DataError(f"cache {meta_path} has version {meta.get('format_version')}, expected {CACHE_VERSION}")

    blob = blob_path.read_bytes()
    offset = 0
    domains = []
    for entry in meta["domains"]:
        shape = tuple(entry["shape"])
        n_pixels, n_labels = int(np.prod(shape)), shape[0]
        end = offset + n_pixels * IMAGE_DTYPE.itemsize + n_labels * LABEL_DTYPE.itemsize
        if end > len(blob):
            raise DataError(f"cache blob {blob_path} is truncated")
        images = np.frombuffer(blob, IMAGE_DTYPE, n_pixels, offset).reshape(shape).astype(np.float64)
        offset += n_pixels * IMAGE_DTYPE.itemsize
        labels = np.frombuffer(blob, LABEL_DTYPE, n_labels, offset).astype(np.int64)
        offset = end
        domains.append(DomainDataset(entry["name"], entry["domain_id"], images, labels, entry["class_count"]))
    if offset != len(blob):
        raise DataError(f"cache blob {blob_path} has {len(blob) - offset} unexpected trailing bytes")
    return domains


def cached(directory: Path, name: str, params: dict, build: Callable[[], list[DomainDataset]]) -> list[DomainDataset]:
    stem = Path(directory) / f"{name}-{cache_key(params)}"
    domains = load_domains(stem)
    if domains is not None:
        logger.info(f"Loaded {name} domains from cache {stem}")
        return domains
    domains = build()
    save_domains(stem, domains, params)
    logger.info(f"Cached {name} domains at {stem}")
    return domains
