"""
IDX reader (the MNIST distribution format).

Layout, all integers big-endian: a 4-byte magic whose low byte is the number
of dimensions and whose third byte is the element type (0x08 = unsigned
byte), one uint32 size per dimension, then the payload in C order.
"""
import gzip
import struct
from pathlib import Path

import numpy as np
from loguru import logger

from sdk.errors import BadMagic, DataError, DimensionOverflow, Truncated

LABEL_MAGIC = 0x00000801
IMAGE_MAGIC = 0x00000803
MAX_ELEMENTS = 1 << 31


def _read_bytes(path: Path) -> bytes:
    if not path.is_file():
        raise DataError(f"IDX file not found: {path}")
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as f:
        return f.read()


def parse_idx(raw: bytes, scale: bool = True) -> np.ndarray:
    if len(raw) < 4:
        raise Truncated(f"IDX header needs 4 bytes, got {len(raw)}")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic not in (LABEL_MAGIC, IMAGE_MAGIC):
        raise BadMagic(f"unknown IDX magic 0x{magic:08X}")

    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise Truncated(f"IDX header needs {header} bytes, got {len(raw)}")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    count = 1
    for d in dims:
        count *= d
        if count > MAX_ELEMENTS:
            raise DimensionOverflow(f"IDX dimensions {dims} exceed {MAX_ELEMENTS} elements")

    payload = raw[header:]
    if len(payload) < count:
        raise Truncated(f"IDX payload has {len(payload)} bytes, dimensions {dims} need {count}")
    if len(payload) > count:
        raise DataError(f"IDX payload has {len(payload) - count} trailing bytes")

    arr = np.frombuffer(payload, dtype=np.uint8).reshape(dims)
    if magic == IMAGE_MAGIC and scale:
        return arr.astype(np.float64) / 255.0
    return arr.astype(np.int64)


def load_idx(path: str | Path, scale: bool = True) -> np.ndarray:
    """Images come back as float64 in [0, 1] (unless scale=False), labels as int64."""
    path = Path(path)
    arr = parse_idx(_read_bytes(path), scale=scale)
    logger.debug(f"Loaded IDX {path.name}: shape {arr.shape}")
    return arr


def _find(directory: Path, stem: str) -> Path:
    for name in (stem, f"{stem}.gz"):
        if (directory / name).is_file():
            return directory / name
    raise DataError(f"MNIST file {stem}[.gz] not found in {directory}")


def load_mnist(directory: str | Path, split: str = "train") -> tuple[np.ndarray, np.ndarray]:
    directory = Path(directory)
    prefix = "train" if split == "train" else "t10k"
    images = load_idx(_find(directory, f"{prefix}-images-idx3-ubyte"))
    labels = load_idx(_find(directory, f"{prefix}-labels-idx1-ubyte"))
    if len(images) != len(labels):
        raise DataError(f"MNIST {split}: {len(images)} images but {len(labels)} labels")
    logger.info(f"MNIST {split}: {len(images)} samples from {directory}")
    return images, labels
