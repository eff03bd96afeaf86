from dataclasses import dataclass

import numpy as np

from sdk.errors import ConfigError, DataError


@dataclass(frozen=True)
class DomainDataset:
    name: str
    domain_id: int
    images: np.ndarray  # (N, H, W, Ch) in [0, 1]
    labels: np.ndarray  # (N,)
    class_count: int

    def __post_init__(self):
        if self.images.ndim != 4:
            raise DataError(f"{self.name}: images must be (N, H, W, Ch), got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise DataError(f"{self.name}: {len(self.images)} images but {len(self.labels)} labels")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise DataError(f"{self.name}: labels outside [0, {self.class_count})")
        if self.images.size and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise DataError(f"{self.name}: pixels outside [0, 1]")
        self.images.setflags(write=False)
        self.labels.setflags(write=False)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def subset(self, indices) -> "DomainDataset":
        indices = np.asarray(indices, dtype=np.intp)
        return DomainDataset(self.name, self.domain_id, self.images[indices], self.labels[indices], self.class_count)

    def with_channels(self, channels: int) -> "DomainDataset":
        """Grayscale domains are replicated to `channels`; any other mismatch is an error."""
        have = self.images.shape[-1]
        if have == channels:
            return self
        if have != 1:
            raise DataError(f"{self.name}: cannot convert {have} channels to {channels}")
        images = np.repeat(self.images, channels, axis=-1)
        return DomainDataset(self.name, self.domain_id, images, self.labels, self.class_count)


@dataclass(frozen=True)
class Split:
    train: list[DomainDataset]
    val: list[DomainDataset]
    targets: list[DomainDataset]
    val_frac: float
    seed: int

    @property
    def target(self) -> DomainDataset:
        return self.targets[0]

    @property
    def class_count(self) -> int:
        return self.train[0].class_count

    @property
    def train_size(self) -> int:
        return sum(len(d) for d in self.train)


def pad_images(images: np.ndarray, size: int) -> np.ndarray:
    """Zero-pad (N, H, W[, Ch]) images to size x size around the centre."""
    h, w = images.shape[1:3]
    if h > size or w > size:
        raise DataError(f"cannot pad {h}x{w} images to {size}x{size}")
    top, left = (size - h) // 2, (size - w) // 2
    pad = [(0, 0), (top, size - h - top), (left, size - w - left)] + [(0, 0)] * (images.ndim - 3)
    return np.pad(images, pad)


def _stratified_holdout(labels: np.ndarray, val_frac: float, rng: np.random.Generator) -> np.ndarray:
    classes, counts = np.unique(labels, return_counts=True)
    quotas = counts * val_frac
    taken = np.floor(quotas).astype(int)
    # largest remainders make the total round(val_frac * N)
    missing = int(round(len(labels) * val_frac)) - taken.sum()
    if missing > 0:
        order = np.argsort(-(quotas - taken), kind="stable")[:missing]
        taken[order] += 1
    held = []
    for cls, k in zip(classes, taken):
        members = np.flatnonzero(labels == cls)
        held.append(rng.permutation(members)[:k])
    return np.sort(np.concatenate(held)) if held else np.zeros(0, dtype=np.intp)


def _holdout(domains: list[DomainDataset], val_frac: float, seed: int):
    train, val = [], []
    for d in domains:
        rng = np.random.default_rng(np.random.SeedSequence([seed, d.domain_id]))
        held = _stratified_holdout(np.asarray(d.labels), val_frac, rng)
        keep = np.setdiff1d(np.arange(len(d)), held)
        train.append(d.subset(keep))
        val.append(d.subset(held))
    return train, val


def _check_domains(datasets: list[DomainDataset], domain_id: int, minimum: int):
    if len(datasets) < minimum:
        raise DataError(f"need at least {minimum} domains, got {len(datasets)}")
    ids = [d.domain_id for d in datasets]
    if domain_id not in ids:
        raise ConfigError(f"unknown domain id {domain_id}; available: {ids}")


def split_leave_one_out(datasets: list[DomainDataset], target_id: int, val_frac: float = 0.2,
                        seed: int = 0) -> Split:
    """Hold out one domain as target; every other domain gives a class-stratified validation split."""
    _check_domains(datasets, target_id, minimum=2)
    sources = [d for d in datasets if d.domain_id != target_id]
    train, val = _holdout(sources, val_frac, seed)
    target = [d for d in datasets if d.domain_id == target_id]
    return Split(train, val, target, val_frac, seed)


def split_single_source(datasets: list[DomainDataset], source_id: int, val_frac: float = 0.2,
                        seed: int = 0) -> Split:
    """Train on one domain, evaluate on every other."""
    _check_domains(datasets, source_id, minimum=2)
    source = [d for d in datasets if d.domain_id == source_id]
    train, val = _holdout(source, val_frac, seed)
    targets = [d for d in datasets if d.domain_id != source_id]
    return Split(train, val, targets, val_frac, seed)
