import zlib

import numpy as np


class RngStreams:
    """
    Independent named random streams derived from one seed.

    Each consumer (data order, head MC noise, generator noise, mixup weights,
    ...) draws from its own stream, so switching one consumer off leaves the
    draws of every other consumer unchanged.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: dict[str, np.random.Generator] = {}

    def __getitem__(self, name: str) -> np.random.Generator:
        if name not in self._streams:
            key = zlib.crc32(name.encode("utf-8"))
            self._streams[name] = np.random.default_rng(np.random.SeedSequence([self.seed, key]))
        return self._streams[name]
