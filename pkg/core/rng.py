"""Named random streams derived from one seed."""

from typing import Tuple

import numpy as np


STREAMS: Tuple[str, ...] = ("datagen", "split", "init", "rollout", "dropout", "replay", "eval", "svm")


class SeedStreams:
    def __init__(self, seed: int):
        self.seed = int(seed)

    def generator(self, stream: str, *keys: int) -> np.random.Generator:
        if stream not in STREAMS:
            raise KeyError(f"Unknown random stream: {stream!r}")
        entropy = [self.seed, STREAMS.index(stream)] + [int(key) for key in keys]
        return np.random.default_rng(np.random.SeedSequence(entropy))

    def spawn(self, stream: str, count: int, *keys: int):
        return [self.generator(stream, *keys, position) for position in range(count)]
