"""Named, independent random streams for one simulation replication."""

from collections.abc import Iterable, Sequence

import numpy as np

RNG_ALGORITHM = "numpy.PCG64+SeedSequence"
"""Generator recorded in run manifests."""


class RandomStreams:
    """One PCG64 generator per stream name.

    The replication index is folded into the seed sequence spawn key, so every
    (seed, replication, stream) triple draws from its own sequence.
    """

    def __init__(self, seed: int, replication_index: int, names: Iterable[str]):
        """Spawn the streams of a replication."""

        self.names = tuple(names)
        root = np.random.SeedSequence(entropy=seed, spawn_key=(replication_index,))
        self._generators = {
            name: np.random.Generator(np.random.PCG64(child))
            for name, child in zip(self.names, root.spawn(len(self.names)), strict=True)
        }

    def exponential(self, name: str, mean: float) -> float:
        """Draw an exponential variate with the given mean."""
        return float(self._generators[name].exponential(mean))

    def choice(self, name: str, weights: Sequence[float]) -> int:
        """Draw a 0-based index with the given probabilities."""
        return int(self._generators[name].choice(len(weights), p=weights))
