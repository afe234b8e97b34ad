from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CountDataset:
    """Spike counts with shape ``(N neurons, T bins, R trials)``.

    Counts are usually integers, but real-valued nonnegative entries are
    accepted so that noiseless diagnostics can feed rates straight in.
    Bin size is recorded for documentation only; rates are per bin.
    """

    counts: np.ndarray
    bin_size: float = 1.0

    def __post_init__(self):
        y = np.asarray(self.counts, dtype=float)
        if y.ndim == 2:
            y = y[:, :, None]
        if y.ndim != 3:
            raise ValueError(f"counts must have shape (N, T, R), got {y.shape}")
        if not np.all(np.isfinite(y)):
            raise ValueError("counts must be finite")
        if np.any(y < 0):
            i, t, r = np.argwhere(y < 0)[0]
            raise ValueError(f"negative count at neuron {i}, bin {t}, trial {r}")
        y.setflags(write=False)
        object.__setattr__(self, "counts", y)

    @property
    def N(self) -> int:
        return self.counts.shape[0]

    @property
    def T(self) -> int:
        return self.counts.shape[1]

    @property
    def R(self) -> int:
        return self.counts.shape[2]

    @property
    def summed(self) -> np.ndarray:
        """Counts summed over trials, shape ``(N, T)``."""
        return self.counts.sum(axis=2)

    def mean_rates(self) -> np.ndarray:
        """Per-neuron mean count per bin, pooled over bins and trials."""
        return self.counts.mean(axis=(1, 2))

    def subset(self, neurons) -> "CountDataset":
        return CountDataset(self.counts[np.asarray(neurons)], self.bin_size)
