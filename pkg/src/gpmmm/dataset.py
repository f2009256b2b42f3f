"""In-memory dataset: time-indexed spend channels, outcome, dummy covariates."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DatasetError


@dataclass
class Dataset:
    """Validated marketing mix data.

    ``t`` is a gapless, strictly increasing integer period index.  Channel
    spends are nonnegative; dummies are 0/1.  ``meta`` records transform
    provenance (e.g. which stock spec produced a channel).
    """

    t: np.ndarray
    y: np.ndarray
    channels: dict = field(default_factory=dict)
    dummies: dict = field(default_factory=dict)
    dates: Optional[list] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=int)
        self.y = np.asarray(self.y, dtype=float)
        self.channels = {k: np.asarray(v, dtype=float) for k, v in self.channels.items()}
        self.dummies = {k: np.asarray(v, dtype=float) for k, v in self.dummies.items()}
        self.validate()

    def validate(self) -> None:
        n = len(self.t)
        if len(self.y) != n:
            raise DatasetError(f"y has {len(self.y)} rows but t has {n}")
        diffs = np.diff(self.t)
        if np.any(diffs <= 0):
            raise DatasetError("period column t must be strictly increasing")
        if np.any(diffs != 1):
            missing = int(self.t[np.argmax(diffs != 1)] + 1)
            raise DatasetError(f"period column t has a gap: missing period {missing}")
        if not np.all(np.isfinite(self.y)):
            raise DatasetError("outcome column y contains non-finite values")
        for name, col in self.channels.items():
            if len(col) != n:
                raise DatasetError(f"channel '{name}' has {len(col)} rows, expected {n}")
            if not np.all(np.isfinite(col)):
                raise DatasetError(f"channel '{name}' contains non-finite values")
            if np.any(col < 0):
                row = int(np.argmax(col < 0))
                raise DatasetError(
                    f"channel '{name}' has negative spend at period {int(self.t[row])}"
                )
        for name, col in self.dummies.items():
            if len(col) != n:
                raise DatasetError(f"dummy '{name}' has {len(col)} rows, expected {n}")
            if not np.all(np.isin(col, (0.0, 1.0))):
                raise DatasetError(f"dummy '{name}' must contain only 0/1 values")

    @property
    def n_periods(self) -> int:
        return len(self.t)

    @property
    def channel_names(self) -> list:
        return list(self.channels)

    def slice(self, start: int, stop: int) -> "Dataset":
        """Positional slice [start:stop) across all columns."""
        return Dataset(
            t=self.t[start:stop],
            y=self.y[start:stop],
            channels={k: v[start:stop] for k, v in self.channels.items()},
            dummies={k: v[start:stop] for k, v in self.dummies.items()},
            dates=self.dates[start:stop] if self.dates else None,
            meta=dict(self.meta),
        )
