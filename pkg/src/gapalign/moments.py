"""Streaming estimation of means, traces, and covariances.

Accumulation always happens in float64 regardless of the input dtype:
single-precision accumulators hit an irreducible error floor once sample
counts reach the hundreds of thousands, which is far above the precision
needed for statistical alignment.  State is raw moments (sum, squared
norm, optional scatter), so shard-local accumulators merge exactly and
the memory footprint is O(d^2) independent of the number of rows.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError, DegenerateInputError
from .io import as_matrix


@dataclass
class ModalityStats:
    """Finalized first/second moments of one embedding distribution.

    ``trace`` is the expected squared distance to the mean, which equals
    tr(covariance) when the covariance is tracked.  Covariance uses the
    population convention (divide by n).
    """

    mean: np.ndarray
    trace: float
    n: int
    covariance: np.ndarray | None = None

    @property
    def dims(self) -> int:
        return self.mean.shape[0]

    def to_payload(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "trace": float(self.trace),
            "n": int(self.n),
            "covariance": None if self.covariance is None else self.covariance.tolist(),
        }

    @staticmethod
    def from_payload(payload: dict) -> "ModalityStats":
        cov = payload.get("covariance")
        return ModalityStats(
            mean=np.asarray(payload["mean"], dtype=np.float64),
            trace=float(payload["trace"]),
            n=int(payload["n"]),
            covariance=None if cov is None else np.asarray(cov, dtype=np.float64),
        )


class MomentAccumulator:
    """Single-writer accumulator of raw moments in float64.

    Parameters
    ----------
    dims : int
        Embedding dimensionality.
    track_cov : bool
        Also accumulate the d x d scatter matrix.  Disable for very
        large d where only mean and trace are needed.
    """

    def __init__(self, dims: int, track_cov: bool = True):
        if dims < 1:
            raise ValueError("dims must be >= 1")
        self.dims = dims
        self.track_cov = track_cov
        self.n = 0
        self.sum = np.zeros(dims, dtype=np.float64)
        self.sumsq_norm = 0.0
        self.scatter = np.zeros((dims, dims), dtype=np.float64) if track_cov else None

    def state_nbytes(self) -> int:
        """Byte size of the numeric state; constant as n grows."""
        total = self.sum.nbytes + 8 + 8
        if self.scatter is not None:
            total += self.scatter.nbytes
        return total

    def accumulate(self, batch) -> "MomentAccumulator":
        """Fold a batch of rows into the running moments.

        The batch is left unmodified; its values are widened to float64
        before any arithmetic.
        """
        rows = as_matrix(batch)
        if rows.shape[1] != self.dims:
            raise DataFormatError(f"batch has {rows.shape[1]} dims, accumulator expects {self.dims}")
        if rows.shape[0] == 0:
            return self
        good = np.isfinite(rows).all(axis=1)
        if not good.all():
            raise DataFormatError(f"non-finite value in batch row {int(np.argmin(good))}")
        rows64 = rows.astype(np.float64, copy=False)
        self.n += rows.shape[0]
        self.sum += rows64.sum(axis=0)
        self.sumsq_norm += float(np.sum(rows64 * rows64))
        if self.scatter is not None:
            self.scatter += rows64.T @ rows64
        return self

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        """Return a new accumulator equivalent to concatenating both inputs."""
        if self.dims != other.dims:
            raise DataFormatError("cannot merge accumulators with different dims")
        if self.track_cov != other.track_cov:
            raise DataFormatError("cannot merge accumulators with different track_cov flags")
        out = MomentAccumulator(self.dims, self.track_cov)
        out.n = self.n + other.n
        out.sum = self.sum + other.sum
        out.sumsq_norm = self.sumsq_norm + other.sumsq_norm
        if self.scatter is not None:
            out.scatter = self.scatter + other.scatter
        return out

    def finalize(self) -> ModalityStats:
        """Convert raw moments to mean/trace/covariance.

        Requires n >= 1; the covariance path additionally requires
        n >= 2.  A slightly negative trace from round-off (repeated
        identical rows) clamps to zero with a warning.
        """
        if self.n < 1:
            raise DegenerateInputError("cannot finalize an empty accumulator")
        mean = self.sum / self.n
        trace = self.sumsq_norm / self.n - float(mean @ mean)
        if trace < 0.0:
            if trace < -1e-9 * max(1.0, self.sumsq_norm / self.n):
                warnings.warn(f"trace {trace:.3e} clamped to 0 (degenerate input)")
            trace = 0.0
        cov = None
        if self.scatter is not None:
            if self.n < 2:
                raise DegenerateInputError("covariance needs at least 2 samples")
            cov = self.scatter / self.n - np.outer(mean, mean)
            cov = 0.5 * (cov + cov.T)
        return ModalityStats(mean=mean, trace=trace, n=self.n, covariance=cov)


def stats_of(rows, track_cov: bool = False) -> ModalityStats:
    """One-shot moments of an in-memory sample."""
    rows = as_matrix(rows)
    acc = MomentAccumulator(rows.shape[1], track_cov=track_cov)
    return acc.accumulate(rows).finalize()


def shrink(cov: np.ndarray, intensity: float) -> np.ndarray:
    """Shrink a covariance toward the isotropic matrix with equal trace.

    Returns (1 - intensity) * cov + intensity * (tr(cov)/d) * I.  The
    trace is preserved exactly up to round-off.
    """
    if not 0.0 <= intensity <= 1.0:
        raise ValueError(f"shrinkage intensity must be in [0, 1], got {intensity}")
    cov = np.asarray(cov, dtype=np.float64)
    d = cov.shape[0]
    if cov.shape != (d, d):
        raise DataFormatError("covariance must be square")
    return (1.0 - intensity) * cov + intensity * (np.trace(cov) / d) * np.eye(d)


class CompensatedMean:
    """Reference mean estimator for precision checks.

    Per-batch column sums are computed exactly with ``math.fsum`` and
    combined across batches with Neumaier-compensated summation, so the
    result is exact up to a single final rounding per batch boundary.
    Used as the oracle when quantifying accumulator round-off.
    """

    def __init__(self, dims: int):
        self.n = 0
        self._sum = np.zeros(dims, dtype=np.float64)
        self._comp = np.zeros(dims, dtype=np.float64)

    def accumulate(self, batch) -> "CompensatedMean":
        rows = as_matrix(batch).astype(np.float64, copy=False)
        part = np.array([math.fsum(col) for col in rows.T])
        total = self._sum + part
        big_first = np.abs(self._sum) >= np.abs(part)
        self._comp += np.where(big_first, (self._sum - total) + part, (part - total) + self._sum)
        self._sum = total
        self.n += rows.shape[0]
        return self

    def mean(self) -> np.ndarray:
        if self.n < 1:
            raise DegenerateInputError("no samples accumulated")
        return (self._sum + self._comp) / self.n


class Float32ReplayMean:
    """Deliberately single-precision mean accumulator.

    Mirrors the production accumulation pattern (per-batch sums added
    to a running total) but keeps all state in float32.  Exists only to
    demonstrate the precision floor; never use it for real statistics.
    """

    def __init__(self, dims: int):
        self.n = 0
        self._sum = np.zeros(dims, dtype=np.float32)

    def accumulate(self, batch) -> "Float32ReplayMean":
        rows = as_matrix(batch).astype(np.float32)
        self._sum = self._sum + rows.sum(axis=0, dtype=np.float32)
        self.n += rows.shape[0]
        return self

    def mean(self) -> np.ndarray:
        if self.n < 1:
            raise DegenerateInputError("no samples accumulated")
        return self._sum / np.float32(self.n)
