"""Training-free statistical alignment of one embedding distribution to another.

The main operator is a three-step pipeline acting on unit-normalized
source embeddings:

1. anchor: recenter the source mean onto the target mean;
2. trace: rescale centered residuals by s = sqrt(T_tgt / (T_src + eps))
   so the global variance matches, then project to the unit sphere;
3. centroid: subtract the post-projection drifted mean (calibrated once
   and frozen into the stats) and re-anchor onto the target mean, then
   re-normalize.

Scalar rescaling preserves the source covariance shape exactly, which
is the point: the spectrum, eigenvectors, and condition number of the
source survive the mapping.  A blockwise variant matches per-subspace
covariances with whitening-coloring transforms instead; it aligns
second moments more aggressively at the price of amplifying noise in
weak directions, so its inverse square roots are floored and flagged.

All apply operators are pure functions of their calibrated statistics;
the isotropic-noise baseline additionally takes a seed for its
counter-based generator.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError, DegenerateInputError
from .frame import ReferenceFrame
from .io import EmbeddingSet, as_matrix
from .moments import ModalityStats

_COLLAPSE = 1e-12


def _row_norms(rows: np.ndarray) -> np.ndarray:
    # sqrt of the last-axis sum; identical reduction order for a single
    # row and for rows of a matrix, so batch and scalar paths agree bitwise
    return np.sqrt((rows * rows).sum(axis=-1))


def _normalize_rows(rows: np.ndarray, stage: str) -> np.ndarray:
    norms = _row_norms(rows)
    flat = np.atleast_1d(norms)
    if np.any(flat < _COLLAPSE):
        bad = int(np.argmax(flat < _COLLAPSE))
        raise DegenerateInputError(f"{stage}: norm collapsed below {_COLLAPSE} at row {bad}")
    return rows / norms[..., None]


@dataclass
class AlignmentStats:
    """Frozen calibration of the three-step operator.

    ``scale`` is sqrt(trace_tgt / (trace_src + eps)); ``mu_drift`` is
    the mean of the calibration outputs after the first normalization,
    estimated once and reused for every subsequent sample.
    """

    mu_src: np.ndarray
    mu_tgt: np.ndarray
    trace_src: float
    trace_tgt: float
    scale: float
    eps: float
    mu_drift: np.ndarray
    calib_n: int

    def __post_init__(self):
        self.mu_src = np.asarray(self.mu_src, dtype=np.float64)
        self.mu_tgt = np.asarray(self.mu_tgt, dtype=np.float64)
        self.mu_drift = np.asarray(self.mu_drift, dtype=np.float64)
        expected = np.sqrt(self.trace_tgt / (self.trace_src + self.eps))
        if not np.isclose(self.scale, expected, rtol=1e-12, atol=0.0):
            raise DataFormatError("scale is inconsistent with the stored traces")
        if not np.isfinite(self.mu_drift).all():
            raise DataFormatError("mu_drift contains non-finite entries")
        if np.linalg.norm(self.mu_drift) > 1.0 + 1e-9:
            raise DataFormatError("mu_drift longer than 1; not a mean of unit vectors")

    @property
    def dims(self) -> int:
        return self.mu_src.shape[0]

    def to_payload(self) -> dict:
        return {
            "mu_src": self.mu_src.tolist(),
            "mu_tgt": self.mu_tgt.tolist(),
            "trace_src": float(self.trace_src),
            "trace_tgt": float(self.trace_tgt),
            "scale": float(self.scale),
            "eps": float(self.eps),
            "mu_drift": self.mu_drift.tolist(),
            "calib_n": int(self.calib_n),
        }

    @staticmethod
    def from_payload(payload: dict) -> "AlignmentStats":
        return AlignmentStats(
            mu_src=np.asarray(payload["mu_src"], dtype=np.float64),
            mu_tgt=np.asarray(payload["mu_tgt"], dtype=np.float64),
            trace_src=float(payload["trace_src"]),
            trace_tgt=float(payload["trace_tgt"]),
            scale=float(payload["scale"]),
            eps=float(payload["eps"]),
            mu_drift=np.asarray(payload["mu_drift"], dtype=np.float64),
            calib_n=int(payload["calib_n"]),
        )


def affine_align(rows, stats: AlignmentStats) -> np.ndarray:
    """Steps 1-2 only: mu_tgt + scale * (rows - mu_src), no normalization."""
    rows = np.asarray(rows, dtype=np.float64)
    return stats.mu_tgt + stats.scale * (rows - stats.mu_src)


def _realign_rows(rows: np.ndarray, stats: AlignmentStats) -> np.ndarray:
    unit1 = _normalize_rows(affine_align(rows, stats), "affine-stage normalization")
    shifted = unit1 - stats.mu_drift + stats.mu_tgt
    return _normalize_rows(shifted, "centroid-stage normalization")


def estimate_realign(
    stats_src: ModalityStats,
    stats_tgt: ModalityStats,
    calib_src,
    eps: float = 1e-8,
) -> AlignmentStats:
    """Calibrate the operator from per-modality moments plus source samples.

    Covariances are not needed: the scale uses traces only.  The
    calibration sample is pushed through the anchor/trace steps and the
    first spherical projection; its mean becomes the frozen drift
    correction.  Roughly 1e4 calibration samples are enough for the
    drift estimate to stabilize.
    """
    if stats_tgt.trace < 0 or stats_src.trace < 0:
        raise DataFormatError("negative trace in calibration stats")
    calib = as_matrix(calib_src).astype(np.float64, copy=False)
    if calib.shape[0] == 0:
        raise DegenerateInputError("empty calibration set")
    if calib.shape[1] != stats_src.dims or stats_src.dims != stats_tgt.dims:
        raise DataFormatError("dimension mismatch between stats and calibration set")
    scale = float(np.sqrt(stats_tgt.trace / (stats_src.trace + eps)))
    affine = stats_tgt.mean + scale * (calib - stats_src.mean)
    unit1 = _normalize_rows(affine, "calibration normalization")
    return AlignmentStats(
        mu_src=stats_src.mean,
        mu_tgt=stats_tgt.mean,
        trace_src=stats_src.trace,
        trace_tgt=stats_tgt.trace,
        scale=scale,
        eps=eps,
        mu_drift=unit1.mean(axis=0),
        calib_n=calib.shape[0],
    )


def apply_realign(e_src: np.ndarray, stats: AlignmentStats) -> np.ndarray:
    """Map a single source embedding through the calibrated pipeline.

    The output is unit-norm.  A norm collapse below 1e-12 at either
    normalization raises ``DegenerateInputError`` naming the stage.
    """
    e = np.asarray(e_src, dtype=np.float64)
    if e.ndim != 1 or e.shape[0] != stats.dims:
        raise DataFormatError(f"expected a vector of length {stats.dims}")
    return _realign_rows(e[None, :], stats)[0]


def substitution_operator(source_set, stats: AlignmentStats) -> EmbeddingSet:
    """Batch form of ``apply_realign``; row order is preserved.

    Accepts an EmbeddingSet or matrix and returns an EmbeddingSet in
    float64.  Per-row degeneracies propagate with the row index.
    """
    rows = as_matrix(source_set).astype(np.float64, copy=False)
    tag = source_set.modality_tag if isinstance(source_set, EmbeddingSet) else ""
    if rows.shape[0] == 0:
        return EmbeddingSet(rows.reshape(0, stats.dims).astype(np.float64), tag)
    if rows.shape[1] != stats.dims:
        raise DataFormatError(f"rows have {rows.shape[1]} dims, stats expect {stats.dims}")
    return EmbeddingSet(_realign_rows(rows, stats), tag)


def anchor_shift(rows, mu_src: np.ndarray, mu_tgt: np.ndarray) -> np.ndarray:
    """Mean shift plus re-normalization; the minimal alignment baseline."""
    rows = np.asarray(rows, dtype=np.float64)
    return _normalize_rows(rows - mu_src + mu_tgt, "anchor normalization")


def apply_c3_baseline(
    rows,
    mu_src: np.ndarray,
    mu_tgt: np.ndarray,
    noise_sigma: float = 0.04,
    rng_seed: int = 0,
) -> np.ndarray:
    """Centroid alignment plus isotropic Gaussian noise, then normalization.

    Noise comes from a Philox counter-based generator keyed by
    ``rng_seed``, so outputs are reproducible across runs and platforms
    for a given numpy version.  ``noise_sigma=0`` makes the operator
    deterministic and equal to ``anchor_shift``.
    """
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    shifted = rows - np.asarray(mu_src) + np.asarray(mu_tgt)
    if noise_sigma > 0:
        rng = np.random.Generator(np.random.Philox(key=rng_seed))
        shifted = shifted + noise_sigma * rng.standard_normal(size=rows.shape)
    return _normalize_rows(shifted, "noise-stage normalization")


@dataclass
class BlockwiseStats:
    """Calibrated per-subspace whitening-coloring operator.

    ``t_in`` (r x r) and ``t_out`` ((d-r) x (d-r)) act in the frame's
    coordinates; ``basis_out`` is the deterministic complement basis
    used for the out-of-subspace block.  ``floored`` records that the
    source block spectrum hit the eigenvalue floor during calibration,
    the documented failure mode of aggressive covariance matching.
    """

    frame: ReferenceFrame
    basis_out: np.ndarray
    t_in: np.ndarray
    t_out: np.ndarray
    mu_src: np.ndarray
    mu_tgt: np.ndarray
    mu_drift: np.ndarray
    eig_floor: float
    calib_n: int
    floored: bool = False

    @property
    def dims(self) -> int:
        return self.frame.dims

    def to_payload(self) -> dict:
        return {
            "frame": self.frame.to_payload(),
            "basis_out": np.asarray(self.basis_out).tolist(),
            "t_in": np.asarray(self.t_in).tolist(),
            "t_out": np.asarray(self.t_out).tolist(),
            "mu_src": np.asarray(self.mu_src).tolist(),
            "mu_tgt": np.asarray(self.mu_tgt).tolist(),
            "mu_drift": np.asarray(self.mu_drift).tolist(),
            "eig_floor": float(self.eig_floor),
            "calib_n": int(self.calib_n),
            "floored": bool(self.floored),
        }

    @staticmethod
    def from_payload(payload: dict) -> "BlockwiseStats":
        return BlockwiseStats(
            frame=ReferenceFrame.from_payload(payload["frame"]),
            basis_out=np.asarray(payload["basis_out"], dtype=np.float64),
            t_in=np.asarray(payload["t_in"], dtype=np.float64),
            t_out=np.asarray(payload["t_out"], dtype=np.float64),
            mu_src=np.asarray(payload["mu_src"], dtype=np.float64),
            mu_tgt=np.asarray(payload["mu_tgt"], dtype=np.float64),
            mu_drift=np.asarray(payload["mu_drift"], dtype=np.float64),
            eig_floor=float(payload["eig_floor"]),
            calib_n=int(payload["calib_n"]),
            floored=bool(payload["floored"]),
        )


def _floored_invsqrt(cov: np.ndarray, eig_floor: float):
    """Inverse symmetric square root with a relative eigenvalue floor."""
    lam, q = np.linalg.eigh(0.5 * (cov + cov.T))
    lam = np.maximum(lam, 0.0)
    top = lam[-1]
    if top <= 0:
        raise DegenerateInputError("block covariance is zero; cannot whiten")
    floor = eig_floor * top
    floored = bool(np.any(lam < floor))
    invsqrt = (q / np.sqrt(np.maximum(lam, floor))) @ q.T
    return invsqrt, floored


def _block_cov(coords: np.ndarray) -> np.ndarray:
    centered = coords - coords.mean(axis=0)
    return centered.T @ centered / coords.shape[0]


def estimate_blockwise(
    frame: ReferenceFrame,
    calib_src,
    calib_tgt,
    eig_floor: float = 1e-6,
) -> BlockwiseStats:
    """Calibrate per-block whitening-coloring transforms in a frozen frame.

    The source is anchor-aligned (mean shift plus normalization) first;
    block covariances of the anchored source and the raw target are
    estimated in frame coordinates, and each transform is the target
    square root times the floored source inverse square root.  The
    drift correction is then calibrated exactly as in the scalar
    operator.  Hitting the floor is reported via ``floored`` and a
    warning rather than an exception: the output stays finite.
    """
    src = as_matrix(calib_src).astype(np.float64, copy=False)
    tgt = as_matrix(calib_tgt).astype(np.float64, copy=False)
    if src.shape[0] == 0 or tgt.shape[0] == 0:
        raise DegenerateInputError("empty calibration set")
    if src.shape[1] != frame.dims or tgt.shape[1] != frame.dims:
        raise DataFormatError("calibration sets do not match the frame dimension")
    r, d = frame.rank, frame.dims
    if src.shape[0] <= max(r, d - r):
        warnings.warn("calibration set smaller than block size; covariances will be singular")

    mu_src = src.mean(axis=0)
    mu_tgt = tgt.mean(axis=0)
    anchored = _normalize_rows(src - mu_src + mu_tgt, "anchor normalization")
    basis_out = frame.complement_basis()

    cov_in_src = _block_cov(anchored @ frame.basis)
    cov_out_src = _block_cov(anchored @ basis_out)
    cov_in_tgt = _block_cov(tgt @ frame.basis)
    cov_out_tgt = _block_cov(tgt @ basis_out)

    invsqrt_in, floored_in = _floored_invsqrt(cov_in_src, eig_floor)
    t_in = sym_sqrt_of(cov_in_tgt) @ invsqrt_in
    if d - r > 0:
        invsqrt_out, floored_out = _floored_invsqrt(cov_out_src, eig_floor)
        t_out = sym_sqrt_of(cov_out_tgt) @ invsqrt_out
    else:
        t_out, floored_out = np.zeros((0, 0)), False
    floored = floored_in or floored_out
    if floored:
        warnings.warn(
            "source block spectrum hit the eigenvalue floor; whitening amplification capped"
        )

    stats = BlockwiseStats(
        frame=frame,
        basis_out=basis_out,
        t_in=t_in,
        t_out=t_out,
        mu_src=mu_src,
        mu_tgt=mu_tgt,
        mu_drift=np.zeros(d),
        eig_floor=eig_floor,
        calib_n=src.shape[0],
        floored=floored,
    )
    transformed = _blockwise_rows(src, stats, skip_centroid=True)
    stats.mu_drift = transformed.mean(axis=0)
    return stats


def sym_sqrt_of(cov: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root (negative round-off eigenvalues clamped)."""
    lam, q = np.linalg.eigh(0.5 * (np.asarray(cov) + np.asarray(cov).T))
    return (q * np.sqrt(np.maximum(lam, 0.0))) @ q.T


def _blockwise_rows(rows: np.ndarray, stats: BlockwiseStats, skip_centroid: bool = False):
    anchored = _normalize_rows(
        rows - stats.mu_src + stats.mu_tgt, "anchor normalization"
    )
    coords_in = anchored @ stats.frame.basis
    recombined = (coords_in @ stats.t_in.T) @ stats.frame.basis.T
    if stats.basis_out.shape[1] > 0:
        coords_out = anchored @ stats.basis_out
        recombined = recombined + (coords_out @ stats.t_out.T) @ stats.basis_out.T
    shaped = _normalize_rows(recombined, "block-transform normalization")
    if skip_centroid:
        return shaped
    corrected = shaped - stats.mu_drift + stats.mu_tgt
    return _normalize_rows(corrected, "centroid-stage normalization")


def apply_blockwise(e_src: np.ndarray, stats: BlockwiseStats) -> np.ndarray:
    """Map one embedding (or a batch of rows) through the blockwise pipeline."""
    e = np.asarray(e_src, dtype=np.float64)
    single = e.ndim == 1
    rows = e[None, :] if single else e
    if rows.shape[1] != stats.dims:
        raise DataFormatError(f"expected dimension {stats.dims}, got {rows.shape[1]}")
    out = _blockwise_rows(rows, stats)
    return out[0] if single else out
