"""BPSK-over-AWGN channel statistics and coarse output quantization.

The channel maps a code bit x to the symbol s = 1 - 2x (unit energy) and adds
Gaussian noise of variance sigma^2 = 1 / (2 * R * 10^(EbN0_dB / 10)).  Design
happens on a fine symmetric discretization of the output; the deployed
quantizer is the information-optimal contiguous partition of that grid,
computed by the exact dynamic program from :mod:`ibldpc.ib`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .ib import BinaryJoint, ParameterError, _quantize_symmetric


@dataclass(frozen=True)
class ChannelSpec:
    """Operating point of the BPSK/AWGN channel."""

    ebn0_db: float
    code_rate: float

    def __post_init__(self):
        if not 0.0 < self.code_rate <= 1.0:
            raise ParameterError(f"code_rate must be in (0, 1], got {self.code_rate}")

    @property
    def noise_sigma(self) -> float:
        return math.sqrt(1.0 / (2.0 * self.code_rate * 10.0 ** (self.ebn0_db / 10.0)))


def _symmetric_edges(limit: float, grid_points: int) -> np.ndarray:
    """Cell edges on [-limit, limit] with exact sign symmetry and a 0 edge."""
    half = np.linspace(0.0, limit, grid_points // 2 + 1)
    return np.concatenate([-half[:0:-1], half])


def discretize_channel(spec: ChannelSpec, grid_points: int = 2000,
                       clip_sigma: float = 8.0) -> BinaryJoint:
    """Fine-grained joint p(x, y_cell) over a uniform symmetric grid.

    The grid covers [-1 - clip_sigma * sigma, 1 + clip_sigma * sigma]; cell
    masses are exact Gaussian integrals (CDF differences), renormalized for
    the negligible clipped tails.  The x=1 row is the exact mirror of the
    x=0 row, so the result is bitwise mirror-symmetric.
    """
    if grid_points < 8:
        raise ParameterError(f"grid_points must be >= 8, got {grid_points}")
    if grid_points % 2:
        raise ParameterError("grid_points must be even for a symmetric grid")
    if clip_sigma <= 0:
        raise ParameterError(f"clip_sigma must be > 0, got {clip_sigma}")
    sigma = spec.noise_sigma
    edges = _symmetric_edges(1.0 + clip_sigma * sigma, grid_points)
    z = (edges - 1.0) / sigma  # conditional on x=0 (symbol +1)
    # CDF differences cancel catastrophically above the mean (the CDF rounds
    # to 1.0 and leaves eps-level noise); use the survival form there and the
    # CDF form below, each exact in its own tail
    lower = np.diff(ndtr(z))
    upper = -np.diff(ndtr(-z))
    mid_above = 0.5 * (z[:-1] + z[1:]) > 0.0
    p_y_given_0 = np.where(mid_above, upper, lower)
    p_y_given_0 = p_y_given_0 / p_y_given_0.sum()
    probs = np.vstack([p_y_given_0 * 0.5, p_y_given_0[::-1] * 0.5])
    return BinaryJoint(probs)


@dataclass
class ChannelQuantizer:
    """Coarse channel-output quantizer and the meaning of each index.

    ``boundaries`` are the |T|-1 thresholds on the (real) channel output;
    cells are half-open, an exact boundary value belongs to the upper cell.
    ``index_meanings`` is the per-index LLR ln p(t|x=0)/p(t|x=1) in nats,
    strictly increasing with the index.  ``joint`` is the designed p(x, t).
    """

    boundaries: np.ndarray
    index_meanings: np.ndarray
    cardinality: int
    joint: BinaryJoint
    design_spec: ChannelSpec

    def __post_init__(self):
        if np.any(np.diff(self.boundaries) <= 0):
            raise ParameterError("quantizer boundaries must be strictly increasing")

    def quantize(self, y) -> np.ndarray:
        """Index of the half-open cell containing each sample."""
        y = np.asarray(y, dtype=np.float64)
        if np.any(np.isnan(y)):
            raise ParameterError("cannot quantize NaN samples")
        return np.searchsorted(self.boundaries, y, side="right").astype(np.int32)


def quantize_sample(q: ChannelQuantizer, y: float) -> int:
    if isinstance(y, float) and math.isnan(y):
        raise ParameterError("cannot quantize NaN samples")
    return int(q.quantize(np.asarray([y]))[0])


def design_quantizer(spec: ChannelSpec, cardinality: int, grid_points: int = 2000,
                     clip_sigma: float = 8.0) -> ChannelQuantizer:
    """Information-optimal symmetric quantizer of the fine grid.

    ``cardinality`` must be a power of two >= 2.  Boundaries are grid cell
    edges; the mirror-symmetric dynamic program guarantees boundaries[i] ==
    -boundaries[|T|-2-i] exactly, with the middle boundary at 0.
    """
    if cardinality < 2 or cardinality & (cardinality - 1):
        raise ParameterError(f"cardinality must be a power of two >= 2, got {cardinality}")
    if cardinality > grid_points:
        raise ParameterError(
            f"cardinality {cardinality} exceeds grid resolution {grid_points}"
        )
    fine = discretize_channel(spec, grid_points, clip_sigma)
    labels, _ = _quantize_symmetric(fine.probs[0], fine.probs[1], cardinality)
    edges = _symmetric_edges(1.0 + clip_sigma * spec.noise_sigma, grid_points)
    starts = np.searchsorted(labels, np.arange(1, cardinality))  # labels ascend
    boundaries = edges[starts]

    m0 = np.bincount(labels, weights=fine.probs[0], minlength=cardinality)
    m1 = np.bincount(labels, weights=fine.probs[1], minlength=cardinality)
    m1 = m0[::-1].copy()  # enforce exact mirror of the aggregated masses
    joint = BinaryJoint(np.vstack([m0, m1]) / (m0.sum() + m1.sum()))
    with np.errstate(divide="ignore"):
        meanings = np.log(joint.probs[0]) - np.log(joint.probs[1])
    if np.any(np.diff(meanings) <= 0):
        raise ParameterError("designed index meanings are not strictly increasing")
    return ChannelQuantizer(boundaries, meanings, cardinality, joint, spec)


def bi_awgn_capacity(sigma: float) -> float:
    """Mutual information of the unquantized binary-input AWGN channel (bits).

    Gauss-Hermite style numeric integration on a dense grid; used as a
    design-time sanity reference, independent of the discretization above.
    """
    y = np.linspace(-1 - 10 * sigma, 1 + 10 * sigma, 20001)
    p0 = np.exp(-((y - 1.0) ** 2) / (2 * sigma * sigma))
    p1 = np.exp(-((y + 1.0) ** 2) / (2 * sigma * sigma))
    norm = 1.0 / (sigma * math.sqrt(2 * math.pi))
    p0, p1 = p0 * norm, p1 * norm
    mix = 0.5 * (p0 + p1)
    with np.errstate(divide="ignore", invalid="ignore"):
        h0 = np.where(p0 > 0, p0 * np.log2(p0 / mix), 0.0)
        h1 = np.where(p1 > 0, p1 * np.log2(p1 / mix), 0.0)
    return float(np.trapezoid(0.5 * (h0 + h1), y))
