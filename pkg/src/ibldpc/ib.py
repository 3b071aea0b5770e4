"""Information-bottleneck clustering of binary-input joint distributions.

The whole design pipeline works on joint distributions p(x, y) where x is a
binary "relevant" variable (a code bit) and y ranges over a finite observation
alphabet.  This module provides:

* :class:`BinaryJoint` -- the validated container for such distributions,
* :func:`mutual_information` -- I(X;Y) in bits,
* :func:`ib_cluster` -- greedy sequential clustering with seeded restarts,
* :func:`scalar_quantizer_dp` -- the exact dynamic program for observations
  pre-sorted by log-likelihood ratio,
* :func:`align_messages` -- joint relabeling of per-context cluster alphabets
  so that equal indices carry comparable beliefs across contexts.

All information values are reported in bits; log-likelihood ratios are natural
log.  Zero probabilities are exact (0 * log 0 = 0), never floored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

_LN2 = math.log(2.0)

SUM_TOL = 1e-12


class ValidationError(ValueError):
    """A distribution or mapping violates a structural invariant."""


class ParameterError(ValueError):
    """An operation was called with out-of-range parameters."""


class BinaryJoint:
    """Joint distribution p(x, y) with binary x and a finite y alphabet.

    Parameters
    ----------
    probs : array_like, shape (2, |Y|)
        Nonnegative masses summing to 1 (within ``SUM_TOL``).  Row 0 is x=0.
    """

    __slots__ = ("probs",)

    def __init__(self, probs, validate: bool = True):
        arr = np.ascontiguousarray(probs, dtype=np.float64)
        self.probs = arr
        if validate:
            self.validate()

    def validate(self) -> None:
        if self.probs.ndim != 2 or self.probs.shape[0] != 2 or self.probs.shape[1] < 1:
            raise ValidationError(
                f"expected shape (2, |Y|) with |Y| >= 1, got {self.probs.shape}"
            )
        if np.any(self.probs < 0.0):
            raise ValidationError("negative probability mass")
        total = float(self.probs.sum())
        if abs(total - 1.0) > SUM_TOL:
            raise ValidationError(f"joint mass sums to {total!r}, expected 1")

    @property
    def y_size(self) -> int:
        return self.probs.shape[1]

    def x_marginal(self) -> np.ndarray:
        return self.probs.sum(axis=1)

    def y_marginal(self) -> np.ndarray:
        return self.probs.sum(axis=0)

    def posteriors(self) -> np.ndarray:
        """p(x=0 | y) per symbol; zero-mass symbols get 1/2."""
        py = self.y_marginal()
        with np.errstate(invalid="ignore", divide="ignore"):
            p0 = np.where(py > 0.0, self.probs[0] / py, 0.5)
        return p0

    def llrs(self) -> np.ndarray:
        """ln p(y|x=0)/p(y|x=1) per symbol (natural log, +-inf allowed).

        Zero-mass symbols carry LLR 0.  Assumes equiprobable x, in which case
        the likelihood ratio equals the posterior ratio.
        """
        with np.errstate(divide="ignore", invalid="ignore"):
            llr = np.log(self.probs[0]) - np.log(self.probs[1])
        llr = np.where(self.y_marginal() > 0.0, llr, 0.0)
        # 0/0 within a nonzero column cannot happen; 0 vs positive gives +-inf.
        return llr

    def is_symmetric(self) -> bool:
        """Exact mirror symmetry p(x, y) == p(1-x, |Y|-1-y)."""
        return bool(np.array_equal(self.probs, self.probs[::-1, ::-1]))

    def __repr__(self) -> str:  # pragma: no cover
        return f"BinaryJoint(|Y|={self.y_size})"


def mutual_information(joint: BinaryJoint | np.ndarray) -> float:
    """I(X;Y) in bits for a binary-input joint distribution.

    Uses the exact convention 0*log(0) = 0; no epsilon flooring.
    """
    if not isinstance(joint, BinaryJoint):
        joint = BinaryJoint(joint)
    p = joint.probs
    px = joint.x_marginal()
    py = joint.y_marginal()
    outer = px[:, None] * py[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(p > 0.0, p / np.where(outer > 0.0, outer, 1.0), 1.0)
        bits = float(xlogy(p, ratio).sum() / _LN2)
    return bits


def _cluster_bits(a0, a1, px0: float, px1: float):
    """Information contribution (bits) of clusters with class masses a0, a1.

    Vectorized: Sum_x a_x * log2( a_x / ((a0+a1) * p(x)) ), with empty
    clusters contributing zero.
    """
    a0 = np.asarray(a0, dtype=np.float64)
    a1 = np.asarray(a1, dtype=np.float64)
    pt = a0 + a1
    safe = np.where(pt > 0.0, pt, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = xlogy(a0, a0 / (safe * px0)) + xlogy(a1, a1 / (safe * px1))
    return out / _LN2


@dataclass
class ClusterMapping:
    """Deterministic mapping y -> t plus the induced per-cluster meanings.

    ``posteriors[:, t]`` is p(x | t); ``llrs`` converts to natural-log ratios.
    ``degenerate`` is set when some cluster index received no observation.
    """

    assignment: np.ndarray
    posteriors: np.ndarray
    info_bits: float
    degenerate: bool = False
    llr_unit: str = "nats"

    @property
    def num_clusters(self) -> int:
        return self.posteriors.shape[1]

    def llrs(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.posteriors[0]) - np.log(self.posteriors[1])

    def consistent_with(self, joint: BinaryJoint, tol: float = 1e-12) -> bool:
        m0, m1 = _cluster_masses(joint, self.assignment, self.num_clusters)
        pt = m0 + m1
        with np.errstate(invalid="ignore", divide="ignore"):
            p0 = np.where(pt > 0.0, m0 / np.where(pt > 0.0, pt, 1.0), 0.5)
        return bool(np.all(np.abs(p0 - self.posteriors[0]) <= tol))


def _cluster_masses(joint: BinaryJoint, assignment: np.ndarray, k: int):
    m0 = np.bincount(assignment, weights=joint.probs[0], minlength=k)
    m1 = np.bincount(assignment, weights=joint.probs[1], minlength=k)
    return m0, m1


def _mapping_from_assignment(joint: BinaryJoint, assignment: np.ndarray, k: int,
                             canonical: bool = True) -> ClusterMapping:
    """Build a ClusterMapping, optionally relabeled so meanings ascend in LLR."""
    assignment = np.asarray(assignment, dtype=np.int64)
    m0, m1 = _cluster_masses(joint, assignment, k)
    pt = m0 + m1
    with np.errstate(invalid="ignore", divide="ignore"):
        p0 = np.where(pt > 0.0, m0 / np.where(pt > 0.0, pt, 1.0), 0.5)
    if canonical:
        order = np.argsort(p0, kind="stable")
        relabel = np.empty(k, dtype=np.int64)
        relabel[order] = np.arange(k)
        assignment = relabel[assignment]
        m0, m1, p0, pt = m0[order], m1[order], p0[order], pt[order]
    info = float(_cluster_bits(m0, m1, *joint.x_marginal()).sum())
    posteriors = np.vstack([p0, 1.0 - p0])
    degenerate = bool(np.any(np.bincount(assignment, minlength=k) == 0))
    return ClusterMapping(assignment.astype(np.int32), posteriors, info, degenerate)


# ---------------------------------------------------------------------------
# Dynamic program over contiguous partitions
# ---------------------------------------------------------------------------

def _dp_contiguous(m0: np.ndarray, m1: np.ndarray, k: int, px0: float, px1: float):
    """Optimal partition of an ordered symbol sequence into k contiguous,
    nonempty cells, maximizing the summed cluster information.

    Returns (labels, info_bits) with labels ascending 0..k-1 along the input.
    """
    y = len(m0)
    if not 1 <= k <= y:
        raise ParameterError(f"need 1 <= num_clusters <= {y}, got {k}")
    a0 = np.concatenate(([0.0], np.cumsum(m0)))
    a1 = np.concatenate(([0.0], np.cumsum(m1)))
    # gain[i, j] = contribution of one cell covering symbols i..j inclusive
    g0 = a0[None, 1:] - a0[:-1, None]
    g1 = a1[None, 1:] - a1[:-1, None]
    gain = _cluster_bits(g0, g1, px0, px1)
    ii, jj = np.tril_indices(y, k=-1)
    gain[ii, jj] = -np.inf  # i > j is not a valid cell

    # dp[j] = best value covering prefix 0..j with (level+1) cells
    dp = gain[0].copy()
    back = np.zeros((k, y), dtype=np.int64)
    for level in range(1, k):
        cand = dp[:-1, None] + gain[1:, :]
        best = np.argmax(cand, axis=0)
        back[level] = best + 1  # start index of the last cell
        dp = cand[best, np.arange(y)]
        dp[:level] = -np.inf  # prefixes too short for level+1 nonempty cells

    labels = np.empty(y, dtype=np.int32)
    hi = y - 1
    for level in range(k - 1, 0, -1):
        lo = back[level, hi]
        labels[lo:hi + 1] = level
        hi = lo - 1
    labels[:hi + 1] = 0
    return labels, float(dp[y - 1])


def _quantize_generic(m0: np.ndarray, m1: np.ndarray, k: int, px0: float, px1: float):
    """Optimal deterministic quantizer for arbitrary symbol order.

    Sorts symbols by posterior, merges exactly-equal posteriors so that
    information-equivalent symbols always share a cluster, and runs the
    contiguous dynamic program (optimal for binary-input distributions).
    Returns (labels_in_original_order, info_bits).
    """
    pt = m0 + m1
    with np.errstate(invalid="ignore", divide="ignore"):
        p0 = np.where(pt > 0.0, m0 / np.where(pt > 0.0, pt, 1.0), 0.5)
    values, groups = np.unique(p0, return_inverse=True)
    n_groups = len(values)
    g0 = np.bincount(groups, weights=m0, minlength=n_groups)
    g1 = np.bincount(groups, weights=m1, minlength=n_groups)
    kk = min(k, n_groups)
    glabels, info = _dp_contiguous(g0, g1, kk, px0, px1)
    return glabels[groups], info


def _quantize_symmetric(m0: np.ndarray, m1: np.ndarray, k: int,
                        mirror: np.ndarray | None = None):
    """Mirror-symmetric optimal quantizer for an exactly symmetric joint.

    Requires even alphabet and even k.  Pairs every symbol y with its mirror
    (by default |Y|-1-y), quantizes the fold, and reflects, so the result
    satisfies labels[mirror[y]] == k-1-labels[y] exactly.
    Returns (labels, info_bits).
    """
    y = len(m0)
    if y % 2 or k % 2:
        raise ParameterError("symmetric quantization needs even |Y| and even k")
    pt = m0 + m1
    with np.errstate(invalid="ignore", divide="ignore"):
        p0 = np.where(pt > 0.0, m0 / np.where(pt > 0.0, pt, 1.0), 0.5)
    if mirror is None:
        mirror = np.arange(y - 1, -1, -1)
    # Representative of each mirror orbit: the member favoring x=0.  Compare
    # raw masses (not divided posteriors) so mirror pairs stay consistent;
    # exact ties pick the higher index so both members are covered once.
    rep_mask = (m0 > m1) | ((m0 == m1) & (np.arange(y) > mirror))
    reps = np.nonzero(rep_mask)[0]
    if 2 * len(reps) != y:
        raise ValidationError("joint is not exactly mirror-symmetric")
    order = reps[np.argsort(p0[reps], kind="stable")]  # ascending |LLR|
    flabels, _ = _dp_contiguous(m0[order], m1[order], k // 2, 0.5, 0.5)
    labels = np.empty(y, dtype=np.int32)
    labels[order] = k // 2 + flabels
    labels[mirror[order]] = k // 2 - 1 - flabels
    lab0 = np.bincount(labels, weights=m0, minlength=k)
    lab1 = np.bincount(labels, weights=m1, minlength=k)
    info = float(_cluster_bits(lab0, lab1, 0.5, 0.5).sum())
    return labels, info


def optimal_quantizer_labels(joint: BinaryJoint, k: int, symmetric: bool | None = None):
    """Optimal deterministic y -> t labels for a binary-input joint.

    When ``symmetric`` (auto-detected by default) the result is constrained to
    mirror symmetry, which keeps downstream all-zero-codeword simulation valid.
    """
    if symmetric is None:
        symmetric = joint.is_symmetric() and joint.y_size % 2 == 0 and k % 2 == 0
    px0, px1 = joint.x_marginal()
    if symmetric:
        return _quantize_symmetric(joint.probs[0], joint.probs[1], k)
    return _quantize_generic(joint.probs[0], joint.probs[1], k, px0, px1)


def scalar_quantizer_dp(joint: BinaryJoint, num_clusters: int) -> ClusterMapping:
    """Exact maximum-I(X;T) quantizer over contiguous partitions.

    The observation alphabet must already be sorted by ascending LLR; this is
    verified and the first inversion is reported otherwise.  Serves as the
    oracle for :func:`ib_cluster` on sorted inputs.
    """
    if not isinstance(joint, BinaryJoint):
        joint = BinaryJoint(joint)
    if num_clusters > joint.y_size or num_clusters < 1:
        raise ParameterError(
            f"num_clusters={num_clusters} out of range for |Y|={joint.y_size}"
        )
    llr = joint.llrs()
    bad = np.nonzero(np.diff(llr) < 0)[0]
    if len(bad):
        i = int(bad[0])
        raise ParameterError(
            f"LLR ordering inverted between symbols {i} and {i + 1} "
            f"({llr[i]:.6g} > {llr[i + 1]:.6g})"
        )
    labels, _ = _dp_contiguous(joint.probs[0], joint.probs[1], num_clusters,
                               *joint.x_marginal())
    return _mapping_from_assignment(joint, labels, num_clusters, canonical=False)


# ---------------------------------------------------------------------------
# Greedy sequential clustering with restarts
# ---------------------------------------------------------------------------

def ib_cluster(joint: BinaryJoint, num_clusters: int, seed: int = 0,
               restarts: int = 10, max_passes: int = 60) -> ClusterMapping:
    """Deterministic clustering y -> t maximizing I(X;T).

    Sequential greedy improvement (draw each observation, reassign it to the
    cluster with the largest information gain, lowest index on ties) from
    ``restarts`` seeded random initializations plus one sorted-DP
    initialization.  The objective never decreases across steps, so the
    returned I(X;T) is at least that of the best initialization.
    """
    if not isinstance(joint, BinaryJoint):
        joint = BinaryJoint(joint)
    y = joint.y_size
    k = num_clusters
    if k > y or k < 1:
        raise ParameterError(f"num_clusters={k} out of range for |Y|={y}")
    if k == y:
        order = np.argsort(joint.llrs(), kind="stable")
        assignment = np.empty(y, dtype=np.int64)
        assignment[order] = np.arange(y)
        return _mapping_from_assignment(joint, assignment, k)

    rng = np.random.default_rng(np.uint64(seed))
    px0, px1 = joint.x_marginal()
    m0_sym = joint.probs[0]
    m1_sym = joint.probs[1]

    inits = [_quantize_generic(m0_sym, m1_sym, k, px0, px1)[0].astype(np.int64)]
    for _ in range(restarts):
        a = rng.integers(0, k, size=y)
        a[rng.permutation(y)[:k]] = np.arange(k)  # keep every cluster hit
        inits.append(a.astype(np.int64))

    best = None
    for init in inits:
        assignment, info = _sequential_passes(joint, init.copy(), k, rng, max_passes)
        if best is None or info > best[1] + 1e-15:
            best = (assignment, info)
    return _mapping_from_assignment(joint, best[0], k)


def _sequential_passes(joint: BinaryJoint, assignment: np.ndarray, k: int,
                       rng: np.random.Generator, max_passes: int):
    y = joint.y_size
    q0, q1 = joint.probs
    px0, px1 = joint.x_marginal()
    m0, m1 = _cluster_masses(joint, assignment, k)
    counts = np.bincount(assignment, minlength=k)

    for _ in range(max_passes):
        changed = 0
        for sym in rng.permutation(y):
            t_old = assignment[sym]
            # Drawing the symbol can leave float dust; clamp to exact zero.
            m0[t_old] = max(m0[t_old] - q0[sym], 0.0)
            m1[t_old] = max(m1[t_old] - q1[sym], 0.0)
            base = _cluster_bits(m0, m1, px0, px1)
            gain = _cluster_bits(m0 + q0[sym], m1 + q1[sym], px0, px1) - base
            # Emptying the only symbol of a cluster is not allowed: it would
            # shrink the effective alphabet below k.
            if counts[t_old] == 1:
                gain[np.arange(k) != t_old] = -np.inf
            t_new = int(np.argmax(gain))
            assert gain[t_new] >= gain[t_old] - 1e-12, "objective decreased"
            m0[t_new] += q0[sym]
            m1[t_new] += q1[sym]
            assignment[sym] = t_new
            counts[t_old] -= 1
            counts[t_new] += 1
            if t_new != t_old:
                changed += 1
        _repair_empty(joint, assignment, k, m0, m1)
        counts = np.bincount(assignment, minlength=k)
        if changed == 0:
            break
    info = float(_cluster_bits(m0, m1, px0, px1).sum())
    return assignment, info


def _repair_empty(joint: BinaryJoint, assignment: np.ndarray, k: int, m0, m1):
    """Re-split the highest-entropy cluster into any empty cluster index."""
    counts = np.bincount(assignment, minlength=k)
    llr = joint.llrs()
    for empty in np.nonzero(counts == 0)[0]:
        pt = m0 + m1
        with np.errstate(invalid="ignore", divide="ignore"):
            p0 = np.where(pt > 0.0, m0 / np.where(pt > 0.0, pt, 1.0), 0.5)
        h = pt * (_binary_entropy_bits(p0))
        h[counts < 2] = -np.inf
        donor = int(np.argmax(h))
        members = np.nonzero(assignment == donor)[0]
        with np.errstate(invalid="ignore"):
            centre = math.log(p0[donor] / (1.0 - p0[donor])) if 0 < p0[donor] < 1 else 0.0
        dev = np.abs(np.where(np.isfinite(llr[members]), llr[members], np.sign(llr[members]) * 50.0) - centre)
        sym = int(members[np.argmax(dev)])
        m0[donor] -= joint.probs[0][sym]
        m1[donor] -= joint.probs[1][sym]
        m0[empty] += joint.probs[0][sym]
        m1[empty] += joint.probs[1][sym]
        assignment[sym] = empty
        counts[donor] -= 1
        counts[empty] += 1


def _binary_entropy_bits(p0):
    p0 = np.asarray(p0, dtype=np.float64)
    return -(xlogy(p0, p0) + xlogy(1.0 - p0, 1.0 - p0)) / _LN2


# ---------------------------------------------------------------------------
# Message alignment
# ---------------------------------------------------------------------------

@dataclass
class AlignmentContext:
    """One source context (a node degree, a puncture state, ...).

    ``weight`` is the probability of the context; ``joint`` is p(x, t) given
    the context (so it sums to 1 on its own).
    """

    context_id: int
    weight: float
    joint: BinaryJoint


@dataclass
class AlignmentResult:
    """Per-context relabelings (context, t) -> z and the mixture meanings."""

    context_ids: list
    assignments: np.ndarray        # shape (num_contexts, |T|), values in 0..|Z|-1
    posteriors: np.ndarray         # p(x | z), shape (2, |Z|)
    info_bits: float               # I(X; Z) against the weighted mixture
    input_info_bits: float         # I(X; T, context) of the mixture
    llr_unit: str = "nats"

    def assignment_for(self, context_id) -> np.ndarray:
        return self.assignments[self.context_ids.index(context_id)]

    def llrs(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.posteriors[0]) - np.log(self.posteriors[1])


def align_messages(contexts: list[AlignmentContext], num_clusters: int) -> AlignmentResult:
    """Relabel per-context cluster alphabets into one shared alphabet.

    Maximizes I(X;Z) of the weighted mixture over all deterministic
    per-context relabelings.  Identical contexts always receive identical
    assignments; exactly mirror-symmetric inputs produce a mirror-symmetric
    relabeling.
    """
    if not contexts:
        raise ParameterError("need at least one context")
    t_size = contexts[0].joint.y_size
    for c in contexts:
        if c.joint.y_size != t_size:
            raise ParameterError(
                f"context {c.context_id} has |T|={c.joint.y_size}, expected {t_size}"
            )
    wsum = sum(c.weight for c in contexts)
    if abs(wsum - 1.0) > SUM_TOL:
        raise ValidationError(f"context weights sum to {wsum!r}, expected 1")

    n_ctx = len(contexts)
    flat = np.hstack([c.weight * c.joint.probs for c in contexts])  # (2, C*T)
    mixture = BinaryJoint(flat / flat.sum(), validate=False)
    input_info = mutual_information(mixture)

    symmetric = (t_size % 2 == 0 and num_clusters % 2 == 0
                 and all(c.joint.is_symmetric() for c in contexts))
    if symmetric:
        # Mirror pairs (c, t) with (c, |T|-1-t): flip t within each context.
        mirror = (np.arange(n_ctx * t_size) // t_size) * t_size \
            + (t_size - 1 - np.arange(n_ctx * t_size) % t_size)
        labels, info = _quantize_symmetric(mixture.probs[0], mixture.probs[1],
                                           num_clusters, mirror=mirror)
    else:
        labels, info = _quantize_generic(mixture.probs[0], mixture.probs[1],
                                         num_clusters, *mixture.x_marginal())
        labels, info = _canonical_labels(mixture, labels, num_clusters)

    assignments = labels.reshape(n_ctx, t_size).astype(np.int32)
    m0 = np.bincount(labels, weights=mixture.probs[0], minlength=num_clusters)
    m1 = np.bincount(labels, weights=mixture.probs[1], minlength=num_clusters)
    pt = m0 + m1
    with np.errstate(invalid="ignore", divide="ignore"):
        p0 = np.where(pt > 0.0, m0 / np.where(pt > 0.0, pt, 1.0), 0.5)
    return AlignmentResult(
        context_ids=[c.context_id for c in contexts],
        assignments=assignments,
        posteriors=np.vstack([p0, 1.0 - p0]),
        info_bits=info,
        input_info_bits=input_info,
    )


def _canonical_labels(joint: BinaryJoint, labels: np.ndarray, k: int):
    """Relabel clusters so posteriors ascend with the index."""
    m0 = np.bincount(labels, weights=joint.probs[0], minlength=k)
    m1 = np.bincount(labels, weights=joint.probs[1], minlength=k)
    pt = m0 + m1
    with np.errstate(invalid="ignore", divide="ignore"):
        p0 = np.where(pt > 0.0, m0 / np.where(pt > 0.0, pt, 1.0), 0.5)
    order = np.argsort(p0, kind="stable")
    relabel = np.empty(k, dtype=np.int64)
    relabel[order] = np.arange(k)
    new_labels = relabel[labels]
    info = float(_cluster_bits(m0, m1, *joint.x_marginal()).sum())
    return new_labels, info
