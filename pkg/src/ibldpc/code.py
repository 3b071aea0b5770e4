"""Protograph-based raptor-like (PBRL) LDPC code family and graph analyses.

A family is a highest-rate-code (HRC) protograph plus an ordered list of
incremental-redundancy (IRC) rows; every IRC row adds one check and one
degree-one variable node.  Transmitting more IRC variables lowers the rate.
Lifting expands the protograph by circulant permutations of size Z.

This module also provides the boolean information-propagation analysis that
determines, per decoding iteration, which edges carry information under a
puncture pattern (the "effective degree schedule").
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .ib import ParameterError


class ConstructionError(ValueError):
    """A protograph, lifting, or file payload is structurally invalid."""


@dataclass
class Protograph:
    """Small Tanner graph; entries are edge multiplicities."""

    base: np.ndarray

    def __post_init__(self):
        self.base = np.asarray(self.base, dtype=np.int64)
        if self.base.ndim != 2:
            raise ConstructionError("base matrix must be 2-D")
        if np.any(self.base < 0):
            raise ConstructionError("edge multiplicities must be nonnegative")
        if np.any(self.base.sum(axis=1) == 0):
            raise ConstructionError("base matrix has an all-zero row")

    @property
    def n_rows(self) -> int:
        return self.base.shape[0]

    @property
    def n_cols(self) -> int:
        return self.base.shape[1]


@dataclass(frozen=True)
class RatePoint:
    """One operating point: how many IRC variables are transmitted."""

    num_irc_transmitted: int
    code_rate: Fraction

    @property
    def key(self) -> str:
        return f"{self.code_rate.numerator}/{self.code_rate.denominator}"

    @property
    def rate_float(self) -> float:
        return float(self.code_rate)


@dataclass
class PbrlFamily:
    """HRC protograph + IRC rows + lifting data.

    ``irc_rows[j]`` lists multiplicities into the HRC columns; the implied
    degree-one variable of row j sits at column ``n_hrc_cols + j``.
    ``shifts[(r, c)]`` is the tuple of circulant shifts of the (possibly
    multi-) edge at full-matrix cell (r, c).
    """

    hrc: Protograph
    irc_rows: list
    punctured_hrc_vns: tuple
    k_info: int
    z: int
    shifts: dict

    def __post_init__(self):
        self.irc_rows = [np.asarray(r, dtype=np.int64) for r in self.irc_rows]
        self.punctured_hrc_vns = tuple(sorted(self.punctured_hrc_vns))
        if not self.punctured_hrc_vns:
            raise ConstructionError("a PBRL family punctures at least one HRC variable")
        for v in self.punctured_hrc_vns:
            if not 0 <= v < self.hrc.n_cols:
                raise ConstructionError(f"punctured column {v} outside the HRC")
        for j, row in enumerate(self.irc_rows):
            if len(row) != self.hrc.n_cols:
                raise ConstructionError(f"IRC row {j} has wrong width")
            if row.sum() == 0:
                raise ConstructionError(f"IRC row {j} connects to nothing")
        if self.k_info % self.z:
            raise ConstructionError("k_info must be a multiple of the lifting factor")

    @property
    def n_irc(self) -> int:
        return len(self.irc_rows)

    @property
    def proto_k(self) -> int:
        return self.k_info // self.z

    def full_base(self) -> np.ndarray:
        """Base matrix at the lowest rate (all IRC rows present)."""
        rows = self.hrc.n_rows + self.n_irc
        cols = self.hrc.n_cols + self.n_irc
        base = np.zeros((rows, cols), dtype=np.int64)
        base[: self.hrc.n_rows, : self.hrc.n_cols] = self.hrc.base
        for j, row in enumerate(self.irc_rows):
            base[self.hrc.n_rows + j, : self.hrc.n_cols] = row
            base[self.hrc.n_rows + j, self.hrc.n_cols + j] = 1
        return base

    def rate_point(self, num_irc_transmitted: int) -> RatePoint:
        if not 0 <= num_irc_transmitted <= self.n_irc:
            raise ParameterError(
                f"num_irc_transmitted={num_irc_transmitted} outside 0..{self.n_irc}"
            )
        n_tx = self.hrc.n_cols - len(self.punctured_hrc_vns) + num_irc_transmitted
        return RatePoint(num_irc_transmitted, Fraction(self.proto_k, n_tx))

    def rate_point_for(self, rate) -> RatePoint:
        """Rate point matching a rate given as Fraction, float or "p/q"."""
        if isinstance(rate, str):
            rate = Fraction(rate)
        for t in range(self.n_irc + 1):
            rp = self.rate_point(t)
            if rp.code_rate == Fraction(rate).limit_denominator(10**6):
                return rp
        raise ParameterError(f"no rate point with code rate {rate}")

    def transmitted_cols(self, rate: RatePoint) -> int:
        return self.hrc.n_cols + rate.num_irc_transmitted


# ---------------------------------------------------------------------------
# Lifting
# ---------------------------------------------------------------------------

def lift(family: PbrlFamily, rate: RatePoint) -> sp.csr_matrix:
    """Circulant expansion restricted to the transmitted IRC prefix.

    The parity-check matrix covers the HRC plus the first
    ``rate.num_irc_transmitted`` IRC rows and their degree-one columns.  Edge
    (r, c) with shift s connects check r*Z+k with variable c*Z+((k+s) mod Z).
    """
    z = family.z
    base = family.full_base()
    n_rows = family.hrc.n_rows + rate.num_irc_transmitted
    n_cols = family.hrc.n_cols + rate.num_irc_transmitted
    rows, cols = [], []
    k = np.arange(z)
    for r in range(n_rows):
        for c in range(n_cols):
            mult = base[r, c]
            if mult == 0:
                continue
            shifts = family.shifts.get((r, c))
            if shifts is None or len(shifts) != mult:
                raise ConstructionError(f"cell ({r}, {c}) needs {mult} shifts")
            if len(set(shifts)) != mult:
                raise ConstructionError(f"duplicate shift on multi-edge ({r}, {c})")
            for s in shifts:
                if not 0 <= s < z:
                    raise ConstructionError(f"shift {s} out of range for Z={z}")
                rows.append(r * z + k)
                cols.append(c * z + (k + s) % z)
    data = np.ones(len(rows) * z, dtype=np.uint8)
    h = sp.coo_matrix(
        (data, (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_rows * z, n_cols * z),
    )
    if h.nnz != len(data):
        raise ConstructionError("colliding circulant entries (duplicate shift)")
    return h.tocsr()


def assign_shifts(family_base: np.ndarray, z: int, seed: int = 0) -> dict:
    """Greedy circulant shift selection avoiding lifted 4-cycles.

    Processes edge instances row-major; each one takes the first candidate in
    a seeded random order that closes no alternating zero-sum 4-walk with the
    instances already placed (the exact condition for a lifted 4-cycle).  If
    no candidate survives, the least-violating one is taken.
    """
    rng = np.random.default_rng(np.uint64(seed))
    placed = []  # (row, col, shift)
    by_row, by_col = {}, {}

    def violations(r, c, s):
        count = 0
        for i2 in by_row.get(r, []):
            _, c2, s2 = placed[i2]
            if c2 == c and s2 == s:
                return 10**6  # identical edge: forbidden outright
            for i3 in by_col.get(c2, []):
                if i3 == i2:
                    continue
                r3, _, s3 = placed[i3]
                for i4 in by_row.get(r3, []):
                    if i4 in (i2, i3):
                        continue
                    _, c4, s4 = placed[i4]
                    if c4 == c and (s - s2 + s3 - s4) % z == 0:
                        count += 1
        return count

    shifts = {}
    rows, cols = family_base.shape
    for r in range(rows):
        for c in range(cols):
            for _ in range(family_base[r, c]):
                candidates = rng.permutation(z)
                best = None
                for s in candidates:
                    v = violations(r, c, int(s))
                    if v == 0:
                        best = (0, int(s))
                        break
                    if best is None or v < best[0]:
                        best = (v, int(s))
                idx = len(placed)
                placed.append((r, c, best[1]))
                by_row.setdefault(r, []).append(idx)
                by_col.setdefault(c, []).append(idx)
                shifts.setdefault((r, c), []).append(best[1])
    return {k: tuple(v) for k, v in shifts.items()}


# ---------------------------------------------------------------------------
# alist serialization
# ---------------------------------------------------------------------------

def write_alist(h) -> str:
    """Standard alist text (1-based indices, zero-padded entry lists)."""
    h = sp.csr_matrix(h).astype(np.uint8)
    m, n = h.shape
    csc = h.tocsc()
    col_deg = np.diff(csc.indptr)
    row_deg = np.diff(h.indptr)
    lines = [
        f"{n} {m}",
        f"{col_deg.max()} {row_deg.max()}",
        " ".join(map(str, col_deg)),
        " ".join(map(str, row_deg)),
    ]
    for j in range(n):
        entries = csc.indices[csc.indptr[j]:csc.indptr[j + 1]] + 1
        padded = list(map(str, sorted(entries))) + ["0"] * (int(col_deg.max()) - len(entries))
        lines.append(" ".join(padded))
    for i in range(m):
        entries = h.indices[h.indptr[i]:h.indptr[i + 1]] + 1
        padded = list(map(str, sorted(entries))) + ["0"] * (int(row_deg.max()) - len(entries))
        lines.append(" ".join(padded))
    return "\n".join(lines) + "\n"


def parse_alist(text: str) -> sp.csr_matrix:
    """Parse alist text, validating declared against actual degrees."""
    lines = [ln for ln in text.splitlines()]

    def fields(idx):
        if idx >= len(lines):
            raise ConstructionError(f"alist truncated at line {idx + 1}")
        return [int(tok) for tok in lines[idx].split()]

    try:
        n, m = fields(0)
        _max_col, _max_row = fields(1)
        col_deg = fields(2)
        row_deg = fields(3)
    except (ValueError, IndexError) as exc:
        raise ConstructionError(f"malformed alist header: {exc}") from exc
    if len(col_deg) != n:
        raise ConstructionError(f"line 3 declares {len(col_deg)} column degrees, expected {n}")
    if len(row_deg) != m:
        raise ConstructionError(f"line 4 declares {len(row_deg)} row degrees, expected {m}")

    rows, cols = [], []
    for j in range(n):
        entries = [v for v in fields(4 + j) if v != 0]
        if len(entries) != col_deg[j]:
            raise ConstructionError(
                f"line {5 + j}: column {j} lists {len(entries)} entries, declared {col_deg[j]}"
            )
        cols.extend([j] * len(entries))
        rows.extend(v - 1 for v in entries)
    for i in range(m):
        entries = [v for v in fields(4 + n + i) if v != 0]
        if len(entries) != row_deg[i]:
            raise ConstructionError(
                f"line {5 + n + i}: row {i} lists {len(entries)} entries, declared {row_deg[i]}"
            )
    h = sp.coo_matrix(
        (np.ones(len(rows), dtype=np.uint8), (rows, cols)), shape=(m, n)
    ).tocsr()
    if h.nnz != len(rows):
        raise ConstructionError("alist lists a duplicate entry")
    return h


# ---------------------------------------------------------------------------
# Puncturing and degree analyses
# ---------------------------------------------------------------------------

@dataclass
class PunctureMask:
    """Per-variable punctured flags over the full (lowest-rate) family matrix.

    ``puncture_rate`` counts only variables of degree > 1, so the IRC
    degree-one columns never enter it.
    """

    flags: np.ndarray
    puncture_rate: float
    n_transmitted_cols: int

    def restricted(self) -> np.ndarray:
        """Flags over the columns of the rate point's transmitted matrix."""
        return self.flags[: self.n_transmitted_cols]


def build_mask(family: PbrlFamily, rate: RatePoint) -> PunctureMask:
    """Punctured = lifted punctured HRC columns + untransmitted IRC columns."""
    z = family.z
    n_full = (family.hrc.n_cols + family.n_irc) * z
    flags = np.zeros(n_full, dtype=bool)
    for v in family.punctured_hrc_vns:
        flags[v * z:(v + 1) * z] = True
    first_untx = family.hrc.n_cols + rate.num_irc_transmitted
    flags[first_untx * z:] = True

    full_deg = np.repeat(family.full_base().sum(axis=0), z)
    d_gt1 = full_deg > 1
    rate_val = float(np.count_nonzero(flags & d_gt1)) / float(np.count_nonzero(d_gt1))
    return PunctureMask(flags, rate_val, family.transmitted_cols(rate) * z)


@dataclass
class DegreeDistributions:
    """Edge-perspective degree fractions (lambda for VNs, rho for CNs)."""

    lam: dict
    rho: dict


def degree_distributions(h) -> DegreeDistributions:
    h = sp.csr_matrix(h)
    if h.nnz == 0:
        raise ParameterError("empty parity-check matrix")
    row_deg = np.diff(h.indptr)
    col_deg = np.diff(h.tocsc().indptr)
    e = float(h.nnz)
    lam = {int(d): float(np.sum(col_deg[col_deg == d])) / e for d in np.unique(col_deg) if d > 0}
    rho = {int(d): float(np.sum(row_deg[row_deg == d])) / e for d in np.unique(row_deg) if d > 0}
    return DegreeDistributions(lam, rho)


@dataclass
class EffectiveDegreeSchedule:
    """Boolean information-propagation analysis of a punctured Tanner graph.

    An edge VN->CN carries information at iteration i if the variable is
    transmitted or received at least one informative extrinsic message at
    iteration i (excluding the target check).  An edge CN->VN carries
    information only when every other edge into the check does.  A punctured
    degree-one variable can neither use feedback nor contribute, so all its
    edges are treated as permanently uninformative and its check is
    effectively deactivated.

    Iteration i ranges 1..max_iters; masks freeze once a fixpoint is reached
    and accessors clamp to the stored prefix.  ``v2c_init`` is the initial
    channel-only broadcast before the first check update.
    """

    edge_vn: np.ndarray
    edge_cn: np.ndarray
    transmitted: np.ndarray
    v2c_init: np.ndarray
    v2c_masks: list
    c2v_masks: list
    vn_eff_degree: list
    cn_eff_degree: list
    lambda_eff: list
    rho_eff: list
    max_iters: int
    fixpoint_iteration: int

    def _clamp(self, i: int) -> int:
        if not 1 <= i <= self.max_iters:
            raise ParameterError(f"iteration {i} outside 1..{self.max_iters}")
        return min(i, len(self.v2c_masks))

    def v2c_active(self, i: int) -> np.ndarray:
        """Informative VN->CN edges after VN update i (i=0: channel init)."""
        if i == 0:
            return self.v2c_init
        return self.v2c_masks[self._clamp(i) - 1]

    def c2v_active(self, i: int) -> np.ndarray:
        return self.c2v_masks[self._clamp(i) - 1]

    def lambda_eff_at(self, i: int) -> dict:
        return self.lambda_eff[self._clamp(i) - 1]

    def rho_eff_at(self, i: int) -> dict:
        return self.rho_eff[self._clamp(i) - 1]

    def vn_eff_degree_at(self, i: int) -> np.ndarray:
        return self.vn_eff_degree[self._clamp(i) - 1]

    def cn_eff_degree_at(self, i: int) -> np.ndarray:
        return self.cn_eff_degree[self._clamp(i) - 1]

    def messages_into_vn(self, i: int) -> np.ndarray:
        """Per-variable count of informative incoming messages at iteration i."""
        c2v = self.c2v_active(i)
        return np.bincount(self.edge_vn, weights=c2v.astype(np.float64),
                           minlength=len(self.transmitted)).astype(np.int64)


def effective_degree_schedule(h, punctured, max_iters: int) -> EffectiveDegreeSchedule:
    """Run the boolean information-propagation rules for max_iters iterations."""
    if max_iters < 1:
        raise ParameterError("max_iters must be >= 1")
    h = sp.csr_matrix(h)
    m, n = h.shape
    punctured = np.asarray(punctured, dtype=bool)
    if punctured.shape != (n,):
        raise ParameterError(f"mask length {punctured.shape} does not match {n} variables")
    coo = h.tocoo()
    order = np.lexsort((coo.col, coo.row))
    edge_cn = coo.row[order].astype(np.int64)
    edge_vn = coo.col[order].astype(np.int64)
    e = len(edge_cn)
    deg_c = np.diff(h.indptr)
    col_deg = np.diff(h.tocsc().indptr)
    transmitted = ~punctured
    inert_edge = (punctured & (col_deg == 1))[edge_vn]

    v2c = transmitted[edge_vn] & ~inert_edge
    v2c_init = v2c.copy()
    v2c_masks, c2v_masks = [], []
    vn_eff, cn_eff, lam_eff, rho_eff = [], [], [], []
    fixpoint = max_iters
    for it in range(1, max_iters + 1):
        cnt_c = np.bincount(edge_cn, weights=v2c.astype(np.float64), minlength=m)
        c2v = (cnt_c[edge_cn] - v2c) == (deg_c[edge_cn] - 1)
        c2v &= ~inert_edge
        cnt_v = np.bincount(edge_vn, weights=c2v.astype(np.float64), minlength=n).astype(np.int64)
        v2c_new = (transmitted[edge_vn] | ((cnt_v[edge_vn] - c2v) >= 1)) & ~inert_edge
        if np.any(v2c_new < v2c):
            raise AssertionError("informative edge set decreased")
        v2c = v2c_new
        c2v_masks.append(c2v)
        v2c_masks.append(v2c)

        vn_eff.append(transmitted.astype(np.int64) + np.maximum(cnt_v - 1, 0))
        cn_eff.append(cnt_c.astype(np.int64))  # inputs combined at this update

        d_eff_edge = transmitted[edge_vn].astype(np.int64) + (cnt_v[edge_vn] - c2v.astype(np.int64))
        active = v2c
        lam = {}
        total = float(np.count_nonzero(active))
        if total:
            for d in np.unique(d_eff_edge[active]):
                lam[int(d)] = float(np.count_nonzero(active & (d_eff_edge == d))) / total
        rho = {}
        total_c = float(np.count_nonzero(c2v))
        if total_c:
            nominal = deg_c[edge_cn]
            for d in np.unique(nominal[c2v]):
                rho[int(d)] = float(np.count_nonzero(c2v & (nominal == d))) / total_c
        lam_eff.append(lam)
        rho_eff.append(rho)

        if len(v2c_masks) >= 2 and np.array_equal(v2c_masks[-1], v2c_masks[-2]) \
                and np.array_equal(c2v_masks[-1], c2v_masks[-2]):
            fixpoint = it
            break

    return EffectiveDegreeSchedule(
        edge_vn=edge_vn,
        edge_cn=edge_cn,
        transmitted=transmitted,
        v2c_init=v2c_init,
        v2c_masks=v2c_masks,
        c2v_masks=c2v_masks,
        vn_eff_degree=vn_eff,
        cn_eff_degree=cn_eff,
        lambda_eff=lam_eff,
        rho_eff=rho_eff,
        max_iters=max_iters,
        fixpoint_iteration=fixpoint,
    )


# ---------------------------------------------------------------------------
# Family serialization and the shipped default family
# ---------------------------------------------------------------------------

def family_to_json(family: PbrlFamily) -> str:
    payload = {
        "format": "pbrl-family-v1",
        "k_info": family.k_info,
        "z": family.z,
        "hrc": family.hrc.base.tolist(),
        "irc_rows": [row.tolist() for row in family.irc_rows],
        "punctured_hrc_vns": list(family.punctured_hrc_vns),
        "shifts": [
            {"row": r, "col": c, "shifts": list(s)}
            for (r, c), s in sorted(family.shifts.items())
        ],
    }
    return json.dumps(payload, indent=2) + "\n"


def family_from_json(text: str) -> PbrlFamily:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConstructionError(f"family file is not valid JSON: {exc}") from exc
    if payload.get("format") != "pbrl-family-v1":
        raise ConstructionError("unrecognized family file format")
    return PbrlFamily(
        hrc=Protograph(np.asarray(payload["hrc"])),
        irc_rows=[np.asarray(r) for r in payload["irc_rows"]],
        punctured_hrc_vns=tuple(payload["punctured_hrc_vns"]),
        k_info=int(payload["k_info"]),
        z=int(payload["z"]),
        shifts={(int(d["row"]), int(d["col"])): tuple(d["shifts"]) for d in payload["shifts"]},
    )


def save_family(family: PbrlFamily, path) -> None:
    with open(path, "w") as f:
        f.write(family_to_json(family))


def load_family(path) -> PbrlFamily:
    with open(path) as f:
        return family_from_json(f.read())


# The shipped family: K = 1032 information bits (4 proto columns, Z = 258),
# one punctured high-degree HRC variable, six IRC extensions covering code
# rates 2/3 (no IRC), 1/2 (two IRC) and 1/3 (all six).
#
# Constraints baked into the base matrix: every check degree is even (the
# all-ones word is then a codeword, which the complement-symmetry property
# needs) and at least one HRC row meets the punctured column with
# multiplicity one (a check whose only uncertainty is a single punctured
# copy can bootstrap its recovery; rows with two punctured copies cannot).
_HRC_BASE = [
    [3, 1, 1, 1, 1, 0, 1],
    [2, 1, 2, 1, 1, 1, 0],
    [1, 2, 1, 2, 0, 1, 1],
]
_IRC_ROWS = [
    [1, 1, 1, 0, 0, 0, 0],
    [1, 0, 0, 1, 1, 0, 0],
    [1, 1, 0, 0, 0, 1, 0],
    [1, 0, 1, 0, 0, 0, 1],
    [1, 0, 0, 1, 0, 1, 0],
    [1, 1, 0, 0, 1, 0, 0],
]
_DEFAULT_Z = 258
_DEFAULT_SHIFT_SEED = 20240

def make_default_family(z: int = _DEFAULT_Z, seed: int = _DEFAULT_SHIFT_SEED) -> PbrlFamily:
    """Construct the shipped K=1032 PBRL family (deterministic)."""
    hrc = Protograph(np.asarray(_HRC_BASE))
    family_stub = PbrlFamily(
        hrc=hrc,
        irc_rows=[np.asarray(r) for r in _IRC_ROWS],
        punctured_hrc_vns=(0,),
        k_info=4 * z,
        z=z,
        shifts={},
    )
    shifts = assign_shifts(family_stub.full_base(), z, seed=seed)
    family_stub.shifts = shifts
    return family_stub


@lru_cache(maxsize=1)
def builtin_family() -> PbrlFamily:
    """The bundled K=1032 family, loaded from the packaged description file."""
    from importlib import resources

    ref = resources.files("ibldpc").joinpath("data/family_k1032.json")
    return family_from_json(ref.read_text())
