"""Runtime message-passing decoders over one shared Tanner-graph engine.

Four decoders: the lookup-table decoder (integer cluster indices only, no
arithmetic on message values), double-precision sum-product, 4-bit offset
min-sum with a 6-bit variable-node accumulator, and row-layered normalized
min-sum at 6 bits.  All use flooding except the layered NMSA, all stop early
on a successful syndrome check.

Heavy loops live in :mod:`ibldpc._kernels`; this module prepares immutable
graph/table packs that are safe to share across worker processes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .code import effective_degree_schedule
from .design import DecoderTables
from .ib import ParameterError


class ConfigurationError(ValueError):
    """Decoder inputs and tables do not fit together."""


@dataclass
class DecodeResult:
    hard_bits: np.ndarray
    iterations_used: int
    syndrome_ok: bool
    converged_early: bool
    # no hard decision hit an exact zero-belief tie; integer decoders cannot
    # complement such ties, so symmetry claims only bind tie-free frames
    tie_free: bool = True


@dataclass
class MsDecoderConfig:
    """Fixed-point min-sum decoder settings.

    ``offset`` applies to the offset-min-sum variant (integer LSBs),
    ``normalization`` to the layered NMSA.  ``llr_scale`` is the LLR value of
    one integer step; the largest magnitude saturates at the top code of the
    message width (OMS) or the accumulator width (NMSA).
    """

    variant: str = "offset-min-sum"
    message_bits: int = 4
    vn_accumulator_bits: int = 6
    offset: int = 1
    normalization: float = 0.75
    llr_scale: float | None = None

    def __post_init__(self):
        if self.variant not in ("offset-min-sum", "layered-nmsa"):
            raise ConfigurationError(f"unknown min-sum variant {self.variant!r}")
        if self.vn_accumulator_bits < self.message_bits:
            raise ConfigurationError(
                "the accumulator must be at least as wide as the messages"
            )

    @property
    def msg_max(self) -> int:
        return (1 << (self.message_bits - 1)) - 1

    @property
    def acc_max(self) -> int:
        return (1 << (self.vn_accumulator_bits - 1)) - 1


class TannerGraph:
    """Edge-list form of a parity-check matrix shared by all kernels.

    Edges are sorted by (check, variable); checks are contiguous ranges.
    """

    def __init__(self, h):
        h = sp.csr_matrix(h)
        h.sum_duplicates()
        coo = h.tocoo()
        order = np.lexsort((coo.col, coo.row))
        self.m, self.n = h.shape
        self.edge_cn = np.ascontiguousarray(coo.row[order], dtype=np.int32)
        self.edge_vn = np.ascontiguousarray(coo.col[order], dtype=np.int32)
        self.e = len(self.edge_vn)
        self.cn_ptr = np.searchsorted(self.edge_cn, np.arange(self.m + 1)).astype(np.int32)
        self.cn_edges = np.arange(self.e, dtype=np.int32)
        by_vn = np.argsort(self.edge_vn, kind="stable").astype(np.int32)
        self.vn_edges = np.ascontiguousarray(by_vn)
        self.vn_ptr = np.searchsorted(self.edge_vn[by_vn], np.arange(self.n + 1)).astype(np.int32)
        self.h = h


def syndrome_check(h, bits) -> bool:
    """H * bits^T == 0 over GF(2)."""
    h = sp.csr_matrix(h)
    bits = np.asarray(bits, dtype=np.int64)
    if bits.shape != (h.shape[1],):
        raise ParameterError(f"bit vector length {bits.shape} does not fit {h.shape}")
    return not np.any((h @ bits) & 1)


# ---------------------------------------------------------------------------
# lookup-table decoder
# ---------------------------------------------------------------------------

PUNCTURED_INDEX = 255  # reserved channel index for never-transmitted positions


class IbRuntime:
    """Immutable per-rate pack: graph, activity masks and flattened tables."""

    def __init__(self, tables: DecoderTables, rate_key: str, h, punctured,
                 max_iters: int | None = None, backend=None):
        rt = tables.rate(rate_key)
        k = tables.num_clusters
        if k != 16:
            raise ConfigurationError("runtime kernels are specialized to 4-bit tables")
        self.graph = TannerGraph(h)
        punctured = np.asarray(punctured, dtype=bool)
        if punctured.shape != (self.graph.n,):
            raise ConfigurationError(
                f"mask covers {punctured.shape} variables, matrix has {self.graph.n}"
            )
        iters = max_iters if max_iters is not None else tables.max_iters
        if iters > len(rt.iterations):
            raise ConfigurationError(
                f"requested {iters} iterations, tables hold {len(rt.iterations)}"
            )
        self.max_iters = iters
        self.rate_key = rate_key
        self.quantizer = rt.quantizer
        self.transmitted = np.ascontiguousarray(~punctured, dtype=np.uint8)
        self._kern = backend or _kernels.backend

        sched = effective_degree_schedule(self.graph.h, punctured, iters)
        e = self.graph.e
        self.v2c_act = np.zeros((iters + 1, e), dtype=np.uint8)
        self.c2v_act = np.zeros((iters, e), dtype=np.uint8)
        self.v2c_act[0] = sched.v2c_init
        for i in range(1, iters + 1):
            self.v2c_act[i] = sched.v2c_active(i)
            self.c2v_act[i - 1] = sched.c2v_active(i)

        md, mc = rt.max_depth, rt.max_cn_depth
        n_vst = max(md - 1, 1)
        n_cst = max(mc - 1, 1)
        self.vn_first = np.zeros((iters, 256), dtype=np.uint8)
        self.vn_first_punct = np.zeros((iters, 16), dtype=np.uint8)
        self.vn_stages = np.zeros((iters, n_vst, 256), dtype=np.uint8)
        self.vn_out_align = np.zeros((iters, md + 1, 16), dtype=np.uint8)
        self.decision = np.zeros((iters, md + 1, 16), dtype=np.uint8)
        self.cn_stages = np.zeros((iters, n_cst, 256), dtype=np.uint8)
        self.cn_out_align = np.zeros((iters, mc + 1, 16), dtype=np.uint8)
        for i, itab in enumerate(rt.iterations[:iters]):
            self.vn_first[i] = itab.vn_first.reshape(-1)
            self.vn_first_punct[i] = itab.vn_first_punct
            if itab.vn_stages.size:
                self.vn_stages[i, : itab.vn_stages.shape[0]] = \
                    itab.vn_stages.reshape(itab.vn_stages.shape[0], -1)
            self.vn_out_align[i] = itab.vn_out_align
            self.decision[i] = itab.decision
            if itab.cn_stages.size:
                self.cn_stages[i, : itab.cn_stages.shape[0]] = \
                    itab.cn_stages.reshape(itab.cn_stages.shape[0], -1)
            self.cn_out_align[i] = itab.cn_out_align

        # sanity: the schedule never asks for deeper chains than designed
        max_in = int(np.max(np.bincount(self.graph.edge_vn,
                                        weights=self.c2v_act[-1].astype(float),
                                        minlength=self.graph.n)))
        if max_in > md:
            raise ConfigurationError(
                f"matrix needs depth {max_in}, tables designed for {md}"
            )

    def decode(self, channel_indices, max_iters: int | None = None,
               early_stop: bool = True) -> DecodeResult:
        chan = np.asarray(channel_indices)
        if chan.shape != (self.graph.n,):
            raise ConfigurationError(
                f"channel vector {chan.shape} does not fit n={self.graph.n}"
            )
        tx = self.transmitted.astype(bool)
        if np.any(chan[tx] > 15) or np.any(chan[tx] < 0):
            raise ConfigurationError("transmitted channel indices must be 4-bit")
        if np.any(chan[~tx] != PUNCTURED_INDEX):
            raise ConfigurationError(
                f"punctured positions must carry the reserved index {PUNCTURED_INDEX}"
            )
        chan = np.where(tx, chan, 0).astype(np.uint8)
        iters = min(max_iters or self.max_iters, self.max_iters)
        g = self.graph
        bits, used, ok, early, tie_free = self._kern.decode_ib(
            g.vn_ptr, g.vn_edges, g.cn_ptr, g.cn_edges, g.edge_vn,
            self.transmitted, self.v2c_act, self.c2v_act,
            self.vn_first, self.vn_first_punct, self.vn_stages,
            self.vn_out_align, self.decision, self.cn_stages,
            self.cn_out_align, chan, iters, early_stop,
        )
        return DecodeResult(np.asarray(bits), int(used), bool(ok), bool(early),
                            bool(tie_free))


def decode_ib(tables: DecoderTables, rate_key: str, h, punctured,
              channel_indices, max_iters: int | None = None,
              early_stop: bool = True) -> DecodeResult:
    """One-shot lookup-table decode (prepares the runtime pack each call)."""
    rt = IbRuntime(tables, rate_key, h, punctured, max_iters)
    return rt.decode(channel_indices, early_stop=early_stop)


# ---------------------------------------------------------------------------
# reference decoders
# ---------------------------------------------------------------------------

def decode_sum_product(h, channel_llrs, max_iters: int = 100,
                       early_stop: bool = True, graph: TannerGraph | None = None,
                       backend=None) -> DecodeResult:
    """Double-precision flooding belief propagation (tanh rule)."""
    g = graph or TannerGraph(h)
    llrs = np.asarray(channel_llrs, dtype=np.float64)
    if llrs.shape != (g.n,):
        raise ParameterError(f"LLR vector {llrs.shape} does not fit n={g.n}")
    kern = backend or _kernels.backend
    bits, used, ok, early, tie_free = kern.decode_bp(
        g.vn_ptr, g.vn_edges, g.cn_ptr, g.cn_edges, g.edge_vn,
        llrs, max_iters, early_stop,
    )
    return DecodeResult(np.asarray(bits), int(used), bool(ok), bool(early),
                        bool(tie_free))


def decode_offset_min_sum(h, quantized_llrs, cfg: MsDecoderConfig | None = None,
                          max_iters: int = 100, early_stop: bool = True,
                          graph: TannerGraph | None = None, backend=None) -> DecodeResult:
    """Saturating fixed-point offset min-sum with flooding schedule."""
    cfg = cfg or MsDecoderConfig(variant="offset-min-sum")
    g = graph or TannerGraph(h)
    ch = np.asarray(quantized_llrs, dtype=np.int64)
    if ch.shape != (g.n,):
        raise ParameterError(f"channel vector {ch.shape} does not fit n={g.n}")
    kern = backend or _kernels.backend
    bits, used, ok, early, tie_free = kern.decode_oms(
        g.vn_ptr, g.vn_edges, g.cn_ptr, g.cn_edges, g.edge_vn,
        ch, max_iters, cfg.offset, cfg.msg_max, cfg.acc_max, early_stop,
    )
    return DecodeResult(np.asarray(bits), int(used), bool(ok), bool(early),
                        bool(tie_free))


def decode_layered_nmsa(h, channel_llrs, cfg: MsDecoderConfig | None = None,
                        max_iters: int = 100, early_stop: bool = True,
                        graph: TannerGraph | None = None, backend=None) -> DecodeResult:
    """Row-layered normalized min-sum at the accumulator width.

    Rows are processed in ascending order; with a circulant lifting this is
    one layer per protograph row.  Unquantized input LLRs are mapped onto the
    integer grid by ``cfg.llr_scale``.
    """
    cfg = cfg or MsDecoderConfig(variant="layered-nmsa", message_bits=6)
    if cfg.llr_scale is None or cfg.llr_scale <= 0:
        raise ConfigurationError("layered NMSA needs a positive llr_scale")
    g = graph or TannerGraph(h)
    llrs = np.asarray(channel_llrs, dtype=np.float64)
    if llrs.shape != (g.n,):
        raise ParameterError(f"LLR vector {llrs.shape} does not fit n={g.n}")
    ch = np.clip(np.round(llrs / cfg.llr_scale), -cfg.acc_max, cfg.acc_max).astype(np.int64)
    kern = backend or _kernels.backend
    bits, used, ok, early, tie_free = kern.decode_nmsa(
        g.vn_ptr, g.vn_edges, g.cn_ptr, g.cn_edges, g.edge_vn,
        ch, max_iters, cfg.normalization, cfg.acc_max, early_stop,
    )
    return DecodeResult(np.asarray(bits), int(used), bool(ok), bool(early),
                        bool(tie_free))


def oms_channel_ints(quantizer, indices, punctured, cfg: MsDecoderConfig) -> np.ndarray:
    """Map 4-bit channel quantizer indices onto the OMS integer grid.

    The largest representative LLR saturates at the top message code;
    punctured positions carry zero.
    """
    reps = quantizer.index_meanings
    scale = cfg.llr_scale or float(np.max(np.abs(reps))) / cfg.msg_max
    ints = np.clip(np.round(reps / scale), -cfg.msg_max, cfg.msg_max).astype(np.int64)
    out = np.zeros(len(indices), dtype=np.int64)
    tx = ~np.asarray(punctured, dtype=bool)
    out[tx] = ints[np.asarray(indices)[tx]]
    return out
