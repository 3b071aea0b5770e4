import math

import numpy as np
import pytest
import scipy.sparse as sp

from ibldpc.channel import ChannelSpec
from ibldpc.code import build_mask, lift
from ibldpc.decode import (
    PUNCTURED_INDEX,
    ConfigurationError,
    IbRuntime,
    MsDecoderConfig,
    TannerGraph,
    decode_ib,
    decode_layered_nmsa,
    decode_offset_min_sum,
    decode_sum_product,
    oms_channel_ints,
    syndrome_check,
)
from ibldpc.design import DecoderTables, DesignConfig, design_rate_tables

from test_design import toy_regular_code
from _ib_oracle import oracle_decode_ib

HAMMING_H = sp.csr_matrix(np.array(
    [
        [1, 0, 1, 0, 1, 0, 1],
        [0, 1, 1, 0, 0, 1, 1],
        [0, 0, 0, 1, 1, 1, 1],
    ],
    dtype=np.uint8,
))


@pytest.fixture(scope="module")
def toy():
    h = toy_regular_code(z=8, seed=11)
    cfg = DesignConfig(bit_width=4, max_iters=30, seed=1)
    rt, _ = design_rate_tables(h, np.zeros(h.shape[1], dtype=bool), 0.5, cfg,
                               design_ebn0=2.2, rate_key="1/2")
    tables = DecoderTables(bit_width=4, max_iters=30, seed=1,
                           family_json="{}", rates={"1/2": rt})
    return h, tables


def toy_channel(h, tables, ebn0_db, rng, punctured=None):
    """All-zero codeword through BPSK/AWGN; returns (y, indices, llrs)."""
    n = h.shape[1]
    sigma = ChannelSpec(ebn0_db, 0.5).noise_sigma
    y = 1.0 + sigma * rng.standard_normal(n)
    quant = tables.rates["1/2"].quantizer
    idx = quant.quantize(y).astype(np.int64)
    llr = 2.0 * y / (sigma * sigma)
    if punctured is not None:
        idx[punctured] = PUNCTURED_INDEX
        llr[punctured] = 0.0
    return y, idx, llr


# ---------------------------------------------------------------------------
# syndrome
# ---------------------------------------------------------------------------

def test_syndrome_valid_and_flipped():
    bits = np.zeros(7, dtype=np.uint8)
    assert syndrome_check(HAMMING_H, bits)
    for i in range(7):
        one = bits.copy()
        one[i] = 1
        assert not syndrome_check(HAMMING_H, one)


def test_syndrome_matches_dense_oracle():
    rng = np.random.default_rng(0)
    h = toy_regular_code(z=4, seed=2)
    dense = h.toarray()
    for _ in range(50):
        bits = rng.integers(0, 2, size=h.shape[1]).astype(np.uint8)
        oracle = not np.any(dense @ bits % 2)
        assert syndrome_check(h, bits) == oracle


# ---------------------------------------------------------------------------
# sum-product
# ---------------------------------------------------------------------------

def test_bp_noiseless_one_iteration():
    llr = np.full(7, 300.0)
    res = decode_sum_product(HAMMING_H, llr, max_iters=10)
    assert res.syndrome_ok and res.iterations_used == 1
    assert not res.hard_bits.any()


def test_bp_corrects_every_single_error():
    # moderate magnitude: saturated inputs overshoot past the right codeword
    # on this short-cycle code within the very first iteration
    for flip in range(7):
        llr = np.full(7, 2.0)
        llr[flip] = -2.0
        res = decode_sum_product(HAMMING_H, llr, max_iters=30)
        assert res.syndrome_ok
        assert not res.hard_bits.any(), f"failed for flip at {flip}"


def test_bp_punctured_equals_marginalization_on_tree():
    # cycle-free code {000, 111}; bit 1 punctured (LLR 0)
    h = sp.csr_matrix(np.array([[1, 1, 0], [0, 1, 1]], dtype=np.uint8))
    rng = np.random.default_rng(3)
    sigma = 0.8
    for _ in range(200):
        y = 1.0 + sigma * rng.standard_normal(3)
        llr = 2.0 * y / sigma**2
        llr[1] = 0.0
        res = decode_sum_product(h, llr, max_iters=50)
        # exact posterior over the two codewords, middle bit marginalized out
        w0 = math.exp(-((y[0] - 1) ** 2 + (y[2] - 1) ** 2) / (2 * sigma**2))
        w1 = math.exp(-((y[0] + 1) ** 2 + (y[2] + 1) ** 2) / (2 * sigma**2))
        expect = np.zeros(3, dtype=np.uint8) if w0 >= w1 else np.ones(3, dtype=np.uint8)
        assert np.array_equal(res.hard_bits[[0, 2]], expect[[0, 2]])


# ---------------------------------------------------------------------------
# offset min-sum
# ---------------------------------------------------------------------------

def test_oms_two_edge_check_passes_min_magnitude():
    # one check over two variables, offset 0: each output carries the other
    # input unchanged.  c->v0 = -5, c->v1 = +3, totals are 3-5 = -2 and
    # -5+3 = -2, so both bits decide 1 (a valid codeword here).
    h = sp.csr_matrix(np.array([[1, 1]], dtype=np.uint8))
    cfg = MsDecoderConfig(variant="offset-min-sum", offset=0)
    res = decode_offset_min_sum(h, np.array([3, -5]), cfg, max_iters=1,
                                early_stop=False)
    assert res.hard_bits.tolist() == [1, 1]
    assert res.syndrome_ok


def test_oms_hand_worked_single_iteration():
    # H = [[1,1,1]] single check, channel ints [2, -3, 6], offset 1
    # check messages exclude own edge: to v0: sign(-3*6)*min(3,6)-1 = -(3-1) = -2
    #   to v1: sign(2*6)*min(2,6)-1 = +1 ; to v2: sign(2*-3)*min(2,3)-1 = -1
    # totals: v0: 2-2=0 -> bit 0; v1: -3+1=-2 -> bit 1; v2: 6-1=5 -> bit 0
    h = sp.csr_matrix(np.array([[1, 1, 1]], dtype=np.uint8))
    cfg = MsDecoderConfig(variant="offset-min-sum", offset=1)
    res = decode_offset_min_sum(h, np.array([2, -3, 6]), cfg, max_iters=1,
                                early_stop=False)
    assert res.hard_bits.tolist() == [0, 1, 0]
    assert not res.syndrome_ok  # parity of (0,1,0) fails


def test_oms_saturation_contract():
    h = sp.csr_matrix(np.ones((1, 12), dtype=np.uint8))
    cfg = MsDecoderConfig(variant="offset-min-sum")
    big = np.full(12, 100)
    res = decode_offset_min_sum(h, big, cfg, max_iters=3, early_stop=False)
    # inputs clip to msg_max = 7, accumulator to 31; decoding stays sane
    assert res.hard_bits.tolist() == [0] * 12


def test_oms_channel_int_mapping(toy):
    h, tables = toy
    quant = tables.rates["1/2"].quantizer
    cfg = MsDecoderConfig(variant="offset-min-sum")
    punct = np.zeros(h.shape[1], dtype=bool)
    punct[3] = True
    idx = np.full(h.shape[1], 15)
    ints = oms_channel_ints(quant, idx, punct, cfg)
    assert ints[3] == 0
    assert ints[0] == 7  # the largest representative saturates at the top code


# ---------------------------------------------------------------------------
# layered NMSA
# ---------------------------------------------------------------------------

def test_nmsa_single_check_norm_one_is_plain_minsum():
    h = sp.csr_matrix(np.array([[1, 1, 1]], dtype=np.uint8))
    cfg = MsDecoderConfig(variant="layered-nmsa", message_bits=6,
                          normalization=1.0, llr_scale=1.0)
    res = decode_layered_nmsa(h, np.array([2.0, -3.0, 6.0]), cfg, max_iters=1,
                              early_stop=False)
    # single sweep: v2c = channel; c->v0 = -3, v0 total = -1 -> bit 1
    #               c->v1 = +2, v1 total = -1 -> bit 1 ; c->v2 = -2, total 4
    assert res.hard_bits.tolist() == [1, 1, 0]


def test_nmsa_layered_and_flooding_agree_on_tree():
    h = sp.csr_matrix(np.array([[1, 1, 0], [0, 1, 1]], dtype=np.uint8))
    cfg = MsDecoderConfig(variant="layered-nmsa", message_bits=6,
                          normalization=1.0, llr_scale=0.5)
    rng = np.random.default_rng(5)
    for _ in range(100):
        llr = rng.normal(2.0, 2.0, size=3)
        res = decode_layered_nmsa(h, llr, cfg, max_iters=30)
        # flooding min-sum oracle on the tree, run to its fixed point
        ch = np.clip(np.round(llr / cfg.llr_scale), -31, 31).astype(int)
        mv = {(0, 0): ch[0], (0, 1): ch[1], (1, 1): ch[1], (1, 2): ch[2]}
        for _it in range(30):
            mc = {
                (0, 0): np.sign(mv[(0, 1)]) * abs(mv[(0, 1)]),
                (0, 1): np.sign(mv[(0, 0)]) * abs(mv[(0, 0)]),
                (1, 1): np.sign(mv[(1, 2)]) * abs(mv[(1, 2)]),
                (1, 2): np.sign(mv[(1, 1)]) * abs(mv[(1, 1)]),
            }
            mc = {k: int(np.clip(v, -31, 31)) for k, v in mc.items()}
            mv = {
                (0, 0): ch[0],
                (0, 1): int(np.clip(ch[1] + mc[(1, 1)], -31, 31)),
                (1, 1): int(np.clip(ch[1] + mc[(0, 1)], -31, 31)),
                (1, 2): ch[2],
            }
        totals = [
            ch[0] + mc[(0, 0)],
            ch[1] + mc[(0, 1)] + mc[(1, 1)],
            ch[2] + mc[(1, 2)],
        ]
        oracle_bits = [1 if t < 0 else 0 for t in totals]
        assert res.hard_bits.tolist() == oracle_bits


def test_nmsa_layered_converges_earlier_than_flooding():
    # repetition-chain code: layer k already sees layer k-1's refreshed
    # posterior within the same sweep, so one sweep carries bit 0's strong
    # belief down the whole chain while flooding needs one iteration per hop.
    h = sp.csr_matrix(np.array([
        [1, 1, 0, 0],
        [0, 1, 1, 0],
        [0, 0, 1, 1],
    ], dtype=np.uint8))
    cfg = MsDecoderConfig(variant="layered-nmsa", message_bits=6,
                          normalization=1.0, llr_scale=1.0)
    llr = np.array([9.0, -1.0, -1.0, -1.0])
    layered = decode_layered_nmsa(h, llr, cfg, max_iters=10)
    assert layered.syndrome_ok
    assert not layered.hard_bits.any()
    assert layered.iterations_used == 1
    # flooding min-sum (offset 0 keeps magnitudes) needs one hop per iteration
    cfg_f = MsDecoderConfig(variant="offset-min-sum", message_bits=6,
                            vn_accumulator_bits=6, offset=0)
    flood = decode_offset_min_sum(h, np.round(llr).astype(int), cfg_f, max_iters=10)
    assert flood.syndrome_ok
    assert not flood.hard_bits.any()
    assert layered.iterations_used < flood.iterations_used


def test_nmsa_requires_llr_scale():
    cfg = MsDecoderConfig(variant="layered-nmsa")
    with pytest.raises(ConfigurationError, match="llr_scale"):
        decode_layered_nmsa(HAMMING_H, np.zeros(7), cfg, max_iters=2)


# ---------------------------------------------------------------------------
# lookup-table decoder
# ---------------------------------------------------------------------------

def test_ib_noiseless_converges_first_iteration(toy):
    h, tables = toy
    idx = np.full(h.shape[1], 15, dtype=np.int64)  # strongest x=0 index
    res = decode_ib(tables, "1/2", h, np.zeros(h.shape[1], dtype=bool), idx)
    assert res.syndrome_ok
    assert res.iterations_used == 1
    assert not res.hard_bits.any()


def test_ib_decoding_is_deterministic(toy):
    h, tables = toy
    rng = np.random.default_rng(7)
    _, idx, _ = toy_channel(h, tables, 2.0, rng)
    rt = IbRuntime(tables, "1/2", h, np.zeros(h.shape[1], dtype=bool))
    a = rt.decode(idx)
    b = rt.decode(idx)
    assert np.array_equal(a.hard_bits, b.hard_bits)
    assert a.iterations_used == b.iterations_used


def test_ib_matches_oracle_decoder(toy):
    h, tables = toy
    rt = IbRuntime(tables, "1/2", h, np.zeros(h.shape[1], dtype=bool))
    rate_tables = tables.rates["1/2"]
    dense = h.toarray()
    rng = np.random.default_rng(123)
    mask = np.zeros(h.shape[1], dtype=bool)
    for _ in range(200):
        _, idx, _ = toy_channel(h, tables, 2.0, rng)
        fast = rt.decode(idx)
        slow_bits, slow_it, slow_ok = oracle_decode_ib(
            rate_tables, dense, mask, idx, 30
        )
        assert np.array_equal(fast.hard_bits, slow_bits)
        assert fast.iterations_used == slow_it
        assert fast.syndrome_ok == slow_ok


def test_ib_rejects_bad_inputs(toy):
    h, tables = toy
    n = h.shape[1]
    with pytest.raises(Exception, match="rate"):
        decode_ib(tables, "2/3", h, np.zeros(n, dtype=bool), np.zeros(n, dtype=int))
    with pytest.raises(ConfigurationError, match="4-bit"):
        decode_ib(tables, "1/2", h, np.zeros(n, dtype=bool), np.full(n, 99))
    mask = np.zeros(n, dtype=bool)
    mask[0] = True
    with pytest.raises(ConfigurationError, match="reserved"):
        decode_ib(tables, "1/2", h, mask, np.full(n, 3))


def test_ib_messages_are_opaque_indices(toy):
    # the runtime pack holds only uint8 tables; no floating point reaches the
    # message path
    h, tables = toy
    rt = IbRuntime(tables, "1/2", h, np.zeros(h.shape[1], dtype=bool))
    for arr in (rt.vn_first, rt.vn_first_punct, rt.vn_stages, rt.vn_out_align,
                rt.decision, rt.cn_stages, rt.cn_out_align):
        assert arr.dtype == np.uint8


# ---------------------------------------------------------------------------
# punctured decoding through a PBRL family
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def punctured_setup():
    from test_design import small_pbrl_family

    fam = small_pbrl_family(z=6)
    rate = fam.rate_point(2)
    h = lift(fam, rate)
    mask = build_mask(fam, rate).restricted()
    cfg = DesignConfig(bit_width=4, max_iters=25, seed=3,
                       design_ebn0_db={"1/3": 3.0})
    from ibldpc.design import design_tables

    tables = design_tables(fam, [rate], cfg)
    return fam, rate, h, mask, tables


def test_punctured_ib_noiseless(punctured_setup):
    fam, rate, h, mask, tables = punctured_setup
    idx = np.full(h.shape[1], 15, dtype=np.int64)
    idx[mask] = PUNCTURED_INDEX
    res = decode_ib(tables, "1/3", h, mask, idx)
    assert res.syndrome_ok
    assert not res.hard_bits.any()


def test_punctured_ib_matches_oracle(punctured_setup):
    fam, rate, h, mask, tables = punctured_setup
    rt = IbRuntime(tables, "1/3", h, mask)
    dense = h.toarray()
    rng = np.random.default_rng(55)
    quant = tables.rates["1/3"].quantizer
    sigma = ChannelSpec(3.0, rate.rate_float).noise_sigma
    for _ in range(100):
        y = 1.0 + sigma * rng.standard_normal(h.shape[1])
        idx = quant.quantize(y).astype(np.int64)
        idx[mask] = PUNCTURED_INDEX
        fast = rt.decode(idx)
        slow_bits, slow_it, slow_ok = oracle_decode_ib(
            tables.rates["1/3"], dense, mask, np.where(mask, 0, idx), 25
        )
        assert np.array_equal(fast.hard_bits, slow_bits)
        assert fast.iterations_used == slow_it


# ---------------------------------------------------------------------------
# shared properties
# ---------------------------------------------------------------------------

def test_all_decoders_agree_on_noiseless(toy):
    h, tables = toy
    n = h.shape[1]
    none = np.zeros(n, dtype=bool)
    idx = np.full(n, 15, dtype=np.int64)
    llr = np.full(n, 20.0)
    ints = np.full(n, 7)
    cfg_oms = MsDecoderConfig(variant="offset-min-sum")
    cfg_nm = MsDecoderConfig(variant="layered-nmsa", message_bits=6, llr_scale=0.5)
    results = [
        decode_ib(tables, "1/2", h, none, idx),
        decode_sum_product(h, llr),
        decode_offset_min_sum(h, ints, cfg_oms),
        decode_layered_nmsa(h, llr, cfg_nm),
    ]
    for res in results:
        assert res.syndrome_ok
        assert not res.hard_bits.any()


def test_symmetry_under_complement(toy):
    # Exact zero-belief decision ties cannot complement under any
    # deterministic rule; integer decoders flag them, and the symmetry
    # contract binds the tie-free frames (the large majority).
    h, tables = toy
    n = h.shape[1]
    none = np.zeros(n, dtype=bool)
    rng = np.random.default_rng(42)
    rt = IbRuntime(tables, "1/2", h, none)
    g = TannerGraph(h)
    cfg_oms = MsDecoderConfig(variant="offset-min-sum")
    cfg_nm = MsDecoderConfig(variant="layered-nmsa", message_bits=6, llr_scale=0.5)
    quant = tables.rates["1/2"].quantizer
    sigma = ChannelSpec(4.0, 0.5).noise_sigma
    tie_free = {"oms": 0, "nmsa": 0}
    frames = 100
    for _ in range(frames):
        y = 1.0 + sigma * rng.standard_normal(n)
        idx = quant.quantize(y).astype(np.int64)
        llr = 2.0 * y / sigma**2
        ints = oms_channel_ints(quant, idx, none, cfg_oms)

        a = rt.decode(idx)
        b = rt.decode(15 - idx)
        assert a.tie_free and b.tie_free  # table decisions cannot tie
        assert np.array_equal(b.hard_bits, 1 - a.hard_bits)
        assert a.iterations_used == b.iterations_used

        a = decode_sum_product(h, llr, graph=g)
        b = decode_sum_product(h, -llr, graph=g)
        assert a.tie_free and b.tie_free
        assert np.array_equal(b.hard_bits, 1 - a.hard_bits)

        a = decode_offset_min_sum(h, ints, cfg_oms, graph=g)
        b = decode_offset_min_sum(h, -ints, cfg_oms, graph=g)
        if a.tie_free and b.tie_free:
            tie_free["oms"] += 1
            assert np.array_equal(b.hard_bits, 1 - a.hard_bits)

        a = decode_layered_nmsa(h, llr, cfg_nm, graph=g)
        b = decode_layered_nmsa(h, -llr, cfg_nm, graph=g)
        if a.tie_free and b.tie_free:
            tie_free["nmsa"] += 1
            assert np.array_equal(b.hard_bits, 1 - a.hard_bits)
    # the carve-out must not eat the test: plenty of frames decide tie-free
    assert tie_free["oms"] >= 0.2 * frames
    assert tie_free["nmsa"] >= 0.5 * frames


def test_early_termination_matches_full_run(toy):
    h, tables = toy
    n = h.shape[1]
    none = np.zeros(n, dtype=bool)
    rt = IbRuntime(tables, "1/2", h, none)
    g = TannerGraph(h)
    rng = np.random.default_rng(99)
    quant = tables.rates["1/2"].quantizer
    sigma = ChannelSpec(2.5, 0.5).noise_sigma
    for _ in range(50):
        y = 1.0 + sigma * rng.standard_normal(n)
        idx = quant.quantize(y).astype(np.int64)
        llr = 2.0 * y / sigma**2
        fast = rt.decode(idx, early_stop=True)
        full = rt.decode(idx, early_stop=False)
        assert np.array_equal(fast.hard_bits, full.hard_bits)
        assert fast.iterations_used == full.iterations_used
        fast = decode_sum_product(h, llr, graph=g, early_stop=True)
        full = decode_sum_product(h, llr, graph=g, early_stop=False)
        assert np.array_equal(fast.hard_bits, full.hard_bits)
