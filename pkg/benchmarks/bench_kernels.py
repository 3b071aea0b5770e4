#!/usr/bin/env python3
"""Throughput comparison: compiled decoder kernels vs the pure-Python fallback.

Decodes the same noisy frames of the bundled K=1032 rate-1/2 code through
both backends and reports per-frame times and speedups.  Integer decoders are
bit-identical across backends, which is asserted along the way.

    python benchmarks/bench_kernels.py --frames 20
    python benchmarks/bench_kernels.py --frames 50 --tables path/to/tables.bin
"""

import argparse
import time
import warnings

import numpy as np

from ibldpc._kernels import get_backend
from ibldpc.channel import ChannelSpec
from ibldpc.code import build_mask, builtin_family, lift
from ibldpc.decode import (
    PUNCTURED_INDEX,
    IbRuntime,
    MsDecoderConfig,
    TannerGraph,
    decode_layered_nmsa,
    decode_offset_min_sum,
    decode_sum_product,
    oms_channel_ints,
)
from ibldpc.design import BUILTIN_DESIGN_EBN0, DesignConfig, design_tables, load_tables


def get_tables(path):
    if path:
        return load_tables(path)
    warnings.simplefilter("ignore")
    fam = builtin_family()
    cfg = DesignConfig(bit_width=4, max_iters=100, seed=0,
                       design_ebn0_db=dict(BUILTIN_DESIGN_EBN0))
    print("designing rate-1/2 tables (pass --tables to reuse an artifact)...")
    return design_tables(fam, ["1/2"], cfg)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--frames", type=int, default=20)
    ap.add_argument("--ebn0", type=float, default=2.0)
    ap.add_argument("--tables", default=None)
    args = ap.parse_args()

    tables = get_tables(args.tables)
    fam = builtin_family()
    rate = fam.rate_point_for("1/2")
    h = lift(fam, rate)
    mask = build_mask(fam, rate).restricted()
    graph = TannerGraph(h)
    quant = tables.rates["1/2"].quantizer
    sigma = ChannelSpec(args.ebn0, 0.5).noise_sigma
    rng = np.random.default_rng(7)

    frames = []
    for _ in range(args.frames):
        y = 1.0 + sigma * rng.standard_normal(h.shape[1])
        frames.append(y)

    cfg_oms = MsDecoderConfig(variant="offset-min-sum")
    cfg_nm = MsDecoderConfig(variant="layered-nmsa", message_bits=6, llr_scale=0.35)

    def run(backend_name):
        kern = get_backend(backend_name)
        runtime = IbRuntime(tables, "1/2", h, mask, backend=kern)
        out = {}
        jobs = {
            "ib": lambda y: runtime.decode(_indices(y)),
            "sum-product": lambda y: decode_sum_product(
                h, _llr(y), graph=graph, backend=kern),
            "offset-min-sum": lambda y: decode_offset_min_sum(
                h, _ints(y), cfg_oms, graph=graph, backend=kern),
            "layered-nmsa": lambda y: decode_layered_nmsa(
                h, _llr(y), cfg_nm, graph=graph, backend=kern),
        }
        for name, fn in jobs.items():
            t0 = time.perf_counter()
            results = [fn(y) for y in frames]
            out[name] = (time.perf_counter() - t0) / len(frames), results
        return out

    def _indices(y):
        idx = quant.quantize(y).astype(np.int64)
        idx[mask] = PUNCTURED_INDEX
        return idx

    def _llr(y):
        llr = 2.0 * y / (sigma * sigma)
        llr[mask] = 0.0
        return llr

    def _ints(y):
        return oms_channel_ints(quant, quant.quantize(y).astype(np.int64), mask, cfg_oms)

    try:
        get_backend("compiled")
    except ImportError:
        raise SystemExit("compiled kernels are not built; run `pip install -e .`")

    fast = run("compiled")
    slow = run("python")

    print(f"\n{args.frames} frames, K=1032 R=1/2, Eb/N0 {args.ebn0} dB\n")
    print(f"{'decoder':16s} {'compiled':>12s} {'python':>12s} {'speedup':>9s}")
    for name in fast:
        tf, rf = fast[name]
        tp, rp = slow[name]
        for a, b in zip(rf, rp):
            if name != "sum-product":
                assert np.array_equal(a.hard_bits, b.hard_bits), name
        print(f"{name:16s} {tf * 1e3:9.2f} ms {tp * 1e3:9.2f} ms {tp / tf:8.1f}x")


if __name__ == "__main__":
    main()
