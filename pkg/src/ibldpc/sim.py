"""Monte-Carlo frame-error-rate campaigns.

All-zero-codeword transmission over BPSK/AWGN (validity rests on the decoder
symmetry invariants asserted in the test suite).  Noise is drawn from
counter-based per-frame streams keyed by (master seed, sweep point, frame
index), so the tallies are identical for any worker count; the stopping rule
is evaluated at fixed chunk boundaries for the same reason.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from .channel import ChannelSpec
from .code import builtin_family, build_mask, family_from_json, family_to_json, lift
from .decode import (
    PUNCTURED_INDEX,
    IbRuntime,
    MsDecoderConfig,
    TannerGraph,
    decode_layered_nmsa,
    decode_offset_min_sum,
    decode_sum_product,
    oms_channel_ints,
)
from .design import load_tables


class CampaignError(ValueError):
    """Invalid campaign configuration."""


DECODER_NAMES = ("ib", "sum-product", "offset-min-sum", "layered-nmsa")


@dataclass
class DecoderSpec:
    name: str
    offset: int = 1
    normalization: float = 0.75
    message_bits: int | None = None
    vn_accumulator_bits: int | None = None
    llr_scale: float | None = None  # None: saturate the 3-sigma LLR (NMSA)

    def __post_init__(self):
        if self.name not in DECODER_NAMES:
            raise CampaignError(f"unknown decoder {self.name!r}; pick from {DECODER_NAMES}")
        if self.message_bits is None:
            self.message_bits = 6 if self.name == "layered-nmsa" else 4
        if self.vn_accumulator_bits is None:
            self.vn_accumulator_bits = 6

    def ms_config(self, llr_scale=None) -> MsDecoderConfig:
        return MsDecoderConfig(
            variant=self.name if self.name in ("offset-min-sum", "layered-nmsa")
            else "offset-min-sum",
            message_bits=self.message_bits,
            vn_accumulator_bits=self.vn_accumulator_bits,
            offset=self.offset,
            normalization=self.normalization,
            llr_scale=self.llr_scale if llr_scale is None else llr_scale,
        )


@dataclass
class CampaignConfig:
    rates: list
    decoders: list
    ebn0_start: float
    ebn0_stop: float
    ebn0_step: float
    family: str = "builtin"          # "builtin" or a family JSON path
    tables: str | None = None        # decoder-tables artifact path
    max_frames: int = 1_000_000
    min_frame_errors: int = 50
    max_iters: int = 100
    seed: int = 0
    workers: int = 1
    chunk_frames: int = 250
    measure_time: bool = True

    def __post_init__(self):
        if self.ebn0_step <= 0:
            raise CampaignError("ebn0_step must be > 0")
        if self.min_frame_errors < 1:
            raise CampaignError("min_frame_errors must be >= 1")
        if self.chunk_frames < 1 or self.max_frames < 1:
            raise CampaignError("chunk_frames and max_frames must be >= 1")
        self.decoders = [
            d if isinstance(d, DecoderSpec) else DecoderSpec(**d) for d in self.decoders
        ]
        needs_tables = any(d.name in ("ib", "offset-min-sum") for d in self.decoders)
        if needs_tables and not self.tables:
            raise CampaignError(
                "ib and offset-min-sum need a tables artifact (its channel quantizer)"
            )

    def ebn0_points(self) -> list:
        n = int(math.floor((self.ebn0_stop - self.ebn0_start) / self.ebn0_step + 1e-9)) + 1
        return [round(self.ebn0_start + i * self.ebn0_step, 9) for i in range(n)]

    @classmethod
    def from_json(cls, text: str) -> "CampaignConfig":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CampaignError(f"config is not valid JSON: {exc}") from exc
        sweep = payload.pop("ebn0_db", None)
        if sweep is not None:
            payload["ebn0_start"] = sweep["start"]
            payload["ebn0_stop"] = sweep["stop"]
            payload["ebn0_step"] = sweep["step"]
        known = {f for f in cls.__dataclass_fields__}
        extra = set(payload) - known
        if extra:
            raise CampaignError(f"unknown config fields: {sorted(extra)}")
        try:
            return cls(**payload)
        except TypeError as exc:
            raise CampaignError(str(exc)) from exc


@dataclass
class FerRecord:
    decoder: str
    rate: str
    ebn0_db: float
    frames: int
    frame_errors: int
    bit_errors: int
    fer: float
    avg_iterations: float
    wall_seconds: float
    seed: int


def wilson_halfwidth(errors: int, frames: int, z: float = 1.96) -> float:
    """Half-width of the 95% Wilson score interval for a binomial rate."""
    if frames == 0:
        return 0.0
    p = errors / frames
    denom = 1.0 + z * z / frames
    return (z / denom) * math.sqrt(p * (1 - p) / frames + z * z / (4 * frames * frames))


# ---------------------------------------------------------------------------
# per-worker state
# ---------------------------------------------------------------------------

_CTX = {}


def _load_context(family_text: str, tables_path: str | None, max_iters: int):
    fam = family_from_json(family_text)
    tables = load_tables(tables_path) if tables_path else None
    _CTX.clear()
    _CTX.update(fam=fam, tables=tables, max_iters=max_iters, rates={}, runtimes={})


def _rate_context(rate_key: str):
    if rate_key not in _CTX["rates"]:
        fam = _CTX["fam"]
        rate = fam.rate_point_for(rate_key)
        h = lift(fam, rate)
        mask = build_mask(fam, rate).restricted()
        _CTX["rates"][rate_key] = {
            "rate": rate,
            "h": h,
            "mask": mask,
            "graph": TannerGraph(h),
            "n_tx": int(np.count_nonzero(~mask)),
        }
    return _CTX["rates"][rate_key]


def _ib_runtime(rate_key: str):
    if rate_key not in _CTX["runtimes"]:
        rc = _rate_context(rate_key)
        _CTX["runtimes"][rate_key] = IbRuntime(
            _CTX["tables"], rate_key, rc["h"], rc["mask"], _CTX["max_iters"]
        )
    return _CTX["runtimes"][rate_key]


def _frame_noise(seed: int, point_id: int, frame: int, n: int) -> np.ndarray:
    bitgen = np.random.Philox(key=np.uint64(seed),
                              counter=[np.uint64(frame), np.uint64(point_id), 0, 0])
    return np.random.Generator(bitgen).standard_normal(n)


def _run_chunk(args):
    (spec_dict, rate_key, ebn0, point_id, seed, start, count, max_iters) = args
    spec = DecoderSpec(**spec_dict)
    rc = _rate_context(rate_key)
    h, mask, graph = rc["h"], rc["mask"], rc["graph"]
    tx = ~mask
    n = h.shape[1]
    sigma = ChannelSpec(ebn0, rc["rate"].rate_float).noise_sigma

    quant = None
    if spec.name in ("ib", "offset-min-sum"):
        quant = _CTX["tables"].rate(rate_key).quantizer
    if spec.name == "ib":
        runtime = _ib_runtime(rate_key)
    if spec.name == "layered-nmsa":
        scale = spec.llr_scale
        if scale is None:
            sat = 2.0 * (1.0 + 3.0 * sigma) / (sigma * sigma)
            scale = sat / ((1 << (spec.vn_accumulator_bits - 1)) - 1)
        cfg_nm = spec.ms_config(llr_scale=scale)
    if spec.name == "offset-min-sum":
        cfg_oms = spec.ms_config()

    errors = bit_errors = 0
    iter_sum = 0
    for frame in range(start, start + count):
        noise = _frame_noise(seed, point_id, frame, n)
        y = 1.0 + sigma * noise
        if spec.name == "ib":
            idx = quant.quantize(y).astype(np.int64)
            idx[mask] = PUNCTURED_INDEX
            res = runtime.decode(idx)
        elif spec.name == "sum-product":
            llr = 2.0 * y / (sigma * sigma)
            llr[mask] = 0.0
            res = decode_sum_product(h, llr, max_iters, graph=graph)
        elif spec.name == "offset-min-sum":
            idx = quant.quantize(y).astype(np.int64)
            ints = oms_channel_ints(quant, idx, mask, cfg_oms)
            res = decode_offset_min_sum(h, ints, cfg_oms, max_iters, graph=graph)
        else:
            llr = 2.0 * y / (sigma * sigma)
            llr[mask] = 0.0
            res = decode_layered_nmsa(h, llr, cfg_nm, max_iters, graph=graph)
        wrong = int(res.hard_bits.sum())
        if wrong:
            errors += 1
            bit_errors += wrong
        iter_sum += res.iterations_used
    return errors, bit_errors, iter_sum


def run_campaign(cfg: CampaignConfig, pool: ProcessPoolExecutor | None = None) -> list:
    """Simulate every (decoder, rate, Eb/N0) point of the campaign.

    Results are independent of the worker count: frames draw from per-frame
    counter streams and the stopping rule fires only at chunk boundaries.
    """
    if cfg.family == "builtin":
        family_text = family_to_json(builtin_family())
    else:
        family_text = open(cfg.family).read()

    _load_context(family_text, cfg.tables, cfg.max_iters)
    own_pool = None
    if pool is None and cfg.workers > 1:
        own_pool = ProcessPoolExecutor(
            max_workers=cfg.workers,
            initializer=_load_context,
            initargs=(family_text, cfg.tables, cfg.max_iters),
        )
        pool = own_pool

    points = cfg.ebn0_points()
    records = []
    try:
        for decoder in cfg.decoders:
            spec_dict = asdict(decoder)
            for r_idx, rate_key in enumerate(cfg.rates):
                _rate_context(rate_key)  # validates rate and tables presence
                if decoder.name in ("ib", "offset-min-sum"):
                    _CTX["tables"].rate(rate_key)
                for e_idx, ebn0 in enumerate(points):
                    point_id = r_idx * len(points) + e_idx
                    t0 = time.perf_counter()
                    tally = _run_point(cfg, pool, spec_dict, rate_key, ebn0, point_id)
                    frames, errors, bit_errors, iter_sum = tally
                    wall = time.perf_counter() - t0 if cfg.measure_time else 0.0
                    records.append(FerRecord(
                        decoder=decoder.name,
                        rate=rate_key,
                        ebn0_db=ebn0,
                        frames=frames,
                        frame_errors=errors,
                        bit_errors=bit_errors,
                        fer=errors / frames,
                        avg_iterations=iter_sum / frames,
                        wall_seconds=wall,
                        seed=cfg.seed,
                    ))
    finally:
        if own_pool is not None:
            own_pool.shutdown()
    return records


def _run_point(cfg, pool, spec_dict, rate_key, ebn0, point_id):
    frames = errors = bit_errors = iter_sum = 0
    chunk_idx = 0

    def chunk_args(idx):
        start = idx * cfg.chunk_frames
        count = min(cfg.chunk_frames, cfg.max_frames - start)
        return (spec_dict, rate_key, ebn0, point_id, cfg.seed, start, count,
                cfg.max_iters)

    while frames < cfg.max_frames and errors < cfg.min_frame_errors:
        if pool is None:
            results = [_run_chunk(chunk_args(chunk_idx))]
            counts = [chunk_args(chunk_idx)[6]]
            chunk_idx += 1
        else:
            batch = []
            counts = []
            while len(batch) < cfg.workers and \
                    chunk_idx * cfg.chunk_frames < cfg.max_frames:
                batch.append(chunk_args(chunk_idx))
                counts.append(chunk_args(chunk_idx)[6])
                chunk_idx += 1
            results = list(pool.map(_run_chunk, batch))
        for (e, b, i), cnt in zip(results, counts):
            frames += cnt
            errors += e
            bit_errors += b
            iter_sum += i
            if frames >= cfg.max_frames or errors >= cfg.min_frame_errors:
                break
    return frames, errors, bit_errors, iter_sum


# ---------------------------------------------------------------------------
# result emission
# ---------------------------------------------------------------------------

CSV_HEADER = "decoder,rate,ebn0_db,frames,frame_errors,bit_errors,fer,avg_iters,wall_s,seed"


def emit_csv(records, path) -> None:
    # floats use repr (shortest round-trip form) so parse_csv(emit_csv(x)) == x
    with open(path, "w") as f:
        f.write(CSV_HEADER + "\n")
        for r in records:
            f.write(
                f"{r.decoder},{r.rate},{r.ebn0_db!r},{r.frames},"
                f"{r.frame_errors},{r.bit_errors},{r.fer!r},"
                f"{r.avg_iterations!r},{r.wall_seconds!r},{r.seed}\n"
            )


def parse_csv(text: str) -> list:
    lines = text.strip().splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise CampaignError("unrecognized results CSV header")
    out = []
    for line in lines[1:]:
        d, rate, ebn0, fr, fe, be, fer, ai, ws, seed = line.split(",")
        out.append(FerRecord(d, rate, float(ebn0), int(fr), int(fe), int(be),
                             float(fer), float(ai), float(ws), int(seed)))
    return out


def emit_plot_data(records, path) -> None:
    """One series per (decoder, rate), with Wilson 95% half-widths."""
    series = {}
    for r in records:
        series.setdefault((r.decoder, r.rate), []).append(r)
    payload = {"series": []}
    for (dec, rate), recs in sorted(series.items()):
        pts = [
            {
                "ebn0_db": r.ebn0_db,
                "fer": r.fer,
                "frames": r.frames,
                "frame_errors": r.frame_errors,
                "wilson_halfwidth": wilson_halfwidth(r.frame_errors, r.frames),
                "avg_iters": r.avg_iterations,
            }
            for r in sorted(recs, key=lambda r: r.ebn0_db)
        ]
        payload["series"].append({"decoder": dec, "rate": rate, "points": pts})
    with open(path, "w") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")
