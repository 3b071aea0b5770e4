"""Lookup-table decoding of rate-compatible protograph LDPC codes.

Offline: mutual-information-maximizing clustering designs per-iteration
two-input table chains for both node types, with message alignment across
node degrees and puncture states.  Online: decoders exchange 4-bit integer
cluster indices through pure table lookups, next to double-precision
sum-product, offset min-sum and layered normalized min-sum references, plus a
reproducible Monte-Carlo frame-error-rate harness.
"""

from ._kernels import backend_name as kernel_backend
from .channel import ChannelQuantizer, ChannelSpec, design_quantizer, discretize_channel, quantize_sample
from .code import (
    DegreeDistributions,
    EffectiveDegreeSchedule,
    PbrlFamily,
    Protograph,
    PunctureMask,
    RatePoint,
    build_mask,
    builtin_family,
    degree_distributions,
    effective_degree_schedule,
    lift,
    load_family,
    parse_alist,
    save_family,
    write_alist,
)
from .decode import (
    DecodeResult,
    IbRuntime,
    MsDecoderConfig,
    TannerGraph,
    decode_ib,
    decode_layered_nmsa,
    decode_offset_min_sum,
    decode_sum_product,
    syndrome_check,
)
from .design import (
    DecoderTables,
    DesignConfig,
    NodeTableTree,
    TwoInputTable,
    align_contexts,
    cn_combine,
    compress_stage,
    design_tables,
    find_design_ebn0,
    load_tables,
    save_tables,
    vn_combine,
    write_design_report,
)
from .ib import (
    AlignmentContext,
    AlignmentResult,
    BinaryJoint,
    ClusterMapping,
    align_messages,
    ib_cluster,
    mutual_information,
    scalar_quantizer_dp,
)
from .sim import (
    CampaignConfig,
    DecoderSpec,
    FerRecord,
    emit_csv,
    emit_plot_data,
    run_campaign,
    wilson_halfwidth,
)

__version__ = "0.1.0"
