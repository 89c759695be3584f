"""Link-to-system mapping for 5G NR: EESM, LDPC segmentation, BLER lookup,
beta calibration, link adaptation and a small end-to-end link simulator."""

from .calibration import (
    CalibrationEnsemble,
    CalibrationResult,
    calibrate_beta,
    calibration_objective,
    gen_fading_ensemble,
    golden_section_search,
)
from .eesm import (
    HarqHistory,
    HarqMethod,
    effective_ecr,
    effective_sinr,
    effective_sinr_cc,
    effective_sinr_ir,
    update_history,
)
from .error_model import L2smOutput, compute_tbler, draw_decode, make_rng
from .errors import (
    CalibrationError,
    CombiningError,
    ConfigError,
    InvalidInputError,
    InvalidMcsError,
    L2smError,
    LutFormatError,
    MissingCurveError,
    UnsupportedSizeError,
)
from .link_adaptation import SHANNON_GAP, LinkAdaptResult, Policy, select_mcs
from .lut import BlerLut, default_lut, generate_synthetic_lut, load_lut, lookup_cbler, save_lut
from .segmentation import BaseGraph, segment, select_base_graph, transport_bler
from .sim import SimConfig, SimMetrics, emit_results, load_config, run_simulation
from .tables import McsEntry, McsTable, beta_lookup, default_tables, mcs_lookup, tbs_calculate

__version__ = "0.1.0"

__all__ = [
    "BaseGraph",
    "beta_lookup",
    "BlerLut",
    "calibrate_beta",
    "calibration_objective",
    "CalibrationEnsemble",
    "CalibrationError",
    "CalibrationResult",
    "CombiningError",
    "compute_tbler",
    "ConfigError",
    "default_lut",
    "default_tables",
    "draw_decode",
    "effective_ecr",
    "effective_sinr",
    "effective_sinr_cc",
    "effective_sinr_ir",
    "emit_results",
    "gen_fading_ensemble",
    "generate_synthetic_lut",
    "golden_section_search",
    "HarqHistory",
    "HarqMethod",
    "InvalidInputError",
    "InvalidMcsError",
    "L2smError",
    "L2smOutput",
    "LinkAdaptResult",
    "load_config",
    "load_lut",
    "lookup_cbler",
    "LutFormatError",
    "make_rng",
    "mcs_lookup",
    "McsEntry",
    "McsTable",
    "MissingCurveError",
    "Policy",
    "run_simulation",
    "save_lut",
    "segment",
    "select_base_graph",
    "select_mcs",
    "SHANNON_GAP",
    "SimConfig",
    "SimMetrics",
    "tbs_calculate",
    "transport_bler",
    "UnsupportedSizeError",
    "update_history",
]
