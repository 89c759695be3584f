"""The L2SM pipeline: SINR vector + MCS + TBS + HARQ history -> transport BLER."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .eesm import (
    HarqHistory,
    HarqMethod,
    as_spectrum,
    clamp_ecr_ir,
    effective_ecr,
    effective_sinr,
    effective_sinr_cc,
    effective_sinr_ir,
    update_history,
)
from .errors import CombiningError, InvalidInputError
from .lut import BlerLut, default_lut, lookup_cbler
from .segmentation import BaseGraph, segment, select_base_graph, transport_bler
from .tables import McsEntry, McsTable, McsTableSet, default_tables

IR_MODES = ("offset", "reselect")
RNG_ALGORITHM = "numpy.random.PCG64 seeded through numpy.random.SeedSequence"


@dataclass(frozen=True)
class L2smOutput:
    sinr_eff: float
    sinr_eff_db: float
    ecr_eff: Fraction
    base_graph: BaseGraph
    num_code_blocks: int
    cbs: int
    cbler: float
    tbler: float
    attempt: int = 1


def _resolve_mcs(mcs, tables: McsTableSet) -> McsEntry:
    if isinstance(mcs, McsEntry):
        return mcs
    table_id, index = mcs
    return tables.lookup(McsTable.parse(table_id), index)


def ir_lookup_target(entry: McsEntry, ecr_eff: Fraction, ir_mode: str, tables: McsTableSet):
    """Return ``(mcs_entry, sinr_offset_db)`` to use for the curve lookup.

    When combining has pushed the effective code rate below the nominal
    rate, ``"offset"`` shifts the SINR by ``10*log10(R/ecr) * Qm/2`` dB and
    ``"reselect"`` switches to the same-modulation MCS with the largest code
    rate not above ``ecr_eff``.
    """
    if ecr_eff >= entry.ecr:
        return entry, 0.0
    if ir_mode == "offset":
        return entry, 10.0 * math.log10(entry.ecr / ecr_eff) * entry.modulation_order / 2.0
    if ir_mode == "reselect":
        same = [
            e for e in tables.table(entry.table_id)
            if e.modulation_order == entry.modulation_order and e.ecr <= ecr_eff
        ]
        return (max(same, key=lambda e: e.ecr) if same else entry), 0.0
    raise InvalidInputError(f"unknown IR mode {ir_mode!r}; expected one of {IR_MODES}")


def compute_tbler(
    sinrs,
    mcs,
    tbs: int,
    history: HarqHistory | None = None,
    lut: BlerLut | None = None,
    *,
    coded_bits: int | None = None,
    tables: McsTableSet | None = None,
    ir_mode: str = "offset",
) -> L2smOutput:
    """Transport BLER of one decode attempt.

    ``sinrs`` is the linear per-RB SINR of the current attempt and
    ``history`` the combining state from earlier attempts of the same HARQ
    process (``None`` for a first transmission without HARQ). For IR
    retransmissions ``coded_bits`` is the size of the current attempt and
    defaults to the previous one.
    """
    tables = tables or default_tables()
    lut = lut or default_lut()
    entry = _resolve_mcs(mcs, tables)
    arr = as_spectrum(sinrs)
    history = history or HarqHistory()
    if tbs <= 0:
        raise InvalidInputError(f"TBS must be positive, got {tbs}")
    if not history.is_empty and history.mcs_key is not None and history.mcs_key != entry.key:
        raise CombiningError(f"HARQ process was started with {history.mcs_key}, got {entry.key}")

    beta = entry.beta
    ecr_eff = entry.ecr
    if history.is_empty or history.method is HarqMethod.NONE:
        sinr_eff = effective_sinr(arr, beta)
    elif history.method is HarqMethod.CC:
        sinr_eff = effective_sinr_cc(history, arr, beta)
    else:
        sinr_eff = effective_sinr_ir(history, arr, beta)
        current_bits = coded_bits if coded_bits is not None else history.coded_bits[-1]
        raw = effective_ecr(history.info_bits or tbs, list(history.coded_bits) + [current_bits])
        ecr_eff = min(clamp_ecr_ir(raw, entry, tables), entry.ecr)

    bg = select_base_graph(tbs, entry.ecr)
    seg = segment(tbs, bg)
    sinr_db = 10.0 * math.log10(sinr_eff) if sinr_eff > 0 else -math.inf
    target, offset_db = ir_lookup_target(entry, ecr_eff, ir_mode, tables)
    cbler = lookup_cbler(lut, target.table_id, target.index, seg.code_block_size, sinr_db + offset_db)
    return L2smOutput(
        sinr_eff=sinr_eff,
        sinr_eff_db=sinr_db,
        ecr_eff=ecr_eff,
        base_graph=bg,
        num_code_blocks=seg.num_code_blocks,
        cbs=seg.code_block_size,
        cbler=cbler,
        tbler=transport_bler(cbler, seg.num_code_blocks),
        attempt=history.attempts + 1,
    )


def record_attempt(history: HarqHistory, sinrs, mcs, tbs: int, coded_bits: int | None = None,
                   tables: McsTableSet | None = None) -> HarqHistory:
    """Fold a failed attempt into the HARQ history (beta and MCS are pinned)."""
    entry = _resolve_mcs(mcs, tables or default_tables())
    if history.method is HarqMethod.IR and coded_bits is None:
        coded_bits = history.coded_bits[-1] if history.coded_bits else None
    return update_history(history, sinrs, entry.beta, coded_bits, info_bits=tbs, mcs_key=entry.key)


def make_rng(seed: int, stream: int | None = None) -> np.random.Generator:
    """PCG64 generator for ``seed``; ``stream`` selects an independent child stream."""
    seq = np.random.SeedSequence(int(seed))
    if stream is not None:
        seq = seq.spawn(int(stream) + 1)[int(stream)]
    return np.random.Generator(np.random.PCG64(seq))


def draw_decode(tbler: float, rng: np.random.Generator) -> bool:
    """Bernoulli decode outcome; consumes exactly one uniform draw from ``rng``."""
    if not 0.0 <= tbler <= 1.0:
        raise InvalidInputError(f"TBLER {tbler} outside [0, 1]")
    return bool(rng.random() >= tbler)
