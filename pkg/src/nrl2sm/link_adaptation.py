"""MCS selection: error-model based and Shannon-bound based."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .eesm import as_spectrum
from .error_model import compute_tbler
from .errors import InvalidInputError
from .lut import BlerLut, default_lut
from .tables import McsTable, McsTableSet, default_tables, quantize_cqi, symbols_for_payload, tbs_calculate

# SNR gap between the Shannon bound and practical coding
SHANNON_GAP = -math.log(5e-5) / 0.5


class Policy(enum.Enum):
    ERROR_MODEL = "error-model"
    SHANNON = "shannon"

    @classmethod
    def parse(cls, value) -> "Policy":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        for member in cls:
            if key in (member.value, member.name.lower().replace("_", "-")):
                return member
        raise InvalidInputError(f"unknown link adaptation policy {value!r}")


@dataclass(frozen=True)
class CsiReference:
    """Hypothetical allocation over which candidate MCSs are evaluated.

    ``n_rbs=None`` means the whole band covered by the SINR vector. With
    ``payload_bits`` set, each candidate MCS is evaluated on the fewest
    symbols (up to ``n_symbols``) that carry the payload, i.e. the
    allocation it would really get; an MCS that cannot carry it is skipped.
    """

    n_rbs: int | None = None
    n_symbols: int = 12
    payload_bits: int | None = None


@dataclass(frozen=True)
class LinkAdaptResult:
    table_id: McsTable
    mcs_index: int
    policy: Policy
    cqi: int
    out_of_range: bool = False
    predicted_tbler: float | None = None
    achievable_se: float | None = None


def report_cqi(result: LinkAdaptResult, tables: McsTableSet | None = None) -> int:
    if result.out_of_range:
        return 0
    return quantize_cqi(result.table_id, result.mcs_index, tables)


def _finish(table_id, index, policy, out_of_range, tables, **kw) -> LinkAdaptResult:
    cqi = 0 if out_of_range else quantize_cqi(table_id, index, tables)
    return LinkAdaptResult(table_id, index, policy, cqi, out_of_range, **kw)


def tbler_for_mcs(sinrs, table_id, index: int, lut=None, csi_ref: CsiReference = CsiReference(),
                  tables: McsTableSet | None = None) -> float:
    """First-transmission TBLER of one MCS over the CSI reference resource."""
    tables = tables or default_tables()
    arr = as_spectrum(sinrs)
    n_rbs = csi_ref.n_rbs or arr.size
    if n_rbs != arr.size:
        arr = arr[:n_rbs] if n_rbs < arr.size else np.resize(arr, n_rbs)
    entry = tables.lookup(table_id, index)
    n_sym = csi_ref.n_symbols
    if csi_ref.payload_bits is not None:
        n_sym = symbols_for_payload(n_rbs, csi_ref.n_symbols, entry, csi_ref.payload_bits)
        if n_sym is None:
            return 1.0
    tbs = tbs_calculate(n_rbs, n_sym, entry)
    return compute_tbler(arr, entry, tbs, None, lut, tables=tables).tbler


def select_mcs_error_model(
    sinrs,
    table_id,
    target_tbler: float = 0.1,
    lut: BlerLut | None = None,
    csi_ref: CsiReference = CsiReference(),
    tables: McsTableSet | None = None,
) -> LinkAdaptResult:
    """Highest MCS whose predicted TBLER meets ``target_tbler``.

    Candidates are scanned from the top index down, so the first one that
    qualifies is the largest qualifying index whatever the shape of the
    TBLER-vs-MCS relation. If none qualifies, MCS 0 is returned flagged as
    out of range (CQI 0).
    """
    if not 0.0 < target_tbler < 1.0:
        raise InvalidInputError(f"target TBLER {target_tbler} outside (0, 1)")
    tables = tables or default_tables()
    lut = lut or default_lut()
    table_id = McsTable.parse(table_id)
    arr = as_spectrum(sinrs)
    rows = tables.table(table_id)
    for entry in reversed(rows):
        tbler = tbler_for_mcs(arr, table_id, entry.index, lut, csi_ref, tables)
        if tbler <= target_tbler:
            return _finish(table_id, entry.index, Policy.ERROR_MODEL, False, tables, predicted_tbler=tbler)
    tbler = tbler_for_mcs(arr, table_id, 0, lut, csi_ref, tables)
    return _finish(table_id, 0, Policy.ERROR_MODEL, True, tables, predicted_tbler=tbler)


def shannon_se(sinrs) -> float:
    """Mean over RBs of ``log2(1 + SINR / gap)``."""
    arr = as_spectrum(sinrs)
    return float(np.mean(np.log2(1.0 + arr / SHANNON_GAP)))


def select_mcs_shannon(sinrs, table_id, tables: McsTableSet | None = None) -> LinkAdaptResult:
    """Highest MCS whose spectral efficiency is strictly below the gap-adjusted Shannon rate."""
    tables = tables or default_tables()
    table_id = McsTable.parse(table_id)
    se = shannon_se(sinrs)
    best = None
    for entry in tables.table(table_id):
        if entry.spectral_efficiency < se:
            best = entry.index
    if best is None:
        return _finish(table_id, 0, Policy.SHANNON, True, tables, achievable_se=se)
    return _finish(table_id, best, Policy.SHANNON, False, tables, achievable_se=se)


def select_mcs(policy, sinrs, table_id, target_tbler: float = 0.1, lut=None,
               csi_ref: CsiReference = CsiReference(), tables=None) -> LinkAdaptResult:
    policy = Policy.parse(policy)
    if policy is Policy.SHANNON:
        return select_mcs_shannon(sinrs, table_id, tables)
    return select_mcs_error_model(sinrs, table_id, target_tbler, lut, csi_ref, tables)
