"""Exponential effective SINR mapping (EESM) with HARQ combining.

All functions work on linear SINR. dB conversion belongs at the edges
(lookup tables, file I/O).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import CombiningError, InvalidInputError
from .tables import McsEntry, McsTableSet, min_ecr_same_modulation


class HarqMethod(enum.Enum):
    NONE = "off"
    CC = "cc"
    IR = "ir"

    @classmethod
    def parse(cls, value) -> "HarqMethod":
        if isinstance(value, cls):
            return value
        if value is None:
            return cls.NONE
        key = str(value).strip().lower()
        if key in ("none", "off", "no"):
            return cls.NONE
        for member in cls:
            if key in (member.value, member.name.lower(), f"harq-{member.value}"):
                return member
        raise InvalidInputError(f"unknown HARQ method {value!r}")


def as_spectrum(values) -> np.ndarray:
    """Validate a per-RB SINR vector and return it as a float64 array."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidInputError("SINR spectrum must be a non-empty 1-D vector")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("SINR spectrum contains non-finite values")
    if np.any(arr < 0):
        raise InvalidInputError("SINR spectrum contains negative values")
    return arr


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if not (beta > 0 and math.isfinite(beta)):
        raise InvalidInputError(f"beta must be positive and finite, got {beta}")
    return beta


def _log_mean_exp(sinrs: np.ndarray, beta: float) -> float:
    # ln((1/N) sum exp(-s/beta)) with the minimum factored out
    smin = float(sinrs.min())
    tail = np.exp(-(sinrs - smin) / beta)
    return -smin / beta + math.log(float(tail.mean()))


def effective_sinr(sinrs, beta: float) -> float:
    """Single-transmission EESM: ``-beta * ln(mean(exp(-SINR_n / beta)))``."""
    arr = as_spectrum(sinrs)
    beta = _check_beta(beta)
    smin, smax = float(arr.min()), float(arr.max())
    eff = -beta * _log_mean_exp(arr, beta)
    # rounding can push the result a few ulps outside [min, max]
    return min(max(eff, smin), smax)


def lin_to_db(x):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(x)


def db_to_lin(x_db):
    return np.power(10.0, np.asarray(x_db, dtype=np.float64) / 10.0)


@dataclass(frozen=True)
class HarqHistory:
    """Combining state of one HARQ process.

    CC keeps the per-RB SINR sums over past attempts; IR keeps, per attempt,
    the effective SINR and the number of coded bits. Setting ``keep_raw``
    additionally retains every per-RB spectrum, which is only needed to
    cross-check the compact IR form.
    """

    method: HarqMethod = HarqMethod.NONE
    attempts: int = 0
    beta: float | None = None
    mcs_key: tuple | None = None
    info_bits: int | None = None
    n_rbs: int | None = None
    accumulated: tuple[float, ...] = ()
    sinr_eff: tuple[float, ...] = ()
    coded_bits: tuple[int, ...] = ()
    keep_raw: bool = False
    raw: tuple[tuple[float, ...], ...] = ()

    @classmethod
    def new(cls, method, keep_raw: bool = False) -> "HarqHistory":
        return cls(method=HarqMethod.parse(method), keep_raw=keep_raw)

    @property
    def is_empty(self) -> bool:
        return self.attempts == 0

    def check_compatible(self, current: np.ndarray, beta: float | None = None, mcs_key=None) -> None:
        if self.is_empty:
            return
        if current.size != self.n_rbs:
            raise CombiningError(
                f"retransmission has {current.size} RBs, HARQ process holds {self.n_rbs}"
            )
        if beta is not None and self.beta is not None and float(beta) != self.beta:
            raise CombiningError(f"beta changed within HARQ process ({self.beta} -> {beta})")
        if mcs_key is not None and self.mcs_key is not None and tuple(mcs_key) != self.mcs_key:
            raise CombiningError(f"MCS changed within HARQ process ({self.mcs_key} -> {tuple(mcs_key)})")


def effective_sinr_cc(history: HarqHistory, current, beta: float) -> float:
    """Chase-combining EESM: per-RB SINRs are summed across attempts first."""
    arr = as_spectrum(current)
    if history.is_empty:
        return effective_sinr(arr, beta)
    if history.method is not HarqMethod.CC:
        raise CombiningError(f"expected a CC history, got {history.method.name}")
    history.check_compatible(arr, beta)
    return effective_sinr(np.asarray(history.accumulated) + arr, beta)


def effective_sinr_ir(history: HarqHistory, current, beta: float) -> float:
    """Incremental-redundancy EESM over all attempts of the process.

    Each stored attempt contributes ``exp(-sinr_eff_j / beta)``, which equals
    the RB average of ``exp(-SINR_mj / beta)`` for that attempt, so the
    result is identical to averaging over all ``q * |RB|`` exponentials.
    """
    arr = as_spectrum(current)
    beta = _check_beta(beta)
    if history.is_empty:
        return effective_sinr(arr, beta)
    if history.method is not HarqMethod.IR:
        raise CombiningError(f"expected an IR history, got {history.method.name}")
    history.check_compatible(arr, beta)
    logs = [-s / beta for s in history.sinr_eff]
    logs.append(_log_mean_exp(arr, beta))
    top = max(logs)
    total = top + math.log(math.fsum(math.exp(v - top) for v in logs) / len(logs))
    return -beta * total


def effective_sinr_ir_batch(spectra: Sequence, beta: float) -> float:
    """Direct IR EESM over a full list of per-attempt spectra (no compaction)."""
    arrays = [as_spectrum(s) for s in spectra]
    if len({a.size for a in arrays}) != 1:
        raise CombiningError("all attempts must cover the same number of RBs")
    return effective_sinr(np.concatenate(arrays), beta)


def effective_ecr(info_bits: int, coded_bits: Sequence[int]) -> Fraction:
    """Effective code rate after combining: ``X / sum(C_j)``."""
    if not coded_bits:
        raise InvalidInputError("coded_bits must not be empty")
    if int(info_bits) <= 0 or any(int(c) <= 0 for c in coded_bits):
        raise InvalidInputError("information and coded bit counts must be positive")
    return Fraction(int(info_bits), sum(int(c) for c in coded_bits))


def clamp_ecr_ir(ecr_eff, mcs: McsEntry, tables: McsTableSet | None = None) -> Fraction:
    """Floor the IR effective code rate at the lowest rate of the same modulation."""
    ecr_eff = Fraction(ecr_eff)
    if ecr_eff <= 0:
        raise InvalidInputError(f"effective code rate must be positive, got {ecr_eff}")
    return max(ecr_eff, min_ecr_same_modulation(mcs.table_id, mcs.index, tables))


def update_history(
    history: HarqHistory,
    current,
    beta: float,
    coded_bits: int | None = None,
    *,
    info_bits: int | None = None,
    mcs_key=None,
) -> HarqHistory:
    """Return a new history with ``current`` appended; ``history`` is untouched."""
    arr = as_spectrum(current)
    beta = _check_beta(beta)
    history.check_compatible(arr, beta, mcs_key)
    changes = dict(
        attempts=history.attempts + 1,
        beta=beta,
        n_rbs=arr.size,
        mcs_key=history.mcs_key if mcs_key is None else tuple(mcs_key),
        info_bits=history.info_bits if info_bits is None else int(info_bits),
    )
    if history.keep_raw:
        changes["raw"] = history.raw + (tuple(arr.tolist()),)
    if history.method is HarqMethod.CC:
        prev = np.asarray(history.accumulated) if history.accumulated else np.zeros(arr.size)
        changes["accumulated"] = tuple((prev + arr).tolist())
    elif history.method is HarqMethod.IR:
        if coded_bits is None or int(coded_bits) <= 0:
            raise InvalidInputError("IR history needs a positive coded-bit count")
        changes["sinr_eff"] = history.sinr_eff + (effective_sinr(arr, beta),)
        changes["coded_bits"] = history.coded_bits + (int(coded_bits),)
    return replace(history, **changes)
