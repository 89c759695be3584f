"""Beta calibration for EESM.

For one MCS, beta is chosen to minimise the mean squared difference between
log10 of the measured fading-channel BLER and log10 of the AWGN BLER at the
EESM effective SINR. The search is a log-spaced grid scan followed by
golden-section refinement.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .eesm import as_spectrum, effective_sinr
from .error_model import make_rng
from .errors import CalibrationError, InvalidInputError, LutFormatError
from .lut import LOG_FLOOR, AwgnReference, BlerLut, default_lut
from .tables import McsEntry, McsTable, McsTableSet, default_tables

log = logging.getLogger(__name__)

BLER_FLOOR = LOG_FLOOR
BLER_CEIL = 1.0 - LOG_FLOOR
DEFAULT_BETA_RANGE = (0.1, 300.0)
DEFAULT_GRID_POINTS = 64
REFERENCE_CBS = 1000

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class Realization:
    spectrum: np.ndarray
    measured_bler: float
    channel: int | None = None
    noise: int | None = None


@dataclass
class CalibrationEnsemble:
    realizations: list[Realization]
    mcs: tuple[McsTable, int]
    awgn_ref: Callable
    dropped: int = 0

    def __post_init__(self):
        self.mcs = (McsTable.parse(self.mcs[0]), int(self.mcs[1]))
        if len(self.realizations) < 2:
            raise InvalidInputError("an ensemble needs at least two usable realizations")
        for r in self.realizations:
            if not 0.0 < r.measured_bler <= 1.0:
                raise InvalidInputError(f"measured BLER {r.measured_bler} outside (0, 1]")
        noises = {r.noise for r in self.realizations if r.noise is not None}
        if len(noises) == 1:
            raise InvalidInputError("an ensemble must span at least two noise levels")
        sizes = {r.spectrum.size for r in self.realizations}
        self._matrix = np.vstack([r.spectrum for r in self.realizations]) if len(sizes) == 1 else None
        self._log_measured = np.log10(
            np.clip([r.measured_bler for r in self.realizations], BLER_FLOOR, BLER_CEIL)
        )

    @classmethod
    def from_samples(cls, samples: Sequence[tuple], mcs, awgn_ref) -> "CalibrationEnsemble":
        """Build from ``(spectrum, bler[, channel, noise])`` tuples, dropping BLER 0 or 1."""
        kept, dropped = [], 0
        for sample in samples:
            spectrum, bler, *ids = sample
            if not 0.0 < bler < 1.0:
                dropped += 1
                continue
            kept.append(Realization(as_spectrum(spectrum), float(bler), *ids))
        if dropped:
            log.info("dropped %d realizations with BLER of exactly 0 or 1", dropped)
        return cls(kept, mcs, awgn_ref, dropped)

    def effective_sinrs(self, beta: float) -> np.ndarray:
        if self._matrix is None:
            return np.array([effective_sinr(r.spectrum, beta) for r in self.realizations])
        m = self._matrix
        smin = m.min(axis=1)
        inner = np.exp(-(m - smin[:, None]) / beta).mean(axis=1)
        return smin - beta * np.log(inner)


@dataclass
class CalibrationResult:
    beta_opt: float
    objective_value: float
    search_trace: list[tuple[float, float]] = field(default_factory=list)
    at_boundary: bool = False
    beta_insensitive: bool = False


def calibration_objective(beta: float, ensemble: CalibrationEnsemble) -> float:
    """Mean squared log10-BLER mismatch over all realizations."""
    if not beta > 0:
        raise InvalidInputError(f"beta must be positive, got {beta}")
    with np.errstate(divide="ignore"):
        eff_db = 10.0 * np.log10(ensemble.effective_sinrs(beta))
    ref = np.asarray(ensemble.awgn_ref(eff_db), dtype=np.float64)
    if np.any(ref < BLER_FLOOR):
        warnings.warn("AWGN reference BLER below 1e-8; clamped inside log10", RuntimeWarning, stacklevel=2)
    diff = ensemble._log_measured - np.log10(np.clip(ref, BLER_FLOOR, BLER_CEIL))
    return float(np.mean(diff * diff))


def golden_section_search(f, a: float, b: float, tol: float):
    """Minimise a unimodal ``f`` on ``[a, b]``; returns ``(x_best, [(x, f(x)), ...])``."""
    trace = []

    def ev(x):
        y = f(x)
        trace.append((x, y))
        return y

    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = ev(c), ev(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = ev(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = ev(d)
    x = c if fc <= fd else d
    return x, trace


def calibrate_beta(
    ensemble: CalibrationEnsemble,
    beta_min: float = DEFAULT_BETA_RANGE[0],
    beta_max: float = DEFAULT_BETA_RANGE[1],
    tolerance: float = 1e-3,
    grid_points: int = DEFAULT_GRID_POINTS,
) -> CalibrationResult:
    """Grid scan plus golden-section refinement of the calibration objective."""
    if not 0 < beta_min < beta_max:
        raise InvalidInputError("need 0 < beta_min < beta_max")
    if not tolerance > 0:
        raise InvalidInputError("tolerance must be positive")

    def objective(beta):
        value = calibration_objective(beta, ensemble)
        return value if math.isfinite(value) else math.inf

    grid = np.geomspace(beta_min, beta_max, max(int(grid_points), 3))
    trace = [(float(b), objective(float(b))) for b in grid]
    values = np.array([v for _, v in trace])
    if not np.any(np.isfinite(values)):
        raise CalibrationError("objective is non-finite over the whole beta range", trace)
    finite = values[np.isfinite(values)]
    if finite.max() - finite.min() <= 1e-12 * max(1.0, finite.max()):
        return CalibrationResult(float(grid[0]), float(finite.min()), trace, beta_insensitive=True)

    i = int(np.argmin(values))
    lo, hi = float(grid[max(i - 1, 0)]), float(grid[min(i + 1, len(grid) - 1)])
    _, refine = golden_section_search(objective, lo, hi, tolerance)
    trace.extend(refine)
    beta_opt, best = min(trace, key=lambda p: (p[1], p[0]))
    at_boundary = beta_opt - beta_min <= tolerance or beta_max - beta_opt <= tolerance
    return CalibrationResult(beta_opt, best, trace, at_boundary=at_boundary)


# -- synthetic ensembles -------------------------------------------------------


def block_fading_gains(rng: np.random.Generator, n_rbs: int, coherence_rbs: int) -> np.ndarray:
    """Unit-mean exponential (Rayleigh power) gains, constant over blocks of RBs."""
    if n_rbs <= 0 or coherence_rbs <= 0:
        raise InvalidInputError("RB count and coherence must be positive")
    n_blocks = -(-n_rbs // coherence_rbs)
    return np.repeat(rng.exponential(1.0, n_blocks), coherence_rbs)[:n_rbs]


def reference_for(mcs, lut: BlerLut | None = None, cbs: int = REFERENCE_CBS) -> AwgnReference:
    """Continuous AWGN reference built from one LUT curve."""
    table_id, index = mcs
    return AwgnReference.from_curve((lut or default_lut()).curve_for(table_id, index, cbs))


def capacity_effective_sinr(spectrum: np.ndarray) -> float:
    """SINR of the AWGN channel with the same mean Shannon capacity."""
    return float(2.0 ** np.mean(np.log2(1.0 + spectrum)) - 1.0)


def gen_fading_ensemble(
    mcs,
    n_channels: int,
    noise_grid_db: Sequence[float],
    n_rbs: int = 48,
    coherence_rbs: int = 4,
    seed: int = 0,
    *,
    mode: str = "planted",
    planted_beta: float | None = None,
    awgn_ref=None,
    lut: BlerLut | None = None,
    tables: McsTableSet | None = None,
) -> CalibrationEnsemble:
    """Synthetic calibration data over ``n_channels`` x ``len(noise_grid_db)``.

    ``noise_grid_db`` lists mean SNRs (signal over noise variance). In
    ``"planted"`` mode the measured BLER is the AWGN reference at the EESM
    SINR for ``planted_beta`` (default: the MCS's tabulated beta); in
    ``"capacity"`` mode it is the reference at the capacity-equivalent SINR,
    an independent stand-in for link-level measurements.
    """
    tables = tables or default_tables()
    entry: McsEntry = mcs if isinstance(mcs, McsEntry) else tables.lookup(*mcs)
    if n_channels < 1 or not len(noise_grid_db):
        raise InvalidInputError("need at least one channel and one noise level")
    if len(set(noise_grid_db)) != len(noise_grid_db):
        raise InvalidInputError("noise levels must be distinct")
    ref = awgn_ref or reference_for(entry.key, lut)
    beta = entry.beta if planted_beta is None else float(planted_beta)
    rng = make_rng(seed)
    samples = []
    for l in range(n_channels):
        gains = block_fading_gains(rng, n_rbs, coherence_rbs)
        for k, snr_db in enumerate(noise_grid_db):
            spectrum = gains * 10.0 ** (snr_db / 10.0)
            if mode == "planted":
                eff = effective_sinr(spectrum, beta)
            elif mode == "capacity":
                eff = capacity_effective_sinr(spectrum)
            else:
                raise InvalidInputError(f"unknown ensemble mode {mode!r}")
            bler = float(ref(10.0 * math.log10(eff))) if eff > 0 else 1.0
            samples.append((spectrum, bler, l, k))
    return CalibrationEnsemble.from_samples(samples, entry.key, ref)


# -- ensemble files ----------------------------------------------------------------


def save_ensemble(ensemble: CalibrationEnsemble, path) -> None:
    table_id, index = ensemble.mcs
    doc = {
        "mcs": {"table_id": table_id.label, "index": index},
        "realizations": [
            {"sinr_db": (10.0 * np.log10(r.spectrum)).tolist(), "bler": r.measured_bler}
            for r in ensemble.realizations
        ],
    }
    Path(path).write_text(json.dumps(doc, separators=(",", ":")) + "\n", encoding="utf-8")


def load_ensemble(path, awgn_ref=None, lut: BlerLut | None = None) -> CalibrationEnsemble:
    """Read ``{mcs: {table_id, index}, realizations: [{sinr_db: [...], bler}]}``."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        mcs = (McsTable.parse(doc["mcs"]["table_id"]), int(doc["mcs"]["index"]))
        default_tables().lookup(*mcs)
        samples = []
        for i, r in enumerate(doc["realizations"]):
            sinr_db = np.asarray(r["sinr_db"], dtype=np.float64)
            bler = float(r["bler"])
            if sinr_db.ndim != 1 or not np.all(np.isfinite(sinr_db)) or not 0.0 <= bler <= 1.0:
                raise LutFormatError(f"{path}: realization {i} malformed")
            samples.append((10.0 ** (sinr_db / 10.0), bler, i, r.get("noise")))
    except (KeyError, TypeError, ValueError, LookupError, json.JSONDecodeError) as exc:
        raise LutFormatError(f"{path}: bad ensemble file ({exc!r})") from None
    return CalibrationEnsemble.from_samples(samples, mcs, awgn_ref or reference_for(mcs, lut))
