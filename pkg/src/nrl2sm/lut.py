"""SINR to code-BLER lookup tables.

A :class:`BlerLut` holds, for every MCS, a family of curves indexed by code
block size (CBS). Lookups are worst case: both the CBS and the SINR are
rounded down to the nearest stored grid point, so the returned BLER is never
optimistic with respect to the stored data.

The shipped table is synthetic (see :func:`synth_awgn_cbler`). Curves measured
with a link-level simulator can be dropped in using the same file format.
"""

from __future__ import annotations

import json
import math
import warnings
from bisect import bisect_right
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from statistics import NormalDist
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InvalidInputError, LutFormatError, MissingCurveError
from .segmentation import BaseGraph, select_base_graph
from .tables import McsEntry, McsTable, McsTableSet, default_tables

LUT_FORMAT_VERSION = 1
SYNTH_GENERATOR = "nrl2sm.synthetic-awgn/1"

# synthetic waterfall constants
KAPPA = 1.25
SIGMA0_DB = 1.0
REF_CBS = 1000
ANCHOR_BLER = 0.1
MIN_STORED_BLER = 1e-6
BLER_DIGITS = 6

DEFAULT_CBS_GRID = (24, 40, 64, 100, 160, 256, 400, 640, 1000, 1600, 2560, 3840, 5120, 8448)
DEFAULT_SINR_GRID_DB = tuple(round(-15.0 + 0.25 * i, 2) for i in range(301))

_STD_NORMAL = NormalDist()


class ConservativeFallbackWarning(UserWarning):
    """CBS below every stored curve; the smallest curve was used."""


@dataclass(frozen=True)
class CbsCurve:
    cbs: int
    base_graph: BaseGraph
    sinr_db: tuple[float, ...]
    bler: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "base_graph", BaseGraph.parse(self.base_graph))
        object.__setattr__(self, "sinr_db", tuple(float(x) for x in self.sinr_db))
        object.__setattr__(self, "bler", tuple(float(x) for x in self.bler))
        problem = self.problem()
        if problem:
            raise LutFormatError(f"CBS {self.cbs}: {problem}")

    def problem(self) -> str | None:
        if int(self.cbs) <= 0:
            return "CBS must be positive"
        if len(self.sinr_db) != len(self.bler):
            return "SINR and BLER columns differ in length"
        if len(self.sinr_db) < 2:
            return "a curve needs at least two points"
        if not all(math.isfinite(x) for x in self.sinr_db):
            return "non-finite SINR"
        if any(b != b or not 0.0 <= b <= 1.0 for b in self.bler):
            return "BLER outside [0, 1]"
        if any(x1 <= x0 for x0, x1 in zip(self.sinr_db, self.sinr_db[1:])):
            return "SINR points must be strictly increasing"
        if any(b1 > b0 for b0, b1 in zip(self.bler, self.bler[1:])):
            return "BLER must be non-increasing in SINR"
        return None

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.sinr_db, self.bler))

    def at(self, sinr_db: float) -> float:
        """Zero-order hold at the largest stored SINR not above ``sinr_db``."""
        j = bisect_right(self.sinr_db, sinr_db) - 1
        return 1.0 if j < 0 else self.bler[j]

    def interp(self, sinr_db: float) -> float:
        """Linear interpolation, holding the end values outside the grid."""
        return float(np.interp(sinr_db, self.sinr_db, self.bler))


@dataclass(frozen=True)
class BlerLut:
    curves: Mapping[tuple[McsTable, int], tuple[CbsCurve, ...]]
    version: int = LUT_FORMAT_VERSION
    generator: str = "unknown"
    seed: int = 0
    _cbs_index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        norm = {}
        for (table_id, index), family in self.curves.items():
            key = (McsTable.parse(table_id), int(index))
            family = tuple(sorted(family, key=lambda c: c.cbs))
            if not family:
                raise LutFormatError(f"{key[0].label} MCS{key[1]}: no curves")
            sizes = [c.cbs for c in family]
            if len(set(sizes)) != len(sizes):
                raise LutFormatError(f"{key[0].label} MCS{key[1]}: duplicate CBS values")
            norm[key] = family
        object.__setattr__(self, "curves", norm)
        object.__setattr__(self, "_cbs_index", {k: [c.cbs for c in v] for k, v in norm.items()})

    def family(self, table_id, mcs_index: int) -> tuple[CbsCurve, ...]:
        key = (McsTable.parse(table_id), int(mcs_index))
        try:
            return self.curves[key]
        except KeyError:
            raise MissingCurveError(f"no BLER curves for {key[0].label} MCS{key[1]}") from None

    def curve_for(self, table_id, mcs_index: int, cbs: int) -> CbsCurve:
        """Curve with the largest stored CBS not above ``cbs``."""
        family = self.family(table_id, mcs_index)
        sizes = self._cbs_index[(McsTable.parse(table_id), int(mcs_index))]
        i = bisect_right(sizes, cbs) - 1
        if i < 0:
            warnings.warn(
                f"CBS {cbs} below smallest stored curve ({sizes[0]}); using it",
                ConservativeFallbackWarning,
                stacklevel=3,
            )
            i = 0
        return family[i]

    def keys(self):
        return self.curves.keys()


def lookup_cbler(lut: BlerLut, table_id, mcs_index: int, cbs: int, sinr_eff_db: float) -> float:
    """Worst-case code BLER: lower-bound CBS curve, lower-bound SINR point."""
    return lut.curve_for(table_id, mcs_index, cbs).at(sinr_eff_db)


def interpolate_cbler(lut: BlerLut, table_id, mcs_index: int, cbs: int, sinr_eff_db: float) -> float:
    """Bilinear (SINR, CBS) interpolation; the optimistic reference for lookups."""
    family = lut.family(table_id, mcs_index)
    sizes = [c.cbs for c in family]
    if cbs <= sizes[0]:
        return family[0].interp(sinr_eff_db)
    if cbs >= sizes[-1]:
        return family[-1].interp(sinr_eff_db)
    i = bisect_right(sizes, cbs) - 1
    lo, hi = family[i], family[i + 1]
    w = (cbs - lo.cbs) / (hi.cbs - lo.cbs)
    return (1.0 - w) * lo.interp(sinr_eff_db) + w * hi.interp(sinr_eff_db)


# -- synthetic AWGN curves ---------------------------------------------------


def capacity_threshold_db(modulation_order: int, ecr) -> float:
    """SINR (dB) at which a backed-off Shannon rate equals ``Qm * R``."""
    return 10.0 * math.log10(2.0 ** (modulation_order * float(ecr) * KAPPA) - 1.0)


def waterfall_width_db(cbs: int) -> float:
    return SIGMA0_DB / math.sqrt(cbs / REF_CBS)


def waterfall_params(mcs: McsEntry, ecr_eff, cbs: int) -> tuple[float, float]:
    """``(mu, sigma)`` in dB: the 50 % point and the upper-half width of the waterfall."""
    z_anchor = _STD_NORMAL.inv_cdf(1.0 - ANCHOR_BLER)
    mu = capacity_threshold_db(mcs.modulation_order, ecr_eff) - SIGMA0_DB * z_anchor
    return mu, waterfall_width_db(cbs)


def synth_awgn_cbler(mcs: McsEntry, ecr_eff, cbs: int, sinr_db: float) -> float:
    """Synthetic AWGN code BLER, ``0.5 * erfc((sinr_db - mu) / (sqrt(2) * sigma))``.

    The waterfall reaches BLER 0.1 at :func:`capacity_threshold_db` for a
    1000-bit block and narrows as ``1/sqrt(cbs)`` above its midpoint ``mu``,
    which does not depend on the CBS. Below ``mu`` every CBS shares the
    1000-bit slope, so a larger block is never worse at any SINR.
    """
    if cbs < 24:
        raise InvalidInputError(f"CBS must be at least 24 bits, got {cbs}")
    if not 0 < float(ecr_eff) < 1:
        raise InvalidInputError(f"effective code rate {ecr_eff} outside (0, 1)")
    mu, sigma = waterfall_params(mcs, ecr_eff, cbs)
    width = sigma if sinr_db >= mu else SIGMA0_DB
    return 0.5 * math.erfc((sinr_db - mu) / (math.sqrt(2.0) * width))


def _default_bg(cbs: int, ecr) -> BaseGraph:
    if cbs > BaseGraph.BG2.max_cbs:
        return BaseGraph.BG1
    return select_base_graph(cbs, ecr)


def _quantize_curve(sinr_grid: Sequence[float], blers: Sequence[float]) -> tuple[list, list]:
    q = [0.0 if b < MIN_STORED_BLER else float(f"{b:.{BLER_DIGITS}g}") for b in blers]
    first = 0
    while first + 1 < len(q) and q[first + 1] >= 1.0:
        first += 1
    last = len(q)
    if 0.0 in q:
        last = q.index(0.0) + 1
    last = max(last, first + 2)
    return list(sinr_grid[first:last]), q[first:last]


def generate_synthetic_lut(
    tables: McsTableSet | None = None,
    cbs_grid: Iterable[int] = DEFAULT_CBS_GRID,
    sinr_grid_db: Iterable[float] = DEFAULT_SINR_GRID_DB,
    table_ids: Iterable | None = None,
    seed: int = 0,
) -> BlerLut:
    """Sample :func:`synth_awgn_cbler` for every MCS and CBS of the grids.

    Points below 1e-6 BLER are stored as 0 and the curve is cut after the
    first zero; the saturated head (BLER 1) is trimmed to a single point.
    """
    tables = tables or default_tables()
    cbs_grid = sorted(int(c) for c in cbs_grid)
    sinr_grid = [float(x) for x in sinr_grid_db]
    if not cbs_grid or len(sinr_grid) < 2:
        raise LutFormatError("CBS grid must be non-empty and SINR grid needs two points")
    if len(set(cbs_grid)) != len(cbs_grid) or cbs_grid[0] < 24:
        raise LutFormatError("CBS grid must hold distinct values >= 24")
    if any(b <= a for a, b in zip(sinr_grid, sinr_grid[1:])):
        raise LutFormatError("SINR grid must be strictly increasing")
    wanted = tables.table_ids if table_ids is None else [McsTable.parse(t) for t in table_ids]
    curves = {}
    for table_id in wanted:
        for entry in tables.table(table_id):
            family = []
            for cbs in cbs_grid:
                blers = [synth_awgn_cbler(entry, entry.ecr, cbs, x) for x in sinr_grid]
                xs, bs = _quantize_curve(sinr_grid, blers)
                family.append(CbsCurve(cbs, _default_bg(cbs, entry.ecr), xs, bs))
            curves[(table_id, entry.index)] = tuple(family)
    return BlerLut(curves, generator=SYNTH_GENERATOR, seed=int(seed))


# -- file format -------------------------------------------------------------


def lut_to_dict(lut: BlerLut) -> dict:
    by_table: dict[McsTable, list] = {}
    for (table_id, index), family in sorted(lut.curves.items()):
        by_table.setdefault(table_id, []).append(
            {
                "index": index,
                "curves": [
                    {"cbs": c.cbs, "bg": c.base_graph.name, "points": [[x, b] for x, b in c.points]}
                    for c in family
                ],
            }
        )
    return {
        "version": lut.version,
        "generator": lut.generator,
        "seed": lut.seed,
        "tables": [{"table_id": t.label, "mcs": rows} for t, rows in by_table.items()],
    }


def lut_from_dict(doc: Mapping, source: str = "<lut>") -> BlerLut:
    def fail(msg):
        raise LutFormatError(f"{source}: {msg}")

    if not isinstance(doc, Mapping):
        fail("top level must be an object")
    for name in ("version", "generator", "seed", "tables"):
        if name not in doc:
            fail(f"missing field {name!r}")
    if not isinstance(doc["version"], int) or doc["version"] > LUT_FORMAT_VERSION:
        fail(f"unsupported version {doc['version']!r}")
    tables = default_tables()
    curves = {}
    for tdoc in doc["tables"]:
        try:
            table_id = McsTable.parse(tdoc["table_id"])
            rows = tdoc["mcs"]
        except (KeyError, TypeError, LookupError) as exc:
            fail(f"bad table entry: {exc}")
        for mdoc in rows:
            try:
                index = int(mdoc["index"])
                tables.lookup(table_id, index)
            except (KeyError, TypeError, ValueError, LookupError) as exc:
                fail(f"{table_id.label}: bad MCS entry ({exc})")
            where = f"{table_id.label} MCS{index}"
            if (table_id, index) in curves:
                fail(f"{where}: listed twice")
            family = []
            for cdoc in mdoc.get("curves", []):
                try:
                    pts = cdoc["points"]
                    if not all(isinstance(p, (list, tuple)) and len(p) == 2 for p in pts):
                        fail(f"{where}: points must be [sinr_db, bler] pairs")
                    family.append(
                        CbsCurve(int(cdoc["cbs"]), cdoc["bg"], [p[0] for p in pts], [p[1] for p in pts])
                    )
                except LutFormatError as exc:
                    fail(f"{where}: {exc}")
                except (KeyError, TypeError, ValueError) as exc:
                    fail(f"{where}: malformed curve ({exc!r})")
            try:
                curves[(table_id, index)] = tuple(family)
                BlerLut({(table_id, index): tuple(family)})
            except LutFormatError as exc:
                fail(str(exc))
    return BlerLut(curves, version=doc["version"], generator=str(doc["generator"]), seed=int(doc["seed"]))


def dumps_lut(lut: BlerLut) -> str:
    return json.dumps(lut_to_dict(lut), separators=(",", ":")) + "\n"


def save_lut(lut: BlerLut, path) -> None:
    Path(path).write_text(dumps_lut(lut), encoding="utf-8")


def load_lut(path) -> BlerLut:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise LutFormatError(f"{path}: not valid JSON ({exc})") from None
    return lut_from_dict(doc, str(path))


@lru_cache(maxsize=1)
def default_lut() -> BlerLut:
    """The synthetic LUT shipped with the package."""
    ref = resources.files(__package__) / "data" / "synthetic_lut.json"
    return lut_from_dict(json.loads(ref.read_text(encoding="utf-8")), "synthetic_lut.json")


# -- continuous AWGN reference for calibration --------------------------------

LOG_FLOOR = 1e-8


class AwgnReference:
    """Continuous SINR(dB) -> BLER map, linear in log10(BLER) between points."""

    def __init__(self, sinr_db: Sequence[float], bler: Sequence[float]):
        self.sinr_db = np.asarray(sinr_db, dtype=np.float64)
        self.log_bler = np.log10(np.clip(np.asarray(bler, dtype=np.float64), LOG_FLOOR, 1.0))

    @classmethod
    def from_curve(cls, curve: CbsCurve) -> "AwgnReference":
        return cls(curve.sinr_db, curve.bler)

    def __call__(self, sinr_db):
        return np.power(10.0, np.interp(sinr_db, self.sinr_db, self.log_bler))
