"""LDPC base graph selection, code block segmentation and transport BLER."""

from __future__ import annotations

import enum
import math
from bisect import bisect_left
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from .errors import InvalidInputError, LutFormatError, UnsupportedSizeError

MAX_TBS = 1_277_992
CB_CRC_BITS = 24


class BaseGraph(enum.IntEnum):
    BG1 = 1
    BG2 = 2

    @classmethod
    def parse(cls, value) -> "BaseGraph":
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            key = value.strip().upper()
            if key in cls.__members__:
                return cls[key]
            value = key.removeprefix("BG")
        try:
            return cls(int(value))
        except (TypeError, ValueError):
            raise InvalidInputError(f"unknown base graph {value!r}") from None

    @property
    def max_cbs(self) -> int:
        return 8448 if self is BaseGraph.BG1 else 3840


@dataclass(frozen=True)
class SegmentationResult:
    base_graph: BaseGraph
    num_code_blocks: int
    code_block_size: int
    lifting_size: int
    tb_with_crc: int
    per_cb_crc: int
    kb: int

    @property
    def payload_per_block(self) -> int:
        """Bits of B carried by each block (K minus the per-block CRC)."""
        return self.code_block_size - self.per_cb_crc


@lru_cache(maxsize=None)
def lifting_sizes() -> tuple[int, ...]:
    """The 51 LDPC lifting sizes, sorted ascending."""
    text = (resources.files(__package__) / "data" / "lifting_sizes.csv").read_text(encoding="utf-8")
    values = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#") or line.startswith("set_index"):
            continue
        _, sizes = line.split(",", 1)
        values.extend(int(z) for z in sizes.split())
    if len(values) != 51 or len(set(values)) != 51:
        raise LutFormatError(f"lifting_sizes.csv: expected 51 distinct sizes, got {len(values)}")
    return tuple(sorted(values))


def select_base_graph(tbs: int, ecr) -> BaseGraph:
    """BG2 for small blocks or low rates, BG1 otherwise."""
    if tbs <= 0:
        raise InvalidInputError(f"TBS must be positive, got {tbs}")
    r = float(ecr)
    if tbs <= 292 or r <= 0.25 or (tbs <= 3824 and r <= 0.67):
        return BaseGraph.BG2
    return BaseGraph.BG1


def tb_crc_length(tbs: int) -> int:
    return 24 if tbs > 3824 else 16


def _bg2_kb(b: int) -> int:
    if b > 640:
        return 10
    if b > 560:
        return 9
    if b > 192:
        return 8
    return 6


def segment(tbs: int, base_graph, max_tbs: int = MAX_TBS) -> SegmentationResult:
    """Split a transport block into equally sized LDPC code blocks."""
    if tbs <= 0:
        raise InvalidInputError(f"TBS must be positive, got {tbs}")
    if tbs > max_tbs:
        raise UnsupportedSizeError(f"TBS {tbs} exceeds supported maximum {max_tbs}")
    bg = BaseGraph.parse(base_graph)
    b = tbs + tb_crc_length(tbs)
    k_cb = bg.max_cbs
    if b <= k_cb:
        l_cb, c, b_prime = 0, 1, b
    else:
        l_cb = CB_CRC_BITS
        c = math.ceil(b / (k_cb - l_cb))
        b_prime = b + c * l_cb
    k_prime = math.ceil(b_prime / c)
    kb = 22 if bg is BaseGraph.BG1 else _bg2_kb(b)
    sizes = lifting_sizes()
    i = bisect_left(sizes, math.ceil(k_prime / kb))
    if i == len(sizes):
        raise UnsupportedSizeError(f"no lifting size covers K'={k_prime} with Kb={kb}")
    zc = sizes[i]
    k = 22 * zc if bg is BaseGraph.BG1 else 10 * zc
    return SegmentationResult(bg, c, k, zc, b, l_cb, kb)


def transport_bler(cbler: float, num_code_blocks: int) -> float:
    """Transport BLER of ``C`` equally sized blocks: ``1 - (1 - CBLER)^C``."""
    cbler = float(cbler)
    if not 0.0 <= cbler <= 1.0:
        raise InvalidInputError(f"code BLER {cbler} outside [0, 1]")
    if int(num_code_blocks) < 1:
        raise InvalidInputError(f"code block count must be >= 1, got {num_code_blocks}")
    return -math.expm1(num_code_blocks * math.log1p(-cbler)) if cbler < 1.0 else 1.0
