"""Single-link, slot-driven HARQ simulator built on the L2SM error model.

Each packet sees a block-fading channel, gets an MCS (fixed or chosen by a
link adaptation policy), is mapped to a transport block and then goes
through up to ``1 + max_retx`` decode attempts with HARQ combining.
"""

from __future__ import annotations

import copy
import csv
import dataclasses
import io
import json
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .calibration import block_fading_gains
from .eesm import HarqHistory, HarqMethod
from .error_model import compute_tbler, draw_decode, make_rng, record_attempt, IR_MODES
from .errors import ConfigError, L2smError
from .link_adaptation import CsiReference, Policy, select_mcs
from .lut import BlerLut, default_lut, load_lut
from .tables import McsEntry, McsTable, coded_bits, default_tables, symbols_for_payload, tbs_calculate

MAX_RETX_LIMIT = 7
CHANNEL_STREAM = 0
DECODE_STREAM = 1


@dataclass
class McsMode:
    kind: str = "fixed"
    table: str = "Table1"
    index: int = 13
    policy: str = "error-model"


@dataclass
class Coherence:
    rbs: int = 1
    packets: float = 1  # math.inf freezes the channel


@dataclass
class Traffic:
    packet_bytes: int = 100
    interval_ms: float = 200.0
    duration_s: float = 50.0


@dataclass
class Latencies:
    proc_slots: int = 2
    decode_us: float = 100.0
    reorder_ms: float = 10.0
    harq_rtt_slots: int = 8


@dataclass
class Pathloss:
    exponent: float = 3.0
    ref_snr_db: float = 25.0
    ref_distance_m: float = 10.0


@dataclass
class SimConfig:
    seed: int = 1
    mcs_mode: McsMode = field(default_factory=McsMode)
    harq: str = "ir"
    max_retx: int = 3
    mean_snr_db: float | None = 10.0
    distance_m: float | None = None
    pathloss: Pathloss = field(default_factory=Pathloss)
    n_rbs: int = 66
    n_symbols: int = 12
    scs_khz: float = 120.0
    coherence: Coherence = field(default_factory=Coherence)
    traffic: Traffic = field(default_factory=Traffic)
    latencies: Latencies = field(default_factory=Latencies)
    target_tbler: float = 0.1
    ir_mode: str = "offset"
    redraw_on_retx: bool = True
    lut_path: str | None = None
    label: str = ""

    @property
    def snr_db(self) -> float:
        if self.mean_snr_db is not None:
            return float(self.mean_snr_db)
        pl = self.pathloss
        return pl.ref_snr_db - 10.0 * pl.exponent * math.log10(self.distance_m / pl.ref_distance_m)

    @property
    def slot_ms(self) -> float:
        return 15.0 / self.scs_khz

    @property
    def n_packets(self) -> int:
        return int(math.floor(self.traffic.duration_s * 1000.0 / self.traffic.interval_ms + 1e-9))

    @property
    def frozen_channel(self) -> bool:
        return math.isinf(self.coherence.packets)

    def validate(self) -> "SimConfig":
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(isinstance(self.seed, int) and self.seed >= 0, "seed must be a non-negative integer")
        need(self.mcs_mode.kind in ("fixed", "adaptive"), "mcs_mode.kind must be 'fixed' or 'adaptive'")
        try:
            table = McsTable.parse(self.mcs_mode.table)
            if self.mcs_mode.kind == "fixed":
                default_tables().lookup(table, self.mcs_mode.index)
            else:
                Policy.parse(self.mcs_mode.policy)
            HarqMethod.parse(self.harq)
        except L2smError as exc:
            raise ConfigError(str(exc)) from None
        need(0 <= self.max_retx <= MAX_RETX_LIMIT, f"max_retx must be in 0..{MAX_RETX_LIMIT}")
        need((self.mean_snr_db is None) != (self.distance_m is None),
             "set exactly one of mean_snr_db and distance_m")
        need(self.distance_m is None or self.distance_m > 0, "distance_m must be positive")
        need(self.n_rbs > 0 and self.n_symbols > 1, "n_rbs must be positive and n_symbols > 1")
        need(self.scs_khz > 0, "scs_khz must be positive")
        need(self.coherence.rbs > 0 and self.coherence.packets > 0, "coherence values must be positive")
        need(self.traffic.packet_bytes > 0 and self.traffic.interval_ms > 0, "traffic values must be positive")
        need(self.n_packets >= 1, "duration/interval must yield at least one packet")
        need(self.latencies.proc_slots >= 0 and self.latencies.decode_us >= 0
             and self.latencies.reorder_ms >= 0 and self.latencies.harq_rtt_slots >= 0,
             "latencies must be non-negative")
        need(0 < self.target_tbler < 1, "target_tbler must be in (0, 1)")
        need(self.ir_mode in IR_MODES, f"ir_mode must be one of {IR_MODES}")
        return self


# -- config (de)serialisation ---------------------------------------------------

_NESTED = {"mcs_mode": McsMode, "coherence": Coherence, "traffic": Traffic,
           "latencies": Latencies, "pathloss": Pathloss}


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'} must be a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown config field(s) {', '.join(sorted(where + k for k in unknown))}")
    kwargs = {}
    for key, value in data.items():
        if cls is SimConfig and key in _NESTED:
            value = _build(_NESTED[key], value, f"{key}.")
        kwargs[key] = value
    return cls(**kwargs)


def config_from_dict(data: dict) -> SimConfig:
    """Build and validate a config; a distance given without an SNR replaces the default SNR."""
    data = copy.deepcopy(data)
    if data.get("distance_m") is not None and "mean_snr_db" not in data:
        data["mean_snr_db"] = None
    cfg = _build(SimConfig, data, "")
    if isinstance(cfg.coherence.packets, str):
        try:
            cfg.coherence.packets = float(cfg.coherence.packets)
        except ValueError:
            raise ConfigError(f"coherence.packets: {cfg.coherence.packets!r} is not a number") from None
    return cfg.validate()


def config_to_dict(cfg: SimConfig) -> dict:
    d = dataclasses.asdict(cfg)
    if math.isinf(d["coherence"]["packets"]):
        d["coherence"]["packets"] = "inf"
    return d


def apply_overrides(data: dict, overrides: Sequence[str]) -> dict:
    """Apply ``a.b.c=value`` overrides; values are parsed as JSON when possible."""
    data = copy.deepcopy(data)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        path, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = data
        keys = path.strip().split(".")
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {path!r} descends into a scalar")
        node[keys[-1]] = value
    return data


def load_config_dict(path, overrides: Sequence[str] = ()) -> dict:
    """Raw config mapping from a JSON file (or defaults) with overrides applied."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8")) if path else {}
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return apply_overrides(data, overrides)


def load_config(path, overrides: Sequence[str] = ()) -> SimConfig:
    return config_from_dict(load_config_dict(path, overrides))


# -- channel -----------------------------------------------------------------------


@dataclass(frozen=True)
class ChannelState:
    gains: np.ndarray
    age: int = 0  # packets since the last draw
    draw: int = 0  # number of draws so far


def channel_step(state: ChannelState | None, config: SimConfig, rng: np.random.Generator):
    """Advance the channel by one packet; returns ``(linear SINR per RB, new state)``.

    Gains are redrawn every ``coherence.packets`` packets (never, when that is
    infinite). ``rng`` is advanced only when a new draw happens.
    """
    if state is None or (not config.frozen_channel and state.age + 1 >= config.coherence.packets):
        gains = block_fading_gains(rng, config.n_rbs, config.coherence.rbs)
        state = ChannelState(gains, 0, 0 if state is None else state.draw + 1)
    else:
        state = dataclasses.replace(state, age=state.age + 1)
    return state.gains * 10.0 ** (config.snr_db / 10.0), state


# -- simulation -------------------------------------------------------------------


@dataclass
class PacketRecord:
    packet: int
    mcs: int
    n_symbols: int
    tbs: int
    attempts: int
    delivered: bool
    delay_ms: float | None
    first_tbler: float


@dataclass
class SimMetrics:
    label: str
    seed: int
    snr_db: float
    packets_sent: int
    packets_delivered: int
    packets_lost: int
    attempts: int
    phy_failures: int
    app_loss_pct: float
    phy_loss_pct: float
    delay_mean_ms: float | None
    delay_p50_ms: float | None
    delay_p95_ms: float | None
    mcs_mode_stat: int
    trace: list[PacketRecord] = field(default_factory=list, repr=False)

    def row(self) -> dict:
        return {k: v for k, v in dataclasses.asdict(self).items() if k != "trace"}


METRIC_COLUMNS = [f.name for f in dataclasses.fields(SimMetrics) if f.name != "trace"]


def _allocation(entry: McsEntry, config: SimConfig) -> tuple[int, int]:
    """Fewest OFDM symbols (DMRS included) over the full band that carry one packet.

    Returns ``(n_symbols, tbs)``.
    """
    n_sym = symbols_for_payload(config.n_rbs, config.n_symbols, entry, 8 * config.traffic.packet_bytes)
    if n_sym is not None:
        return n_sym, tbs_calculate(config.n_rbs, n_sym, entry)
    raise ConfigError(
        f"a {config.traffic.packet_bytes}-byte packet does not fit in {config.n_rbs} RBs x "
        f"{config.n_symbols} symbols with {entry}"
    )


def run_simulation(config: SimConfig, lut: BlerLut | None = None) -> SimMetrics:
    config.validate()
    if lut is None:
        lut = load_lut(config.lut_path) if config.lut_path else default_lut()
    tables = default_tables()
    table = McsTable.parse(config.mcs_mode.table)
    method = HarqMethod.parse(config.harq)
    ch_rng = make_rng(config.seed, CHANNEL_STREAM)
    dec_rng = make_rng(config.seed, DECODE_STREAM)
    csi_ref = CsiReference(config.n_rbs, config.n_symbols, 8 * config.traffic.packet_bytes)
    slot = config.slot_ms
    decode_ms = config.latencies.decode_us / 1000.0
    first_delay = (config.latencies.proc_slots + 1) * slot + decode_ms
    retx_delay = config.latencies.harq_rtt_slots * slot + decode_ms
    snr_lin = 10.0 ** (config.snr_db / 10.0)

    allocations: dict[int, tuple[int, int]] = {}
    selected: tuple[int, int] | None = None  # (channel draw, mcs index)
    state = None
    trace = []
    prev_lost = False
    for p in range(config.n_packets):
        spectrum, state = channel_step(state, config, ch_rng)
        if config.mcs_mode.kind == "fixed":
            index = config.mcs_mode.index
        else:
            if selected is None or selected[0] != state.draw:
                res = select_mcs(config.mcs_mode.policy, spectrum, table, config.target_tbler,
                                 lut, csi_ref, tables)
                selected = (state.draw, res.mcs_index)
            index = selected[1]
        entry = tables.lookup(table, index)
        if index not in allocations:
            allocations[index] = _allocation(entry, config)
        n_sym, tbs = allocations[index]
        c_bits = coded_bits(config.n_rbs, n_sym, entry)

        history = HarqHistory.new(method)
        current = spectrum
        delivered = False
        first_tbler = None
        attempts = 0
        for attempt in range(config.max_retx + 1):
            if attempt and config.redraw_on_retx and not config.frozen_channel:
                current = block_fading_gains(ch_rng, config.n_rbs, config.coherence.rbs) * snr_lin
            out = compute_tbler(current, entry, tbs, history, lut, coded_bits=c_bits,
                                tables=tables, ir_mode=config.ir_mode)
            if first_tbler is None:
                first_tbler = out.tbler
            attempts += 1
            if draw_decode(out.tbler, dec_rng):
                delivered = True
                break
            if method is not HarqMethod.NONE:
                history = record_attempt(history, current, entry, tbs, c_bits, tables)

        delay = None
        if delivered:
            delay = first_delay + (attempts - 1) * retx_delay
            if prev_lost:
                delay += config.latencies.reorder_ms
        prev_lost = not delivered
        trace.append(PacketRecord(p, index, n_sym, tbs, attempts, delivered, delay, first_tbler))
    return summarize(config, trace)


def summarize(config: SimConfig, trace: list[PacketRecord]) -> SimMetrics:
    sent = len(trace)
    delivered = sum(r.delivered for r in trace)
    attempts = sum(r.attempts for r in trace)
    failures = attempts - delivered
    delays = np.array([r.delay_ms for r in trace if r.delivered])
    counts = Counter(r.mcs for r in trace)
    mode_stat = min(counts, key=lambda m: (-counts[m], m))

    def stat(fn):
        return float(fn(delays)) if delays.size else None

    return SimMetrics(
        label=config.label,
        seed=config.seed,
        snr_db=config.snr_db,
        packets_sent=sent,
        packets_delivered=delivered,
        packets_lost=sent - delivered,
        attempts=attempts,
        phy_failures=failures,
        app_loss_pct=100.0 * (sent - delivered) / sent,
        phy_loss_pct=100.0 * failures / attempts,
        delay_mean_ms=stat(np.mean),
        delay_p50_ms=stat(lambda d: np.percentile(d, 50)),
        delay_p95_ms=stat(lambda d: np.percentile(d, 95)),
        mcs_mode_stat=mode_stat,
        trace=trace,
    )


def _run_one(args):
    config, lut = args
    return run_simulation(config, lut)


def run_sweep(configs: Sequence[SimConfig], lut: BlerLut | None = None, jobs: int = 1) -> list[SimMetrics]:
    """Run independent replications; results come back in ``configs`` order."""
    if jobs <= 1:
        return [run_simulation(c, lut) for c in configs]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_one, [(c, lut) for c in configs]))


def sweep_dicts(base: dict, key: str, values: Sequence[Any]) -> list[dict]:
    """One raw config per value of the dotted field ``key``.

    Sweeping ``distance_m`` clears ``mean_snr_db`` and vice versa.
    """
    out = []
    for v in values:
        data = apply_overrides(base, [f"{key}={json.dumps(v)}"])
        if key == "distance_m":
            data["mean_snr_db"] = None
        elif key == "mean_snr_db":
            data["distance_m"] = None
        out.append(data)
    return out


def expand_sweep(base: SimConfig, key: str, values: Sequence[Any]) -> list[SimConfig]:
    """One validated config per value of the dotted field ``key``."""
    return [config_from_dict(d) for d in sweep_dicts(config_to_dict(base), key, values)]


# -- output -----------------------------------------------------------------------


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def metrics_to_csv(rows: Sequence[SimMetrics]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRIC_COLUMNS)
    for m in rows:
        r = m.row()
        writer.writerow([_fmt(r[c]) for c in METRIC_COLUMNS])
    return buf.getvalue()


def metrics_from_csv(text: str) -> list[dict]:
    ints = {"seed", "packets_sent", "packets_delivered", "packets_lost", "attempts",
            "phy_failures", "mcs_mode_stat"}
    out = []
    for r in csv.DictReader(io.StringIO(text)):
        row = {}
        for k, v in r.items():
            if k == "label":
                row[k] = v
            elif v == "":
                row[k] = None
            else:
                row[k] = int(v) if k in ints else float(v)
        out.append(row)
    return out


def trace_to_csv(metrics: SimMetrics) -> str:
    buf = io.StringIO()
    cols = [f.name for f in dataclasses.fields(PacketRecord)]
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for rec in metrics.trace:
        d = dataclasses.asdict(rec)
        writer.writerow([_fmt(d[c]) for c in cols])
    return buf.getvalue()


def emit_results(rows: Sequence[SimMetrics], fmt: str, path, trace_path=None) -> None:
    """Write one row per run as ``csv`` or ``json``; optionally the packet trace of the first run."""
    if fmt == "csv":
        text = metrics_to_csv(rows)
    elif fmt == "json":
        text = json.dumps({"rows": [m.row() for m in rows]}, sort_keys=True, indent=2) + "\n"
    else:
        raise ConfigError(f"unknown output format {fmt!r}")
    Path(path).write_text(text, encoding="utf-8")
    if trace_path is not None and rows:
        Path(trace_path).write_text(trace_to_csv(rows[0]), encoding="utf-8")
