"""Seeded synthetic scenario generators.

Two shapes: a ping-scan process-discrimination trace (global packet and
error-rate signals, per-process antigen) and normal/anomalous syscall
session sets with a normal-only training corpus. Everything is a pure
function of (scenario, seed).
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Mapping

from .errors import ConfigError
from .tissue import AntigenEvent, SignalSample

LABEL_ANOMALOUS = "anomalous"
LABEL_NORMAL = "normal"

BEHAVIORS = ("normal-steady", "normal-bursty", "scanner")


def _count(rng: random.Random, mean: float, sd: float) -> int:
    if mean <= 0:
        return 0
    return max(0, int(round(rng.gauss(mean, sd))))


def _rate(rng: random.Random, mean: float, sd: float) -> float:
    if mean <= 0:
        return 0.0
    return max(0.0, rng.gauss(mean, sd))


@dataclass(frozen=True)
class BehaviorRates:
    antigen_rate: float  # mean antigen events per tick
    packet_rate: float  # mean packets per tick
    error_rate: float  # mean ICMP-unreachable errors per tick
    jitter: float = 0.15  # gaussian sd as a fraction of each mean


@dataclass(frozen=True)
class ProcessSpec:
    process_id: int
    behavior: str
    name: str = ""
    active_window: tuple[int, int] | None = None  # [start, end) ticks; None = whole run
    burst_period: int = 0  # normal-bursty: alternate on/off every this many ticks


@dataclass(frozen=True)
class PingScanScenario:
    duration: int
    processes: tuple[ProcessSpec, ...]
    scan_window: tuple[int, int]
    rates: Mapping[str, BehaviorRates]
    ground_truth: Mapping[int, str]
    signal_max: float = 100.0
    packet_norm: float = 70.0  # raw packets/tick mapping to signal_max
    error_norm: float = 25.0  # raw errors/tick mapping to signal_max
    # The scanner alternates probe bursts, so the packet rate keeps moving
    # during the scan and the inverse-rate-of-change signal stays low.
    scan_pulse: tuple[float, float] = (1.6, 0.4)
    allow_multiple_scanners: bool = False

    def __post_init__(self):
        start, end = self.scan_window
        if not (0 <= start < end <= self.duration):
            raise ConfigError(
                f"scan_window {self.scan_window} must lie inside [0, {self.duration})"
            )
        scanners = [p for p in self.processes if p.behavior == "scanner"]
        if len(scanners) != 1 and not self.allow_multiple_scanners:
            raise ConfigError(f"expected exactly one scanner, found {len(scanners)}")
        for proc in self.processes:
            if proc.behavior not in BEHAVIORS:
                raise ConfigError(f"unknown behavior {proc.behavior!r}")
            if proc.behavior not in self.rates:
                raise ConfigError(f"no rates configured for behavior {proc.behavior!r}")
            if proc.process_id not in self.ground_truth:
                raise ConfigError(f"process {proc.process_id} has no ground-truth label")


def default_ping_scan(duration: int = 500, seedless_window: bool = True) -> PingScanScenario:
    """Four processes: a scanner, the terminal it runs in, and two daemons.

    The terminal session is only active around the scan it launches, so
    its antigen co-occurs with the scan evidence; the daemons run for the
    whole trace.
    """
    scan_start = int(duration * 0.40)
    scan_end = int(duration * 0.64)
    lead = max(2, duration // 50)
    processes = (
        ProcessSpec(101, "scanner", name="nmap", active_window=(scan_start, scan_end)),
        ProcessSpec(
            102,
            "normal-bursty",
            name="pts",
            active_window=(scan_start - lead, min(duration, scan_end + lead)),
        ),
        ProcessSpec(103, "normal-steady", name="sshd"),
        ProcessSpec(104, "normal-steady", name="bash"),
    )
    rates = {
        "scanner": BehaviorRates(antigen_rate=3.0, packet_rate=50.0, error_rate=18.0, jitter=0.2),
        "normal-bursty": BehaviorRates(antigen_rate=2.5, packet_rate=2.0, error_rate=0.0, jitter=0.15),
        "normal-steady": BehaviorRates(antigen_rate=2.0, packet_rate=3.0, error_rate=0.0, jitter=0.12),
    }
    ground_truth = {101: LABEL_ANOMALOUS, 102: LABEL_ANOMALOUS, 103: LABEL_NORMAL, 104: LABEL_NORMAL}
    return PingScanScenario(
        duration=duration,
        processes=processes,
        scan_window=(scan_start, scan_end),
        rates=rates,
        ground_truth=ground_truth,
    )


def _process_active(proc: ProcessSpec, tick: int) -> bool:
    if proc.active_window is not None:
        start, end = proc.active_window
        if not start <= tick < end:
            return False
    if proc.behavior == "normal-bursty" and proc.burst_period:
        return (tick // proc.burst_period) % 2 == 0
    return True


def gen_ping_scan(
    scenario: PingScanScenario, seed: int
) -> tuple[list[AntigenEvent], list[SignalSample], dict[int, str]]:
    """Generate (antigen trace, signal trace, ground-truth labels).

    Antigen events are process IDs emitted at each process's activity
    rate. The danger signal tracks total packets per tick, PAMP tracks
    error packets, and safe is the inverse rate of change of the danger
    signal; inflammation is fixed at zero.
    """
    rng = random.Random(seed)
    antigen: list[AntigenEvent] = []
    raw_packets = [0.0] * scenario.duration
    raw_errors = [0.0] * scenario.duration

    for tick in range(scenario.duration):
        for proc in scenario.processes:
            if not _process_active(proc, tick):
                continue
            rates = scenario.rates[proc.behavior]
            pulse = 1.0
            if proc.behavior == "scanner":
                hi, lo = scenario.scan_pulse
                pulse = hi if tick % 2 == 0 else lo
            n_events = _count(rng, rates.antigen_rate, rates.jitter * rates.antigen_rate + 0.4)
            antigen.extend(AntigenEvent(proc.process_id, tick) for _ in range(n_events))
            raw_packets[tick] += _rate(
                rng, rates.packet_rate * pulse, rates.jitter * rates.packet_rate
            )
            raw_errors[tick] += _rate(
                rng, rates.error_rate * pulse, rates.jitter * rates.error_rate
            )

    m = scenario.signal_max
    signals: list[SignalSample] = []
    prev_danger: float | None = None
    for tick in range(scenario.duration):
        danger = min(m, raw_packets[tick] / scenario.packet_norm * m)
        pamp = min(m, raw_errors[tick] / scenario.error_norm * m)
        delta = 0.0 if prev_danger is None else abs(danger - prev_danger)
        safe = m / (1.0 + delta)
        signals.append(SignalSample(pamp, danger, safe, 0.0, tick))
        prev_danger = danger
    return antigen, signals, dict(scenario.ground_truth)


@dataclass(frozen=True)
class SessionScenario:
    """Normal/anomalous syscall sessions plus a normal-only training corpus.

    Anomalous sessions get a burst of out-of-training syscalls followed,
    a few ticks later, by out-of-training signal values — close enough
    together that the cells which collected the injected antigen are
    still sampling when the infectious signal arrives. The timing
    defaults pair with the default detector lifespan of 20 updates.
    """

    n_normal: int = 12
    n_anomalous: int = 4
    antigen_domain_size: int = 256
    signal_domain_sizes: tuple[int, int, int] = (256, 256, 256)
    normal_syscalls: frozenset[int] = frozenset(range(180))
    normal_signal_values: tuple[frozenset[int], frozenset[int], frozenset[int]] = (
        frozenset({8, 16, 24, 32, 40}),
        frozenset({10, 20, 30}),
        frozenset({5, 15, 25, 35}),
    )
    injected_syscalls: tuple[int, ...] = (200, 210, 220)
    injected_signal_values: tuple[tuple[int, ...], ...] = ((240,), (), (201,))
    session_length: int = 80
    training_length: int = 400
    syscall_rate: float = 3.0
    injection_start: int = 30
    injection_length: int = 24
    signal_injection_delay: int = 6

    def __post_init__(self):
        if self.n_normal < 0 or self.n_anomalous < 0:
            raise ConfigError("session counts must be >= 0")
        domain = set(range(self.antigen_domain_size))
        if not self.normal_syscalls:
            raise ConfigError("normal_syscalls must be nonempty")
        if not self.normal_syscalls < domain:
            raise ConfigError(
                "inseparable scenario: normal_syscalls must be a strict subset "
                "of the antigen domain"
            )
        for value in self.injected_syscalls:
            if value in self.normal_syscalls or value not in domain:
                raise ConfigError(f"injected syscall {value} must be out-of-set but in-domain")
        for channel in range(3):
            pool = self.normal_signal_values[channel]
            size = self.signal_domain_sizes[channel]
            if not pool or any(not 0 <= v < size for v in pool):
                raise ConfigError(f"bad normal signal pool for channel {channel}")
            for value in self.injected_signal_values[channel]:
                if value in pool or not 0 <= value < size:
                    raise ConfigError(
                        f"injected signal {value} on channel {channel} must be "
                        "out-of-training but in-domain"
                    )
        if self.n_anomalous > 0:
            if not self.injected_syscalls:
                raise ConfigError("anomalous sessions need injected syscalls")
            if not any(self.injected_signal_values):
                raise ConfigError("anomalous sessions need injected signal values")
            end = self.injection_start + self.injection_length
            if not (0 <= self.injection_start and end <= self.session_length):
                raise ConfigError("injection window must fit inside the session")
            if not 0 <= self.signal_injection_delay < self.injection_length:
                raise ConfigError("signal injection must start inside the injection window")


@dataclass(frozen=True)
class LabelledSession:
    session_id: str
    antigen: tuple[AntigenEvent, ...]
    signals: tuple[SignalSample, ...]
    label: str


@dataclass(frozen=True)
class SessionSet:
    training_antigen: tuple[AntigenEvent, ...]
    training_signals: tuple[SignalSample, ...]
    sessions: tuple[LabelledSession, ...]

    def labels(self) -> dict[str, str]:
        return {s.session_id: s.label for s in self.sessions}


def _normal_tick_signals(
    scenario: SessionScenario, rng: random.Random, pools: list[list[int]], cover: list[list[int]]
) -> list[int]:
    values = []
    for channel in range(3):
        if cover[channel]:
            values.append(cover[channel].pop(0))
        else:
            values.append(rng.choice(pools[channel]))
    return values


def _gen_normal_traces(
    scenario: SessionScenario, rng: random.Random, length: int, ensure_coverage: bool
) -> tuple[list[AntigenEvent], list[SignalSample]]:
    syscall_pool = sorted(scenario.normal_syscalls)
    signal_pools = [sorted(p) for p in scenario.normal_signal_values]
    cover_syscalls = list(syscall_pool) if ensure_coverage else []
    cover_signals = [list(p) if ensure_coverage else [] for p in signal_pools]

    antigen: list[AntigenEvent] = []
    signals: list[SignalSample] = []
    for tick in range(length):
        n = _count(rng, scenario.syscall_rate, 1.0)
        if cover_syscalls and n == 0:
            n = 1
        for _ in range(n):
            if cover_syscalls:
                value = cover_syscalls.pop(0)
            else:
                value = rng.choice(syscall_pool)
            antigen.append(AntigenEvent(value, tick))
        v = _normal_tick_signals(scenario, rng, signal_pools, cover_signals)
        signals.append(SignalSample(float(v[0]), float(v[1]), float(v[2]), 0.0, tick))
    return antigen, signals


def _inject_anomaly(
    scenario: SessionScenario,
    antigen: list[AntigenEvent],
    signals: list[SignalSample],
) -> tuple[list[AntigenEvent], list[SignalSample]]:
    start = scenario.injection_start
    end = start + scenario.injection_length
    sig_start = start + scenario.signal_injection_delay

    extra: list[AntigenEvent] = []
    for i, tick in enumerate(range(start, end)):
        for j in range(2):
            value = scenario.injected_syscalls[(2 * i + j) % len(scenario.injected_syscalls)]
            extra.append(AntigenEvent(value, tick))
    merged = sorted(antigen + extra, key=lambda e: e.tick)

    injected_channels = [
        (channel, values)
        for channel, values in enumerate(scenario.injected_signal_values)
        if values
    ]
    out_signals: list[SignalSample] = []
    for sample in signals:
        if sig_start <= sample.tick < end:
            channel, values = injected_channels[sample.tick % len(injected_channels)]
            value = float(values[sample.tick % len(values)])
            fields = [sample.pamp, sample.danger, sample.safe]
            fields[channel] = value
            sample = SignalSample(fields[0], fields[1], fields[2], 0.0, sample.tick)
        out_signals.append(sample)
    return merged, out_signals


def gen_sessions(scenario: SessionScenario, seed: int) -> SessionSet:
    """Generate the training corpus and the labelled test session set.

    Training enumerates every normal value at least once so that a test
    session drawn from the same pools can never look novel; anomalous
    test sessions are normal sessions plus the configured injections.
    """
    rng = random.Random(seed)
    training_antigen, training_signals = _gen_normal_traces(
        scenario, rng, scenario.training_length, ensure_coverage=True
    )

    sessions: list[LabelledSession] = []
    total = scenario.n_normal + scenario.n_anomalous
    for index in range(total):
        anomalous = index >= scenario.n_normal
        antigen, signals = _gen_normal_traces(
            scenario, rng, scenario.session_length, ensure_coverage=False
        )
        if anomalous:
            antigen, signals = _inject_anomaly(scenario, antigen, signals)
        sessions.append(
            LabelledSession(
                session_id=f"session_{index:03d}",
                antigen=tuple(antigen),
                signals=tuple(signals),
                label=LABEL_ANOMALOUS if anomalous else LABEL_NORMAL,
            )
        )
    return SessionSet(
        training_antigen=tuple(training_antigen),
        training_signals=tuple(training_signals),
        sessions=tuple(sessions),
    )
