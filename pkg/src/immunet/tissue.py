"""Tissue runtime: antigen store, signal matrix, and the tick loop.

Time is an abstract unsigned tick. Within one tick the phase order is
fixed (antigen pushes, then signal refresh, then cell updates) so that a
run is a pure function of its inputs and seed. Cells see every event
stamped at or before the current tick.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

from .errors import (
    ConfigError,
    DomainViolationError,
    SignalRangeError,
    TraceOrderError,
)

DEFAULT_SIGNAL_MAX = 100.0
DEFAULT_STORE_CAPACITY = 500

SIGNAL_CHANNELS = ("pamp", "danger", "safe", "inflammation")


class CellState(enum.Enum):
    IMMATURE = "immature"
    SEMI_MATURE = "semi-mature"
    MATURE = "mature"


@dataclass(frozen=True)
class AntigenEvent:
    """One categorical observation paired with its arrival tick."""

    antigen_type: int
    tick: int


@dataclass(frozen=True)
class SignalSample:
    """One tick's values for the four signal categories."""

    pamp: float
    danger: float
    safe: float
    inflammation: float
    tick: int = 0

    def channel_values(self) -> tuple[float, float, float, float]:
        return (self.pamp, self.danger, self.safe, self.inflammation)


ZERO_SAMPLE = SignalSample(0.0, 0.0, 0.0, 0.0, 0)


@dataclass(frozen=True)
class PresentationRecord:
    """One antigen presented by a migrated cell.

    context is 0 for a semi-mature presentation and 1 for a mature one.
    """

    antigen_type: int
    context: int
    tick: int


@dataclass(frozen=True)
class PopulationConfig:
    population_size: int = 100
    cell_update_period: int = 1
    signal_update_period: int = 1
    rng_seed: int = 0

    def __post_init__(self):
        if self.population_size < 1:
            raise ConfigError("population_size must be >= 1")
        if self.cell_update_period < 1 or self.signal_update_period < 1:
            raise ConfigError("update periods must be >= 1")


class TissueCompartment:
    """Shared environment: a bounded FIFO antigen store plus the latest signals."""

    def __init__(
        self,
        domain_size: int,
        capacity: int = DEFAULT_STORE_CAPACITY,
        signal_max: float = DEFAULT_SIGNAL_MAX,
    ):
        if domain_size < 1:
            raise ConfigError("antigen domain_size must be >= 1")
        if capacity < 1:
            raise ConfigError("antigen store capacity must be >= 1")
        if not signal_max > 0:
            raise ConfigError("signal_max must be > 0")
        self.domain_size = domain_size
        self.capacity = capacity
        self.signal_max = float(signal_max)
        # deque(maxlen=...) evicts the oldest entry on append, giving strict FIFO.
        self.antigen_store: deque[AntigenEvent] = deque(maxlen=capacity)
        self.signal_matrix: SignalSample = ZERO_SAMPLE
        self.tick_clock = 0

    def push_antigen(self, event: AntigenEvent) -> None:
        """Append an event, evicting the oldest one if the store is full."""
        if not 0 <= event.antigen_type < self.domain_size:
            raise DomainViolationError(
                f"antigen_type {event.antigen_type} outside [0, {self.domain_size})"
            )
        self.antigen_store.append(event)

    def update_signals(self, sample: SignalSample) -> None:
        """Replace the signal matrix with `sample` (last writer wins)."""
        for name, value in zip(SIGNAL_CHANNELS, sample.channel_values()):
            if not 0.0 <= value <= self.signal_max:
                raise SignalRangeError(name, value, self.signal_max)
        self.signal_matrix = sample

    def take_antigen(self) -> AntigenEvent | None:
        """Remove and return the oldest stored event, or None when empty."""
        if self.antigen_store:
            return self.antigen_store.popleft()
        return None


class CellEngine(Protocol):
    """What the tick loop needs from a cell population."""

    def step(self, compartment: TissueCompartment, tick: int) -> list[PresentationRecord]:
        """Run one update over every live cell; return records emitted this tick."""
        ...

    def live_count(self) -> int:
        ...


def _check_sorted(records: Sequence, kind: str) -> None:
    prev = None
    for i, rec in enumerate(records):
        if prev is not None and rec.tick < prev:
            raise TraceOrderError(
                f"{kind} trace not sorted: tick {rec.tick} after {prev} (record {i})"
            )
        prev = rec.tick


def run_ticks(
    compartment: TissueCompartment,
    population: CellEngine,
    antigen_trace: Sequence[AntigenEvent],
    signal_trace: Sequence[SignalSample],
    n: int,
    *,
    cell_update_period: int = 1,
    signal_update_period: int = 1,
    on_tick: Callable[[int, TissueCompartment, CellEngine], None] | None = None,
) -> list[PresentationRecord]:
    """Drive `population` over `n` ticks of the given traces.

    Per tick t: push every antigen event stamped <= t, then (on signal
    refresh ticks) apply the latest sample stamped <= t, then (on cell
    update ticks) step the population. Returns the presentation log in
    emission order. `on_tick` runs after all three phases; it exists for
    invariant checks and progress hooks.
    """
    if n < 0:
        raise ConfigError("tick count must be >= 0")
    if cell_update_period < 1 or signal_update_period < 1:
        raise ConfigError("update periods must be >= 1")
    _check_sorted(antigen_trace, "antigen")
    _check_sorted(signal_trace, "signal")

    log: list[PresentationRecord] = []
    ai = 0
    si = 0
    latest: SignalSample | None = None
    for t in range(n):
        compartment.tick_clock = t
        while ai < len(antigen_trace) and antigen_trace[ai].tick <= t:
            compartment.push_antigen(antigen_trace[ai])
            ai += 1
        if t % signal_update_period == 0:
            while si < len(signal_trace) and signal_trace[si].tick <= t:
                latest = signal_trace[si]
                si += 1
            if latest is not None:
                compartment.update_signals(latest)
        if t % cell_update_period == 0:
            log.extend(population.step(compartment, t))
        if on_tick is not None:
            on_tick(t, compartment, population)
    return log
