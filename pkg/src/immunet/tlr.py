"""TLR engine: negative-selection training over discrete signal and antigen
values, a binary-match DC lifecycle, and per-session T-cell verdicts.

Training records which values occur in normal data; the complements of
those observations (per signal channel, and over the antigen domain)
become the detector repertoires. A DC matures the moment any observed
channel value falls in that channel's infectious list, and only mature
DCs can activate T-cells, so a session with no unseen signal value can
never be flagged.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import (
    ConfigError,
    DomainViolationError,
    LifecycleError,
    TraceParseError,
    UntrainableModelError,
)
from .tissue import (
    AntigenEvent,
    CellState,
    PresentationRecord,
    SignalSample,
    TissueCompartment,
    run_ticks,
)

# TLR reads three discrete channels off a sample; inflammation is unused here.
TLR_SIGNAL_CHANNELS = ("pamp", "danger", "safe")


@dataclass(frozen=True)
class TlrDomains:
    """Declared finite value ranges: [0, size) per channel and for antigen."""

    antigen_domain_size: int = 256
    signal_domain_sizes: tuple[int, int, int] = (256, 256, 256)

    def __post_init__(self):
        if self.antigen_domain_size < 1:
            raise ConfigError("antigen domain size must be >= 1")
        if len(self.signal_domain_sizes) != 3 or any(
            s < 1 for s in self.signal_domain_sizes
        ):
            raise ConfigError("need 3 signal channel domain sizes, each >= 1")


@dataclass(frozen=True)
class TlrConfig:
    dc_population: int = 50
    tcell_population: int = 100
    dc_lifespan: int = 20
    receptors_per_dc: int = 1
    rng_seed: int = 0
    # When set, a value matures a DC if it is infectious on ANY channel,
    # not just the channel it arrived on.
    global_signal_matching: bool = False

    def __post_init__(self):
        for name in ("dc_population", "tcell_population", "dc_lifespan", "receptors_per_dc"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")


@dataclass(frozen=True)
class TlrModel:
    """Complement sets produced by negative-selection training."""

    domains: TlrDomains
    tcell_complement: frozenset[int]
    infectious: tuple[frozenset[int], frozenset[int], frozenset[int]]

    def receptor_pool(self) -> list[int]:
        """Union of the per-channel infectious lists, sorted."""
        return sorted(set().union(*self.infectious))

    def signal_is_infectious(self, channel: int, value: int, *, global_union: bool = False) -> bool:
        if global_union:
            return any(value in s for s in self.infectious)
        return value in self.infectious[channel]


class TCellState(enum.Enum):
    NAIVE = "naive"
    ACTIVATED = "activated"


@dataclass
class TCell:
    receptor: int
    state: TCellState = TCellState.NAIVE


@dataclass
class TlrDC:
    """An immature detector with a finite sampling lifetime."""

    lifespan_remaining: int
    signal_receptors: tuple[int, ...]
    state: CellState = CellState.IMMATURE
    collected_antigen: list[int] = field(default_factory=list)


@dataclass(frozen=True)
class SessionVerdict:
    """Outcome of classifying one bounded (antigen, signal) trace pair."""

    anomalous: bool
    activated_count: int
    triggering_antigen: frozenset[int]
    mature_dc_count: int = 0
    semi_dc_count: int = 0


def discretize_sample(sample: SignalSample, domains: TlrDomains) -> tuple[int, int, int]:
    """Reinterpret a sample's (pamp, danger, safe) values as discrete channel values."""
    values = []
    for channel, name in enumerate(TLR_SIGNAL_CHANNELS):
        raw = getattr(sample, name)
        value = int(raw)
        if value != raw:
            raise DomainViolationError(
                f"signal channel '{name}' value {raw!r} is not a discrete value"
            )
        size = domains.signal_domain_sizes[channel]
        if not 0 <= value < size:
            raise DomainViolationError(
                f"signal channel '{name}' value {value} outside [0, {size})"
            )
        values.append(value)
    return tuple(values)


def train(
    normal_antigen: Sequence[AntigenEvent],
    normal_signals: Sequence[SignalSample],
    domains: TlrDomains,
) -> TlrModel:
    """Build complement sets from normal-only traces.

    Every value observed in training is deleted from its domain; what
    remains is the detector repertoire. Rejects a model whose antigen
    complement is empty or whose infectious lists are all empty, since
    such a model could never detect anything.
    """
    observed_antigen: set[int] = set()
    for event in normal_antigen:
        if not 0 <= event.antigen_type < domains.antigen_domain_size:
            raise DomainViolationError(
                f"training antigen {event.antigen_type} outside "
                f"[0, {domains.antigen_domain_size})"
            )
        observed_antigen.add(event.antigen_type)

    observed_signals: list[set[int]] = [set(), set(), set()]
    for sample in normal_signals:
        for channel, value in enumerate(discretize_sample(sample, domains)):
            observed_signals[channel].add(value)

    tcell_complement = frozenset(range(domains.antigen_domain_size)) - observed_antigen
    infectious = tuple(
        frozenset(range(domains.signal_domain_sizes[c])) - observed_signals[c]
        for c in range(3)
    )
    if not tcell_complement:
        raise UntrainableModelError("training covered the whole antigen domain")
    if not any(infectious):
        raise UntrainableModelError("training covered every signal channel domain")
    return TlrModel(domains=domains, tcell_complement=tcell_complement, infectious=infectious)


def _spawn_dc(pool: list[int], config: TlrConfig, rng: random.Random) -> TlrDC:
    receptors = tuple(rng.sample(pool, config.receptors_per_dc))
    return TlrDC(lifespan_remaining=config.dc_lifespan, signal_receptors=receptors)


def _spawn_tcells(model: TlrModel, config: TlrConfig, rng: random.Random) -> list[TCell]:
    values = sorted(model.tcell_complement)
    n = config.tcell_population
    if n >= len(values):
        # Full coverage first, then uniform extras.
        receptors = values * (n // len(values)) + rng.sample(values, n % len(values))
        rng.shuffle(receptors)
    else:
        receptors = rng.sample(values, n)
    return [TCell(receptor=r) for r in receptors]


def spawn_populations(model: TlrModel, config: TlrConfig) -> tuple[list[TlrDC], list[TCell]]:
    """Create the starting DC and T-cell populations for a trained model.

    DC signal receptors are drawn without replacement from the union of
    the infectious lists; T-cell receptors cover every complement value
    whenever the population is large enough to allow it.
    """
    pool = model.receptor_pool()
    if config.receptors_per_dc > len(pool):
        raise ConfigError(
            f"receptors_per_dc {config.receptors_per_dc} exceeds the "
            f"{len(pool)} available infectious values"
        )
    rng = random.Random(config.rng_seed)
    dcs = [_spawn_dc(pool, config, rng) for _ in range(config.dc_population)]
    tcells = _spawn_tcells(model, config, rng)
    return dcs, tcells


def dc_step(
    dc: TlrDC,
    values: tuple[int, int, int],
    compartment: TissueCompartment,
    model: TlrModel,
    config: TlrConfig,
) -> bool:
    """One update of an immature DC; returns True when it migrates.

    The cell first samples one antigen (oldest) if any is stored, then
    checks the observed channel values: any infectious match matures the
    cell immediately, otherwise its remaining lifespan ticks down and it
    migrates semi-mature on reaching zero.
    """
    if dc.state is not CellState.IMMATURE:
        raise LifecycleError("dc_step on a migrated cell")
    event = compartment.take_antigen()
    if event is not None:
        dc.collected_antigen.append(event.antigen_type)
    for channel in range(3):
        if model.signal_is_infectious(
            channel, values[channel], global_union=config.global_signal_matching
        ):
            dc.state = CellState.MATURE
            return True
    dc.lifespan_remaining -= 1
    if dc.lifespan_remaining <= 0:
        dc.state = CellState.SEMI_MATURE
        return True
    return False


def lymph_interact(
    migrated_dc: TlrDC,
    tcells: list[TCell],
    complement_pool: Sequence[int],
    rng: random.Random,
) -> int:
    """Present a migrated DC's antigen to the T-cell population.

    A mature DC activates every naive T-cell whose receptor matches one
    of its antigen values; a semi-mature DC kills those T-cells instead,
    and each kill is replaced in place by a fresh naive cell with a
    receptor redrawn from the complement. Returns the number of cells
    newly activated.
    """
    if migrated_dc.state is CellState.IMMATURE:
        raise LifecycleError("lymph_interact on an immature cell")
    mature = migrated_dc.state is CellState.MATURE
    newly_activated = 0
    for value in dict.fromkeys(migrated_dc.collected_antigen):
        for i, tc in enumerate(tcells):
            if tc.receptor != value or tc.state is not TCellState.NAIVE:
                continue
            if mature:
                tc.state = TCellState.ACTIVATED
                newly_activated += 1
            else:
                tcells[i] = TCell(receptor=rng.choice(complement_pool))
    return newly_activated


class TlrPopulation:
    """Both TLR cell populations plus their interaction bookkeeping.

    Fits the tissue loop's engine protocol; migrated DCs interact with
    the T-cell pool and are replaced within the same update.
    """

    def __init__(self, model: TlrModel, config: TlrConfig):
        self.model = model
        self.config = config
        self._pool = model.receptor_pool()
        if config.receptors_per_dc > len(self._pool):
            raise ConfigError(
                f"receptors_per_dc {config.receptors_per_dc} exceeds the "
                f"{len(self._pool)} available infectious values"
            )
        self._complement_pool = sorted(model.tcell_complement)
        self.rng = random.Random(config.rng_seed)
        self.dcs = [_spawn_dc(self._pool, config, self.rng) for _ in range(config.dc_population)]
        self.tcells = _spawn_tcells(model, config, self.rng)
        self.presented_total = 0
        self.migrated_sampled_total = 0
        self.mature_migrations = 0
        self.semi_migrations = 0
        self.activations_total = 0
        self.activating_antigen: set[int] = set()

    def live_count(self) -> int:
        return len(self.dcs)

    def tcell_count(self) -> int:
        return len(self.tcells)

    def unpresented_antigen(self) -> int:
        return sum(len(dc.collected_antigen) for dc in self.dcs)

    def activated_count(self) -> int:
        return sum(1 for tc in self.tcells if tc.state is TCellState.ACTIVATED)

    def step(self, compartment: TissueCompartment, tick: int) -> list[PresentationRecord]:
        values = discretize_sample(compartment.signal_matrix, self.model.domains)
        records: list[PresentationRecord] = []
        for i, dc in enumerate(self.dcs):
            if not dc_step(dc, values, compartment, self.model, self.config):
                continue
            context = 1 if dc.state is CellState.MATURE else 0
            records.extend(
                PresentationRecord(a, context, tick) for a in dc.collected_antigen
            )
            self.migrated_sampled_total += len(dc.collected_antigen)
            if dc.state is CellState.MATURE:
                self.mature_migrations += 1
            else:
                self.semi_migrations += 1
            activated = lymph_interact(dc, self.tcells, self._complement_pool, self.rng)
            if activated:
                self.activations_total += activated
                self.activating_antigen.update(dc.collected_antigen)
            self.dcs[i] = _spawn_dc(self._pool, self.config, self.rng)
        self.presented_total += len(records)
        return records

    def verdict(self) -> SessionVerdict:
        activated = self.activated_count()
        return SessionVerdict(
            anomalous=activated >= 1,
            activated_count=activated,
            triggering_antigen=frozenset(self.activating_antigen),
            mature_dc_count=self.mature_migrations,
            semi_dc_count=self.semi_migrations,
        )


def classify_session(
    antigen_trace: Sequence[AntigenEvent],
    signal_trace: Sequence[SignalSample],
    model: TlrModel,
    config: TlrConfig,
    *,
    store_capacity: int = 500,
) -> SessionVerdict:
    """Run one session through fresh populations; anomalous iff any T-cell activated."""
    n = 0
    if antigen_trace:
        n = antigen_trace[-1].tick + 1
    if signal_trace:
        n = max(n, signal_trace[-1].tick + 1)
    # The tissue range check must admit every in-domain discrete value.
    signal_max = float(max(max(model.domains.signal_domain_sizes) - 1, 1))
    compartment = TissueCompartment(
        domain_size=model.domains.antigen_domain_size,
        capacity=store_capacity,
        signal_max=signal_max,
    )
    population = TlrPopulation(model, config)
    run_ticks(compartment, population, antigen_trace, signal_trace, n)
    return population.verdict()


MODEL_HEADER = "tlr-model v1"


def save_model(model: TlrModel, path: str | Path) -> None:
    """Serialize the trained complements as versioned text."""
    lines = [MODEL_HEADER]
    lines.append("antigen_complement: " + " ".join(str(v) for v in sorted(model.tcell_complement)))
    for channel in range(3):
        values = " ".join(str(v) for v in sorted(model.infectious[channel]))
        lines.append(f"infectious[{channel}]: {values}".rstrip())
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _parse_value_line(line: str, prefix: str, line_no: int) -> frozenset[int]:
    if not line.startswith(prefix):
        raise TraceParseError(f"expected '{prefix}' line", line_no)
    body = line[len(prefix):].strip()
    try:
        return frozenset(int(tok) for tok in body.split()) if body else frozenset()
    except ValueError:
        raise TraceParseError(f"non-integer value in '{prefix}' line", line_no) from None


def load_model(path: str | Path, domains: TlrDomains) -> TlrModel:
    """Parse a saved model and validate it against the declared domains."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != MODEL_HEADER:
        raise TraceParseError(f"missing '{MODEL_HEADER}' header", 1)
    if len(lines) < 5:
        raise TraceParseError("model file truncated", len(lines))

    complement = _parse_value_line(lines[1], "antigen_complement:", 2)
    infectious = tuple(
        _parse_value_line(lines[2 + c], f"infectious[{c}]:", 3 + c) for c in range(3)
    )

    if not complement:
        raise UntrainableModelError("model file has an empty antigen complement")
    if not any(infectious):
        raise UntrainableModelError("model file has no infectious signal values")
    bad = [v for v in complement if not 0 <= v < domains.antigen_domain_size]
    if bad:
        raise ConfigError(f"model antigen value {bad[0]} outside the configured domain")
    for channel in range(3):
        size = domains.signal_domain_sizes[channel]
        bad = [v for v in infectious[channel] if not 0 <= v < size]
        if bad:
            raise ConfigError(
                f"model infectious[{channel}] value {bad[0]} outside the configured domain"
            )
    return TlrModel(domains=domains, tcell_complement=complement, infectious=infectious)
