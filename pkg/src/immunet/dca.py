"""Dendritic cell engine: weighted-sum signal fusion, migration lifecycle,
antigen presentation, and MCAV scoring."""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import ConfigError, LifecycleError
from .tissue import (
    DEFAULT_SIGNAL_MAX,
    CellState,
    PresentationRecord,
    SignalSample,
    TissueCompartment,
)

SIGNAL_INPUTS = ("pamp", "danger", "safe")

LABEL_ANOMALOUS = "anomalous"
LABEL_NORMAL = "normal"
LABEL_UNSCORED = "unscored"


@dataclass(frozen=True)
class WeightMatrix:
    """Per-output weights over the (pamp, danger, safe) inputs.

    The costimulation row must be non-negative so the migration clock
    never runs backwards under non-negative signals. The default mature
    row carries a negative safe weight: safe signal actively suppresses
    the mature context.
    """

    csm: tuple[float, float, float] = (2.0, 1.0, 2.0)
    semi: tuple[float, float, float] = (0.0, 0.0, 3.0)
    mature: tuple[float, float, float] = (2.0, 1.0, -3.0)

    def __post_init__(self):
        for row in (self.csm, self.semi, self.mature):
            if len(row) != 3:
                raise ConfigError("each weight row needs exactly 3 entries")
        if any(w < 0 for w in self.csm):
            raise ConfigError("csm weights must all be >= 0")

    def perturbed(self, factors: Sequence[Sequence[float]]) -> "WeightMatrix":
        """Return a copy with every weight multiplied elementwise by `factors`.

        Positive factors preserve the sign structure.
        """
        rows = [self.csm, self.semi, self.mature]
        scaled = [
            tuple(w * f for w, f in zip(row, frow)) for row, frow in zip(rows, factors)
        ]
        return WeightMatrix(csm=scaled[0], semi=scaled[1], mature=scaled[2])


@dataclass(frozen=True)
class DcaConfig:
    weights: WeightMatrix = WeightMatrix()
    threshold_low: float = 5.0
    threshold_high: float = 15.0
    antigen_vector_size: int = 50
    antigen_per_update: int = 1
    mcav_threshold: float = 0.5

    def __post_init__(self):
        if not 0 < self.threshold_low <= self.threshold_high:
            raise ConfigError("migration threshold range needs 0 < low <= high")
        if self.antigen_vector_size < 1:
            raise ConfigError("antigen_vector_size must be >= 1")
        if self.antigen_per_update < 1:
            raise ConfigError("antigen_per_update must be >= 1")
        if not 0.0 < self.mcav_threshold < 1.0:
            raise ConfigError("mcav_threshold must lie in (0, 1)")


@dataclass
class DcaCell:
    """One data-fusion agent accumulating signal evidence and antigen."""

    migration_threshold: float
    state: CellState = CellState.IMMATURE
    csm_out: float = 0.0
    semi_out: float = 0.0
    mature_out: float = 0.0
    collected_antigen: list[int] = field(default_factory=list)


def fuse_signals(
    cell: DcaCell,
    sample: SignalSample,
    weights: WeightMatrix,
    signal_max: float = DEFAULT_SIGNAL_MAX,
) -> None:
    """Add one weighted-sum increment of `sample` to the cell's outputs.

    Inflammation scales the other three inputs multiplicatively and is
    exactly neutral at zero. Increments to the semi and mature outputs
    are clamped at zero from below so the cumulative outputs stay
    non-negative; the csm row is non-negative by construction.
    """
    if cell.state is not CellState.IMMATURE:
        raise LifecycleError("fuse_signals on a migrated cell")
    amplifier = 1.0 + sample.inflammation / signal_max
    inputs = (sample.pamp, sample.danger, sample.safe)
    cell.csm_out += sum(w * v for w, v in zip(weights.csm, inputs)) * amplifier
    cell.semi_out += max(0.0, sum(w * v for w, v in zip(weights.semi, inputs)) * amplifier)
    cell.mature_out += max(
        0.0, sum(w * v for w, v in zip(weights.mature, inputs)) * amplifier
    )


def sample_antigen(
    cell: DcaCell,
    compartment: TissueCompartment,
    *,
    antigen_per_update: int = 1,
    antigen_vector_size: int = 50,
) -> int:
    """Move up to `antigen_per_update` events from the store into the cell.

    Oldest events first; stops early when the store empties or the cell's
    antigen vector is full. Returns the number transferred.
    """
    if cell.state is not CellState.IMMATURE:
        raise LifecycleError("sample_antigen on a migrated cell")
    taken = 0
    while taken < antigen_per_update and len(cell.collected_antigen) < antigen_vector_size:
        event = compartment.take_antigen()
        if event is None:
            break
        cell.collected_antigen.append(event.antigen_type)
        taken += 1
    return taken


def check_migration(cell: DcaCell) -> bool:
    """True iff accumulated costimulation strictly exceeds the threshold."""
    return cell.csm_out > cell.migration_threshold


def assign_context(cell: DcaCell) -> CellState:
    """Mature iff the mature output strictly dominates; ties stay semi-mature."""
    if cell.mature_out > cell.semi_out:
        return CellState.MATURE
    return CellState.SEMI_MATURE


def present(cell: DcaCell, tick: int) -> list[PresentationRecord]:
    """Emit one record per collected antigen under the cell's assigned context."""
    if cell.state is CellState.IMMATURE:
        raise LifecycleError("an immature cell cannot present antigen")
    context = 1 if cell.state is CellState.MATURE else 0
    return [PresentationRecord(a, context, tick) for a in cell.collected_antigen]


class DcaPopulation:
    """Fixed-size DC population driven by the tissue tick loop.

    Migrated cells are replaced within the same update, so the live count
    is constant. All randomness (migration thresholds) comes from one
    seeded generator, drawn in cell-creation order.
    """

    def __init__(self, config: DcaConfig, population_size: int = 100, rng_seed: int = 0):
        if population_size < 1:
            raise ConfigError("population_size must be >= 1")
        self.config = config
        self.rng = random.Random(rng_seed)
        self.cells = [self._new_cell() for _ in range(population_size)]
        self.presented_total = 0
        self.migrated_sampled_total = 0
        self.migrations = 0

    def _new_cell(self) -> DcaCell:
        threshold = self.rng.uniform(self.config.threshold_low, self.config.threshold_high)
        return DcaCell(migration_threshold=threshold)

    def live_count(self) -> int:
        return len(self.cells)

    def unpresented_antigen(self) -> int:
        """Antigen held by live immature cells (sampled but not yet presented)."""
        return sum(len(c.collected_antigen) for c in self.cells)

    def step(self, compartment: TissueCompartment, tick: int) -> list[PresentationRecord]:
        cfg = self.config
        sample = compartment.signal_matrix
        records: list[PresentationRecord] = []
        for i, cell in enumerate(self.cells):
            fuse_signals(cell, sample, cfg.weights, compartment.signal_max)
            sample_antigen(
                cell,
                compartment,
                antigen_per_update=cfg.antigen_per_update,
                antigen_vector_size=cfg.antigen_vector_size,
            )
            if check_migration(cell):
                cell.state = assign_context(cell)
                emitted = present(cell, tick)
                records.extend(emitted)
                self.presented_total += len(emitted)
                self.migrated_sampled_total += len(cell.collected_antigen)
                self.migrations += 1
                self.cells[i] = self._new_cell()
        return records


@dataclass(frozen=True)
class McavEntry:
    antigen_type: int
    total_count: int
    mature_count: int
    mcav: float | None  # None when the type was never presented
    label: str | None  # anomalous/normal; None when unscored


@dataclass(frozen=True)
class McavReport:
    """Per-antigen-type mature-context proportions and classifications."""

    entries: tuple[McavEntry, ...]
    threshold: float

    def scored(self) -> list[McavEntry]:
        return [e for e in self.entries if e.total_count > 0]

    def labels(self) -> dict[int, str]:
        """antigen_type -> anomalous/normal/unscored."""
        return {
            e.antigen_type: (e.label if e.label is not None else LABEL_UNSCORED)
            for e in self.entries
        }


def compute_mcav(
    log: Iterable[PresentationRecord],
    *,
    threshold: float = 0.5,
    all_types: Iterable[int] | None = None,
) -> McavReport:
    """Score each antigen type by its mature-context proportion.

    A type is anomalous iff mcav strictly exceeds `threshold`. Types
    listed in `all_types` but absent from the log are reported unscored
    rather than given a label.
    """
    totals: Counter[int] = Counter()
    matures: Counter[int] = Counter()
    for rec in log:
        if rec.context not in (0, 1):
            raise ConfigError(f"presentation context must be 0 or 1, got {rec.context}")
        totals[rec.antigen_type] += 1
        matures[rec.antigen_type] += rec.context

    types = set(totals)
    if all_types is not None:
        types.update(all_types)
    entries = []
    for antigen_type in sorted(types):
        total = totals[antigen_type]
        if total == 0:
            entries.append(McavEntry(antigen_type, 0, 0, None, None))
            continue
        mature = matures[antigen_type]
        mcav = mature / total
        label = LABEL_ANOMALOUS if mcav > threshold else LABEL_NORMAL
        entries.append(McavEntry(antigen_type, total, mature, mcav, label))
    return McavReport(entries=tuple(entries), threshold=threshold)


MCAV_CSV_HEADER = "antigen_type,total_count,mature_count,mcav,label"


def write_mcav_csv(
    report: McavReport,
    path: str | Path,
    metadata: Mapping[str, object] | None = None,
) -> None:
    """Write the report as CSV with `#`-prefixed metadata comment lines."""
    lines = [f"# {key}: {value}" for key, value in (metadata or {}).items()]
    lines.append(MCAV_CSV_HEADER)
    for e in report.entries:
        if e.total_count == 0:
            lines.append(f"{e.antigen_type},0,0,,{LABEL_UNSCORED}")
        else:
            lines.append(
                f"{e.antigen_type},{e.total_count},{e.mature_count},{e.mcav:.6f},{e.label}"
            )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
