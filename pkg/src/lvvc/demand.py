"""Seeded synthetic per-household half-hourly demand and CCP-phase lumping.

Households follow a two-state (inactive/active) occupancy Markov chain
stepped every half hour, with time-of-day transition probabilities that
peak in the morning and evening. While active, appliance events start
stochastically from a small fixed catalogue and add their power for a few
slots on top of an always-on standby floor. The generator makes no claim
of statistical equivalence with any measured dataset; it reproduces the
diversity and peakiness that matter for feeder voltage simulation.

All powers are active power in kW at unity power factor; there is no
generation, so every value is >= 0.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Mapping

import numpy as np

from .circuit import PHASES, Circuit

STEPS_PER_DAY = 48
STEP_MINUTES = 30

# Monday 00:00 UTC, so step index 0 opens both a day and a week.
DEFAULT_START = datetime(2021, 1, 4, 0, 0, tzinfo=timezone.utc)

HouseholdId = tuple[str, int]  # (ccp node, household index within the CCP)


class DemandError(ValueError):
    """Invalid demand-generation request or demand data."""


@dataclass(frozen=True)
class Appliance:
    name: str
    power_kw: float
    duration_slots: int


@dataclass(frozen=True)
class DemandConfig:
    """Every constant of the demand generator, recorded in run metadata.

    ``day_bands`` rows are (first_slot, end_slot, p_wake, p_sleep, p_event):
    within [first_slot, end_slot) of the day, an inactive household becomes
    active with p_wake, an active one becomes inactive with p_sleep, and an
    active one starts a catalogue appliance with probability p_event per
    half hour. Slots are half-hours, so 13 = 06:30. The occupancy chain
    steps at slot boundaries; appliance events start and run on a finer
    ``sub_steps`` grid and are averaged back to the half-hourly reading, the
    way a fine-resolution demand model feeds a half-hourly meter.
    """

    standby_kw: tuple[float, float] = (0.05, 0.15)
    appliances: tuple[Appliance, ...] = (
        Appliance("short_high", 2.0, 1),
        Appliance("long_low", 0.5, 3),
        Appliance("medium", 1.5, 2),
    )
    appliance_weights: tuple[float, ...] = (0.02, 0.93, 0.05)
    day_bands: tuple[tuple[int, int, float, float, float], ...] = (
        (0, 13, 0.01, 0.40, 0.02),   # night
        (13, 17, 0.80, 0.02, 0.70),  # 06:30-08:30 morning ramp
        (17, 33, 0.10, 0.15, 0.15),  # daytime
        (33, 42, 0.85, 0.01, 0.80),  # 16:30-21:00 evening ramp
        (42, 48, 0.04, 0.45, 0.06),  # wind-down
    )
    sub_steps: int = 12  # appliance timing resolution within one slot
    mean_daily_kwh_band: tuple[float, float] = (5.0, 15.0)

    def slot_probabilities(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        p_wake = np.empty(STEPS_PER_DAY)
        p_sleep = np.empty(STEPS_PER_DAY)
        p_event = np.empty(STEPS_PER_DAY)
        covered = np.zeros(STEPS_PER_DAY, dtype=bool)
        for first, end, wake, sleep, event in self.day_bands:
            p_wake[first:end] = wake
            p_sleep[first:end] = sleep
            p_event[first:end] = event
            covered[first:end] = True
        if not covered.all():
            raise DemandError("day_bands must cover all 48 half-hour slots")
        return p_wake, p_sleep, p_event


@dataclass(frozen=True)
class DemandSeries:
    """Per-household half-hourly active power (kW)."""

    start: datetime
    days: int
    households: tuple[HouseholdId, ...]
    values: np.ndarray  # shape (len(households), days * 48)
    config: DemandConfig = field(default_factory=DemandConfig)

    @property
    def steps(self) -> int:
        return self.values.shape[1]

    def series(self, household: HouseholdId) -> np.ndarray:
        return self.values[self.households.index(household)]

    def mean_daily_kwh(self) -> float:
        # kW * 0.5 h per slot
        return float(self.values.sum() * 0.5 / (len(self.households) * self.days))


@dataclass(frozen=True)
class PhaseAssignment:
    """Which households sit on which of the three phases at every CCP."""

    by_ccp: Mapping[str, Mapping[int, tuple[int, ...]]]

    def phase_of(self, household: HouseholdId) -> int:
        node, idx = household
        for phase, members in self.by_ccp[node].items():
            if idx in members:
                return phase
        raise DemandError(f"household {household} missing from phase assignment")

    def occupied_pairs(self, circuit: Circuit) -> tuple[tuple[str, int], ...]:
        """(ccp, phase) pairs carrying at least one household, in circuit
        order with phases ascending."""
        pairs = []
        for ccp in circuit.ccps:
            for phase in PHASES:
                if self.by_ccp[ccp.node][phase]:
                    pairs.append((ccp.node, phase))
        return tuple(pairs)


@dataclass(frozen=True)
class CCPPhaseLoad:
    """Aggregated (lump) active power per occupied CCP-phase pair."""

    start: datetime
    days: int
    pairs: tuple[tuple[str, int], ...]
    values: np.ndarray  # shape (len(pairs), days * 48)

    @property
    def steps(self) -> int:
        return self.values.shape[1]

    def series(self, ccp: str, phase: int) -> np.ndarray:
        """Lump load of one pair; an unoccupied phase lumps to 0 kW."""
        pair = (ccp, phase)
        if pair in self.pairs:
            return self.values[self.pairs.index(pair)]
        return np.zeros(self.steps)

    def at_step(self, t: int) -> dict[tuple[str, int], float]:
        return {pair: float(self.values[i, t]) for i, pair in enumerate(self.pairs)}


def household_ids(circuit: Circuit) -> tuple[HouseholdId, ...]:
    """All households in circuit CCP order; index is stable across runs."""
    ids = []
    for ccp in circuit.ccps:
        ids.extend((ccp.node, i) for i in range(ccp.households))
    return tuple(ids)


def assign_phases(circuit: Circuit, seed: int) -> PhaseAssignment:
    """Spread each CCP's households over the three phases.

    Multi-household CCPs split deterministically: household i goes to phase
    (i mod 3) + 1, so equal thirds with any remainder on the lowest phases.
    A single household lands on one phase chosen uniformly from the seed.
    """
    by_ccp: dict[str, dict[int, tuple[int, ...]]] = {}
    for ccp_index, ccp in enumerate(circuit.ccps):
        members: dict[int, list[int]] = {p: [] for p in PHASES}
        if ccp.households == 1:
            rng = np.random.default_rng([seed, ccp_index])
            members[int(rng.integers(1, 4))].append(0)
        else:
            for i in range(ccp.households):
                members[(i % 3) + 1].append(i)
        by_ccp[ccp.node] = {p: tuple(m) for p, m in members.items()}
    return PhaseAssignment(by_ccp=by_ccp)


def generate_profiles(
    circuit: Circuit,
    seed: int,
    days: int = 28,
    config: DemandConfig = DemandConfig(),
    start: datetime = DEFAULT_START,
) -> DemandSeries:
    """Seeded per-household profiles over ``days`` (>= 14, two-week protocol).

    Each household draws from its own (seed, index) substream, so results
    do not depend on generation order.
    """
    if days < 14:
        raise DemandError(f"need at least 14 days of demand, got {days}")
    p_wake, p_sleep, p_event = config.slot_probabilities()
    ids = household_ids(circuit)
    steps = days * STEPS_PER_DAY
    values = np.zeros((len(ids), steps))
    catalogue = config.appliances
    lo, hi = config.standby_kw
    for k in range(len(ids)):
        rng = np.random.default_rng([seed, k])
        load = values[k]
        load += rng.uniform(lo, hi)
        active = False
        for t in range(steps):
            tod = t % STEPS_PER_DAY
            if active:
                if rng.random() < p_sleep[tod]:
                    active = False
            else:
                if rng.random() < p_wake[tod]:
                    active = True
            if active and rng.random() < p_event[tod]:
                appliance = catalogue[rng.integers(len(catalogue))]
                load[t : t + appliance.duration_slots] += appliance.power_kw
    return DemandSeries(start=start, days=days, households=ids, values=values, config=config)


def aggregate_to_ccp_phase(profiles: DemandSeries, assignment: PhaseAssignment) -> CCPPhaseLoad:
    """Sum household series into per-(CCP, phase) lump loads."""
    groups: dict[tuple[str, int], list[int]] = {}
    for row, household in enumerate(profiles.households):
        node, idx = household
        if node not in assignment.by_ccp:
            raise DemandError(f"household {household} missing from phase assignment")
        phase = assignment.phase_of(household)
        groups.setdefault((node, phase), []).append(row)

    # pair order: CCP appearance order in the profiles, phases ascending
    ccp_order: list[str] = []
    for node, _ in profiles.households:
        if node not in ccp_order:
            ccp_order.append(node)
    pairs = [
        (node, phase) for node in ccp_order for phase in PHASES if (node, phase) in groups
    ]
    values = np.stack([profiles.values[groups[pair]].sum(axis=0) for pair in pairs])
    return CCPPhaseLoad(start=profiles.start, days=profiles.days, pairs=tuple(pairs), values=values)


# ---------------------------------------------------------------------------
# CSV interface: timestamp,ccp_id,phase,household_idx,p_kw (RFC 3339, 30 min)


def format_timestamp(moment: datetime) -> str:
    return moment.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_timestamp(text: str) -> datetime:
    return datetime.fromisoformat(text.replace("Z", "+00:00"))


def timestamp_at(start: datetime, t: int) -> str:
    return format_timestamp(start + timedelta(minutes=STEP_MINUTES) * t)


def write_demand_csv(path, profiles: DemandSeries, assignment: PhaseAssignment) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "ccp_id", "phase", "household_idx", "p_kw"])
        phases = [assignment.phase_of(h) for h in profiles.households]
        for t in range(profiles.steps):
            stamp = timestamp_at(profiles.start, t)
            for row, (node, idx) in enumerate(profiles.households):
                writer.writerow([stamp, node, phases[row], idx, repr(float(profiles.values[row, t]))])


def read_demand_csv(path) -> tuple[DemandSeries, PhaseAssignment]:
    """Parse a demand CSV (internal or externally produced) back into a
    household series plus the phase assignment embedded in its rows."""
    stamps: list[str] = []
    stamp_index: dict[str, int] = {}
    households: dict[HouseholdId, int] = {}
    phase_of: dict[HouseholdId, int] = {}
    records: list[tuple[int, int, float]] = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["timestamp", "ccp_id", "phase", "household_idx", "p_kw"]:
            raise DemandError(f"unexpected demand CSV header: {header}")
        for row in reader:
            stamp, node, phase, idx, p_kw = row
            if stamp not in stamp_index:
                stamp_index[stamp] = len(stamps)
                stamps.append(stamp)
            household = (node, int(idx))
            if household not in households:
                households[household] = len(households)
                phase_of[household] = int(phase)
            elif phase_of[household] != int(phase):
                raise DemandError(f"household {household} appears on two phases")
            value = float(p_kw)
            if not (value >= 0 and np.isfinite(value)):
                raise DemandError(f"demand at {stamp} for {household} must be finite and >= 0")
            records.append((stamp_index[stamp], households[household], value))

    if not stamps:
        raise DemandError("demand CSV has no rows")
    if len(stamps) % STEPS_PER_DAY != 0:
        raise DemandError("demand CSV must cover whole days at 30-minute cadence")
    start = parse_timestamp(stamps[0])
    for t, stamp in enumerate(stamps):
        if parse_timestamp(stamp) != start + timedelta(minutes=STEP_MINUTES) * t:
            raise DemandError(f"demand CSV timestamps are not a 30-minute grid at {stamp}")

    ids = tuple(households)
    values = np.zeros((len(ids), len(stamps)))
    for t, row, value in records:
        values[row, t] = value
    series = DemandSeries(start=start, days=len(stamps) // STEPS_PER_DAY, households=ids, values=values)

    by_ccp: dict[str, dict[int, list[int]]] = {}
    for node, idx in ids:
        by_ccp.setdefault(node, {p: [] for p in PHASES})[phase_of[(node, idx)]].append(idx)
    assignment = PhaseAssignment(
        by_ccp={node: {p: tuple(m) for p, m in per.items()} for node, per in by_ccp.items()}
    )
    return series, assignment
