"""Partial smart-meter coverage and supervised feature construction.

A meter reports the half-hourly voltage (and optionally the lump active
power) of one occupied CCP-phase pair. Each training sample predicts one
pair's voltage 30 minutes ahead from four scalar circuit features plus,
per meter, five measurement lags and the meter's distance/loading
metadata. Week 1 trains, week 2 validates on the metered pairs, and the
same week 2 evaluates over every occupied pair in the circuit.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from datetime import datetime

import numpy as np

from .circuit import Circuit, CircuitError, households_upstream, path_distance, path_distance_between, tree_index
from .demand import CCPPhaseLoad, PhaseAssignment, STEPS_PER_DAY, format_timestamp, parse_timestamp
from .powerflow import VoltageSeries

# measurement history offsets, in 30-minute steps relative to the sample
# time t: now, -30 min, -1 day, -1 day -30 min, -1 day +30 min
LAG_OFFSETS = (0, -1, -48, -49, -47)
HALF_HOURS_PER_WEEK = 7 * STEPS_PER_DAY

TRAIN_DAYS = (0, 7)  # sample time t within days 1-7
EVAL_DAYS = (7, 14)  # validation and evaluation within days 8-14

STRATEGIES = ("random", "key_locations", "explicit")


class DatasetError(ValueError):
    """Invalid meter selection or feature-dataset request."""


@dataclass(frozen=True)
class Meter:
    ccp: str
    phase: int
    distance_m: float
    households: int  # aggregated households between source and the CCP


@dataclass(frozen=True)
class MeterSet:
    meters: tuple[Meter, ...]
    strategy: str
    seed: int | None

    @property
    def count(self) -> int:
        return len(self.meters)

    def pairs(self) -> tuple[tuple[str, int], ...]:
        return tuple((m.ccp, m.phase) for m in self.meters)


def _occupied_by_ccp(circuit: Circuit, assignment: PhaseAssignment) -> dict[str, tuple[int, ...]]:
    return {
        ccp.node: tuple(p for p in (1, 2, 3) if assignment.by_ccp[ccp.node][p])
        for ccp in circuit.ccps
    }


def _make_meter_set(circuit: Circuit, pairs, strategy, seed) -> MeterSet:
    meters = [
        Meter(
            ccp=ccp,
            phase=phase,
            distance_m=path_distance(circuit, ccp),
            households=households_upstream(circuit, ccp),
        )
        for ccp, phase in pairs
    ]
    meters.sort(key=lambda m: (m.distance_m, m.ccp, m.phase))
    return MeterSet(meters=tuple(meters), strategy=strategy, seed=seed)


def _branch_chains(circuit: Circuit) -> list[list[str]]:
    """Split the active tree into junction-free chains of nodes.

    A chain starts below the source or below any node with more than one
    child and runs until a leaf or the next such junction. Every non-source
    node belongs to exactly one chain.
    """
    index = tree_index(circuit)
    chains: list[list[str]] = []
    for top in index.order:
        starts_chain = top == circuit.source or len(index.children[top]) > 1
        if not starts_chain:
            continue
        for child in index.children[top]:
            chain = [child]
            node = child
            while len(index.children[node]) == 1:
                node = index.children[node][0]
                chain.append(node)
            chains.append(chain)
    chains.sort(key=lambda c: (index.distance_m[c[0]], c[0]))
    return chains


def _key_location_ccps(circuit: Circuit) -> list[str]:
    """CCPs at the circuit's key locations, in selection priority order:
    the first CCP from the source, then the first and last CCP on each
    junction-free branch chain."""
    ccp_nodes = {c.node for c in circuit.ccps}
    distance = {node: path_distance(circuit, node) for node in ccp_nodes}
    ordered: list[str] = []

    first_overall = min(ccp_nodes, key=lambda n: (distance[n], n))
    ordered.append(first_overall)
    for chain in _branch_chains(circuit):
        on_chain = [n for n in chain if n in ccp_nodes]
        if not on_chain:
            continue
        for candidate in (on_chain[0], on_chain[-1]):
            if candidate not in ordered:
                ordered.append(candidate)
    return ordered


def select_smart_meters(
    circuit: Circuit,
    assignment: PhaseAssignment,
    count: int,
    strategy: str = "random",
    seed: int = 0,
    explicit: list[tuple[str, int]] | None = None,
) -> MeterSet:
    """Place ``count`` smart meters, one per (CCP, phase).

    random: CCPs shuffle and each selected CCP contributes one occupied
    phase picked uniformly; if count exceeds the CCP total the remaining
    occupied pairs fill in random order. key_locations: the key CCPs in
    priority order, truncated to count or extended with the unmetered CCP
    path-nearest to the metered set (ties by ccp id). explicit: the given
    pairs verbatim.
    """
    occupied = _occupied_by_ccp(circuit, assignment)
    all_pairs = assignment.occupied_pairs(circuit)
    if strategy not in STRATEGIES:
        raise DatasetError(f"unknown meter strategy {strategy!r}")

    if strategy == "explicit":
        if not explicit:
            raise DatasetError("explicit strategy needs a meter list")
        for pair in explicit:
            if pair not in all_pairs:
                raise DatasetError(f"meter {pair} refers to an unoccupied CCP-phase")
        if len(set(explicit)) != len(explicit):
            raise DatasetError("duplicate meter in explicit list")
        return _make_meter_set(circuit, explicit, strategy, None)

    if not 1 <= count <= len(all_pairs):
        raise DatasetError(f"C={count} out of range 1..{len(all_pairs)}")
    rng = np.random.default_rng(seed)

    if strategy == "random":
        ccp_nodes = [c.node for c in circuit.ccps]
        chosen: list[tuple[str, int]] = []
        for i in rng.permutation(len(ccp_nodes)):
            if len(chosen) == count:
                break
            phases = occupied[ccp_nodes[i]]
            chosen.append((ccp_nodes[i], phases[int(rng.integers(len(phases)))]))
        if len(chosen) < count:
            remaining = [p for p in all_pairs if p not in chosen]
            for i in rng.permutation(len(remaining))[: count - len(chosen)]:
                chosen.append(remaining[i])
        return _make_meter_set(circuit, chosen, strategy, seed)

    # key_locations
    ordered_ccps = _key_location_ccps(circuit)[:count]
    while len(ordered_ccps) < count:
        unmetered = [c.node for c in circuit.ccps if c.node not in ordered_ccps]
        if not unmetered:
            break
        nearest = min(
            unmetered,
            key=lambda n: (min(path_distance_between(circuit, n, m) for m in ordered_ccps), n),
        )
        ordered_ccps.append(nearest)
    chosen = []
    for node in ordered_ccps:
        phases = occupied[node]
        chosen.append((node, phases[int(rng.integers(len(phases)))]))
    if len(chosen) < count:  # every CCP metered; fill with second phases
        remaining = [p for p in all_pairs if p not in chosen]
        for i in rng.permutation(len(remaining))[: count - len(chosen)]:
            chosen.append(remaining[i])
    return _make_meter_set(circuit, chosen, "key_locations", seed)


def median_inter_meter_distance(circuit: Circuit, meters: MeterSet) -> float:
    """Median over meters of the tree-path distance to the nearest other
    meter (two phases of one CCP are 0 m apart)."""
    if meters.count < 2:
        raise DatasetError("median inter-meter distance needs at least 2 meters")
    nodes = [m.ccp for m in meters.meters]
    nearest = []
    for i, a in enumerate(nodes):
        nearest.append(
            min(path_distance_between(circuit, a, b) for j, b in enumerate(nodes) if j != i)
        )
    return float(np.median(nearest))


# ---------------------------------------------------------------------------
# Feature dataset


def input_width(count: int, include_power: bool) -> int:
    """Input-layer width: 4 scalars, 5 lags per measured channel per meter,
    and 2 metadata values per meter."""
    channels = 2 if include_power else 1
    return 4 + count * channels * len(LAG_OFFSETS) + count * 2


def feature_names(meters: MeterSet, include_power: bool) -> tuple[str, ...]:
    names = ["target_distance_m", "target_households", "time_of_week", "total_impedance_ohm"]
    lag_tags = ["t", "tm1", "tm48", "tm49", "tm47"]
    for i in range(meters.count):
        names.extend(f"m{i}_v_{tag}" for tag in lag_tags)
        if include_power:
            names.extend(f"m{i}_p_{tag}" for tag in lag_tags)
    for i in range(meters.count):
        names.extend([f"m{i}_distance_m", f"m{i}_households"])
    return tuple(names)


@dataclass(frozen=True)
class SampleSplit:
    inputs: np.ndarray  # raw features, shape (n, N)
    targets: np.ndarray  # raw voltage pu at t+1, shape (n,)
    times: np.ndarray  # sample time index t, shape (n,)
    pair_index: np.ndarray  # index into FeatureDataset.pair_table, shape (n,)

    def __len__(self) -> int:
        return len(self.targets)


@dataclass(frozen=True)
class FeatureDataset:
    width: int
    meter_count: int
    include_power: bool
    names: tuple[str, ...]
    pair_table: tuple[tuple[str, int], ...]  # all occupied pairs (evaluation targets)
    meters: MeterSet
    total_impedance_ohm: float
    start: datetime
    train: SampleSplit
    validation: SampleSplit
    evaluation: SampleSplit
    input_min: np.ndarray
    input_max: np.ndarray
    target_min: float
    target_max: float

    def normalize_inputs(self, inputs: np.ndarray) -> np.ndarray:
        scale = np.where(self.input_max > self.input_min, self.input_max - self.input_min, 1.0)
        return (inputs - self.input_min) / scale

    def normalize_targets(self, targets: np.ndarray) -> np.ndarray:
        scale = self.target_max - self.target_min or 1.0
        return (targets - self.target_min) / scale

    def denormalize_targets(self, normalized: np.ndarray) -> np.ndarray:
        scale = self.target_max - self.target_min or 1.0
        return normalized * scale + self.target_min


def _valid_times(first_day: int, last_day: int, total_steps: int) -> np.ndarray:
    """Sample times t in [first_day, last_day) days whose lags and t+1
    target all resolve; unresolvable samples are dropped, never padded."""
    low = max(first_day * STEPS_PER_DAY, -min(LAG_OFFSETS))
    high = min(last_day * STEPS_PER_DAY, total_steps - 1)
    return np.arange(low, high)


def _build_split(
    voltages: VoltageSeries,
    loads: CCPPhaseLoad,
    meters: MeterSet,
    scalars: dict[tuple[str, int], tuple[float, float]],
    t_values: np.ndarray,
    target_pairs: list[tuple[str, int]],
    pair_table: tuple[tuple[str, int], ...],
    total_impedance_ohm: float,
    include_power: bool,
) -> SampleSplit:
    n_t = len(t_values)
    n_q = len(target_pairs)
    width = input_width(meters.count, include_power)

    meter_rows = []
    for meter in meters.meters:
        v = voltages.series(meter.ccp, meter.phase)
        row = [v[t_values + off] for off in LAG_OFFSETS]
        if include_power:
            p = loads.series(meter.ccp, meter.phase)
            row.extend(p[t_values + off] for off in LAG_OFFSETS)
        meter_rows.append(np.column_stack(row))
    meter_meta = []
    for meter in meters.meters:
        meter_meta.extend([meter.distance_m, float(meter.households)])

    time_of_week = (t_values % HALF_HOURS_PER_WEEK) / HALF_HOURS_PER_WEEK
    lag_block = np.concatenate(meter_rows, axis=1) if meter_rows else np.empty((n_t, 0))

    # samples ordered by (t, q): t-major blocks, target pairs inner
    inputs = np.empty((n_t * n_q, width))
    targets = np.empty(n_t * n_q)
    times = np.repeat(t_values, n_q)
    pair_idx = np.empty(n_t * n_q, dtype=np.int64)
    for qi, pair in enumerate(target_pairs):
        d_q, h_q = scalars[pair]
        rows = slice(qi, None, n_q)  # every n_q-th row within each t block
        inputs[rows, 0] = d_q
        inputs[rows, 1] = h_q
        inputs[rows, 2] = time_of_week
        inputs[rows, 3] = total_impedance_ohm
        inputs[rows, 4 : 4 + lag_block.shape[1]] = lag_block
        inputs[rows, 4 + lag_block.shape[1] :] = meter_meta
        targets[rows] = voltages.series(*pair)[t_values + 1]
        pair_idx[rows] = pair_table.index(pair)
    return SampleSplit(inputs=inputs, targets=targets, times=times, pair_index=pair_idx)


def _feature_group(name: str) -> str:
    """Physically homogeneous features share one normalization scale, so the
    offsets between meter channels (the spatial signal) survive scaling and
    a meter's distance stays commensurable with the query distance."""
    if name.endswith("_distance_m") or name == "target_distance_m":
        return "distance"
    if name.endswith("_households") or name == "target_households":
        return "households"
    if "_v_" in name:
        return "voltage"
    if "_p_" in name:
        return "power"
    return name  # time_of_week, total_impedance_ohm: scaled alone


def _fit_normalization(
    names: tuple[str, ...], inputs: np.ndarray, targets: np.ndarray
) -> tuple[np.ndarray, np.ndarray, float, float]:
    groups: dict[str, list[int]] = {}
    for column, name in enumerate(names):
        groups.setdefault(_feature_group(name), []).append(column)
    input_min = np.empty(len(names))
    input_max = np.empty(len(names))
    for group, columns in groups.items():
        lo = inputs[:, columns].min()
        hi = inputs[:, columns].max()
        if group == "voltage":  # the target is a voltage; share its scale
            lo = min(lo, targets.min())
            hi = max(hi, targets.max())
        input_min[columns] = lo
        input_max[columns] = hi
    if "voltage" in groups:
        column = groups["voltage"][0]
        target_min, target_max = float(input_min[column]), float(input_max[column])
    else:
        target_min, target_max = float(targets.min()), float(targets.max())
    return input_min, input_max, target_min, target_max


def build_dataset(
    voltages: VoltageSeries,
    loads: CCPPhaseLoad,
    meters: MeterSet,
    circuit: Circuit,
    total_impedance_ohm: float,
    include_power: bool,
) -> FeatureDataset:
    """Assemble train/validation/evaluation samples with the lag structure.

    Train and validation targets are the metered pairs over weeks 1 and 2;
    evaluation covers every occupied pair over week 2. Normalization is
    min-max to [0, 1] fitted on the train split only, with one shared scale
    per physical quantity (voltage, power, distance, household count).
    """
    if voltages.steps < 14 * STEPS_PER_DAY:
        raise DatasetError("need at least 14 days of voltages to build a dataset")
    for meter in meters.meters:
        if (meter.ccp, meter.phase) not in voltages.pairs:
            raise DatasetError(f"meter ({meter.ccp}, {meter.phase}) absent from voltage data")

    pair_table = voltages.pairs
    scalars = {
        pair: (path_distance(circuit, pair[0]), float(households_upstream(circuit, pair[0])))
        for pair in pair_table
    }
    metered = list(meters.pairs())

    t_train = _valid_times(*TRAIN_DAYS, voltages.steps)
    t_eval = _valid_times(*EVAL_DAYS, voltages.steps)
    common = dict(
        voltages=voltages,
        loads=loads,
        meters=meters,
        scalars=scalars,
        pair_table=pair_table,
        total_impedance_ohm=total_impedance_ohm,
        include_power=include_power,
    )
    train = _build_split(t_values=t_train, target_pairs=metered, **common)
    validation = _build_split(t_values=t_eval, target_pairs=metered, **common)
    evaluation = _build_split(t_values=t_eval, target_pairs=list(pair_table), **common)

    names = feature_names(meters, include_power)
    input_min, input_max, target_min, target_max = _fit_normalization(
        names, train.inputs, train.targets
    )
    return FeatureDataset(
        width=input_width(meters.count, include_power),
        meter_count=meters.count,
        include_power=include_power,
        names=names,
        pair_table=pair_table,
        meters=meters,
        total_impedance_ohm=total_impedance_ohm,
        start=voltages.start,
        train=train,
        validation=validation,
        evaluation=evaluation,
        input_min=input_min,
        input_max=input_max,
        target_min=target_min,
        target_max=target_max,
    )


# ---------------------------------------------------------------------------
# On-disk form: samples.npz plus a JSON sidecar with everything else


def save_dataset(dataset: FeatureDataset, directory) -> None:
    os.makedirs(directory, exist_ok=True)
    arrays = {}
    for name in ("train", "validation", "evaluation"):
        split: SampleSplit = getattr(dataset, name)
        arrays[f"{name}_inputs"] = split.inputs
        arrays[f"{name}_targets"] = split.targets
        arrays[f"{name}_times"] = split.times
        arrays[f"{name}_pairs"] = split.pair_index
    np.savez(os.path.join(directory, "samples.npz"), **arrays)
    sidecar = {
        "format": "lvvc-dataset-v1",
        "width": dataset.width,
        "meter_count": dataset.meter_count,
        "include_power": dataset.include_power,
        "feature_order": list(dataset.names),
        "pair_table": [[ccp, phase] for ccp, phase in dataset.pair_table],
        "meters": [
            {"ccp": m.ccp, "phase": m.phase, "distance_m": m.distance_m, "households": m.households}
            for m in dataset.meters.meters
        ],
        "meter_strategy": dataset.meters.strategy,
        "meter_seed": dataset.meters.seed,
        "total_impedance_ohm": dataset.total_impedance_ohm,
        "start": format_timestamp(dataset.start),
        "split_days": {"train": list(TRAIN_DAYS), "validation": list(EVAL_DAYS), "evaluation": list(EVAL_DAYS)},
        "normalization": {
            "input_min": dataset.input_min.tolist(),
            "input_max": dataset.input_max.tolist(),
            "target_min": dataset.target_min,
            "target_max": dataset.target_max,
        },
    }
    with open(os.path.join(directory, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(directory) -> FeatureDataset:
    with open(os.path.join(directory, "meta.json"), "r", encoding="utf-8") as fh:
        sidecar = json.load(fh)
    if sidecar.get("format") != "lvvc-dataset-v1":
        raise DatasetError(f"unsupported dataset format {sidecar.get('format')!r}")
    arrays = np.load(os.path.join(directory, "samples.npz"))
    splits = {
        name: SampleSplit(
            inputs=arrays[f"{name}_inputs"],
            targets=arrays[f"{name}_targets"],
            times=arrays[f"{name}_times"],
            pair_index=arrays[f"{name}_pairs"],
        )
        for name in ("train", "validation", "evaluation")
    }
    meters = MeterSet(
        meters=tuple(
            Meter(ccp=m["ccp"], phase=m["phase"], distance_m=m["distance_m"], households=m["households"])
            for m in sidecar["meters"]
        ),
        strategy=sidecar["meter_strategy"],
        seed=sidecar["meter_seed"],
    )
    norm = sidecar["normalization"]
    return FeatureDataset(
        width=sidecar["width"],
        meter_count=sidecar["meter_count"],
        include_power=sidecar["include_power"],
        names=tuple(sidecar["feature_order"]),
        pair_table=tuple((ccp, phase) for ccp, phase in sidecar["pair_table"]),
        meters=meters,
        total_impedance_ohm=sidecar["total_impedance_ohm"],
        start=parse_timestamp(sidecar["start"]),
        train=splits["train"],
        validation=splits["validation"],
        evaluation=splits["evaluation"],
        input_min=np.asarray(norm["input_min"]),
        input_max=np.asarray(norm["input_max"]),
        target_min=norm["target_min"],
        target_max=norm["target_max"],
    )
