"""Coverage and placement studies with error-distribution reporting.

Each configuration (meter count C, power-inputs flag, placement seed)
trains one network and evaluates |predicted - true| voltage over every
occupied CCP-phase of the evaluation week, alongside a nearest-meter
persistence baseline computed on the identical samples. Distributions are
summarized by median, quartiles, and the mean +/- 2.698 sigma whisker
band; errors are per-unit volts (multiply by the 230 V base for volts).
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .circuit import Circuit, path_distance, path_distance_between
from .features import (
    FeatureDataset,
    MeterSet,
    build_dataset,
    median_inter_meter_distance,
    select_smart_meters,
)
from .mlp import TrainConfig, evaluate_errors, init_model, train
from .powerflow import VoltageSeries

WHISKER_SIGMA = 2.698  # covers ~99.3% of a normal distribution

RESULTS_HEADER = (
    "circuit_id,C,with_power,placement_seed,median_inter_meter_m,count,"
    "median,q1,q3,iqr,mean,sigma,lower_2698,upper_2698,baseline_median"
)


@dataclass(frozen=True)
class ErrorStats:
    count: int
    median: float
    q1: float
    q3: float
    iqr: float
    mean: float
    sigma: float
    lower: float
    upper: float

    def scaled(self, factor: float) -> "ErrorStats":
        return ErrorStats(
            count=self.count,
            median=self.median * factor,
            q1=self.q1 * factor,
            q3=self.q3 * factor,
            iqr=self.iqr * factor,
            mean=self.mean * factor,
            sigma=self.sigma * factor,
            lower=self.lower * factor,
            upper=self.upper * factor,
        )

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "median": self.median,
            "q1": self.q1,
            "q3": self.q3,
            "iqr": self.iqr,
            "mean": self.mean,
            "sigma": self.sigma,
            "lower_2698": self.lower,
            "upper_2698": self.upper,
        }


def error_stats(errors: Sequence[float]) -> ErrorStats:
    """Quartiles by linear interpolation between closest ranks; sigma is the
    population standard deviation."""
    values = np.asarray(errors, dtype=float)
    if values.size == 0:
        raise ValueError("error_stats needs at least one value")
    q1, median, q3 = (float(q) for q in np.quantile(values, [0.25, 0.5, 0.75]))
    mean = float(values.mean())
    sigma = float(values.std(ddof=0))
    return ErrorStats(
        count=int(values.size),
        median=median,
        q1=q1,
        q3=q3,
        iqr=q3 - q1,
        mean=mean,
        sigma=sigma,
        lower=mean - WHISKER_SIGMA * sigma,
        upper=mean + WHISKER_SIGMA * sigma,
    )


# ---------------------------------------------------------------------------
# Nearest-meter persistence baseline


def nearest_meter_map(
    circuit: Circuit, meters: MeterSet, targets: Sequence[tuple[str, int]]
) -> dict[tuple[str, int], tuple[str, int]]:
    """Metered pair used to predict each target pair: the target's own meter
    when it has one, else the path-nearest meter (ties by meter order)."""
    mapping = {}
    metered = meters.pairs()
    for target in targets:
        if target in metered:
            mapping[target] = target
            continue
        best = min(
            range(len(metered)),
            key=lambda i: (path_distance_between(circuit, target[0], metered[i][0]), i),
        )
        mapping[target] = metered[best]
    return mapping


def baseline_nearest_meter(
    voltages: VoltageSeries,
    meters: MeterSet,
    circuit: Circuit,
    targets: Sequence[tuple[str, int]],
    times: np.ndarray,
) -> np.ndarray:
    """Predict V(target, t+1) as the nearest meter's voltage at time t,
    aligned with zip(targets, times)."""
    mapping = nearest_meter_map(circuit, meters, sorted(set(targets)))
    sources = {pair: voltages.series(*mapping[pair]) for pair in mapping}
    return np.array([sources[pair][t] for pair, t in zip(targets, times)])


def baseline_errors(
    voltages: VoltageSeries, meters: MeterSet, circuit: Circuit, dataset: FeatureDataset
) -> np.ndarray:
    split = dataset.evaluation
    targets = [dataset.pair_table[i] for i in split.pair_index]
    predictions = baseline_nearest_meter(voltages, meters, circuit, targets, split.times)
    return np.abs(predictions - split.targets)


# ---------------------------------------------------------------------------
# Experiment rows and reports


@dataclass(frozen=True)
class ExperimentRow:
    circuit_id: str
    meter_count: int
    with_power: bool
    placement_seed: int | None
    median_inter_meter_m: float | None
    stats: ErrorStats
    baseline_median: float
    strategy: str
    first_ccp_metered: bool
    model_seed: int
    epochs: int

    def csv_fields(self) -> list[str]:
        s = self.stats
        inter = "" if self.median_inter_meter_m is None else repr(self.median_inter_meter_m)
        seed = "" if self.placement_seed is None else str(self.placement_seed)
        return [
            self.circuit_id,
            str(self.meter_count),
            str(self.with_power).lower(),
            seed,
            inter,
            str(s.count),
            *(repr(v) for v in (s.median, s.q1, s.q3, s.iqr, s.mean, s.sigma, s.lower, s.upper)),
            repr(self.baseline_median),
        ]

    def sidecar(self) -> dict:
        return {
            "circuit_id": self.circuit_id,
            "C": self.meter_count,
            "with_power": self.with_power,
            "placement_seed": self.placement_seed,
            "strategy": self.strategy,
            "median_inter_meter_m": self.median_inter_meter_m,
            "first_ccp_metered": self.first_ccp_metered,
            "model_seed": self.model_seed,
            "epochs": self.epochs,
            "stats_pu": self.stats.to_dict(),
            "stats_volts": self.stats.scaled(230.0).to_dict(),
            "baseline_median_pu": self.baseline_median,
        }


@dataclass
class ExperimentReport:
    rows: list[ExperimentRow] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def to_csv_text(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(RESULTS_HEADER.split(","))
        for row in self.rows:
            writer.writerow(row.csv_fields())
        return buffer.getvalue()

    def to_sidecar(self) -> dict:
        return {"metadata": self.metadata, "rows": [r.sidecar() for r in self.rows]}


def _first_ccp(circuit: Circuit) -> str:
    return min((c.node for c in circuit.ccps), key=lambda n: (path_distance(circuit, n), n))


def run_configuration(
    circuit: Circuit,
    voltages: VoltageSeries,
    loads,
    meters: MeterSet,
    total_impedance_ohm: float,
    with_power: bool,
    model_seed: int,
    hyper: TrainConfig,
    circuit_id: str = "circuit",
) -> tuple[ExperimentRow, FeatureDataset]:
    """Build the dataset for one meter placement, train, and summarize."""
    dataset = build_dataset(voltages, loads, meters, circuit, total_impedance_ohm, with_power)
    model = init_model(dataset.width, seed=model_seed)
    trained, history = train(model, dataset, replace(hyper, seed=model_seed))
    errors = evaluate_errors(trained, dataset)
    base = baseline_errors(voltages, meters, circuit, dataset)
    inter = median_inter_meter_distance(circuit, meters) if meters.count >= 2 else None
    row = ExperimentRow(
        circuit_id=circuit_id,
        meter_count=meters.count,
        with_power=with_power,
        placement_seed=meters.seed,
        median_inter_meter_m=inter,
        stats=error_stats(errors),
        baseline_median=float(np.median(base)),
        strategy=meters.strategy,
        first_ccp_metered=_first_ccp(circuit) in {m.ccp for m in meters.meters},
        model_seed=model_seed,
        epochs=history.stopped_epoch + 1,
    )
    return row, dataset


def run_coverage_sweep(
    circuit: Circuit,
    voltages: VoltageSeries,
    loads,
    assignment,
    total_impedance_ohm: float,
    meter_counts: Sequence[int],
    placement_seeds: Sequence[int],
    power_modes: Sequence[bool] = (True, False),
    strategy: str = "random",
    model_seed: int = 0,
    hyper: TrainConfig = TrainConfig(),
    circuit_id: str = "circuit",
) -> ExperimentReport:
    """One row per (C, power mode, placement seed), in that order.

    Meters are selected once per (C, seed) and shared by both power modes,
    so the two error distributions cover identical samples.
    """
    report = ExperimentReport(
        metadata={
            "kind": "coverage",
            "meter_counts": list(meter_counts),
            "placement_seeds": list(placement_seeds),
            "power_modes": list(power_modes),
            "strategy": strategy,
            "model_seed": model_seed,
        }
    )
    for count in meter_counts:
        placements = {
            seed: select_smart_meters(circuit, assignment, count, strategy=strategy, seed=seed)
            for seed in placement_seeds
        }
        for with_power in power_modes:
            for seed in placement_seeds:
                row, _ = run_configuration(
                    circuit,
                    voltages,
                    loads,
                    placements[seed],
                    total_impedance_ohm,
                    with_power,
                    model_seed,
                    hyper,
                    circuit_id,
                )
                report.rows.append(row)
    return report


def run_placement_sweep(
    circuit: Circuit,
    voltages: VoltageSeries,
    loads,
    assignment,
    total_impedance_ohm: float,
    meter_count: int,
    placement_seeds: Sequence[int],
    power_modes: Sequence[bool] = (True, False),
    model_seed: int = 0,
    hyper: TrainConfig = TrainConfig(),
    circuit_id: str = "circuit",
    include_key_locations: bool = True,
) -> ExperimentReport:
    """Vary where a fixed number of meters sit; rows sort by the placement's
    median inter-meter distance. A key-locations placement is appended as a
    labeled reference (see the sidecar's strategy field)."""
    if len(placement_seeds) < 2:
        raise ValueError("placement sweep needs at least 2 placement seeds")
    report = ExperimentReport(
        metadata={
            "kind": "placement",
            "C": meter_count,
            "placement_seeds": list(placement_seeds),
            "power_modes": list(power_modes),
            "model_seed": model_seed,
            "include_key_locations": include_key_locations,
        }
    )
    placements = [
        select_smart_meters(circuit, assignment, meter_count, strategy="random", seed=seed)
        for seed in placement_seeds
    ]
    if include_key_locations:
        placements.append(
            select_smart_meters(
                circuit, assignment, meter_count, strategy="key_locations", seed=placement_seeds[0]
            )
        )
    rows = []
    for meters in placements:
        for with_power in power_modes:
            row, _ = run_configuration(
                circuit,
                voltages,
                loads,
                meters,
                total_impedance_ohm,
                with_power,
                model_seed,
                hyper,
                circuit_id,
            )
            rows.append(row)
    rows.sort(key=lambda r: (r.median_inter_meter_m or 0.0, not r.with_power, r.placement_seed or 0))
    report.rows.extend(rows)
    return report
