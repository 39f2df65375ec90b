"""End-to-end orchestration: demand -> phases -> power flow -> meters ->
dataset -> training -> evaluation -> report.

Every stage writes file artifacts, so any one of them can be replaced by
an externally produced file in the documented schema (a foreign voltage
CSV stands in for the internal solver exactly like a simulator export
would). Outputs are byte-reproducible from the config; a marker file
flags aborted runs.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass

from . import __version__
from .circuit import Circuit, parse_circuit
from .config import RunConfig, config_hash, config_to_dict
from .demand import (
    CCPPhaseLoad,
    DemandSeries,
    PhaseAssignment,
    aggregate_to_ccp_phase,
    assign_phases,
    generate_profiles,
    write_demand_csv,
)
from .experiments import ExperimentReport, run_coverage_sweep, run_placement_sweep
from .impedance import thevenin_total_impedance
from .plots import coverage_boxplot, coverage_mean_lines, placement_boxplot
from .powerflow import SolveReport, VoltageSeries, solve_series, write_voltage_csv

INCOMPLETE_MARKER = "INCOMPLETE.json"


@dataclass
class SimulationBundle:
    """Everything the studies need from one simulated month."""

    circuit: Circuit
    circuit_id: str
    assignment: PhaseAssignment
    profiles: DemandSeries
    loads: CCPPhaseLoad
    voltages: VoltageSeries
    solve_report: SolveReport
    total_impedance_ohm: float


def simulate(config: RunConfig, circuit: Circuit | None = None) -> SimulationBundle:
    """Run the simulation stages of a config (no files written)."""
    if circuit is None:
        circuit = parse_circuit(config.circuit)
    assignment = assign_phases(circuit, config.seeds.phase)
    profiles = generate_profiles(circuit, config.seeds.demand, days=config.days)
    loads = aggregate_to_ccp_phase(profiles, assignment)
    voltages, solve_report = solve_series(
        circuit, loads, source_pu=config.source_pu, power_factor=config.power_factor
    )
    summary = thevenin_total_impedance(circuit, config.load_ohm)
    return SimulationBundle(
        circuit=circuit,
        circuit_id=os.path.splitext(os.path.basename(config.circuit))[0],
        assignment=assignment,
        profiles=profiles,
        loads=loads,
        voltages=voltages,
        solve_report=solve_report,
        total_impedance_ohm=summary.total_ohm,
    )


def write_sidecar(path, config: RunConfig, extra: dict | None = None) -> None:
    """Metadata sidecar: tool version, config hash, full config."""
    document = {
        "tool": "lvvc",
        "version": __version__,
        "config_hash": config_hash(config),
        "config": config_to_dict(config),
    }
    if extra:
        document.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(document, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_report_artifacts(
    report: ExperimentReport, out_dir, config: RunConfig, figures: dict[str, str]
) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "results.csv"), "w", newline="", encoding="utf-8") as fh:
        fh.write(report.to_csv_text())
    write_sidecar(os.path.join(out_dir, "results.meta.json"), config, report.to_sidecar())
    for name, svg in figures.items():
        with open(os.path.join(out_dir, name), "w", encoding="utf-8") as fh:
            fh.write(svg)


def run_pipeline(config: RunConfig, out_dir) -> ExperimentReport:
    """Execute every stage for the config and write all artifacts.

    The out directory holds demand.csv, voltages.csv, the solve report,
    results.csv with its metadata sidecar, and the figure SVGs. Reruns with
    the same config reproduce every byte. An INCOMPLETE.json marker exists
    while the run is in flight or after a failure.
    """
    os.makedirs(out_dir, exist_ok=True)
    marker = os.path.join(out_dir, INCOMPLETE_MARKER)

    stage = "circuit"
    try:
        with open(marker, "w", encoding="utf-8") as fh:
            json.dump({"stage": stage}, fh)
        circuit = parse_circuit(config.circuit)

        stage = "simulate"
        bundle = simulate(config, circuit)
        write_demand_csv(os.path.join(out_dir, "demand.csv"), bundle.profiles, bundle.assignment)
        write_sidecar(os.path.join(out_dir, "demand.meta.json"), config)
        write_voltage_csv(os.path.join(out_dir, "voltages.csv"), bundle.voltages)
        write_sidecar(
            os.path.join(out_dir, "voltages.meta.json"),
            config,
            {"solve_report": bundle.solve_report.to_dict(), "total_impedance_ohm": bundle.total_impedance_ohm},
        )

        stage = "experiment"
        report = run_coverage_sweep(
            bundle.circuit,
            bundle.voltages,
            bundle.loads,
            bundle.assignment,
            bundle.total_impedance_ohm,
            meter_counts=config.meter_counts,
            placement_seeds=[config.seeds.placement],
            power_modes=config.power_modes,
            strategy=config.strategy,
            model_seed=config.seeds.model,
            hyper=config.hyper,
            circuit_id=bundle.circuit_id,
        )
        figures = {"coverage_boxplot.svg": coverage_boxplot(report)}
        if len(config.meter_counts) > 1:
            figures["coverage_mean.svg"] = coverage_mean_lines(report)
        write_report_artifacts(report, out_dir, config, figures)
    except Exception as exc:
        with open(marker, "w", encoding="utf-8") as fh:
            json.dump({"stage": stage, "error": str(exc)}, fh)
            fh.write("\n")
        raise
    os.remove(marker)
    return report


def run_experiment(config: RunConfig, kind: str, out_dir) -> ExperimentReport:
    """Coverage or placement study straight from a config; writes results
    CSV, metadata sidecar, and the figure SVGs."""
    bundle = simulate(config)
    if kind == "coverage":
        report = run_coverage_sweep(
            bundle.circuit,
            bundle.voltages,
            bundle.loads,
            bundle.assignment,
            bundle.total_impedance_ohm,
            meter_counts=config.meter_counts,
            placement_seeds=[config.seeds.placement, *config.placement_seeds],
            power_modes=config.power_modes,
            strategy=config.strategy,
            model_seed=config.seeds.model,
            hyper=config.hyper,
            circuit_id=bundle.circuit_id,
        )
        figures = {
            "coverage_boxplot.svg": coverage_boxplot(report),
            "coverage_mean.svg": coverage_mean_lines(report),
        }
    elif kind == "placement":
        report = run_placement_sweep(
            bundle.circuit,
            bundle.voltages,
            bundle.loads,
            bundle.assignment,
            bundle.total_impedance_ohm,
            meter_count=config.meter_counts[0],
            placement_seeds=[config.seeds.placement, *config.placement_seeds],
            power_modes=config.power_modes,
            model_seed=config.seeds.model,
            hyper=config.hyper,
            circuit_id=bundle.circuit_id,
        )
        figures = {"placement_boxplot.svg": placement_boxplot(report)}
    else:
        raise ValueError(f"unknown experiment kind {kind!r}")
    write_report_artifacts(report, out_dir, config, figures)
    return report
