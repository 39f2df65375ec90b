"""Command-line entry point wiring all pipeline stages.

Exit codes: 0 success, 2 configuration/circuit error, 3 simulation error,
4 training error. Every stage reads and writes the documented file
formats, so external artifacts (e.g. a voltage CSV from another
simulator) drop in for any internal stage.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys

import numpy as np

from . import __version__, demo_circuit_path
from .circuit import CircuitError, parse_circuit
from .config import ConfigError, RunConfig, Seeds, load_config
from .demand import (
    DemandError,
    aggregate_to_ccp_phase,
    assign_phases,
    generate_profiles,
    read_demand_csv,
    timestamp_at,
    write_demand_csv,
)
from .experiments import baseline_errors, error_stats
from .features import (
    DatasetError,
    build_dataset,
    load_dataset,
    save_dataset,
    select_smart_meters,
)
from .impedance import DEFAULT_LOAD_OHM, segment_impedance, thevenin_total_impedance
from .mlp import TrainConfig, TrainingError, evaluate_errors, init_model, load_model, predict, save_model, train
from .pipeline import run_experiment, run_pipeline
from .powerflow import PowerFlowError, read_voltage_csv, solve_series, write_voltage_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SIMULATION = 3
EXIT_TRAINING = 4


def _cmd_validate(args) -> int:
    circuit = parse_circuit(args.circuit)
    print(
        f"valid: {len(circuit.nodes)} nodes, {len(circuit.segments)} segments, "
        f"{len(circuit.ccps)} CCPs ({circuit.total_households} households), "
        f"{len(circuit.switches)} switches"
    )
    return EXIT_OK


def _cmd_impedance(args) -> int:
    circuit = parse_circuit(args.circuit)
    summary = thevenin_total_impedance(circuit, args.load_ohm)
    print(f"# total_impedance_ohm={summary.total_ohm!r} load_ohm_per_household={args.load_ohm!r}")
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["from", "to", "length_m", "r_ohm", "x_ohm", "z_ohm"])
    for segment in circuit.segments:
        z = segment_impedance(segment)
        writer.writerow(
            [segment.from_node, segment.to_node, repr(segment.length_m), repr(z.r_ohm), repr(z.x_ohm), repr(z.z_ohm)]
        )
    return EXIT_OK


def _cmd_demand(args) -> int:
    circuit = parse_circuit(args.circuit)
    assignment = assign_phases(circuit, args.phase_seed if args.phase_seed is not None else args.seed)
    profiles = generate_profiles(circuit, args.seed, days=args.days)
    write_demand_csv(args.output, profiles, assignment)
    print(f"wrote {args.output}: {len(profiles.households)} households x {profiles.steps} steps")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    circuit = parse_circuit(args.circuit)
    profiles, assignment = read_demand_csv(args.demand)
    loads = aggregate_to_ccp_phase(profiles, assignment)
    voltages, report = solve_series(circuit, loads, source_pu=args.source_pu)
    write_voltage_csv(args.output, voltages)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2)
            fh.write("\n")
    violations = sum(len(r.violations) for r in report.steps)
    print(f"wrote {args.output}: {len(voltages.pairs)} CCP-phases x {voltages.steps} steps, "
          f"{violations} statutory-band violations")
    return EXIT_OK


def _cmd_dataset(args) -> int:
    circuit = parse_circuit(args.circuit)
    profiles, assignment = read_demand_csv(args.demand)
    loads = aggregate_to_ccp_phase(profiles, assignment)
    voltages = read_voltage_csv(args.voltages)
    meters = select_smart_meters(
        circuit, assignment, args.meters, strategy=args.strategy, seed=args.seed
    )
    summary = thevenin_total_impedance(circuit, args.load_ohm)
    dataset = build_dataset(voltages, loads, meters, circuit, summary.total_ohm, args.with_power)
    save_dataset(dataset, args.output)
    print(
        f"wrote {args.output}: N={dataset.width}, C={dataset.meter_count}, "
        f"train/val/eval = {len(dataset.train)}/{len(dataset.validation)}/{len(dataset.evaluation)}"
    )
    return EXIT_OK


def _cmd_train(args) -> int:
    dataset = load_dataset(args.dataset)
    hyper = TrainConfig(
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        max_epochs=args.max_epochs,
        patience=args.patience,
        seed=args.seed,
    )
    model = init_model(dataset.width, seed=args.seed, selu_output=not args.linear_output)
    trained, history = train(model, dataset, hyper)
    save_model(
        trained,
        args.output,
        metadata={"dataset": str(args.dataset), "hyper": dataclasses.asdict(hyper), "seed": args.seed},
    )
    print(
        f"wrote {args.output}: best epoch {history.best_epoch} "
        f"(val mse {history.validation_loss[history.best_epoch]:.3e}), "
        f"{history.stopped_epoch + 1} epochs"
    )
    return EXIT_OK


def _cmd_predict(args) -> int:
    dataset = load_dataset(args.dataset)
    model = load_model(args.model)
    split = dataset.evaluation
    predictions = predict(model, dataset.normalize_inputs(split.inputs))
    with open(args.output, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "ccp_id", "phase", "v_pred_pu", "v_true_pu", "abs_error_pu"])
        for k in range(len(split)):
            ccp, phase = dataset.pair_table[int(split.pair_index[k])]
            # the prediction is for one step after the sample time
            stamp = timestamp_at(dataset.start, int(split.times[k]) + 1)
            writer.writerow(
                [stamp, ccp, phase, repr(float(predictions[k])), repr(float(split.targets[k])),
                 repr(float(abs(predictions[k] - split.targets[k])))]
            )
    stats = error_stats(np.abs(predictions - split.targets))
    print(f"wrote {args.output}: {stats.count} predictions, median |error| {stats.median:.5f} pu")
    return EXIT_OK


def _cmd_experiment(args) -> int:
    config = load_config(args.config)
    report = run_experiment(config, args.kind, args.output)
    print(f"wrote {args.output}: {len(report.rows)} configurations")
    return EXIT_OK


def _cmd_run(args) -> int:
    config = load_config(args.config)
    out_dir = args.output or config.out_dir
    if not out_dir:
        raise ConfigError("no output directory: pass -o or set out_dir in the config")
    report = run_pipeline(config, out_dir)
    print(f"wrote {out_dir}: {len(report.rows)} configurations")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lvvc",
        description="Simulate LV feeder voltages and predict them from partial smart-meter coverage.",
    )
    parser.add_argument("--version", action="version", version=f"lvvc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a circuit file")
    p.add_argument("circuit")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("impedance", help="total line impedance and per-segment table")
    p.add_argument("circuit")
    p.add_argument("--load-ohm", type=float, default=DEFAULT_LOAD_OHM)
    p.set_defaults(func=_cmd_impedance)

    p = sub.add_parser("demand", help="generate synthetic household demand")
    p.add_argument("circuit")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--phase-seed", type=int, default=None, help="defaults to --seed")
    p.add_argument("--days", type=int, default=28)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_demand)

    p = sub.add_parser("simulate", help="per-phase radial power flow over a demand CSV")
    p.add_argument("circuit")
    p.add_argument("--demand", required=True)
    p.add_argument("--source-pu", type=float, default=1.0)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--report", default=None)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("dataset", help="build a supervised dataset from voltage/demand CSVs")
    p.add_argument("--circuit", required=True)
    p.add_argument("--voltages", required=True)
    p.add_argument("--demand", required=True)
    p.add_argument("--C", dest="meters", type=int, required=True)
    p.add_argument("--strategy", choices=["random", "key_locations"], default="random")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--with-power", action="store_true")
    p.add_argument("--load-ohm", type=float, default=DEFAULT_LOAD_OHM)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_dataset)

    p = sub.add_parser("train", help="train the predictor on a dataset directory")
    p.add_argument("--dataset", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--max-epochs", type=int, default=500)
    p.add_argument("--patience", type=int, default=20)
    p.add_argument("--linear-output", action="store_true", help="linear instead of SELU output neuron")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("predict", help="evaluation-split predictions from a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("experiment", help="coverage or placement study from a run config")
    p.add_argument("kind", choices=["coverage", "placement"])
    p.add_argument("--config", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("run", help="full pipeline from a run config")
    p.add_argument("--config", required=True)
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("demo-circuit", help="print the path of the bundled demo feeder")
    p.set_defaults(func=lambda args: (print(demo_circuit_path()), EXIT_OK)[1])

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CircuitError, ConfigError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DemandError, PowerFlowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SIMULATION
    except TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRAINING


if __name__ == "__main__":
    sys.exit(main())
