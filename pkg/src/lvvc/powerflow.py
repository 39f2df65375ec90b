"""Per-phase radial power flow by backward/forward sweep.

Each phase is solved independently on the active tree: the backward pass
accumulates branch currents from constant-power loads, the forward pass
propagates voltage drops from the source, and the two alternate until the
largest per-unit voltage change falls below tolerance. Loads are lump
active power per CCP-phase (reactive power from an optional uniform power
factor); the source busbar holds a fixed per-unit voltage.
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime
from typing import Mapping

import numpy as np

from .circuit import Circuit, tree_index
from .demand import CCPPhaseLoad, STEPS_PER_DAY, parse_timestamp, timestamp_at

# statutory band: -6% / +10% of the 230 V reference
LOWER_BAND_PU = 0.94
UPPER_BAND_PU = 1.10

DEFAULT_TOLERANCE_PU = 1e-8
DEFAULT_MAX_ITERATIONS = 100
COLLAPSE_PU = 0.5


class PowerFlowError(RuntimeError):
    """Sweep failed to converge or produced a non-physical operating point."""


def violates_statutory_band(v_pu: float) -> bool:
    """Strictly outside [0.94, 1.10] pu; the band edges themselves comply."""
    return v_pu < LOWER_BAND_PU or v_pu > UPPER_BAND_PU


@dataclass(frozen=True)
class StepRecord:
    step: int
    iterations: int
    max_mismatch_pu: float
    violations: tuple[tuple[str, int], ...]


@dataclass
class SolveReport:
    tolerance_pu: float
    max_iterations: int
    steps: list[StepRecord] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "tolerance_pu": self.tolerance_pu,
            "max_iterations": self.max_iterations,
            "steps": [
                {
                    "step": rec.step,
                    "iterations": rec.iterations,
                    "max_mismatch_pu": rec.max_mismatch_pu,
                    "violations": [[ccp, phase] for ccp, phase in rec.violations],
                }
                for rec in self.steps
            ],
        }


@dataclass(frozen=True)
class VoltageSeries:
    """Per CCP-phase half-hourly rms voltage magnitude, per-unit."""

    start: datetime
    days: int
    pairs: tuple[tuple[str, int], ...]
    values: np.ndarray  # shape (len(pairs), days * 48)

    @property
    def steps(self) -> int:
        return self.values.shape[1]

    def series(self, ccp: str, phase: int) -> np.ndarray:
        return self.values[self.pairs.index((ccp, phase))]


@dataclass(frozen=True)
class _SolverIndex:
    """Array view of the active tree for fast repeated sweeps."""

    nodes: tuple[str, ...]  # topological order, source first
    position: dict[str, int]
    parent_pos: np.ndarray  # parent position per node, -1 for source
    edge_z: np.ndarray  # complex R+jX of the parent segment, 0 for source


def _solver_index(circuit: Circuit) -> _SolverIndex:
    index = tree_index(circuit)
    nodes = index.order
    position = {node: i for i, node in enumerate(nodes)}
    parent_pos = np.full(len(nodes), -1, dtype=np.int64)
    edge_z = np.zeros(len(nodes), dtype=complex)
    for node in nodes[1:]:
        pos = position[node]
        parent_pos[pos] = position[index.parent[node]]
        seg = index.parent_segment[node]
        edge_z[pos] = complex(seg.r_per_m * seg.length_m, seg.x_per_m * seg.length_m)
    return _SolverIndex(nodes=nodes, position=position, parent_pos=parent_pos, edge_z=edge_z)


def _sweep_phase(
    solver: _SolverIndex,
    power_w: np.ndarray,
    v_source: complex,
    v_nominal: float,
    tolerance_pu: float,
    max_iterations: int,
) -> tuple[np.ndarray, int, float]:
    """Fixed point of the backward/forward sweep for one phase.

    power_w is complex VA drawn per node position. Returns the complex node
    voltages, the iteration count, and the final mismatch in pu.
    """
    n = len(solver.nodes)
    voltage = np.full(n, v_source, dtype=complex)
    parent = solver.parent_pos
    for iteration in range(1, max_iterations + 1):
        current = np.conj(power_w / voltage)
        # backward: accumulate branch currents towards the source
        for pos in range(n - 1, 0, -1):
            current[parent[pos]] += current[pos]
        # forward: apply voltage drops from the source
        new_voltage = np.empty_like(voltage)
        new_voltage[0] = v_source
        for pos in range(1, n):
            new_voltage[pos] = new_voltage[parent[pos]] - solver.edge_z[pos] * current[pos]
        mismatch = float(np.abs(new_voltage - voltage).max()) / v_nominal
        voltage = new_voltage
        if np.abs(voltage).min() <= COLLAPSE_PU * v_nominal:
            raise PowerFlowError(
                f"voltage collapse: |V| fell to {np.abs(voltage).min() / v_nominal:.3f} pu"
            )
        if mismatch < tolerance_pu:
            return voltage, iteration, mismatch
    raise PowerFlowError(
        f"no convergence in {max_iterations} iterations (last mismatch {mismatch:.3e} pu)"
    )


def solve_timestep(
    circuit: Circuit,
    loads_kw: Mapping[tuple[str, int], float],
    source_pu: float = 1.0,
    power_factor: float = 1.0,
    tolerance_pu: float = DEFAULT_TOLERANCE_PU,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    step: int = 0,
) -> tuple[dict[tuple[str, int], float], StepRecord]:
    """Voltages (pu) for every (ccp, phase) key of ``loads_kw`` at one step."""
    solver = _solver_index(circuit)
    v_nominal = circuit.nominal_voltage
    v_source = complex(source_pu * v_nominal)
    tan_phi = math.tan(math.acos(power_factor))

    by_phase: dict[int, list[tuple[str, float]]] = {}
    for (ccp, phase), p_kw in loads_kw.items():
        if not (p_kw >= 0 and np.isfinite(p_kw)):
            raise PowerFlowError(f"load at ({ccp}, phase {phase}) must be finite and >= 0")
        by_phase.setdefault(phase, []).append((ccp, p_kw))

    voltages: dict[tuple[str, int], float] = {}
    iterations = 0
    mismatch = 0.0
    for phase in sorted(by_phase):
        power_w = np.zeros(len(solver.nodes), dtype=complex)
        for ccp, p_kw in by_phase[phase]:
            power_w[solver.position[ccp]] += p_kw * 1000.0 * complex(1.0, tan_phi)
        node_v, phase_iter, phase_mismatch = _sweep_phase(
            solver, power_w, v_source, v_nominal, tolerance_pu, max_iterations
        )
        iterations = max(iterations, phase_iter)
        mismatch = max(mismatch, phase_mismatch)
        for ccp, _ in by_phase[phase]:
            voltages[(ccp, phase)] = float(abs(node_v[solver.position[ccp]])) / v_nominal

    violations = tuple(
        pair for pair, v in voltages.items() if violates_statutory_band(v)
    )
    return voltages, StepRecord(
        step=step, iterations=iterations, max_mismatch_pu=mismatch, violations=violations
    )


def solve_series(
    circuit: Circuit,
    loads: CCPPhaseLoad,
    source_pu: float = 1.0,
    power_factor: float = 1.0,
    tolerance_pu: float = DEFAULT_TOLERANCE_PU,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    threads: int | None = None,
) -> tuple[VoltageSeries, SolveReport]:
    """Apply solve_timestep to every half hour of the lump-load series.

    Steps are independent; with threads > 1 they are solved concurrently
    but always assembled in step order. Per-step errors propagate with the
    step index attached.
    """
    if threads is None:
        threads = max(1, int(os.environ.get("LVVC_THREADS", "1")))
    pairs = loads.pairs

    def solve_one(t: int):
        try:
            return solve_timestep(
                circuit,
                loads.at_step(t),
                source_pu=source_pu,
                power_factor=power_factor,
                tolerance_pu=tolerance_pu,
                max_iterations=max_iterations,
                step=t,
            )
        except PowerFlowError as exc:
            raise PowerFlowError(f"step {t}: {exc}") from exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(solve_one, range(loads.steps)))
    else:
        results = [solve_one(t) for t in range(loads.steps)]

    values = np.empty((len(pairs), loads.steps))
    report = SolveReport(tolerance_pu=tolerance_pu, max_iterations=max_iterations)
    for t, (voltages, record) in enumerate(results):
        for i, pair in enumerate(pairs):
            values[i, t] = voltages[pair]
        report.steps.append(record)
    series = VoltageSeries(start=loads.start, days=loads.days, pairs=pairs, values=values)
    return series, report


# ---------------------------------------------------------------------------
# CSV interface: timestamp,ccp_id,phase,v_pu


def write_voltage_csv(path, series: VoltageSeries) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "ccp_id", "phase", "v_pu"])
        for t in range(series.steps):
            stamp = timestamp_at(series.start, t)
            for i, (ccp, phase) in enumerate(series.pairs):
                writer.writerow([stamp, ccp, phase, repr(float(series.values[i, t]))])


def read_voltage_csv(path) -> VoltageSeries:
    stamps: list[str] = []
    stamp_index: dict[str, int] = {}
    pairs: dict[tuple[str, int], int] = {}
    records: list[tuple[int, int, float]] = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["timestamp", "ccp_id", "phase", "v_pu"]:
            raise PowerFlowError(f"unexpected voltage CSV header: {header}")
        for stamp, ccp, phase, v_pu in reader:
            if stamp not in stamp_index:
                stamp_index[stamp] = len(stamps)
                stamps.append(stamp)
            pair = (ccp, int(phase))
            if pair not in pairs:
                pairs[pair] = len(pairs)
            records.append((stamp_index[stamp], pairs[pair], float(v_pu)))
    if not stamps:
        raise PowerFlowError("voltage CSV has no rows")
    start = parse_timestamp(stamps[0])
    values = np.zeros((len(pairs), len(stamps)))
    for t, row, value in records:
        values[row, t] = value
    days = (len(stamps) + STEPS_PER_DAY - 1) // STEPS_PER_DAY
    return VoltageSeries(start=start, days=days, pairs=tuple(pairs), values=values)
