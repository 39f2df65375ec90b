"""Per-segment impedance and the circuit's scalar total line impedance.

Each cable segment reduces to a resistor carrying the impedance magnitude
Z = sqrt(R^2 + X^2). The whole circuit then reduces, under the worst-case
assumption that every customer hangs on one common phase, to a single
scalar seen from the source: every CCP ties the tree to a common return
rail through a nominal per-household load impedance, and the resulting
resistor tree collapses by series/parallel combination of magnitudes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .circuit import CableSegment, Circuit, CircuitError, tree_index

# 1 kW nominal load per household at 230 V: 230^2 / 1000 W.
DEFAULT_LOAD_OHM = 230.0**2 / 1000.0


@dataclass(frozen=True)
class SegmentImpedance:
    segment: CableSegment
    r_ohm: float
    x_ohm: float
    z_ohm: float


@dataclass(frozen=True)
class ImpedanceSummary:
    total_ohm: float  # scalar network-capacity indicator, one per circuit
    load_ohm_per_household: float


def segment_impedance(segment: CableSegment) -> SegmentImpedance:
    r = segment.r_per_m * segment.length_m
    x = segment.x_per_m * segment.length_m
    return SegmentImpedance(segment=segment, r_ohm=r, x_ohm=x, z_ohm=math.hypot(r, x))


def _parallel(values: list[float]) -> float:
    """Parallel combination of impedance magnitudes, order-independent."""
    if any(v == 0.0 for v in values):
        return 0.0
    # Reciprocals summed in sorted order so the float result does not
    # depend on child visitation order.
    return 1.0 / math.fsum(sorted(1.0 / v for v in values))


def thevenin_total_impedance(
    circuit: Circuit, load_ohm_per_household: float = DEFAULT_LOAD_OHM
) -> ImpedanceSummary:
    """Equivalent impedance magnitude between the source and a common
    customer-return rail, with every CCP of H households connected to the
    rail through load_ohm_per_household / H.

    Series branches add their Z magnitudes; parallel branches combine by
    product-over-sum. The reduction is exact on a radial circuit.
    """
    if not circuit.ccps:
        raise CircuitError("total impedance undefined for a circuit with no CCPs")
    if not load_ohm_per_household > 0:
        raise CircuitError("per-household load impedance must be > 0")

    index = tree_index(circuit)
    ccp_households = {c.node: c.households for c in circuit.ccps}

    # impedance from each node down to the return rail, None if the subtree
    # carries no load at all
    down: dict[str, float | None] = {}
    for node in reversed(index.order):
        paths: list[float] = []
        if node in ccp_households:
            paths.append(load_ohm_per_household / ccp_households[node])
        for child in index.children[node]:
            child_down = down[child]
            if child_down is None:
                continue
            edge_z = segment_impedance(index.parent_segment[child]).z_ohm
            paths.append(edge_z + child_down)
        down[node] = _parallel(paths) if paths else None

    total = down[circuit.source]
    assert total is not None  # guaranteed: >=1 CCP and all CCPs reachable
    return ImpedanceSummary(total_ohm=total, load_ohm_per_household=load_ohm_per_household)
