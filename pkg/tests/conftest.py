import numpy as np
import pytest

import lvvc
from lvvc.circuit import CCP, CableSegment, Circuit, parse_circuit, validate_circuit
from lvvc.demand import aggregate_to_ccp_phase, assign_phases, generate_profiles
from lvvc.impedance import thevenin_total_impedance
from lvvc.powerflow import solve_series


def make_chain(lengths, households=None, r=0.0004, x=0.0001):
    """Chain circuit S - C1 - C2 - ... with a CCP on every chain node."""
    households = households or [1] * len(lengths)
    nodes = ["S"] + [f"C{i}" for i in range(1, len(lengths) + 1)]
    segments = tuple(
        CableSegment(nodes[i], nodes[i + 1], float(lengths[i]), r, x)
        for i in range(len(lengths))
    )
    ccps = tuple(
        CCP(node=nodes[i + 1], households=h, kind="single" if h == 1 else "multi")
        for i, h in enumerate(households)
    )
    return validate_circuit(
        Circuit(source="S", nodes=tuple(nodes), segments=segments, ccps=ccps)
    )


@pytest.fixture(scope="session")
def demo_circuit():
    return parse_circuit(lvvc.demo_circuit_path())


@pytest.fixture(scope="session")
def demo_sim(demo_circuit):
    """Two simulated weeks on the bundled feeder, shared across tests."""
    assignment = assign_phases(demo_circuit, seed=11)
    profiles = generate_profiles(demo_circuit, seed=7, days=14)
    loads = aggregate_to_ccp_phase(profiles, assignment)
    voltages, report = solve_series(demo_circuit, loads, source_pu=1.0)
    impedance = thevenin_total_impedance(demo_circuit)
    return {
        "circuit": demo_circuit,
        "assignment": assignment,
        "profiles": profiles,
        "loads": loads,
        "voltages": voltages,
        "report": report,
        "impedance": impedance,
    }


@pytest.fixture
def rng():
    return np.random.default_rng(20210104)
