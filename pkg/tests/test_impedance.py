import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lvvc.circuit import CCP, CableSegment, Circuit, CircuitError, validate_circuit
from lvvc.impedance import (
    DEFAULT_LOAD_OHM,
    segment_impedance,
    thevenin_total_impedance,
)

from conftest import make_chain
from oracles import nodal_total_impedance, random_radial_circuit


class TestSegmentImpedance:
    def test_three_four_five(self):
        seg = CableSegment("S", "A", 1000.0, 0.0006, 0.0008)
        z = segment_impedance(seg)
        assert z.r_ohm == pytest.approx(0.6)
        assert z.x_ohm == pytest.approx(0.8)
        assert z.z_ohm == pytest.approx(1.0)

    def test_zero_reactance_degenerates_to_r(self):
        z = segment_impedance(CableSegment("S", "A", 250.0, 0.0004, 0.0))
        assert z.z_ohm == z.r_ohm == pytest.approx(0.1)

    def test_linear_scaling(self):
        z = segment_impedance(CableSegment("S", "A", 500.0, 0.0003, 0.0004))
        assert z.z_ohm == pytest.approx(0.25)

    def test_z_dominates_components(self):
        z = segment_impedance(CableSegment("S", "A", 77.0, 3.3e-4, 1.9e-4))
        assert z.z_ohm >= z.r_ohm
        assert z.z_ohm >= z.x_ohm


def two_branch_circuit():
    """Two identical spurs from the source, one single-household CCP each."""
    return validate_circuit(
        Circuit(
            source="S",
            nodes=("S", "A", "B"),
            segments=(
                CableSegment("S", "A", 1000.0, 0.0003, 0.0004),  # Z = 0.5
                CableSegment("S", "B", 1000.0, 0.0003, 0.0004),
            ),
            ccps=(CCP("A", 1, "single"), CCP("B", 1, "single")),
        )
    )


class TestTheveninReduction:
    def test_single_ccp_series(self):
        circuit = validate_circuit(
            Circuit(
                source="S",
                nodes=("S", "A"),
                segments=(CableSegment("S", "A", 1000.0, 0.0003, 0.0004),),
                ccps=(CCP("A", 1, "single"),),
            )
        )
        summary = thevenin_total_impedance(circuit, 52.9)
        assert summary.total_ohm == pytest.approx(53.4, abs=1e-12)

    def test_two_identical_branches_halve(self):
        summary = thevenin_total_impedance(two_branch_circuit(), 52.9)
        assert summary.total_ohm == pytest.approx(53.4 / 2, abs=1e-12)

    def test_chain_series_formula(self):
        lengths = [120.0, 80.0, 55.0]
        chain = make_chain(lengths, households=[1, 1, 1], r=0.0003, x=0.0004)
        # terminal CCP only: series sum of Z plus the load term
        terminal_only = validate_circuit(
            Circuit(
                source=chain.source,
                nodes=chain.nodes,
                segments=chain.segments,
                ccps=(CCP("C3", 1, "single"),),
            )
        )
        z_sum = sum(segment_impedance(s).z_ohm for s in chain.segments)
        summary = thevenin_total_impedance(terminal_only, DEFAULT_LOAD_OHM)
        assert summary.total_ohm == pytest.approx(z_sum + DEFAULT_LOAD_OHM, rel=1e-12)

    def test_mid_feeder_ccp_matches_nodal_oracle(self):
        chain = make_chain([120.0, 80.0, 55.0], households=[2, 1, 3], r=0.0003, x=0.0004)
        summary = thevenin_total_impedance(chain, 52.9)
        assert summary.total_ohm == pytest.approx(nodal_total_impedance(chain, 52.9), rel=1e-9)

    @pytest.mark.parametrize("seed", range(20))
    def test_random_trees_match_nodal_oracle(self, seed):
        circuit = random_radial_circuit(np.random.default_rng(7000 + seed))
        summary = thevenin_total_impedance(circuit, DEFAULT_LOAD_OHM)
        expected = nodal_total_impedance(circuit, DEFAULT_LOAD_OHM)
        assert summary.total_ohm == pytest.approx(expected, rel=1e-9)

    def test_no_ccps_rejected(self):
        circuit = Circuit(
            source="S",
            nodes=("S", "A"),
            segments=(CableSegment("S", "A", 10.0, 1e-4, 0.0),),
            ccps=(),
        )
        with pytest.raises(CircuitError, match="no CCPs"):
            thevenin_total_impedance(circuit)

    def test_positive_for_any_ccp(self, demo_circuit):
        assert thevenin_total_impedance(demo_circuit).total_ohm > 0


class TestMonotonicity:
    def test_extra_ccp_never_increases(self):
        base = make_chain([100.0, 60.0], households=[1, 1])
        extended = validate_circuit(
            Circuit(
                source=base.source,
                nodes=base.nodes + ("D",),
                segments=base.segments + (CableSegment("C2", "D", 30.0, 4e-4, 1e-4),),
                ccps=base.ccps + (CCP("D", 2, "multi"),),
            )
        )
        assert (
            thevenin_total_impedance(extended).total_ohm
            <= thevenin_total_impedance(base).total_ohm
        )

    @settings(max_examples=40, deadline=None)
    @given(factor=st.floats(min_value=1.0, max_value=20.0), seed=st.integers(0, 500))
    def test_lengthening_never_decreases(self, factor, seed):
        circuit = random_radial_circuit(np.random.default_rng(seed))
        rng = np.random.default_rng(seed + 1)
        which = int(rng.integers(len(circuit.segments)))
        segments = list(circuit.segments)
        seg = segments[which]
        segments[which] = CableSegment(
            seg.from_node, seg.to_node, seg.length_m * factor, seg.r_per_m, seg.x_per_m
        )
        longer = validate_circuit(
            Circuit(
                source=circuit.source,
                nodes=circuit.nodes,
                segments=tuple(segments),
                ccps=circuit.ccps,
            )
        )
        assert (
            thevenin_total_impedance(longer).total_ohm
            >= thevenin_total_impedance(circuit).total_ohm - 1e-12
        )

    @pytest.mark.parametrize("seed", range(8))
    def test_child_order_does_not_matter(self, seed):
        circuit = random_radial_circuit(np.random.default_rng(300 + seed))
        rng = np.random.default_rng(seed)
        perm_seg = rng.permutation(len(circuit.segments))
        perm_ccp = rng.permutation(len(circuit.ccps))
        shuffled = validate_circuit(
            Circuit(
                source=circuit.source,
                nodes=circuit.nodes,
                segments=tuple(circuit.segments[i] for i in perm_seg),
                ccps=tuple(circuit.ccps[i] for i in perm_ccp),
            )
        )
        assert (
            thevenin_total_impedance(shuffled).total_ohm
            == thevenin_total_impedance(circuit).total_ohm
        )
