import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lvvc.circuit import CCP, CableSegment, Circuit, validate_circuit
from lvvc.demand import (
    DemandError,
    PhaseAssignment,
    aggregate_to_ccp_phase,
    assign_phases,
    generate_profiles,
    household_ids,
    read_demand_csv,
    write_demand_csv,
)

from conftest import make_chain

# empirical grand mean of the 100-household fixture below at seed 42,
# checked once against the configured 5-15 kWh/day band and frozen
FROZEN_MEAN_DAILY_KWH = 7.390213998509016


def hundred_household_circuit():
    nodes = ["S"] + [f"C{i}" for i in range(1, 26)]
    segments = tuple(
        CableSegment(nodes[i], nodes[i + 1], 20.0, 3e-4, 1e-4) for i in range(25)
    )
    ccps = tuple(CCP(n, 4, "multi") for n in nodes[1:])
    return validate_circuit(Circuit("S", tuple(nodes), segments, ccps))


def multi_circuit(households):
    return make_chain([50.0], households=[households])


class TestAssignPhases:
    def test_six_households_two_per_phase(self):
        # a 6-household property puts two households on each 230 V phase
        assignment = assign_phases(multi_circuit(6), seed=1)
        per_phase = assignment.by_ccp["C1"]
        assert sorted(len(per_phase[p]) for p in (1, 2, 3)) == [2, 2, 2]

    def test_single_household_occupies_one_phase(self):
        assignment = assign_phases(multi_circuit(1), seed=5)
        counts = [len(assignment.by_ccp["C1"][p]) for p in (1, 2, 3)]
        assert sorted(counts) == [0, 0, 1]

    def test_four_households_split_2_1_1(self):
        assignment = assign_phases(multi_circuit(4), seed=1)
        per_phase = assignment.by_ccp["C1"]
        assert [len(per_phase[p]) for p in (1, 2, 3)] == [2, 1, 1]

    def test_deterministic(self, demo_circuit):
        a = assign_phases(demo_circuit, seed=9)
        b = assign_phases(demo_circuit, seed=9)
        assert a == b

    def test_single_phase_choice_varies_with_seed(self, demo_circuit):
        picks = {
            tuple(
                assignment.phase_of((ccp.node, 0))
                for ccp in demo_circuit.ccps
                if ccp.households == 1
            )
            for assignment in (assign_phases(demo_circuit, seed=s) for s in range(8))
        }
        assert len(picks) > 1

    @settings(max_examples=30, deadline=None)
    @given(households=st.integers(min_value=2, max_value=24), seed=st.integers(0, 99))
    def test_phase_balance(self, households, seed):
        assignment = assign_phases(multi_circuit(households), seed=seed)
        counts = [len(assignment.by_ccp["C1"][p]) for p in (1, 2, 3)]
        assert sum(counts) == households
        assert max(counts) - min(counts) <= 1
        # remainders land on the lowest-numbered phases
        assert counts == sorted(counts, reverse=True)


class TestGenerateProfiles:
    def test_same_seed_bit_identical(self):
        circuit = make_chain([30.0, 30.0], households=[1, 3])
        a = generate_profiles(circuit, seed=3, days=14)
        b = generate_profiles(circuit, seed=3, days=14)
        assert a.households == b.households
        assert np.array_equal(a.values, b.values)

    def test_minimum_days_enforced(self):
        with pytest.raises(DemandError, match="14 days"):
            generate_profiles(make_chain([30.0]), seed=1, days=13)

    def test_shape_and_nonnegative(self):
        circuit = make_chain([30.0, 30.0], households=[2, 1])
        profiles = generate_profiles(circuit, seed=8, days=14)
        assert profiles.values.shape == (3, 14 * 48)
        assert np.all(profiles.values >= 0)
        assert np.all(np.isfinite(profiles.values))

    def test_hundred_household_mean_daily_energy(self):
        profiles = generate_profiles(hundred_household_circuit(), seed=42, days=14)
        mean = profiles.mean_daily_kwh()
        lo, hi = profiles.config.mean_daily_kwh_band
        assert lo <= mean <= hi
        assert mean == pytest.approx(FROZEN_MEAN_DAILY_KWH, rel=1e-12)

    def test_household_order_is_circuit_order(self):
        circuit = make_chain([30.0, 30.0], households=[2, 1])
        assert household_ids(circuit) == (("C1", 0), ("C1", 1), ("C2", 0))


class TestAggregate:
    def test_one_household_lump_equals_series(self):
        circuit = multi_circuit(1)
        assignment = assign_phases(circuit, seed=2)
        profiles = generate_profiles(circuit, seed=2, days=14)
        loads = aggregate_to_ccp_phase(profiles, assignment)
        phase = assignment.phase_of(("C1", 0))
        assert np.array_equal(loads.series("C1", phase), profiles.values[0])

    def test_two_constant_households_sum(self):
        circuit = multi_circuit(2)
        assignment = PhaseAssignment(by_ccp={"C1": {1: (0, 1), 2: (), 3: ()}})
        profiles = generate_profiles(circuit, seed=1, days=14)
        constant = profiles.values.copy()
        constant[:] = 1.0
        from dataclasses import replace

        loads = aggregate_to_ccp_phase(replace(profiles, values=constant), assignment)
        assert np.allclose(loads.series("C1", 1), 2.0)

    def test_unoccupied_phase_lumps_to_zero(self):
        circuit = multi_circuit(2)
        assignment = assign_phases(circuit, seed=1)  # phases 1 and 2 occupied
        profiles = generate_profiles(circuit, seed=1, days=14)
        loads = aggregate_to_ccp_phase(profiles, assignment)
        assert np.all(loads.series("C1", 3) == 0.0)

    def test_conservation(self, demo_circuit):
        assignment = assign_phases(demo_circuit, seed=4)
        profiles = generate_profiles(demo_circuit, seed=4, days=14)
        loads = aggregate_to_ccp_phase(profiles, assignment)
        np.testing.assert_allclose(
            loads.values.sum(axis=0), profiles.values.sum(axis=0), rtol=1e-12, atol=1e-12
        )

    def test_missing_household_rejected(self):
        circuit = multi_circuit(2)
        profiles = generate_profiles(circuit, seed=1, days=14)
        assignment = PhaseAssignment(by_ccp={"C1": {1: (0,), 2: (), 3: ()}})
        with pytest.raises(DemandError, match="missing from phase assignment"):
            aggregate_to_ccp_phase(profiles, assignment)


class TestDemandCsv:
    def test_round_trip(self, tmp_path):
        circuit = make_chain([25.0, 25.0], households=[2, 1])
        assignment = assign_phases(circuit, seed=6)
        profiles = generate_profiles(circuit, seed=6, days=14)
        path = tmp_path / "demand.csv"
        write_demand_csv(path, profiles, assignment)
        again, assignment_again = read_demand_csv(path)
        assert again.households == profiles.households
        assert np.array_equal(again.values, profiles.values)
        assert again.start == profiles.start
        assert assignment_again.by_ccp == dict(assignment.by_ccp)

    def test_header_checked(self, tmp_path):
        path = tmp_path / "demand.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(DemandError, match="header"):
            read_demand_csv(path)

    def test_timestamps_rfc3339(self, tmp_path):
        circuit = multi_circuit(1)
        assignment = assign_phases(circuit, seed=1)
        profiles = generate_profiles(circuit, seed=1, days=14)
        path = tmp_path / "demand.csv"
        write_demand_csv(path, profiles, assignment)
        first_row = path.read_text().splitlines()[1]
        assert first_row.startswith("2021-01-04T00:00:00Z,")
