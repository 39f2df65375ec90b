"""lvvc: LV feeder simulation and half-hour-ahead voltage prediction.

Simulates a low-voltage feeder (synthetic household demand, per-phase
radial power flow) and trains a feed-forward network to predict the
voltage at every customer connection point from a handful of smart
meters.
"""

__version__ = "0.1.0"

from .circuit import (  # noqa: F401
    CCP,
    CableSegment,
    Circuit,
    CircuitError,
    SwitchableElement,
    enumerate_topology_options,
    effective_topology,
    households_upstream,
    parse_circuit,
    path_distance,
    serialize_circuit,
)
from .demand import (  # noqa: F401
    CCPPhaseLoad,
    DemandConfig,
    DemandError,
    DemandSeries,
    PhaseAssignment,
    aggregate_to_ccp_phase,
    assign_phases,
    generate_profiles,
)
from .features import (  # noqa: F401
    DatasetError,
    FeatureDataset,
    MeterSet,
    build_dataset,
    input_width,
    median_inter_meter_distance,
    select_smart_meters,
)
from .impedance import (  # noqa: F401
    DEFAULT_LOAD_OHM,
    ImpedanceSummary,
    SegmentImpedance,
    segment_impedance,
    thevenin_total_impedance,
)
from .mlp import (  # noqa: F401
    MLP,
    TrainConfig,
    TrainingError,
    forward,
    init_model,
    layer_sizes,
    predict,
    selu,
    train,
)
from .powerflow import (  # noqa: F401
    PowerFlowError,
    SolveReport,
    VoltageSeries,
    solve_series,
    solve_timestep,
    violates_statutory_band,
)
from .experiments import ErrorStats, error_stats  # noqa: F401


def demo_circuit_path() -> str:
    """Path of the bundled three-branch demonstration feeder."""
    import importlib.resources

    return str(importlib.resources.files(__name__) / "data" / "demo_circuit.json")
