"""Work extraction from strongly coupled thermal machines, with an explicit
weight-battery embedding of the abstract protocols."""

from .operators import (
    CompositeSpace,
    DensityMatrix,
    DimensionError,
    HermitianOperator,
    InvalidStateError,
    NotHermitianError,
    UnitaryOperator,
    partial_trace,
    tensor_embed,
    trace_distance,
)
from .thermo import free_energy, gibbs_state, gibbs_relative_entropy, log_partition, relative_entropy, von_neumann_entropy
from .machine import (
    MachineSpec,
    Protocol,
    ProtocolError,
    Quench,
    Thermalise,
    exact_work_decomposition,
    reverse_protocol,
    run_protocol,
)
from .bounds import (
    BoundReport,
    OptimizerConfig,
    build_optimal_protocol,
    minimize_irreversibility,
    theorem1_bound,
    weak_coupling_bound,
)

__version__ = "0.1.0"
