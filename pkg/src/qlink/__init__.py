"""Spin-chain quantum links: channels, zero-error codes and the dual-rail protocol."""

from .tensor import (
    HilbertFactorization,
    StateVector,
    DensityOperator,
    SchmidtData,
    tensor_product,
    tensor_many,
    ptrace,
    partial_trace,
    herm_exp,
    polar_decompose,
    schmidt,
    fidelity,
    trace_distance,
)
from .channels import (
    KrausChannel,
    UnitaryDilation,
    CptpReport,
    MultiUseFamily,
    verify_cptp,
    dilation_to_kraus,
    kraus_to_dilation,
    choi_matrix,
    choi_distance,
    compose,
    marginal_consistency,
    env_rate_sequence,
    random_dilation,
    collision_family,
)
from .errors import (
    QlinkError,
    ConfigError,
    NumericalInvariantError,
    NonMixingError,
    CodeConstructionError,
)
from .codes import (
    ClassicalZeroErrorCode,
    QuantumZeroErrorCode,
    BlockDecoder,
    greedy_classical_code,
    verify_classical,
    verify_quantum,
    radon_partition,
    build_quantum_code,
    build_decoder,
    decode_branches,
    decode,
    schmidt_structure_check,
    guaranteed_sizes,
)
from .link import (
    LinkModel,
    Schedule,
    SectorSpace,
    sector_space,
    sector_dimension,
    induced_channel,
    link_family,
)
from .mixing import (
    Superoperator,
    SpectralReport,
    ConvergenceReport,
    receiver_map,
    to_superoperator,
    to_spectrum,
    fixed_point_purity,
    require_mixing,
    iterate_convergence,
    effective_memoryless,
    effective_channel_distance,
)

__version__ = "0.1.0"
