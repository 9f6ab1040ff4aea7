"""atomlab: a numerical laboratory for atomic decompositions on the torus.

Function spaces with three equivalent norm engines (Fourier-analytic,
local means, and coefficient-space), validated smooth atoms with explicit
constants, synthesis/analysis between fields and coefficient arrays, and
transport of atomic decompositions along torus diffeomorphisms.
"""

from ._errors import (
    AliasingWarning,
    AtomLabError,
    BoundsError,
    ConfigError,
    HypothesisError,
    HypothesisWarning,
    NumericsError,
    SuiteError,
    ValidationError,
)
from .atoms import (
    AtomCertificate,
    AtomSpec,
    analyze,
    convergence_bound,
    dilate_atom,
    kernel_as_atom,
    make_atom,
    synthesize,
    validate_atom,
)
from .grid import (
    DyadicCube,
    Grid,
    SampledField,
    cube,
    cube_geometry,
    evaluate_offgrid,
    read_field,
    write_field,
)
from .harness import (
    CorpusSpec,
    ExperimentConfig,
    GridSpec,
    Report,
    emit_tables,
    generate_corpus,
    load_config,
    read_table,
    run_experiment,
)
from .localmeans import (
    KernelPair,
    besov_norm_means,
    build_mean_kernels,
    convolve,
    kernel_field,
    make_kernel_family,
    tl_norm_means,
    verify_kernel_family,
)
from .operators import (
    Diffeo,
    TransportPlan,
    chain_diffeos,
    compose,
    diffeo_certificate,
    holder_compose,
    lp_change_of_variables,
    make_diffeo,
    multiply,
    multiply_atom,
    read_diffeo,
    transport_atoms,
    write_diffeo,
)
from .spaces import (
    CoeffArray,
    SpaceParams,
    bpq_norm,
    coeffs_from_pairs,
    fpq_norm,
    holder_norm,
    lp_norm,
    read_coeffs,
    sigma_indices,
    write_coeffs,
)
from .spectral import (
    ResolutionOfUnity,
    band_project,
    besov_norm_fourier,
    make_resolution,
    tl_norm_fourier,
)

__version__ = "0.1.0"

__all__ = [
    "AliasingWarning",
    "AtomCertificate",
    "AtomLabError",
    "AtomSpec",
    "BoundsError",
    "CoeffArray",
    "ConfigError",
    "CorpusSpec",
    "Diffeo",
    "DyadicCube",
    "ExperimentConfig",
    "Grid",
    "GridSpec",
    "HypothesisError",
    "HypothesisWarning",
    "KernelPair",
    "NumericsError",
    "Report",
    "ResolutionOfUnity",
    "SampledField",
    "SpaceParams",
    "SuiteError",
    "TransportPlan",
    "ValidationError",
    "analyze",
    "band_project",
    "besov_norm_fourier",
    "besov_norm_means",
    "bpq_norm",
    "build_mean_kernels",
    "chain_diffeos",
    "coeffs_from_pairs",
    "compose",
    "convergence_bound",
    "convolve",
    "cube",
    "cube_geometry",
    "diffeo_certificate",
    "dilate_atom",
    "emit_tables",
    "evaluate_offgrid",
    "fpq_norm",
    "generate_corpus",
    "holder_compose",
    "holder_norm",
    "kernel_as_atom",
    "kernel_field",
    "load_config",
    "lp_change_of_variables",
    "lp_norm",
    "make_atom",
    "make_diffeo",
    "make_kernel_family",
    "make_resolution",
    "multiply",
    "multiply_atom",
    "read_coeffs",
    "read_diffeo",
    "read_field",
    "read_table",
    "run_experiment",
    "sigma_indices",
    "synthesize",
    "tl_norm_fourier",
    "tl_norm_means",
    "transport_atoms",
    "validate_atom",
    "verify_kernel_family",
    "write_coeffs",
    "write_diffeo",
    "write_field",
]
