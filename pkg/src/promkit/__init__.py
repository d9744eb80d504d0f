"""Projection-based reduced order models with empirical cubature
hyper-reduction, bundled with two desk-scale parametric FE testbeds."""

from .basis import (
    ReducedBasis,
    build_left_basis_jacobian,
    build_left_basis_residual,
    build_right_basis,
    collect_jacobian_snapshots,
    collect_left_training_data,
    collect_residual_snapshots,
)
from .campaign import CampaignResult, SnapshotSet, SolverReport
from .ecm import (
    EcmQuadrature,
    EcmTrainingMatrix,
    build_complementary_mesh,
    build_ecm_training_matrix,
    compress_training_matrix,
    select_elements,
)
from .fom import NewtonSettings, run_fom_campaign, solve_timestep_fom
from .hrom import (
    run_hrom_campaign,
    solve_timestep_hrom_galerkin,
    solve_timestep_hrom_lspg,
    solve_timestep_hrom_pg,
)
from .linalg import nonneg_least_squares, qr_least_squares, truncated_svd
from .mesh import Mesh, element_patches, gather_dofs
from .metrics import (
    measure_speedup,
    overall_error,
    relative_error_snapshot,
    render_comparison_tables,
)
from .pipeline import PipelineConfig, Pipeline, load_config, run_pipeline, run_stage
from .problems import (
    RotatingPulseConvectionDiffusion,
    SaintVenantBar,
    load_scaling,
    make_problem,
    source_term_pulse,
)
from .rom import (
    RomState,
    run_rom_campaign,
    solve_timestep_galerkin,
    solve_timestep_lspg,
    solve_timestep_pg,
)

__version__ = "0.1.0"
