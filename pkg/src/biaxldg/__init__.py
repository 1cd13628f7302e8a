"""biaxldg: sextic Landau-de Gennes tensor fields with a quaternionic vacuum.

The library covers the pipeline from pointwise Q-tensor algebra up to defect
experiments:

- qtensor_core: coefficient algebra, spectra, the sextic bulk potential;
- vacuum_manifold: geometry of the maximally biaxial well set (projection,
  biaxiality functions, second fundamental form);
- q8_topology: loop classification over the quaternion-group cover and the
  per-class loop energies;
- relaxation_solver: masked finite-difference gradient descent for the
  epsilon-scaled energy on 2D/3D domains;
- defect_analysis: defect sets, rescaled measures, vortex-ball lower bounds;
- experiment_cli: the `ldg-experiment` command-line driver.
"""

__version__ = "0.1.0"

from .qtensor_core import (  # noqa: F401
    QTensor, MaterialParams, SpectralData, ShapeParams, derive_params,
    spectral, shape_params, bulk_energy, bulk_gradient, wells_gap,
)
from .vacuum_manifold import (  # noqa: F401
    ManifoldPoint, manifold_point, random_manifold_points, project,
    project_field, dist_to_manifold, biaxiality, sigma_tau,
    ProjectionUndefinedError,
)
from .q8_topology import (  # noqa: F401
    NLoop, classify, loop_energy, class_energies, classification_report,
    representative_loop, constant_loop, concatenate, reverse_loop, swap_loop,
    RefineLoopError, LiftFailedError, InconsistentTopologyError,
)
from .relaxation_solver import (  # noqa: F401
    Domain, Field, SolveConfig, RelaxInfo, EnergyReport, StagnationError,
    square2d, disk2d, annulus2d, box3d, cylinder3d, constant_field,
    field_from_function, hedgehog_2d, split_pair_2d, cylinder_boundary,
    assemble_energy, relax, relax_with_info, diagnostics,
    write_snapshot, read_snapshot, export_field_csv,
)
from .defect_analysis import (  # noqa: F401
    DefectMask, MeasureGrid, defect_mask, rescaled_measure, mass_in_ball,
    density_estimate, slab_density, clearing_out, radius_of_set,
    ball_construction, slice_lower_bound, calibration_constant,
    junction_balance, write_trace_json, CannotClassifyError,
    BallPreconditionError,
)
from .experiment_cli import (  # noqa: F401
    ExperimentConfig, ConfigError, config_from_dict, run_sweep,
)
