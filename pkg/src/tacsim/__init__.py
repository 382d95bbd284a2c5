"""tacsim: tactile grasp simulation framework.

Maps simulated contact forces to sensor-surface deformation, renders
GelSight-style tactile images through a calibrated lookup table, labels
grasp outcomes with a quasi-static slip model, calibrates physical
parameters against reference outcome grids, and generates labeled tactile
datasets for grasp-stability prediction.
"""

__version__ = "0.1.0"

from .errors import (
    InsufficientCoverage,
    MeshLoadError,
    NoContact,
    NoGraspContact,
    TacsimError,
    VolumeUnreachable,
)
from .geometry import (
    DepthCamera,
    HeightMap,
    Pose,
    TriangleMesh,
    load_mesh,
    render_depth,
    transform_mesh,
)
from .contact import (
    ContactParams,
    ContactSolution,
    ContactState,
    contact_area,
    contact_map,
    integrate_volume,
    shear_from_force,
    solve_indentation,
    volume_from_force,
)
from .optics import (
    LookupTable,
    MarkerField,
    TactileFrame,
    calibrate_lookup,
    compose_frame,
    displace_markers,
    gradients,
    make_calibration_pairs,
    photometric_reference,
    render_tactile,
    smooth_heightmap,
)
from .grasp import (
    GraspConfig,
    GraspEpisode,
    GraspOutcome,
    GraspThresholds,
    ObjectModel,
    contact_forces,
    label_outcome,
    plan_grasp,
    run_episode,
    slip_dynamics,
)
from .calibration import (
    FrictionSearchResult,
    OutcomeGrid,
    PressSample,
    fit_contact_coefficients,
    optimize_friction,
    simulate_outcome_grid,
)
from .dataset import (
    DatasetManifest,
    SweepSpec,
    ablation_sweep,
    builtin_objects,
    generate_configs,
    run_sweep,
)
