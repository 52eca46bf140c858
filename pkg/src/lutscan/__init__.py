"""Structured-light 3D scanning with per-pixel color-to-depth lookup.

The pipeline: design a 1D color pattern (``patterns``), sweep a board
through the working range (``simulate`` stands in for hardware), fit a
spline per camera pixel mapping depth to observed color (``calibrate``),
then recover depth for new captures by brute-force color matching
(``reconstruct``). ``evaluate`` measures the result and ``io`` persists
every artifact. ``LookupDepthScanner`` wraps calibration and
reconstruction in a scikit-learn style estimator.
"""

from .calibrate import (
    FitReport,
    NormalizedStack,
    RayLUT,
    RaySamples,
    RayView,
    collect_ray_samples,
    fit_ray_splines,
    noise_scaled_smoothing,
    normalize_stack,
)
from .estimator import LookupDepthScanner
from .evaluate import (
    ErrorStats,
    PatternComparison,
    PlaneFitReport,
    compare_patterns,
    depth_error_stats,
    plane_pca,
    write_comparison_csv,
    write_histogram,
)
from .geometry import (
    BoardPose,
    CameraModel,
    LinearTrajectory,
    ProjectorModel,
    Ray,
    axis_angle_to_matrix,
    camera_rays,
    fit_trajectory,
    matrix_to_axis_angle,
    pixel_ray,
    plane_depth_grid,
    project_poses,
    ray_plane_depth,
    toe_in_projector,
)
from .io import (
    FormatError,
    detect_format,
    format_float,
    load_lut,
    parse_pattern_specs,
    read_manifest,
    read_pattern_specs,
    read_pfm,
    read_ply,
    read_rig,
    save_lut,
    write_manifest,
    write_pattern_csv,
    write_pattern_specs,
    write_pfm,
    write_pgm,
    write_ply,
    write_ppm,
    write_rig,
)
from .patterns import (
    PATTERN_KINDS,
    ConfusionMatrix,
    Pattern,
    PatternSpec,
    assign_channels,
    channel_frequencies,
    confusion_matrix,
    gen_pattern,
    graycode_stack,
    min_separation,
    pattern_image,
    white_pattern,
)
from .reconstruct import (
    DepthMap,
    PointCloud,
    ReconStats,
    depth_grid,
    depth_to_points,
    lookup_depth,
    reconstruct_frame,
    temporal_filter,
)
from .simulate import (
    NOISE_PROFILES,
    CaptureFrame,
    HeightfieldScene,
    NoiseModel,
    PlaneScene,
    PoseNoise,
    SphereScene,
    StageRange,
    SweepBoard,
    SweepResult,
    board_scene,
    demo_rig,
    demosaic_bilinear,
    mosaic_bayer,
    noise_profile,
    render_capture,
    render_frame,
    scene_depth,
    simulate_sweep,
)

__version__ = "0.1.0"
