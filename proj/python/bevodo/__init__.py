"""BEV keypoint odometry: solver, metrics and command-line runner."""

from ._bevodo import (
    ConfigError,
    DegenerateGeometry,
    DegenerateWeights,
    accumulate,
    evaluate,
    gradcheck,
    render_bev,
    run_cli,
    solve_pose,
    umeyama_scale,
    validate_config,
)

__all__ = [
    "ConfigError",
    "DegenerateGeometry",
    "DegenerateWeights",
    "accumulate",
    "evaluate",
    "gradcheck",
    "render_bev",
    "run_cli",
    "solve_pose",
    "umeyama_scale",
    "validate_config",
]
