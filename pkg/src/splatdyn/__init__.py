"""Deformable Gaussian-splat engine.

Pipeline: load a splat PLY, build a tetrahedral simulation cage around each
labeled object, bind every splat to the cage through a local tetrahedron,
step the cage with an XPBD soft-body solver, and render the deformed splats
with a CPU rasterizer. A TCP/WebSocket service exposes the loop to
interactive clients.
"""

from splatdyn.splats import (
    GaussianSplat,
    ObjectInfo,
    PlyParseError,
    PlySchemaError,
    SplatScene,
    covariance,
    eval_sh,
    load_splats,
    opacity,
    save_splats,
)

__version__ = "0.1.0"

__all__ = [
    "GaussianSplat",
    "ObjectInfo",
    "PlyParseError",
    "PlySchemaError",
    "SplatScene",
    "covariance",
    "eval_sh",
    "load_splats",
    "opacity",
    "save_splats",
    "__version__",
]
