"""Build the nested exterior geometry and inspect it.

A star-shaped obstacle sits inside a measurement box; the initial data will
live in a small source box, wrapped by a buffer box whose complement stays
connected. This script validates a configuration, prints the JSON report the
`exwave check-domain` subcommand emits, and shows the boundary quadrature
meshes and the geometric stability constants.
"""

import json

import numpy as np

from exwave import (
    Box,
    BoxObstacle,
    PatchSpec,
    SphereObstacle,
    boundary_mesh,
    build_domain,
    star_shaped_check,
    validation_report,
)

domain = build_domain(
    obstacle=SphereObstacle(center=(0.0, 0.0, 0.0), radius=0.25),
    sigma=Box((-1.4, -1.4, -1.4), (1.4, 1.4, 1.4)),
    q0=Box((0.35, -0.25, -0.25), (0.85, 0.25, 0.25)),
    q1=Box((0.25, -0.35, -0.35), (0.95, 0.35, 0.35)),
    patches=[PatchSpec(face="x+")],
    sim_box=Box((-2.0, -2.0, -2.0), (2.0, 2.0, 2.0)),
    h=0.05,
    sponge_width=0.6,
)

print(json.dumps(validation_report(domain), indent=2, sort_keys=True))

# quadrature meshes: weights sum to surface areas, normals leave the
# observation region (into the obstacle on its boundary)
for surface in ("sigma", "obstacle", "patch"):
    mesh = boundary_mesh(domain, surface)
    print(f"{surface:9s}: {len(mesh):6d} nodes, area = {mesh.area:.4f}")
print(f"sphere area exact = {4 * np.pi * 0.25**2:.4f}")

# the escape-function check: positive support function means every ray from
# the origin leaves the obstacle once
for obs in (
    SphereObstacle(center=(0, 0, 0), radius=0.25),
    SphereObstacle(center=(1.0, 0, 0), radius=0.2),
    BoxObstacle(Box((-0.3, -0.3, -0.3), (0.3, 0.3, 0.3))),
):
    ok, m = star_shaped_check(obs)
    print(f"{type(obs).__name__:15s} star-shaped={ok}  min x.n = {m:+.3f}")
