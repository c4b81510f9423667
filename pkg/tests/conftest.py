import numpy as np
import pytest

from exwave import (
    Box,
    NoObstacle,
    PatchSpec,
    SphereObstacle,
    build_domain,
    make_initial_data,
    radial_bump,
)


@pytest.fixture(scope="session")
def free_domain():
    """Small obstacle-free domain for fast unit tests (h=0.1, 25^3 nodes)."""
    return build_domain(
        obstacle=NoObstacle(),
        sigma=Box((-0.8, -0.8, -0.8), (0.8, 0.8, 0.8)),
        q0=Box((-0.4, -0.4, -0.4), (0.4, 0.4, 0.4)),
        q1=Box((-0.6, -0.6, -0.6), (0.6, 0.6, 0.6)),
        patches=[PatchSpec(face="x+")],
        sim_box=Box((-1.2, -1.2, -1.2), (1.2, 1.2, 1.2)),
        h=0.1,
    )


@pytest.fixture(scope="session")
def obstacle_domain():
    """Sphere obstacle domain with a sponge shell (h=0.05, 53^3 nodes)."""
    return build_domain(
        obstacle=SphereObstacle(center=(0.0, 0.0, 0.0), radius=0.25),
        sigma=Box((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0)),
        q0=Box((0.4, -0.2, -0.2), (0.75, 0.2, 0.2)),
        q1=Box((0.3, -0.3, -0.3), (0.85, 0.3, 0.3)),
        patches=[PatchSpec(face="x+")],
        sim_box=Box((-1.5, -1.5, -1.5), (1.5, 1.5, 1.5)),
        h=0.05,
        sponge_width=0.5,
    )


@pytest.fixture()
def free_pulse(free_domain):
    X, Y, Z = free_domain.grid.meshgrid()
    f = radial_bump(X, Y, Z, center=(0.0, 0.0, 0.0), radius=0.3)
    return make_initial_data(free_domain, f=f)


def rel_err(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))
