"""Time moments of the wave field and the elliptic chain they satisfy.

The k-th moment is (-1)^k/k! times the t^k-weighted time integral of the
field. Order 0 solves a Poisson equation with the initial velocity as source,
order 1 with the initial displacement, and each later order reproduces the
one two below it. This script streams the moments during a run, checks the
chain with a wide-stencil residual operator, and compares a truncated
power-series evaluation of the time transform against direct quadrature.
"""

import numpy as np

from exwave import (
    Box,
    MomentAccumulator,
    NoObstacle,
    PatchSpec,
    PointProbeRecorder,
    SimSettings,
    build_domain,
    laplace_consistency,
    make_initial_data,
    moment_of_series,
    poisson_residual,
    radial_bump,
    run,
    uniform_speed,
)

domain = build_domain(
    obstacle=NoObstacle(),
    sigma=Box((-0.8, -0.8, -0.8), (0.8, 0.8, 0.8)),
    q0=Box((-0.4, -0.4, -0.4), (0.4, 0.4, 0.4)),
    q1=Box((-0.6, -0.6, -0.6), (0.6, 0.6, 0.6)),
    patches=[PatchSpec(face="x+")],
    sim_box=Box((-2.0, -2.0, -2.0), (2.0, 2.0, 2.0)),
    h=0.08,
)

X, Y, Z = domain.grid.meshgrid()
f = radial_bump(X, Y, Z, center=(0.05, 0, 0), radius=0.3, amplitude=0.5)
g = radial_bump(X, Y, Z, center=(0, 0, 0), radius=0.35)
data = make_initial_data(domain, f=f, g=g)

T = 3.2
acc = MomentAccumulator(domain, t_final=T)
probes = PointProbeRecorder(domain, np.array([[0.0, 0.0, 0.0], [0.16, -0.08, 0.08]]))
run(domain, uniform_speed(), data, SimSettings(t_final=T), [acc, probes])
moments = acc.results()

report = poisson_residual(moments, data.f, data.g, uniform_speed(), domain,
                          region="q0")
print("relative residuals of the moment chain (eroded source region):")
for k, r in report.residuals.items():
    print(f"  order {k}: {r:.3e}   (tail estimate {moments[k].tail_estimate:.2e})")

# sanity on the synthetic normalization: an e^-t trace has moments (-1)^k h
times = np.arange(0, 40, 0.002)
trace = np.exp(-times)
for k in range(4):
    mk = moment_of_series(k, times, trace)
    print(f"synthetic e^-t moment, order {k}: {mk:+.8f} (expect {(-1.0)**k:+.0f})")

# truncated power series vs direct exponential-weighted quadrature
t_arr, series = probes.as_arrays()
mom_at_pts = np.stack([
    moment_of_series(k, t_arr, series, taper_width=moments[k].taper_width)
    for k in range(4)
])
for z in (0.05, 0.1, 0.2):
    mism = laplace_consistency(mom_at_pts, t_arr, series, z)
    print(f"series-vs-quadrature mismatch at z={z}: {mism:.2e} "
          f"(z^4 = {z**4:.1e})")
