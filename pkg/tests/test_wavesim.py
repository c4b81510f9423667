import numpy as np
import pytest

from exwave import (
    smooth_cutoff,
    Box,
    CflViolation,
    EnergyRecorder,
    EnergySeries,
    NoObstacle,
    NonPositiveEnergy,
    NumericalBlowup,
    PatchSpec,
    SimSettings,
    SupportViolation,
    WindowTooShort,
    build_domain,
    fit_decay,
    init_state,
    local_energy,
    make_initial_data,
    radial_bump,
    run,
    scheme_energy,
    step,
    uniform_speed,
)
from exwave.wavesim import NormTripleRecorder, QuadWeights

from conftest import rel_err


def lap7(u, h):
    out = np.zeros_like(u)
    out[1:-1, 1:-1, 1:-1] = (
        u[2:, 1:-1, 1:-1] + u[:-2, 1:-1, 1:-1]
        + u[1:-1, 2:, 1:-1] + u[1:-1, :-2, 1:-1]
        + u[1:-1, 1:-1, 2:] + u[1:-1, 1:-1, :-2]
        - 6.0 * u[1:-1, 1:-1, 1:-1]
    ) / h**2
    return out


class TestInitState:
    def test_zero_data_zero_state(self, free_domain):
        data = make_initial_data(free_domain)
        st = init_state(free_domain, uniform_speed(), data, SimSettings(t_final=1.0))
        assert not st.u_prev.any()
        assert not st.u_curr.any()

    def test_taylor_start_displacement(self, free_domain, free_pulse):
        st = init_state(free_domain, uniform_speed(), free_pulse, SimSettings(t_final=1.0))
        expected = 0.5 * st.dt**2 * lap7(free_pulse.f, free_domain.grid.h)
        diff = st.u_curr - st.u_prev
        assert rel_err(diff[1:-1, 1:-1, 1:-1], expected[1:-1, 1:-1, 1:-1]) < 1e-12

    def test_velocity_start(self, free_domain):
        X, Y, Z = free_domain.grid.meshgrid()
        g = radial_bump(X, Y, Z, center=(0, 0, 0), radius=0.3)
        data = make_initial_data(free_domain, g=g)
        st = init_state(free_domain, uniform_speed(), data, SimSettings(t_final=1.0))
        assert rel_err(st.u_curr, st.dt * g) < 1e-14

    def test_cfl_rejected(self, free_domain, free_pulse):
        with pytest.raises(CflViolation):
            init_state(
                free_domain, uniform_speed(), free_pulse,
                SimSettings(t_final=1.0, dt_factor=1.2),
            )

    def test_support_violation(self, free_domain):
        f = np.ones(free_domain.grid.dims)
        with pytest.raises(SupportViolation):
            make_initial_data(free_domain, f=f)


class TestStepping:
    def test_zero_stays_zero(self, free_domain):
        data = make_initial_data(free_domain)
        st = init_state(free_domain, uniform_speed(), data, SimSettings(t_final=1.0))
        step(st)
        assert not st.u_curr.any()

    def test_scheme_energy_conserved(self, free_domain, free_pulse):
        st = init_state(free_domain, uniform_speed(), free_pulse, SimSettings(t_final=10.0))
        h = free_domain.grid.h
        e0 = scheme_energy(st.u_prev, st.u_curr, st.dt, h)
        drift = 0.0
        for _ in range(200):
            step(st)
            e = scheme_energy(st.u_prev, st.u_curr, st.dt, h)
            drift = max(drift, abs(e - e0) / e0)
        assert drift < 1e-3  # exactly conserved up to rounding in practice
        assert drift < 1e-10

    def test_richardson_order_two(self):
        t_final = 0.25
        grids = [0.04, 0.02, 0.01]
        solutions = []
        for h in grids:
            dom = build_domain(
                obstacle=NoObstacle(),
                sigma=Box((-0.64, -0.64, -0.64), (0.64, 0.64, 0.64)),
                q0=Box((-0.4, -0.4, -0.4), (0.4, 0.4, 0.4)),
                q1=Box((-0.52, -0.52, -0.52), (0.52, 0.52, 0.52)),
                patches=[PatchSpec(face="x+")],
                sim_box=Box((-0.88, -0.88, -0.88), (0.88, 0.88, 0.88)),
                h=h,
            )
            X, Y, Z = dom.grid.meshgrid()
            R = np.sqrt(X**2 + Y**2 + Z**2)
            g = np.exp(-(R**2) / (2 * 0.11**2)) * smooth_cutoff(R, 0.3, 0.39)
            data = make_initial_data(dom, g=g)
            # fixed dt/h so the error constant is grid-independent
            n_steps = int(round(t_final / (h / 4.0)))
            settings = SimSettings(t_final=t_final, dt=h / 4.0)
            st = init_state(dom, uniform_speed(), data, settings)
            while st.step_index < n_steps:
                step(st)
            solutions.append(st.u_curr)
        s0, s1, s2 = solutions
        err1 = np.linalg.norm(s0 - s1[::2, ::2, ::2]) * grids[0] ** 1.5
        err2 = np.linalg.norm(s1 - s2[::2, ::2, ::2]) * grids[1] ** 1.5
        order = np.log2(err1 / err2)
        # observed order of the scheme on a smooth pulse
        assert 1.7 <= order <= 2.3

    def test_time_reversibility(self, free_domain, free_pulse):
        st = init_state(free_domain, uniform_speed(), free_pulse, SimSettings(t_final=1.0))
        u0 = st.u_prev.copy()
        u1 = st.u_curr.copy()
        m = 40
        for _ in range(m):
            step(st)
        st.u_prev, st.u_curr = st.u_curr, st.u_prev
        for _ in range(m):
            step(st)
        assert rel_err(st.u_curr, u0) < 1e-10
        assert rel_err(st.u_prev, u1) < 1e-10

    def test_linearity(self, free_domain):
        X, Y, Z = free_domain.grid.meshgrid()
        f = radial_bump(X, Y, Z, center=(0.05, 0, 0), radius=0.3)
        g = radial_bump(X, Y, Z, center=(0, -0.05, 0), radius=0.25, amplitude=0.7)
        settings = SimSettings(t_final=0.8)

        def final_field(fd, gd):
            data = make_initial_data(free_domain, f=fd, g=gd)
            st = init_state(free_domain, uniform_speed(), data, settings)
            for _ in range(30):
                step(st)
            return st.u_curr.copy()

        combined = final_field(f, g)
        separate = final_field(f, None) + final_field(None, g)
        assert rel_err(separate, combined) < 1e-12

    def test_blowup_detected(self, free_domain, free_pulse):
        settings = SimSettings(t_final=50.0, dt_factor=1.04)
        with pytest.raises(NumericalBlowup):
            run(free_domain, uniform_speed(), free_pulse, settings)

    def test_dirichlet_invariant(self, obstacle_domain):
        X, Y, Z = obstacle_domain.grid.meshgrid()
        f = radial_bump(X, Y, Z, center=(0.55, 0, 0), radius=0.18)
        data = make_initial_data(obstacle_domain, f=f)
        st = init_state(obstacle_domain, uniform_speed(), data, SimSettings(t_final=1.0))
        for _ in range(25):
            step(st)
            assert not st.u_curr[obstacle_domain.mask_k].any()

    def test_bounded_composite_norm(self, obstacle_domain):
        X, Y, Z = obstacle_domain.grid.meshgrid()
        f = radial_bump(X, Y, Z, center=(0.55, 0, 0), radius=0.18)
        data = make_initial_data(obstacle_domain, f=f)
        rec = NormTripleRecorder(obstacle_domain, uniform_speed(), every=5)
        run(obstacle_domain, uniform_speed(), data, SimSettings(t_final=3.0), [rec])
        vals = np.asarray(rec.values)
        assert vals.max() <= 10.0 * vals[0]


class TestLocalEnergy:
    def test_zero_field(self, free_domain):
        u = np.zeros(free_domain.grid.dims)
        assert local_energy(u, u, 0.1, free_domain) == 0.0

    def test_linear_field_gives_volume(self, free_domain):
        X, _, _ = free_domain.grid.meshgrid()
        u = np.broadcast_to(X, free_domain.grid.dims).copy()
        e = local_energy(u, u, 0.1, free_domain)
        vol = free_domain.sigma.volume
        assert e == pytest.approx(vol, rel=0.02)

    def test_static_analytic_gradient(self, free_domain):
        X, Y, Z = free_domain.grid.meshgrid()
        u = np.sin(X) * np.cos(Y) + 0.5 * Z**2
        # |grad|^2 = cos^2 x cos^2 y + sin^2 x sin^2 y + z^2, integrated over the box
        from scipy import integrate

        lo, hi = -0.8, 0.8
        xs = np.linspace(lo, hi, 160)
        gx = np.cos(xs)[:, None, None] ** 2 * np.cos(xs)[None, :, None] ** 2
        gy = np.sin(xs)[:, None, None] ** 2 * np.sin(xs)[None, :, None] ** 2
        gz = np.broadcast_to((xs**2)[None, None, :], (160, 160, 160))
        dens = gx + gy + gz
        exact = integrate.simpson(
            integrate.simpson(integrate.simpson(dens, x=xs), x=xs), x=xs
        )
        e = local_energy(u, u, 0.1, free_domain)
        assert e == pytest.approx(exact, rel=0.02)


class TestFitDecay:
    def test_exact_exponential(self):
        t = np.linspace(0, 20, 400)
        series = EnergySeries(times=t, values=4.0 * np.exp(-0.3 * t))
        fit = fit_decay(series)
        assert fit.kappa == pytest.approx(4.0, rel=1e-10)
        assert fit.delta == pytest.approx(0.3, abs=1e-10)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)

    def test_constant_energy(self):
        t = np.linspace(0, 10, 100)
        fit = fit_decay(EnergySeries(times=t, values=np.full(100, 2.5)))
        assert fit.delta == pytest.approx(0.0, abs=1e-12)

    def test_modulated_exponential(self):
        t = np.linspace(0, 30, 600)
        vals = 4.0 * np.exp(-0.3 * t) * (1.0 + 0.05 * np.sin(t))
        fit = fit_decay(EnergySeries(times=t, values=vals))
        assert fit.delta == pytest.approx(0.3, abs=0.02)

    def test_window_too_short(self):
        t = np.linspace(0, 1, 5)
        with pytest.raises(WindowTooShort):
            fit_decay(EnergySeries(times=t, values=np.exp(-t)))

    def test_floor_exclusion(self):
        t = np.linspace(0, 200, 2000)
        vals = np.exp(-0.5 * t) + 1e-300
        fit = fit_decay(EnergySeries(times=t, values=vals))
        assert fit.delta == pytest.approx(0.5, rel=1e-3)

    def test_nonpositive_rejected(self):
        t = np.linspace(0, 10, 50)
        with pytest.raises(NonPositiveEnergy):
            EnergySeries(times=t, values=-np.ones(50))


class TestRunAndRecorders:
    def test_t_final_zero_only_initial(self, free_domain, free_pulse):
        rec = EnergyRecorder(free_domain)
        res = run(free_domain, uniform_speed(), free_pulse, SimSettings(t_final=0.0), [rec])
        assert res.n_steps == 1  # just the starting pair
        assert len(rec.values) == 1

    def test_obstacle_energy_eventually_decreases(self, obstacle_domain):
        X, Y, Z = obstacle_domain.grid.meshgrid()
        f = radial_bump(X, Y, Z, center=(0.55, 0, 0), radius=0.18)
        data = make_initial_data(obstacle_domain, f=f)
        rec = EnergyRecorder(obstacle_domain)
        run(obstacle_domain, uniform_speed(), data,
            SimSettings(t_final=6.0, sponge_strength=12.0), [rec])
        e = np.asarray(rec.values)
        t = np.asarray(rec.times)
        # windowed max envelope decreasing after the wavefront leaves
        after = t > 3.0
        env = [e[after][i : i + 10].max() for i in range(0, after.sum() - 10, 10)]
        assert all(b <= a * 1.05 for a, b in zip(env, env[1:]))
        assert e[after].max() < 1e-2 * e.max()

    def test_sponge_absorbs(self, obstacle_domain):
        # after several transits, interior amplitude should be tiny
        X, Y, Z = obstacle_domain.grid.meshgrid()
        f = radial_bump(X, Y, Z, center=(0.55, 0, 0), radius=0.18)
        data = make_initial_data(obstacle_domain, f=f)
        rec = EnergyRecorder(obstacle_domain)
        run(obstacle_domain, uniform_speed(), data,
            SimSettings(t_final=12.0, sponge_strength=12.0), [rec])
        e = np.asarray(rec.values)
        assert e[-1] < 5e-4 * e.max()

    def test_deterministic_rerun(self, free_domain, free_pulse):
        def final():
            rec = EnergyRecorder(free_domain)
            run(free_domain, uniform_speed(), free_pulse, SimSettings(t_final=1.0), [rec])
            return np.asarray(rec.values)

        a, b = final(), final()
        assert (a == b).all()


def test_kernel_paths_agree(free_domain, free_pulse):
    """Jitted and numpy stepping produce the same fields."""
    from exwave import _kernels

    st = init_state(free_domain, uniform_speed(), free_pulse, SimSettings(t_final=1.0))
    out_jit = np.zeros_like(st.u_curr)
    out_np = np.zeros_like(st.u_curr)
    _kernels.advance(st.u_prev, st.u_curr, out_jit, st.coef)
    _kernels._step_free_numpy(st.u_prev, st.u_curr, out_np, st.coef)
    assert np.allclose(out_jit, out_np, rtol=0, atol=1e-15)

    w = QuadWeights(free_domain)
    e_jit = _kernels.energy_pair(st.u_prev, st.u_curr, w.block, st.dt,
                                 free_domain.grid.h, w.offsets)
    e_np = _kernels._energy_pair_numpy(st.u_prev, st.u_curr, w.block, 1.0 / st.dt,
                                       0.5 / free_domain.grid.h, *w.offsets)
    assert e_jit == pytest.approx(e_np, rel=1e-12)
