"""Full closed-loop simulation: wiring, scenario library, comparison metrics.

Per integration step the loop (in this order): samples the true parameter,
updates the output-error velocity estimate, runs event detection, applies the
preadaptation reinitialization on an onset event, closes the learner phase on
a recovery event, accumulates cost/sensitivity, computes the control input,
and finally advances the whole coupled state (plant, reference, estimate,
sensitivity blocks) with one RK4 step.
"""

from dataclasses import dataclass, replace

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is normally available
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def deco(fn):
            return fn

        return deco

from .attention import AttentionConfig, AttentionState, detect_events, update_velocity
from .controller import ControllerConfig, control_input, lqr_gain, solve_lyapunov
from .dynamics import (
    PlantConfig,
    ReferenceConfig,
    ThetaSchedule,
    check_bounded,
    theta_at,
)
from .errors import ConfigError, DivergenceError
from .learner import (
    GradientMode,
    PhaseSnapshot,
    SensitivityState,
    accumulate_cost,
    close_phase,
)
from .preadapt import PreadaptNet, apply_preadaptation, theta_init


# --------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class PreadaptSettings:
    enabled: bool = False
    learner_enabled: bool = False
    gradient_mode: GradientMode = GradientMode.APPROX
    gamma_pa: float = 10.0
    hidden: int = 3
    seed: int = 0
    init_scale: float = 0.5
    clip_norm: float | None = None
    net: PreadaptNet | None = None  # preloaded weights override the seed init


@dataclass(frozen=True)
class RunConfig:
    plant: PlantConfig
    schedule: ThetaSchedule
    attention: AttentionConfig
    preadapt: PreadaptSettings
    Q: np.ndarray
    R: float = 1.0
    gamma: float = 10.0
    k0: float = 0.0
    r: float = 0.1
    dt: float = 1e-3
    x0: np.ndarray = None
    theta_hat0: np.ndarray = None

    def __post_init__(self):
        n = self.plant.n
        if self.schedule.n != n:
            raise ConfigError("schedule dimension does not match the plant")
        if self.dt <= 0.0:
            raise ConfigError("dt must be positive")
        steps = self.schedule.horizon / self.dt
        if abs(steps - round(steps)) > 1e-6 * max(1.0, steps):
            raise ConfigError("horizon must be a multiple of dt")
        if self.preadapt.learner_enabled and not self.preadapt.enabled:
            raise ConfigError("learner requires preadaptation to be enabled")
        x0 = np.zeros(n) if self.x0 is None else np.asarray(self.x0, dtype=float)
        th0 = (
            np.zeros(n)
            if self.theta_hat0 is None
            else np.asarray(self.theta_hat0, dtype=float)
        )
        if x0.shape != (n,) or th0.shape != (n,):
            raise ConfigError("x0 / theta_hat0 dimension mismatch")
        object.__setattr__(self, "Q", np.atleast_2d(np.asarray(self.Q, dtype=float)))
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "theta_hat0", th0)

    @property
    def num_steps(self):
        return int(round(self.schedule.horizon / self.dt))


def build_controller(cfg):
    """Offline solves: LQR gain, reference model, Lyapunov matrix."""
    plant = cfg.plant
    K = lqr_gain(plant.A, plant.B, cfg.Q, cfg.R)
    Ar = plant.A - np.outer(plant.B, K[0])
    P = solve_lyapunov(Ar)
    ctrl = ControllerConfig(K=K, k0=cfg.k0, gamma=cfg.gamma, P=P)
    ref = ReferenceConfig(Ar=Ar, B1r=plant.B1r, B2r=cfg.k0 * plant.B)
    return ctrl, ref


# --------------------------------------------------------------------------
# B-747 longitudinal model and scenario library

def build_b747():
    """Longitudinal B-747 model: state [e_I, alpha, q], output alpha."""
    A = np.array([
        [0.0, 1.0, 0.0],
        [0.0, -0.32, 0.86],
        [0.0, -0.93, -0.43],
    ])
    B = np.array([0.0, -0.02, -1.16])
    B1r = np.array([-1.0, 0.0, 0.0])
    return PlantConfig(A=A, B=B, B1r=B1r, output_index=2)


_SCENARIO_STEPS = {
    1: ([(0.0, 0.1), (5.0, 1.0), (20.0, 2.0), (45.0, 4.0)], 60.0),
    2: (
        [(0.0, 0.1), (5.0, 1.0), (20.0, 2.0), (45.0, 1.0), (70.0, 0.1),
         (95.0, 2.0), (120.0, 4.0)],
        140.0,
    ),
    3: (
        [(0.0, 0.1), (5.0, 1.0), (20.0, 5.0), (35.0, 10.0), (50.0, 5.0),
         (65.0, 1.0), (80.0, 5.0), (95.0, 10.0), (110.0, 5.0), (125.0, 1.0)],
        140.0,
    ),
}


def scenario_schedule(number, n=3):
    """Piecewise-constant theta schedule for scenarios 1-3 (theta = c * ones)."""
    if number not in _SCENARIO_STEPS:
        raise ConfigError(f"unknown scenario number {number}")
    steps, horizon = _SCENARIO_STEPS[number]
    pieces = [(t, c * np.ones(n)) for t, c in steps]
    bounds = (-10.0 * np.ones(n), 10.0 * np.ones(n))
    return ThetaSchedule(pieces=pieces, horizon=horizon, bounds=bounds)


def default_config(scenario=1, preadapt=None, **overrides):
    """B-747 run configuration with the flight-control hyperparameters."""
    plant = build_b747()
    cfg = RunConfig(
        plant=plant,
        schedule=scenario_schedule(scenario),
        attention=AttentionConfig(c_e=0.005, c_ed=0.02, tau_f=0.05),
        preadapt=preadapt if preadapt is not None else PreadaptSettings(),
        Q=np.eye(3),
        R=1.0,
        gamma=10.0,
        k0=0.0,
        r=0.1,
        dt=1e-3,
    )
    if overrides:
        cfg = replace(cfg, **overrides)
    return cfg


# --------------------------------------------------------------------------
# jitted inner step (plant + reference + estimate + optional sensitivity)

@njit(cache=True)
def _coupled_derivative(y, n, A, B, B1r, Ar, Bsum, K, k0, gamma, PB,
                        theta, r, with_sens, exact_sens):
    dy = np.zeros(y.shape[0])
    x = y[0:n]
    xr = y[n:2 * n]
    th = y[2 * n:3 * n]
    thx = 0.0
    u = k0 * r
    for i in range(n):
        thx += theta[i] * x[i]
        u -= (K[i] + th[i]) * x[i]
    for i in range(n):
        acc = B1r[i] * r + B[i] * (thx + u)
        for j in range(n):
            acc += A[i, j] * x[j]
        dy[i] = acc
    for i in range(n):
        acc = Bsum[i] * r
        for j in range(n):
            acc += Ar[i, j] * xr[j]
        dy[n + i] = acc
    s = 0.0
    for i in range(n):
        s += (x[i] - xr[i]) * PB[i]
    for i in range(n):
        dy[2 * n + i] = gamma * x[i] * s
    if with_sens:
        # S = [S_e; S_th] stacked row-major, 2n x n; note e_v + x_r = x
        S = y[3 * n:].reshape(2 * n, n)
        dS = dy[3 * n:].reshape(2 * n, n)
        for i in range(n):
            for c in range(n):
                acc = 0.0
                for j in range(n):
                    a = Ar[i, j]
                    if exact_sens:
                        a += B[i] * (theta[j] - th[j])
                    acc += a * S[j, c]
                for j in range(n):
                    acc -= B[i] * x[j] * S[n + j, c]
                dS[i, c] = acc
        for i in range(n):
            for c in range(n):
                acc = gamma * s * S[i, c]
                for j in range(n):
                    acc += gamma * x[i] * PB[j] * S[j, c]
                dS[n + i, c] = acc
    return dy


@njit(cache=True)
def _rk4_full_step(y, n, dt, A, B, B1r, Ar, Bsum, K, k0, gamma, PB,
                   theta, r, with_sens, exact_sens):
    k1 = _coupled_derivative(y, n, A, B, B1r, Ar, Bsum, K, k0, gamma, PB,
                             theta, r, with_sens, exact_sens)
    k2 = _coupled_derivative(y + 0.5 * dt * k1, n, A, B, B1r, Ar, Bsum, K, k0,
                             gamma, PB, theta, r, with_sens, exact_sens)
    k3 = _coupled_derivative(y + 0.5 * dt * k2, n, A, B, B1r, Ar, Bsum, K, k0,
                             gamma, PB, theta, r, with_sens, exact_sens)
    k4 = _coupled_derivative(y + dt * k3, n, A, B, B1r, Ar, Bsum, K, k0,
                             gamma, PB, theta, r, with_sens, exact_sens)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


class _Stepper:
    """Precomputed closed-loop data for the jitted RK4 step."""

    def __init__(self, cfg, ctrl, ref):
        self.n = cfg.plant.n
        self.A = np.ascontiguousarray(cfg.plant.A)
        self.B = np.ascontiguousarray(cfg.plant.B)
        self.B1r = np.ascontiguousarray(cfg.plant.B1r)
        self.Ar = np.ascontiguousarray(ref.Ar)
        self.Bsum = np.ascontiguousarray(ref.B1r + ref.B2r)
        self.K = np.ascontiguousarray(ctrl.K[0])
        self.k0 = float(ctrl.k0)
        self.gamma = float(ctrl.gamma)
        self.PB = np.ascontiguousarray(ctrl.P @ self.B)
        self.r = float(cfg.r)
        self.dt = float(cfg.dt)

    def step(self, y, theta, with_sens=False, exact_sens=False):
        out = _rk4_full_step(
            y, self.n, self.dt, self.A, self.B, self.B1r, self.Ar, self.Bsum,
            self.K, self.k0, self.gamma, self.PB,
            np.ascontiguousarray(theta), self.r, with_sens, exact_sens,
        )
        if not np.all(np.isfinite(out)):
            bad = int(np.argmax(~np.isfinite(out)))
            raise DivergenceError("non-finite state", component=bad)
        return out


# --------------------------------------------------------------------------
# results

@dataclass
class PhaseMetrics:
    t_u: float
    t_d: float | None
    peak_abs_e: float
    E_phase: float
    recovered: bool
    jump_ref: float | None  # schedule jump this phase responds to
    snapshot: PhaseSnapshot | None = None
    step_u: int = 0
    step_d: int | None = None


@dataclass
class RunResult:
    config: RunConfig
    trace: dict                 # arrays keyed t, x, x_r, e, edot_hat, theta, theta_hat, u, Eu, Ed
    phases: list
    events: list                # (t, "E_u"|"E_d")
    phase_reports: list         # learner phase-end reports
    net: PreadaptNet | None
    status: str = "ok"          # "ok" | "diverged"
    error: str | None = None
    error_step: int | None = None


def _jump_before(schedule, t):
    ref = None
    for tj in schedule.jump_times:
        if tj <= t:
            ref = tj
    return ref


def run(cfg):
    """Simulate one closed-loop run; deterministic given config and seed."""
    ctrl, ref = build_controller(cfg)
    stepper = _Stepper(cfg, ctrl, ref)
    n = cfg.plant.n
    iy = cfg.plant.iy
    dt = cfg.dt
    N = cfg.num_steps

    net = None
    if cfg.preadapt.enabled:
        net = cfg.preadapt.net or PreadaptNet.random(
            n, cfg.preadapt.hidden, cfg.preadapt.seed, cfg.preadapt.init_scale
        )
    exact_sens = cfg.preadapt.gradient_mode == GradientMode.EXACT

    att = AttentionState()
    sens = SensitivityState(n=n)
    phases = []
    phase_reports = []
    open_phase = None

    trace = {
        "t": np.empty(N + 1),
        "x": np.empty((N + 1, n)),
        "x_r": np.empty((N + 1, n)),
        "e": np.empty(N + 1),
        "edot_hat": np.empty(N + 1),
        "theta": np.empty((N + 1, n)),
        "theta_hat": np.empty((N + 1, n)),
        "u": np.empty(N + 1),
        "Eu": np.zeros(N + 1, dtype=np.int8),
        "Ed": np.zeros(N + 1, dtype=np.int8),
    }

    y = np.concatenate([cfg.x0, cfg.x0.copy(), cfg.theta_hat0])
    status, error, error_step = "ok", None, None
    steps_done = N

    for k in range(N + 1):
        t = k * dt
        theta = theta_at(cfg.schedule, t)
        x = y[0:n]
        x_r = y[n:2 * n]
        th = y[2 * n:3 * n]
        e = x[iy] - x_r[iy]
        if k == 0:
            att.e_prev = e
            att.e_track = e
        edot = update_velocity(cfg.attention, att, e, dt)
        e_u, e_d, att_flag = detect_events(cfg.attention, att, e, edot, t)

        if e_u:
            snapshot = None
            if cfg.preadapt.enabled:
                theta_I, sigma_h, input2 = theta_init(net, e, edot)
                th = apply_preadaptation(att_flag, e_u, th, theta_I)
                y[2 * n:3 * n] = th
                snapshot = PhaseSnapshot(
                    t_u=t, input2=input2, sigma_h=sigma_h,
                    W=net.W.copy(), V=net.V.copy(),
                    x=x.copy(), x_r=x_r.copy(), theta_I=theta_I.copy(), step=k,
                )
                if cfg.preadapt.learner_enabled:
                    sens.activate(snapshot)
            open_phase = PhaseMetrics(
                t_u=t, t_d=None, peak_abs_e=abs(e), E_phase=0.0,
                recovered=False, jump_ref=_jump_before(cfg.schedule, t),
                snapshot=snapshot, step_u=k,
            )
            phases.append(open_phase)

        if e_d and open_phase is not None and not open_phase.recovered:
            open_phase.t_d = t
            open_phase.step_d = k
            open_phase.recovered = True
            if cfg.preadapt.learner_enabled and sens.active:
                net, report = close_phase(
                    sens, net, cfg.preadapt.gamma_pa, t,
                    clip_norm=cfg.preadapt.clip_norm,
                )
                report["mode"] = cfg.preadapt.gradient_mode.value
                phase_reports.append(report)

        if open_phase is not None:
            open_phase.peak_abs_e = max(open_phase.peak_abs_e, abs(e))
            if not open_phase.recovered and k < N:
                open_phase.E_phase += abs(e) * dt
        if sens.active and k < N:
            accumulate_cost(sens, e, sens.S_e[iy, :], dt)

        u = control_input(ctrl, x, th, cfg.r)

        trace["t"][k] = t
        trace["x"][k] = x
        trace["x_r"][k] = x_r
        trace["e"][k] = e
        trace["edot_hat"][k] = edot
        trace["theta"][k] = theta
        trace["theta_hat"][k] = th
        trace["u"][k] = u
        trace["Eu"][k] = e_u
        trace["Ed"][k] = e_d

        if k == N:
            break
        try:
            with_sens = sens.active
            if with_sens:
                y_full = np.concatenate([y[:3 * n], sens.S_e.reshape(-1),
                                         sens.S_th.reshape(-1)])
                y_full = stepper.step(y_full, theta, True, exact_sens)
                y = y_full[:3 * n].copy()
                sens.S_e = y_full[3 * n:3 * n + n * n].reshape(n, n)
                sens.S_th = y_full[3 * n + n * n:].reshape(n, n)
            else:
                y = stepper.step(y, theta)
            check_bounded(y, t + dt)
        except DivergenceError as exc:
            status = "diverged"
            error = str(exc)
            error_step = k
            steps_done = k
            break

    if status == "diverged":
        for key in trace:
            trace[key] = trace[key][:steps_done + 1]

    if sens.active:
        # phase never closed before the horizon: no weight update, log it
        phase_reports.append({
            "t_u": sens.snapshot.t_u, "t_d": None, "E_acc": sens.E_acc,
            "grad_W_norm": None, "grad_V_norm": None, "updated": False,
            "mode": cfg.preadapt.gradient_mode.value,
        })
        sens.deactivate()

    return RunResult(
        config=cfg, trace=trace, phases=phases, events=list(att.events),
        phase_reports=phase_reports, net=net,
        status=status, error=error, error_step=error_step,
    )


# --------------------------------------------------------------------------
# comparison

def compare_results(res_a, res_b):
    """Match phases across two runs by the schedule jump they respond to."""
    sched_a = res_a.config.schedule
    sched_b = res_b.config.schedule
    if (
        len(sched_a.pieces) != len(sched_b.pieces)
        or any(
            ta != tb or not np.array_equal(va, vb)
            for (ta, va), (tb, vb) in zip(sched_a.pieces, sched_b.pieces)
        )
        or sched_a.horizon != sched_b.horizon
        or res_a.config.dt != res_b.config.dt
    ):
        raise ConfigError("compared runs must share schedule, dt, and horizon")

    by_jump_a = {p.jump_ref: p for p in reversed(res_a.phases) if p.jump_ref is not None}
    by_jump_b = {p.jump_ref: p for p in reversed(res_b.phases) if p.jump_ref is not None}
    rows = []
    for tj in sched_a.jump_times:
        pa = by_jump_a.get(tj)
        pb = by_jump_b.get(tj)
        if pa is None or pb is None:
            continue
        reduction = 1.0 - pb.peak_abs_e / pa.peak_abs_e if pa.peak_abs_e > 0 else 0.0
        rows.append({
            "jump_t": tj,
            "t_u_a": pa.t_u, "t_u_b": pb.t_u,
            "peak_a": pa.peak_abs_e, "peak_b": pb.peak_abs_e,
            "reduction": reduction,
            "E_a": pa.E_phase, "E_b": pb.E_phase,
        })
    return rows


def compare(config_a, config_b):
    """Run both configurations and return (result_a, result_b, matched rows)."""
    res_a = run(config_a)
    res_b = run(config_b)
    return res_a, res_b, compare_results(res_a, res_b)


# --------------------------------------------------------------------------
# finite-difference gradient check

def _replay_window(cfg, stepper, snapshot, steps, theta_I, sens_mode=None):
    """Re-simulate a frozen phase window from its onset snapshot.

    Events are not re-detected and no reinitialization is applied; the
    window starts with theta_hat = theta_I.  Returns (E, dE_dthI or None).
    """
    n = cfg.plant.n
    iy = cfg.plant.iy
    dt = cfg.dt
    with_sens = sens_mode is not None
    exact = sens_mode == GradientMode.EXACT

    y = np.concatenate([snapshot.x, snapshot.x_r, theta_I])
    if with_sens:
        y = np.concatenate([y, np.zeros(n * n), np.eye(n).reshape(-1)])
    E = 0.0
    dE = np.zeros(n) if with_sens else None
    for k in range(steps):
        t = snapshot.t_u + k * dt
        theta = theta_at(cfg.schedule, t)
        e = y[iy] - y[n + iy]
        E += abs(e) * dt
        if with_sens and e != 0.0:
            S_e_row = y[3 * n + iy * n:3 * n + (iy + 1) * n]
            dE += np.sign(e) * S_e_row * dt
        y = stepper.step(y, theta, with_sens, exact)
    return E, dE


def grad_check(cfg, phase_index, delta, result=None):
    """Central-difference validation of the sensitivity-ODE gradient.

    Re-simulates the chosen closed phase with the reinitialization value
    perturbed component-wise by +/- delta, events frozen, and compares
    against the sensitivity-ODE gradient for both gradient modes.
    """
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    if not cfg.preadapt.enabled:
        raise ConfigError("gradient check needs a preadapt-enabled run")
    if result is None:
        result = run(cfg)
    closed = [p for p in result.phases if p.recovered and p.snapshot is not None]
    if phase_index >= len(closed):
        raise ValueError(
            f"phase {phase_index} not available ({len(closed)} closed phases)"
        )
    phase = closed[phase_index]
    snap = phase.snapshot
    steps = phase.step_d - phase.step_u

    ctrl, ref = build_controller(cfg)
    stepper = _Stepper(cfg, ctrl, ref)
    n = cfg.plant.n
    theta_I = snap.theta_I

    fd = np.zeros(n)
    for j in range(n):
        bump = np.zeros(n)
        bump[j] = delta
        e_plus, _ = _replay_window(cfg, stepper, snap, steps, theta_I + bump)
        e_minus, _ = _replay_window(cfg, stepper, snap, steps, theta_I - bump)
        fd[j] = (e_plus - e_minus) / (2.0 * delta)

    report = {"phase_index": phase_index, "t_u": phase.t_u, "t_d": phase.t_d,
              "delta": delta, "fd": fd, "modes": {}}
    for mode in (GradientMode.EXACT, GradientMode.APPROX):
        _, grad = _replay_window(cfg, stepper, snap, steps, theta_I, sens_mode=mode)
        rel = np.empty(n)
        for j in range(n):
            if abs(fd[j]) < 1e-8:
                rel[j] = abs(grad[j] - fd[j])
            else:
                rel[j] = abs(grad[j] - fd[j]) / abs(fd[j])
        report["modes"][mode.value] = {
            "grad": grad,
            "rel_error": rel,
            "max_rel_error": float(np.max(rel)),
        }
    return report
