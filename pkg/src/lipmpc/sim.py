"""Closed-loop hybrid walking simulation.

Wires the layers together per the control block diagram: once per single
support phase the footstep MPC replans from the measured CoM state; every
millisecond the task-space controller tracks the LIPM CoM reference, the
swing-foot trajectory, trunk pitch, and angular-momentum damping; touchdown
(swing sole crossing the terrain while descending) triggers the plastic
impact map and support exchange. Terrain is unknown to the controller:
early/late touchdowns are detected purely from the contact event.

The controller always uses the nominal model; payload and push disturbances
act on the plant only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import dynamics, lipm, mpc, swing, tsc
from .config import ScenarioConfig
from .errors import RetargetTooLateError, ValidationError
from .lipm import FootPosition, LipmParams, LipmState
from .model import ContactState, RobotModel, WholeBodyState, model_from_dict, standing_configuration

DT = 1e-3                      # simulator and TSC tick
TOUCHDOWN_ARM_HEIGHT = 0.005   # swing must rise this far before contact checks arm
LATE_DESCEND_RATE = 0.3        # m/s terminal descent after the nominal swing ends
LATE_DESCEND_ACCEL = 2.0       # m/s^2 ramp toward the terminal descent rate
FALL_HEIGHT_FRACTION = 0.6
FALL_PITCH_LIMIT = 0.6

SERIES_COLUMNS = ("t", "com_x", "com_z", "com_dx", "trunk_pitch",
                  "swing_foot_x", "swing_foot_z", "stance_fz", "stance_cop",
                  "tau_1", "tau_2", "tau_3", "tau_4", "tau_5", "tau_6",
                  "mpc_target_x")
EVENT_COLUMNS = ("step_index", "t_touchdown", "planned_px", "realized_px", "avg_velocity")


# ---------------------------------------------------------------------------
# terrain
# ---------------------------------------------------------------------------

class TerrainProfile:
    """Ground height as a function of x; piecewise constant."""

    def __init__(self, base_fn, steps=()):
        self._base = base_fn
        self._steps = tuple(steps)   # (x0, dh) permanent raises

    def height(self, x: float) -> float:
        h = self._base(x)
        for x0, dh in self._steps:
            if x >= x0:
                h += dh
        return h

    @staticmethod
    def from_config(tcfg, disturbances, seed: int) -> "TerrainProfile":
        if tcfg.kind == "flat":
            base = lambda x: 0.0
        elif tcfg.kind == "stairs":
            rise, run, count, x0 = tcfg.rise, tcfg.run, tcfg.count, tcfg.start_x
            def base(x, rise=rise, run=run, count=count, x0=x0):
                if x < x0:
                    return 0.0
                k = min(count, int((x - x0) // run) + 1)
                return k * rise
        else:   # random
            rng = np.random.default_rng(seed)
            heights = rng.uniform(-tcfg.amplitude, tcfg.amplitude, size=512)
            cell, x0 = tcfg.cell, tcfg.start_x
            def base(x, heights=heights, cell=cell, x0=x0):
                if x < x0:
                    return 0.0
                i = int((x - x0) // cell)
                return float(heights[min(i, len(heights) - 1)])
        steps = [(d.x, d.height) for d in disturbances if d.kind == "terrain_step"]
        return TerrainProfile(base, steps)


# ---------------------------------------------------------------------------
# event log and metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StepRecord:
    index: int              # 1-based step counter
    t_touchdown: float
    planned_px: float
    realized_px: float
    avg_velocity: float     # CoM displacement over the step divided by its duration


@dataclass
class GaitEventLog:
    steps: list = field(default_factory=list)
    fell: bool = False
    fall_time: float = None
    fall_reason: str = None

    def append(self, rec: StepRecord):
        if self.steps and rec.t_touchdown <= self.steps[-1].t_touchdown:
            raise ValidationError("touchdown times must be strictly increasing")
        self.steps.append(rec)


def velocity_tolerance(command: float) -> float:
    """5% of the command, floored for near-zero commands."""
    return 0.05 * max(abs(command), 0.1)


def metrics(log: GaitEventLog, command_velocity: float,
            disturbance_end: float = None) -> dict:
    """Summary metrics recomputed from the event log."""
    if not log.steps:
        raise ValidationError("empty gait event log")
    tol = velocity_tolerance(command_velocity)
    vels = [s.avg_velocity for s in log.steps]

    def first_converged(from_idx=0):
        for i in range(from_idx, len(vels)):
            if all(abs(v - command_velocity) <= tol for v in vels[i:]):
                return i
        return None

    conv = first_converged()
    steps_to_velocity = None if conv is None else log.steps[conv].index

    recovery_steps = None
    if disturbance_end is not None:
        after = [i for i, s in enumerate(log.steps) if s.t_touchdown > disturbance_end]
        if after:
            conv_after = first_converged(after[0])
            if conv_after is not None:
                recovery_steps = conv_after - after[0] + 1

    xs = [s.realized_px for s in log.steps]
    max_step = max((abs(b - a) for a, b in zip(xs, xs[1:])), default=0.0)
    return {
        "steps_to_velocity": steps_to_velocity,
        "recovery_steps": recovery_steps,
        "max_step_length": max_step,
        "fell": log.fell,
    }


def fall_predicate(model: RobotModel, state: WholeBodyState, contact: ContactState,
                   nominal_trunk_height: float, wrench=None) -> bool:
    """Fallen iff trunk CoM sank below 60% of nominal (above the stance
    ground), trunk pitch exceeds 0.6 rad, or the pinned contact pulls
    (negative vertical force). Thresholds are strict inequalities."""
    trunk_z = state.q[1] + math.cos(state.q[2]) * model.trunk.com_offset
    rel = trunk_z - contact.anchor[1]   # height above the stance sole
    if rel < FALL_HEIGHT_FRACTION * nominal_trunk_height:
        return True
    if abs(state.q[2]) > FALL_PITCH_LIMIT:
        return True
    if wrench is not None and wrench[1] < 0.0:
        return True
    return False


# ---------------------------------------------------------------------------
# LIPM-only closed loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LipmLoopResult:
    log: GaitEventLog
    series: list      # rows (t, com_x, com_dx, com_y, com_dy, px, py)


def lateral_cycle_velocity(params: LipmParams, step_period: float, half_width: float) -> float:
    """SSP-start frontal velocity of the period-two lateral orbit."""
    wt = params.omega * step_period
    return half_width * params.omega * math.sinh(wt) / (1.0 + math.cosh(wt))


def lipm_loop_scenario(config: ScenarioConfig) -> LipmLoopResult:
    """Close the MPC against the ideal LIPM plant only (no whole-body layer).

    Pushes are applied as instantaneous velocity changes F*dt/m at their
    start time. The gait starts on the frontal limit cycle.
    """
    sc = config.scenario
    params = LipmParams(z0=config.lipm.resolved_z0("lipm"), g=config.lipm.g)
    T = config.mpc.step_period
    n_steps = max(1, int(math.ceil(sc.duration / T)))
    total_mass = model_from_dict(config.model).total_mass

    pushes = sorted(
        ((d.start, d.force[0] * d.duration / total_mass, d.force[1] * d.duration / total_mass)
         for d in config.disturbances if d.kind == "push"), key=lambda p: p[0])

    d_lat = sc.lateral_half_width
    s = LipmState(0.0, 0.0, 0.0, lateral_cycle_velocity(params, T, d_lat))
    p0 = FootPosition(0.0, d_lat)
    sign = -1   # starting on the left stance: first swing goes right
    desired = mpc.desired_state_for_velocity(params, T, sc.command_velocity)

    log = GaitEventLog()
    series = []
    push_i = 0
    t = 0.0
    warm = None
    for k in range(n_steps):
        cfg_k = mpc.MpcConfig(
            horizon=config.mpc.horizon, step_period=T,
            Q=np.diag(config.mpc.q_weights), R=np.diag(config.mpc.r_weights),
            desired_state=desired,
            bounds=mpc.alternating_bounds(config.mpc.horizon, first_sign=sign,
                                          sagittal=config.mpc.sagittal_bound,
                                          lateral_inner=config.mpc.lateral_inner,
                                          lateral_outer=config.mpc.lateral_outer),
            regularize_first_step=config.mpc.regularize_first_step)
        plan = mpc.replan(params, cfg_k, s, p0, 0.0, warm_start=warm)
        warm = plan.solver_stats.z
        target = plan.placements[0]

        x_start = s.x
        # advance through the step, splitting at push times and millisecond samples
        n_sub = int(round(T / DT))
        local = 0.0
        for j in range(n_sub):
            t_next = local + DT
            while push_i < len(pushes) and t + local <= pushes[push_i][0] < t + t_next:
                frac = pushes[push_i][0] - (t + local)
                if frac > 0:
                    s = lipm.propagate(params, s, p0, frac)
                    local += frac
                s = LipmState(s.x, s.dx + pushes[push_i][1], s.y, s.dy + pushes[push_i][2])
                push_i += 1
            s = lipm.propagate(params, s, p0, t_next - local)
            local = t_next
            series.append((t + local, s.x, s.dx, s.y, s.dy, p0.px, p0.py))
        t += T
        log.append(StepRecord(index=k + 1, t_touchdown=t, planned_px=target.px,
                              realized_px=target.px, avg_velocity=(s.x - x_start) / T))
        p0 = target
        sign = -sign
    return LipmLoopResult(log=log, series=series)


# ---------------------------------------------------------------------------
# whole-body closed loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SimResult:
    log: GaitEventLog
    series: list          # rows matching SERIES_COLUMNS
    status: str           # completed | fell
    final_state: WholeBodyState


def _active_payload(disturbances, t: float) -> float:
    m = 0.0
    for d in disturbances:
        if d.kind == "payload" and d.start <= t < d.end:
            m += d.mass
    return m


def _push_force(disturbances, t: float):
    fx = fz = 0.0
    for d in disturbances:
        if d.kind == "push" and d.start <= t < d.end:
            fx += d.force[0]
            fz += d.force[1]
    if fx == 0.0 and fz == 0.0:
        return None
    f = np.zeros(9)
    f[0], f[1] = fx, fz
    return f


def run_scenario(config: ScenarioConfig) -> SimResult:
    """Run the whole-body closed loop; deterministic for a fixed seed.

    A detected fall ends the run with the fall flag set (not an exception);
    QP solver failures abort with diagnostics.
    """
    sc = config.scenario
    if sc.mode != "whole_body":
        raise ValidationError("run_scenario drives the whole-body loop; use "
                              "lipm_loop_scenario for mode=lipm")
    ctrl_model = model_from_dict(config.model)
    z0 = config.lipm.resolved_z0(sc.mode)
    params = LipmParams(z0=z0, g=config.lipm.g)
    terrain = TerrainProfile.from_config(config.terrain, config.disturbances, sc.seed)
    T = config.mpc.step_period

    apex = sc.swing_apex
    if config.terrain.kind == "stairs":
        apex = max(apex, config.terrain.rise + 0.02)

    q0 = standing_configuration(ctrl_model, z0)
    state = WholeBodyState(q0, np.zeros(9))
    core = dynamics.core_quantities(ctrl_model, state)
    stance = "left"
    anchor = np.array([core["left"]["sole_pos"][0], core["left"]["sole_pos"][1],
                       core["left"]["sole_pitch"]])
    contact = ContactState(stance, anchor=anchor)
    nominal_trunk_height = (state.q[1] + math.cos(state.q[2]) * ctrl_model.trunk.com_offset
                            - anchor[1])

    mpc_cfg = mpc.MpcConfig(
        horizon=config.mpc.horizon, step_period=T,
        Q=np.diag(config.mpc.q_weights), R=np.diag(config.mpc.r_weights),
        desired_state=mpc.desired_state_for_velocity(params, T, sc.command_velocity),
        bounds=mpc.symmetric_bounds(config.mpc.horizon, sagittal=config.mpc.sagittal_bound,
                                    lateral=config.mpc.lateral_outer),
        regularize_first_step=config.mpc.regularize_first_step)

    g_com = tsc.PdGains(np.full(2, config.tsc.com.kp), np.full(2, config.tsc.com.kd))
    g_swing = tsc.PdGains(np.full(3, config.tsc.swing_foot.kp), np.full(3, config.tsc.swing_foot.kd))
    g_trunk = tsc.PdGains(np.full(1, config.tsc.trunk_pitch.kp), np.full(1, config.tsc.trunk_pitch.kd))
    friction_ctrl = tsc.FrictionGeometry(
        mu=config.tsc.friction_mu,
        d_x_minus=-config.tsc.cop_half_length * config.tsc.cop_margin,
        d_x_plus=config.tsc.cop_half_length * config.tsc.cop_margin)
    cop_phys = config.tsc.cop_half_length
    e_pitch = np.zeros((1, 9))
    e_pitch[0, 2] = 1.0

    log = GaitEventLog()
    series = []
    n_ticks = int(round(sc.duration / DT))

    phase_time = 0.0
    step_count = 0
    last_td_time = 0.0
    last_td_com_x = float(core["com"][0])
    swing_traj = None
    swing_target_z = 0.0
    mpc_target_x = anchor[0]
    armed = False
    replans_done = 0
    warm_tsc = None
    warm_mpc = None
    payload_cache = {0.0: ctrl_model}
    fall_reason = None

    def controller_replan(phase):
        nonlocal mpc_target_x, warm_mpc
        s_meas = LipmState(float(core["com"][0]), float(core["com_vel"][0]), 0.0, 0.0)
        plan = mpc.replan(params, mpc_cfg, s_meas, FootPosition(contact.anchor[0], 0.0),
                          min(phase, T - 1e-9), warm_start=warm_mpc)
        warm_mpc = plan.solver_stats.z
        mpc_target_x = plan.placements[0].px
        return plan

    for i in range(n_ticks):
        t = i * DT
        core = dynamics.core_quantities(ctrl_model, state)

        # touchdown detection on the swing sole (proprioceptive: terrain is
        # only felt through this event)
        sw = core[contact.swing_side]
        ground = terrain.height(float(sw["sole_pos"][0]))
        if not armed and sw["sole_pos"][1] > ground + TOUCHDOWN_ARM_HEIGHT:
            armed = True
        if armed and phase_time > 0.3 * T and sw["sole_pos"][1] <= ground and sw["sole_vel"][1] < 0.0:
            new_anchor = np.array([sw["sole_pos"][0], sw["sole_pos"][1], sw["sole_pitch"]])
            new_contact = ContactState(contact.swing_side, anchor=new_anchor)
            state = dynamics.impact_map(ctrl_model, state, new_contact)
            core = dynamics.core_quantities(ctrl_model, state)
            step_count += 1
            dt_step = t - last_td_time
            log.append(StepRecord(
                index=step_count, t_touchdown=t, planned_px=mpc_target_x,
                realized_px=float(new_anchor[0]),
                avg_velocity=(float(core["com"][0]) - last_td_com_x) / dt_step))
            last_td_time = t
            last_td_com_x = float(core["com"][0])
            contact = new_contact
            phase_time = 0.0
            armed = False
            swing_traj = None
            replans_done = 0

        # MPC cadence: at SSP start and at the configured mid-phase slots
        if swing_traj is None or (
                replans_done < config.mpc.calls_per_step
                and phase_time >= replans_done * T / config.mpc.calls_per_step):
            plan_phase = 0.0 if swing_traj is None else phase_time
            plan = controller_replan(plan_phase)
            if swing_traj is None:
                ssp_lipm = LipmState(float(core["com"][0]), float(core["com_vel"][0]), 0.0, 0.0)
                start = np.array([float(core[contact.swing_side]["sole_pos"][0]),
                                  0.0,
                                  float(core[contact.swing_side]["sole_pos"][1])])
                swing_target_z = contact.anchor[1]
                swing_traj = swing.plan(swing.SwingSpec(
                    start=(start[0], 0.0, start[2]),
                    target=(mpc_target_x, 0.0, swing_target_z),
                    apex_height=apex, duration=T,
                    touchdown_velocity=sc.touchdown_velocity))
            else:
                try:
                    swing_traj = swing.retarget(swing_traj, phase_time,
                                                (mpc_target_x, 0.0, swing_target_z))
                except RetargetTooLateError:
                    pass
            replans_done += 1

        # references ------------------------------------------------------
        if phase_time <= swing_traj.duration:
            sw_ref = swing_traj.sample(phase_time)
            sw_pos = sw_ref.position
            sw_vel = sw_ref.velocity
            sw_acc = sw_ref.acceleration
        else:       # late touchdown: keep descending below the nominal target
            over = phase_time - swing_traj.duration
            v0 = sc.touchdown_velocity
            t_ramp = max(0.0, (LATE_DESCEND_RATE - v0) / LATE_DESCEND_ACCEL)
            if over <= t_ramp:
                drop = v0 * over + 0.5 * LATE_DESCEND_ACCEL * over ** 2
                vz = v0 + LATE_DESCEND_ACCEL * over
                az = LATE_DESCEND_ACCEL
            else:
                drop = (v0 * t_ramp + 0.5 * LATE_DESCEND_ACCEL * t_ramp ** 2
                        + LATE_DESCEND_RATE * (over - t_ramp))
                vz = LATE_DESCEND_RATE
                az = 0.0
            sw_pos = np.array([swing_traj.target[0], 0.0, swing_traj.target[2] - drop])
            sw_vel = np.array([0.0, 0.0, -vz])
            sw_acc = np.array([0.0, 0.0, -az])

        s_ref = lipm.propagate(params, ssp_lipm, FootPosition(contact.anchor[0], 0.0),
                               phase_time)
        com_ref_z = contact.anchor[1] + z0
        w2 = params.omega ** 2
        mass = core["mass"]

        cmd_com = tsc.momentum_command(
            tsc.PdGains(mass * g_com.kp, mass * g_com.kd),
            ldot_d=mass * np.array([w2 * (s_ref.x - contact.anchor[0]), 0.0]),
            com_vel_d=np.array([s_ref.dx, 0.0]), com_pos_d=np.array([s_ref.x, com_ref_z]),
            com_vel=core["com_vel"], com_pos=core["com"])
        swf = core[contact.swing_side]
        cmd_swing = tsc.pd_command(
            g_swing,
            acc_d=np.array([sw_acc[0], sw_acc[2], 0.0]),
            vel_d=np.array([sw_vel[0], sw_vel[2], 0.0]),
            pos_d=np.array([sw_pos[0], sw_pos[2], 0.0]),
            vel=swf["sole_vel"],
            pos=np.array([swf["sole_pos"][0], swf["sole_pos"][1], swf["sole_pitch"]]))
        cmd_trunk = tsc.pd_command(g_trunk, np.zeros(1), np.zeros(1), np.zeros(1),
                                   state.v[2:3], state.q[2:3])
        cmd_am = tsc.angular_momentum_command(config.tsc.angular_momentum.kd,
                                              0.0, 0.0, core["k_ang"])

        tasks = [
            tsc.Task("com", mass * core["J_com"], mass * core["com_drift"],
                     cmd_com, config.tsc.com.weight),
            tsc.Task("swing_foot", swf["J_sole"], swf["sole_drift"],
                     cmd_swing, config.tsc.swing_foot.weight),
            tsc.Task("trunk_pitch", e_pitch, np.zeros(1),
                     cmd_trunk, config.tsc.trunk_pitch.weight),
            tsc.Task("ang_mom", core["A_ang"][None, :], np.array([core["ang_drift"]]),
                     np.array([cmd_am]), config.tsc.angular_momentum.weight),
        ]

        sol = tsc.solve_tsc(ctrl_model, state, contact, tasks, friction_ctrl,
                            reg_tau=config.tsc.tau_reg, reg_force=config.tsc.force_reg,
                            core=core, warm_start=warm_tsc)
        warm_tsc = sol.solver_stats.z

        # plant step (payload and pushes act here, unseen by the controller)
        pm = _active_payload(config.disturbances, t)
        if pm not in payload_cache:
            payload_cache[pm] = ctrl_model.with_trunk_payload(pm)
        plant_model = payload_cache[pm]
        plant_core = core if plant_model is ctrl_model else dynamics.core_quantities(plant_model, state)
        state, wrench = dynamics.step_dynamics(plant_model, state, contact, sol.tau, DT,
                                               f_ext=_push_force(config.disturbances, t),
                                               core=plant_core)

        series.append((
            t, float(core["com"][0]), float(core["com"][1]), float(core["com_vel"][0]),
            float(state.q[2]),
            float(swf["sole_pos"][0]), float(swf["sole_pos"][1]),
            float(wrench[1]), tsc.cop_position(wrench),
            *[float(x) for x in sol.tau],
            mpc_target_x,
        ))

        # unilateral validity of the pinned contact, then the fall predicate
        if wrench[1] < -1e-6:
            fall_reason = f"contact vertical force {wrench[1]:.2f} N < 0 at t={t:.3f}"
        elif wrench[1] > 1e-6 and abs(tsc.cop_position(wrench)) > cop_phys + 1e-9:
            fall_reason = (f"CoP {tsc.cop_position(wrench):+.4f} m left the "
                           f"+-{cop_phys} m sole at t={t:.3f}")
        elif fall_predicate(ctrl_model, state, contact, nominal_trunk_height, wrench):
            fall_reason = f"fall predicate tripped at t={t:.3f}"
        if fall_reason is not None:
            log.fell = True
            log.fall_time = t
            log.fall_reason = fall_reason
            break

        phase_time += DT

    status = "fell" if log.fell else "completed"
    return SimResult(log=log, series=series, status=status, final_state=state)


# ---------------------------------------------------------------------------
# ballistic cross-check helper
# ---------------------------------------------------------------------------

def ballistic_rollout(model: RobotModel, state: WholeBodyState, duration: float,
                      dt: float = 1e-4, method: str = "rk4") -> WholeBodyState:
    """Integrate the free (no contact, no actuation) dynamics."""
    n = int(round(duration / dt))
    s = state
    if method == "rk4":
        for _ in range(n):
            k1v = dynamics.free_dynamics(model, s)
            k1q = s.v
            s2 = WholeBodyState(s.q + 0.5 * dt * k1q, s.v + 0.5 * dt * k1v)
            k2v = dynamics.free_dynamics(model, s2)
            k2q = s2.v
            s3 = WholeBodyState(s.q + 0.5 * dt * k2q, s.v + 0.5 * dt * k2v)
            k3v = dynamics.free_dynamics(model, s3)
            k3q = s3.v
            s4 = WholeBodyState(s.q + dt * k3q, s.v + dt * k3v)
            k4v = dynamics.free_dynamics(model, s4)
            k4q = s4.v
            s = WholeBodyState(s.q + dt / 6.0 * (k1q + 2 * k2q + 2 * k3q + k4q),
                               s.v + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v))
    elif method == "semi_implicit":
        for _ in range(n):
            a = dynamics.free_dynamics(model, s)
            v = s.v + dt * a
            s = WholeBodyState(s.q + dt * v, v)
    else:
        raise ValidationError(f"unknown integration method {method!r}")
    return s


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_series_csv(path, rows, columns=SERIES_COLUMNS):
    with open(path, "w") as f:
        f.write(",".join(columns) + "\n")
        for row in rows:
            f.write(",".join(_fmt(x) for x in row) + "\n")


def write_events_csv(path, log: GaitEventLog):
    with open(path, "w") as f:
        f.write(",".join(EVENT_COLUMNS) + "\n")
        for s in log.steps:
            f.write(",".join(_fmt(x) for x in
                             (s.index, s.t_touchdown, s.planned_px, s.realized_px,
                              s.avg_velocity)) + "\n")


LIPM_SERIES_COLUMNS = ("t", "com_x", "com_dx", "com_y", "com_dy", "px", "py")
