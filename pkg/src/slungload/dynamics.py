"""World state, fault handling and the deterministic simulation loop.

The full hybrid state (drone rigid bodies, payload point mass, bead chains)
lives in one flat float64 vector (layout in _kernels); this module builds
initial conditions, validates fault schedules, exposes the single-step
integrator contract, and runs the 30 s campaign loop: controls held
zero-order over each 1 ms tick, physics advanced by 40 internal RK3 substeps
(the Kelvin-Voigt chains are stiff), faults snapped to the nearest tick.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .controller import reference, slot_offsets
from .extensions import L1Bank, MpcLayer, ReshapeSupervisor
from .params import RunConfig, SimParams
from .wind import DrydenWind, body_force

DIVERGENCE_LIMIT = 1e6


@dataclass
class DroneState:
    p: np.ndarray
    v: np.ndarray
    R: np.ndarray
    w: np.ndarray


@dataclass
class PayloadState:
    pL: np.ndarray
    vL: np.ndarray


@dataclass
class WorldState:
    t: float
    y: np.ndarray                  # flat state vector
    severed: np.ndarray            # int8 per rope
    sim: SimParams

    @property
    def survivors(self):
        return {i for i in range(self.sim.n_drones) if not self.severed[i]}

    def drone(self, i: int) -> DroneState:
        b = _kernels.DRONE_STRIDE * i
        return DroneState(p=self.y[b:b + 3].copy(), v=self.y[b + 3:b + 6].copy(),
                          R=self.y[b + 6:b + 15].reshape(3, 3).copy(),
                          w=self.y[b + 15:b + 18].copy())

    def payload(self) -> PayloadState:
        o = _kernels.DRONE_STRIDE * self.sim.n_drones
        return PayloadState(pL=self.y[o:o + 3].copy(), vL=self.y[o + 3:o + 6].copy())


def attachment_offsets(sim: SimParams) -> np.ndarray:
    """Payload-side attachment points (body offsets): the same equiangular
    ring as the drone slots, so cables hang vertical at hover."""
    return slot_offsets(sim.n_drones, sim.ring_radius)


def build_initial_state(config: RunConfig) -> WorldState:
    """Drones on the ring at slot altitude, ropes vertical at the slightly
    slack initial chord, everything moving with the reference."""
    sim, ctrl = config.sim, config.ctrl
    n, nb = sim.n_drones, sim.n_beads
    y = np.zeros(_kernels.state_size(n, nb))
    p_ref, v_ref, _ = reference(0.0, ctrl)
    att = attachment_offsets(sim)
    offL = _kernels.DRONE_STRIDE * n
    pL = p_ref + np.array([0.0, 0.0, ctrl.d_rope - sim.init_chord])
    y[offL:offL + 3] = pL
    y[offL + 3:offL + 6] = v_ref
    for i in range(n):
        b = _kernels.DRONE_STRIDE * i
        y[b:b + 3] = p_ref + att[i] + np.array([0.0, 0.0, ctrl.d_rope])
        y[b + 3:b + 6] = v_ref
        y[b + 6:b + 15] = np.eye(3).ravel()
        top = y[b:b + 3]
        bottom = pL + att[i]
        for bd in range(nb):
            o = offL + 6 + (i * nb + bd) * 6
            frac = (bd + 1) / (nb + 1)
            y[o:o + 3] = top + frac * (bottom - top)
            y[o + 3:o + 6] = v_ref
    return WorldState(t=0.0, y=y, severed=np.zeros(n, np.int8), sim=sim)


def validate_schedule(faults, sim: SimParams, probe: bool = False):
    """Structured admissibility check; returns a list of violation strings."""
    violations = []
    n = sim.n_drones
    tau_pend = 2.0 * math.pi * math.sqrt(sim.rope_length / sim.g)
    events = sorted(faults, key=lambda ev: ev[0])
    if len(events) > n - 2:
        violations.append(f"too many faults: {len(events)} > N-2 = {n - 2}")
    seen = set()
    prev_t = None
    for t_star, idx in events:
        if not (0 <= idx < n):
            violations.append(f"fault index {idx} out of range")
        if idx in seen:
            violations.append(f"drone {idx} severed twice")
        seen.add(idx)
        if not (0.0 <= t_star <= sim.duration):
            violations.append(f"fault time {t_star} outside run")
        if prev_t is not None and t_star - prev_t < tau_pend and not probe:
            violations.append(
                f"dwell {t_star - prev_t:.3f} s < tau_pend {tau_pend:.3f} s "
                "(set the probe flag for sub-threshold schedules)")
        prev_t = t_star
    return violations


def apply_fault(world: WorldState, drone_index: int):
    """Sever one rope: survivors shrink, kinematics untouched (no impulse)."""
    if world.severed[drone_index]:
        raise ValueError(f"drone {drone_index} already severed")
    world.severed[drone_index] = 1
    return world


def _phys_args(sim: SimParams, c_drag: float, w_max: float):
    return (sim.n_drones, sim.n_beads, sim.m_drone, sim.m_payload, sim.m_bead,
            sim.g, sim.k_segment, sim.c_segment, sim.seg_rest,
            c_drag, w_max, sim.J[0], sim.J[1], sim.J[2])


def step(world: WorldState, f, tau, dt: float, gust=None, wind_on=False,
         c_drag: float = 0.25, w_max: float = 1.0):
    """Single explicit RK3 step of the full ODE with controls held constant.

    dt must not exceed the 1 ms control tick; note the stiff bead chains are
    only stable well below that (the run loop substeps accordingly).
    """
    if dt > 1e-3 + 1e-12:
        raise ValueError("dt must be <= 1e-3 s")
    sim = world.sim
    y = world.y
    if not np.all(np.isfinite(y)):
        raise FloatingPointError("non-finite state")
    att = attachment_offsets(sim)
    g3 = np.zeros(3) if gust is None else np.asarray(gust, float)
    yt, k1, k2, k3 = (np.empty_like(y) for _ in range(4))
    _kernels.rk3_step(y, yt, k1, k2, k3, dt, np.asarray(f, float),
                      np.asarray(tau, float), world.severed, g3,
                      1 if wind_on else 0, att,
                      *_phys_args(sim, c_drag, w_max))
    _kernels.reorthonormalize(y, sim.n_drones)
    world.t += dt
    return world


def mechanical_energy(world: WorldState) -> float:
    """Total kinetic + gravitational + elastic energy (diagnostic)."""
    sim = world.sim
    y = world.y
    n, nb = sim.n_drones, sim.n_beads
    att = attachment_offsets(sim)
    E = 0.0
    for i in range(n):
        b = _kernels.DRONE_STRIDE * i
        v = y[b + 3:b + 6]
        w = y[b + 15:b + 18]
        E += 0.5 * sim.m_drone * v @ v + sim.m_drone * sim.g * y[b + 2]
        E += 0.5 * (sim.J[0] * w[0] ** 2 + sim.J[1] * w[1] ** 2
                    + sim.J[2] * w[2] ** 2)
    offL = _kernels.DRONE_STRIDE * n
    vL = y[offL + 3:offL + 6]
    E += 0.5 * sim.m_payload * vL @ vL + sim.m_payload * sim.g * y[offL + 2]
    for i in range(n):
        nodes = [y[_kernels.DRONE_STRIDE * i:_kernels.DRONE_STRIDE * i + 3]]
        for bd in range(nb):
            o = offL + 6 + (i * nb + bd) * 6
            E += 0.5 * sim.m_bead * (y[o + 3:o + 6] @ y[o + 3:o + 6])
            E += sim.m_bead * sim.g * y[o + 2]
            nodes.append(y[o:o + 3])
        nodes.append(y[offL:offL + 3] + att[i])
        if not world.severed[i]:
            for a, b2 in zip(nodes[:-1], nodes[1:]):
                stretch = max(0.0, float(np.linalg.norm(b2 - a)) - sim.seg_rest)
                E += 0.5 * sim.k_segment * stretch ** 2
    return float(E)


@dataclass
class SimResult:
    config: RunConfig
    t: np.ndarray
    pL: np.ndarray               # (ns, 3)
    vL: np.ndarray
    ref_p: np.ndarray
    drone_p: np.ndarray          # (ns, n, 3)
    drone_v: np.ndarray
    thrust: np.ndarray           # (ns, n)
    tension: np.ndarray
    code: np.ndarray             # (ns, n) int16 active-set codes
    active: np.ndarray           # (ns, n) uint8, 0 once severed
    gust: np.ndarray             # (ns, 3)
    clip_events: np.ndarray      # (ns,) bodies clipped this tick
    slot_angle: np.ndarray       # (ns, n)
    aborted: bool = False
    abort_reason: str = ""
    info: dict = field(default_factory=dict)


def simulate(config: RunConfig) -> SimResult:
    """Run one deterministic 30 s mission."""
    sim, ctrl = config.sim, config.ctrl
    n, nb = sim.n_drones, sim.n_beads
    dt = sim.dt
    viol = validate_schedule(config.faults, sim, config.subthreshold_probe)
    if viol:
        raise ValueError("inadmissible fault schedule: " + "; ".join(viol))

    world = build_initial_state(config)
    y = world.y
    att = attachment_offsets(sim)
    n_ticks = int(round(sim.duration / dt))
    ns = n_ticks + 1
    fault_ticks = {int(round(t_star / dt)): idx
                   for t_star, idx in config.faults}

    wind_on = config.wind.enabled
    windgen = DrydenWind(config.wind, dt) if wind_on else None
    c_drag, w_max = config.wind.c_drag, config.wind.w_max

    l1 = L1Bank(n, config.l1, ctrl.kp_z, ctrl.kd_z) if config.l1.enabled else None
    mpc = (MpcLayer(n, config.mpc, ctrl, sim.m_drone, sim.f_min, sim.f_max,
                    sim.k_eff) if config.mpc.enabled else None)
    mpc_every = int(round(config.mpc.dt / dt)) if mpc else 0
    resup = (ReshapeSupervisor(n, config.reshape, dt)
             if config.reshape.enabled else None)
    nominal_angles = 2.0 * np.pi * np.arange(n) / n
    dz_slot = np.array([0.0, 0.0, ctrl.d_rope])

    out = SimResult(
        config=config, t=np.arange(ns) * dt,
        pL=np.zeros((ns, 3)), vL=np.zeros((ns, 3)), ref_p=np.zeros((ns, 3)),
        drone_p=np.zeros((ns, n, 3)), drone_v=np.zeros((ns, n, 3)),
        thrust=np.zeros((ns, n)), tension=np.zeros((ns, n)),
        code=np.zeros((ns, n), np.int16), active=np.ones((ns, n), np.uint8),
        gust=np.zeros((ns, 3)), clip_events=np.zeros(ns, np.int16),
        slot_angle=np.zeros((ns, n)))

    f = np.zeros(n)
    tau = np.zeros((n, 3))
    T = np.zeros(n)
    u_ad = np.zeros(n)
    a_ovr = np.zeros((n, 3))
    a_tgt = np.zeros((n, 3))
    a_st = np.zeros((n, 3))
    code = np.zeros(n, np.int64)
    yt, k1, k2, k3 = (np.empty_like(y) for _ in range(4))
    phys = _phys_args(sim, c_drag, w_max)
    offL = _kernels.DRONE_STRIDE * n
    didx = (np.arange(n)[:, None] * _kernels.DRONE_STRIDE
            + np.arange(3)[None, :])

    kappa = ctrl.kappa_qp
    for k in range(n_ticks + 1):
        t = k * dt
        if k in fault_ticks:
            apply_fault(world, fault_ticks[k])

        gust = windgen.update() if wind_on else np.zeros(3)
        _kernels.measure_tensions(y, world.severed, att, n, nb,
                                  sim.k_segment, sim.c_segment, sim.seg_rest, T)

        p_ref, v_ref, _ = reference(t, ctrl)
        if resup is not None:
            angles = resup.update(t, T)
        else:
            angles = nominal_angles
        deltas = np.stack([sim.ring_radius * np.cos(angles),
                           sim.ring_radius * np.sin(angles),
                           np.zeros(n)], axis=-1)
        slots = p_ref[None, :] + deltas + dz_slot[None, :]

        drone_p = y[didx]
        drone_v = y[didx + 3]

        if l1 is not None:
            e_z = drone_p[:, 2] - slots[:, 2]
            e_dz = drone_v[:, 2] - v_ref[2]
            u_ad = l1.update(e_z, e_dz)

        use_ovr = 0
        if mpc is not None:
            use_ovr = 1
            if k % mpc_every == 0:
                vL = y[offL + 3:offL + 6] - v_ref   # swing velocity
                sx = -ctrl.k_swing * vL[0]
                sy = -ctrl.k_swing * vL[1]
                nrm = math.hypot(sx, sy)
                if nrm > ctrl.s_max:
                    sx *= ctrl.s_max / nrm
                    sy *= ctrl.s_max / nrm
                shift = np.array([sx, sy, 0.0])
                for i in range(n):
                    e_p = slots[i] + shift - drone_p[i]
                    e_v = v_ref - drone_v[i]
                    atgt_i = np.array([
                        ctrl.kp_xy * e_p[0] + ctrl.kd_xy * e_v[0]
                        + ctrl.w_swing * (-ctrl.k_swing * vL[0]),
                        ctrl.kp_xy * e_p[1] + ctrl.kd_xy * e_v[1]
                        + ctrl.w_swing * (-ctrl.k_swing * vL[1]),
                        ctrl.kp_z * e_p[2] + ctrl.kd_z * e_v[2] + u_ad[i]])
                    d = drone_p[i] - (y[offL:offL + 3] + att[i])
                    chord = float(np.linalg.norm(d))
                    vL3 = y[offL + 3:offL + 6]
                    chord_rate = (float(d @ (drone_v[i] - vL3)) / chord
                                  if chord > 1e-9 else 0.0)
                    t_ff = T[i] if config.ff_enabled else 0.0
                    res = mpc.step(i, atgt_i, t_ff, T[i], chord_rate)
                    a_ovr[i] = res.a_star

        _kernels.control_tick(
            y, T, slots, v_ref, u_ad, 1 if config.ff_enabled else 0,
            use_ovr, a_ovr, n, sim.m_drone, sim.g, ctrl.kp_xy, ctrl.kd_xy,
            ctrl.kp_z, ctrl.kd_z, ctrl.kp_att, ctrl.kd_att, ctrl.k_swing,
            ctrl.w_swing, ctrl.s_max, kappa, ctrl.axy_max, sim.f_min,
            sim.f_max, sim.tau_max, sim.J[0], sim.J[1], sim.J[2],
            ctrl.theta_max, f, tau, a_tgt, a_st, code)

        # record
        out.pL[k] = y[offL:offL + 3]
        out.vL[k] = y[offL + 3:offL + 6]
        out.ref_p[k] = p_ref
        out.drone_p[k] = drone_p
        out.drone_v[k] = drone_v
        out.thrust[k] = f
        out.tension[k] = T
        out.code[k] = code
        out.active[k] = 1 - world.severed
        out.gust[k] = gust
        out.slot_angle[k] = angles
        if wind_on:
            clip = 0
            for vb in (*drone_v, y[offL + 3:offL + 6]):
                _, c = body_force(gust, vb, c_drag, w_max)
                clip += int(c)
            out.clip_events[k] = clip

        if k == n_ticks:
            break

        dt_sub = dt / sim.n_substeps
        _kernels.advance_tick(y, yt, k1, k2, k3, sim.n_substeps, dt_sub, f,
                              tau, world.severed, gust,
                              1 if wind_on else 0, att, *phys)

        if k % 250 == 0:
            if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > DIVERGENCE_LIMIT:
                out.aborted = True
                out.abort_reason = f"state divergence at t={t:.3f}s"
                ns_cut = k + 1
                for name in ("t", "pL", "vL", "ref_p", "drone_p", "drone_v",
                             "thrust", "tension", "code", "active", "gust",
                             "clip_events", "slot_angle"):
                    setattr(out, name, getattr(out, name)[:ns_cut])
                break

    out.info = {
        "clip_rate": float(np.mean(out.clip_events > 0)) if wind_on else 0.0,
        "mpc_solves": mpc.n_solves if mpc else 0,
        "mpc_fallbacks": mpc.fallbacks if mpc else 0,
        "mpc_all_solved": bool(mpc.statuses_ok) if mpc else None,
        "l1_projection_hits": l1.projection_hits if l1 else 0,
        "reshape_latched": sorted(resup.latched) if resup else [],
        "reshape_broadcast_bits": resup.broadcast_bits if resup else 0,
    }
    return out
