"""Canonical parameter sets for the slung-load simulator and controller.

Everything a run needs is collected into small frozen-ish dataclasses so that a
RunConfig can be serialized next to its artifacts and replayed bit-for-bit.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field

GRAVITY = 9.81  # m/s^2

# Rope discretization
N_BEADS = 8
N_SEG = N_BEADS + 1
K_SEGMENT = 25000.0     # N/m per segment
ROPE_LENGTH = 1.25      # m rest length
K_EFF = K_SEGMENT / N_SEG  # ~2777.8 N/m lumped


def chain_damping_design(k_s: float = K_SEGMENT, zeta: float = 1.2,
                         s_slow: float = 538.0):
    """Pick (m_bead, c_segment) so the slowest axial shape mode of the
    fixed-fixed bead chain is overdamped with damping ratio `zeta` and its
    slow root sits at -`s_slow` 1/s.

    With proportional damping C = (c_s/k_s) K both matrices share eigenvectors;
    the mode-1 stiffness eigenvalue of the 8-bead chain is
    lam1 = 2 - 2 cos(pi/9).
    """
    lam1 = 2.0 - 2.0 * math.cos(math.pi / N_SEG)
    omega1 = s_slow / (zeta - math.sqrt(zeta * zeta - 1.0))
    m_bead = k_s * lam1 / (omega1 * omega1)
    c_s = 2.0 * zeta * math.sqrt(m_bead * k_s) / math.sqrt(lam1)
    return m_bead, c_s


_M_BEAD_DEFAULT, _C_SEG_DEFAULT = chain_damping_design()


@dataclass
class SimParams:
    n_drones: int = 5
    m_drone: float = 1.5          # kg
    m_payload: float = 10.0      # kg
    rope_length: float = ROPE_LENGTH
    k_segment: float = K_SEGMENT
    c_segment: float = _C_SEG_DEFAULT
    m_bead: float = _M_BEAD_DEFAULT
    n_beads: int = N_BEADS
    ring_radius: float = 0.80    # m
    g: float = GRAVITY
    f_min: float = 0.0           # N
    f_max: float = 150.0         # N
    tau_max: float = 10.0        # N*m per axis
    # diagonal inertia of a representative 1.5 kg quadrotor
    J: tuple = (0.02, 0.02, 0.04)
    dt: float = 1e-3             # control/physics tick
    n_substeps: int = 40         # internal RK3 substeps per tick (stiff chain)
    duration: float = 30.0       # s
    eval_window: tuple = (8.0, 30.0)
    init_chord: float = 1.17     # slightly-slack initial rope chord, m

    @property
    def k_eff(self):
        return self.k_segment / (self.n_beads + 1)

    @property
    def seg_rest(self):
        return self.rope_length / (self.n_beads + 1)


@dataclass
class ControllerParams:
    kp_xy: float = 30.0
    kd_xy: float = 15.0
    kp_z: float = 100.0
    kd_z: float = 24.0
    kp_att: float = 25.0
    kd_att: float = 4.0
    k_swing: float = 0.8         # s, anti-swing slot-shift gain
    w_swing: float = 0.3         # weight of the velocity-damping accel term
    s_max: float = 0.3           # m, slot-shift saturation
    d_rope: float = 1.25         # m, slot elevation above payload reference
    w_t: float = 1.0             # QP tracking weight
    w_e: float = 0.02            # QP effort weight
    theta_max: float = 0.6       # rad, tilt limit
    t_bar: float = 19.62         # N, nominal per-rope tension (documentation)
    # lemniscate reference
    ref_a: float = 3.0           # m
    ref_period: float = 12.0     # s
    ref_z0: float = 3.0          # m
    ref_hz: float = 0.35         # m

    @property
    def kappa_qp(self):
        return self.w_t / (self.w_t + self.w_e)

    @property
    def axy_max(self):
        return GRAVITY * math.tan(self.theta_max)


@dataclass
class DrydenParams:
    enabled: bool = True
    mean: tuple = (4.0, 0.0, 0.0)     # m/s, along +x
    sigma: tuple = (0.8, 0.8, 0.4)    # m/s
    scale: tuple = (200.0, 200.0, 50.0)  # m
    seed: int = 42
    c_drag: float = 0.25              # N*s/m per body
    w_max: float = 1.0               # N admissible force bound


@dataclass
class L1Params:
    enabled: bool = False
    gamma: float = 2000.0
    omega_c: float = 25.0       # rad/s low-pass
    ts: float = 2e-4            # s, adaptation substep (5 per tick)
    delta_max: float = 30.0     # m/s^2 projection bound (symmetric)


@dataclass
class MpcParams:
    enabled: bool = False
    horizon: int = 5
    dt: float = 0.01            # s (10 control ticks)
    t_max: float = 100.0        # N tension ceiling
    w_slack: float = 1e4


@dataclass
class ReshapeParams:
    enabled: bool = False
    t_fault: float = 0.5        # N, own-tension fault threshold
    tau_det: float = 0.1        # s, sustained-detection window
    t_trans: float = 5.0        # s, smoothstep transition
    # With payload-side attachments fixed on the ring, rotating a survivor
    # away from its own anchor permanently stretches its cable; the
    # anchor-aware supervisor therefore keeps survivors above their anchors
    # (the minimum-stress arrangement) and the equiangular retarget applies
    # only when anchors co-rotate with the slots (anchor_aware=False).
    anchor_aware: bool = True


@dataclass
class RunConfig:
    tag: str = "run"
    sim: SimParams = field(default_factory=SimParams)
    ctrl: ControllerParams = field(default_factory=ControllerParams)
    wind: DrydenParams = field(default_factory=DrydenParams)
    l1: L1Params = field(default_factory=L1Params)
    mpc: MpcParams = field(default_factory=MpcParams)
    reshape: ReshapeParams = field(default_factory=ReshapeParams)
    ff_enabled: bool = True
    # list of (t_star, drone_index)
    faults: list = field(default_factory=list)
    subthreshold_probe: bool = False  # allow dwell < tau_pend (dwell-sweep probes)
    full_rate_csv: bool = False
    schema_version: int = 1

    def to_dict(self):
        return dataclasses.asdict(self)

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, **kw)


_SECTION_TYPES = {
    "sim": SimParams, "ctrl": ControllerParams, "wind": DrydenParams,
    "l1": L1Params, "mpc": MpcParams, "reshape": ReshapeParams,
}


def config_from_dict(d: dict) -> RunConfig:
    """Build a RunConfig from a plain dict (parsed JSON), rejecting unknown keys."""
    d = dict(d)
    kwargs = {}
    for name, typ in _SECTION_TYPES.items():
        if name in d:
            sub = d.pop(name)
            valid = {f.name for f in dataclasses.fields(typ)}
            unknown = set(sub) - valid
            if unknown:
                raise ValueError(f"unknown keys in '{name}': {sorted(unknown)}")
            for key in ("J", "eval_window", "mean", "sigma", "scale"):
                if key in sub and isinstance(sub[key], list):
                    sub[key] = tuple(sub[key])
            kwargs[name] = typ(**sub)
    top_valid = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(d) - top_valid
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    if "faults" in d:
        d["faults"] = [tuple(ev) for ev in d["faults"]]
    kwargs.update(d)
    return RunConfig(**kwargs)


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return config_from_dict(json.load(fh))
