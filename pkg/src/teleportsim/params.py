"""Experiment-calibrated default parameters and link construction.

Values mirror the three-node experiment this simulator reproduces: per-link
bright-state populations, detection probabilities, side-band efficiencies,
interference visibility, phase uncertainty and dark-count rate, plus the
memory/communication qubit noise fits and readout fidelities used by the
protocol layer.  Parameters the experiment does not pin down (pulse shape,
attempt period, overhead durations, per-window visibilities below 15 ns) are
calibration inputs and marked as such.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import emitter, photonics

LIFETIME_NS = 12.0  # excited-state lifetime (calibration input)
GRID = emitter.TimeGrid(dt=0.01, horizon=200.0)
PSB_WINDOW = (0.0, 190.0)  # side-band monitoring spans pulse and decay


@dataclass(frozen=True)
class LinkConfig:
    """Raw per-link configuration, before pulse/efficiency calibration."""

    name: str
    alpha: tuple[float, float]
    detection_prob: tuple[float, float]  # per-photon, given the bright state
    psb_efficiency: float
    double_excitation: float  # target P2 for pulse calibration
    visibility: float
    phase_uncertainty_deg: float
    dark_rate_hz: float
    window_ns: float = 15.0
    pulse_ns: tuple[float, float] = (5.0, 5.0)  # calibration input
    window_start_ns: float = 1.5  # detection window opens mid-pulse (calibration)
    psb_rejection: bool = True
    # Interference visibility per detection window length; shorter windows
    # reject late, spectrally diffused photons (calibration inputs below 15 ns).
    visibility_by_window: tuple = ((15.0, 0.90), (10.0, 0.91), (7.5, 0.92))


LINK_AB = LinkConfig(
    name="AB",
    alpha=(0.07, 0.05),
    detection_prob=(3.4e-4, 5.1e-4),
    psb_efficiency=0.10,
    double_excitation=0.06,
    visibility=0.90,
    phase_uncertainty_deg=21.0,
    dark_rate_hz=10.0,
    pulse_ns=(5.0, 5.0),
)

LINK_BC = LinkConfig(
    name="BC",
    alpha=(0.05, 0.10),
    detection_prob=(4.3e-4, 2.4e-4),
    psb_efficiency=0.12,
    double_excitation=0.08,
    visibility=0.90,
    phase_uncertainty_deg=12.0,
    dark_rate_hz=10.0,
    pulse_ns=(6.0, 6.0),
)


_LINK_CACHE: dict = {}


def _build_node(
    alpha: float,
    pulse_ns: float,
    p2_target: float,
    detection_prob: float,
    eta_psb: float,
    window_ns: float,
    window_start_ns: float,
) -> photonics.NodeOptics:
    pars = emitter.EmitterParams(gamma=1.0 / LIFETIME_NS, alpha=alpha)
    if p2_target > 0.0:
        pulse = emitter.calibrate_pulse(
            p2_target, emitter.PulseShape("square", 1.0, pulse_ns), pars, GRID
        )
        em = emitter.solve_emission(pulse, pars, GRID)
    else:
        # Idealized source: exact-pi-area pulse with the re-excitation branch off.
        pulse = emitter.PulseShape("square", np.pi / (2.0 * pulse_ns), pulse_ns)
        em = emitter.solve_emission(pulse, pars, GRID).without_double_excitation()
    wp = emitter.window_probabilities(em, (window_start_ns, window_ns), PSB_WINDOW)
    node = photonics.NodeOptics(
        alpha=alpha,
        p_zpl=pars.p_zpl,
        emission=em,
        windows=wp,
        eta_zpl=0.02,
        eta_psb=eta_psb,
    )
    return photonics.calibrate_eta_zpl(node, detection_prob)


def build_link(cfg: LinkConfig, window_ns: float | None = None) -> photonics.LinkParams:
    """Calibrate pulses and efficiencies for a link configuration.

    ``window_ns`` overrides the detection window; the visibility then follows
    the per-window table.  Efficiencies are always calibrated against the
    detection probabilities at the reference window (the one the experiment
    quotes), so shorter windows genuinely lose photons.  Results are cacheders
    (construction costs a second).
    """
    window = cfg.window_ns if window_ns is None else window_ns
    key = (cfg, window)
    if key in _LINK_CACHE:
        return _LINK_CACHE[key]
    vis = dict(cfg.visibility_by_window).get(window, cfg.visibility)
    nodes = [
        _build_node(
            cfg.alpha[i],
            cfg.pulse_ns[i],
            cfg.double_excitation,
            cfg.detection_prob[i],
            cfg.psb_efficiency,
            cfg.window_ns,
            cfg.window_start_ns,
        )
        for i in (0, 1)
    ]
    if window != cfg.window_ns:
        # Shorter windows keep their trailing edge: the early, re-excitation
        # contaminated photons are dropped first.
        start = cfg.window_start_ns + max(cfg.window_ns - window, 0.0)
        nodes = [
            replace(
                node,
                windows=emitter.window_probabilities(
                    node.emission, (start, window), PSB_WINDOW
                ),
            )
            for node in nodes
        ]
    link = photonics.LinkParams(
        node1=nodes[0],
        node2=nodes[1],
        visibility=vis,
        phase_uncertainty_deg=cfg.phase_uncertainty_deg,
        dark_rate_hz=cfg.dark_rate_hz,
        zpl_window_ns=window,
        psb_rejection=cfg.psb_rejection,
    )
    _LINK_CACHE[key] = link
    return link


def ideal_link_config(name: str = "ideal") -> LinkConfig:
    """A link with every imperfection off and a vanishing protocol error."""
    return LinkConfig(
        name=name,
        alpha=(1e-10, 1e-10),
        detection_prob=(3.4e-4, 3.4e-4),
        psb_efficiency=0.10,
        double_excitation=0.0,
        visibility=1.0,
        phase_uncertainty_deg=0.0,
        dark_rate_hz=0.0,
        visibility_by_window=(),
    )


# Memory-qubit storage decay under continued entanglement attempts, fitted as
# amplitude * exp(-(n / n_scale) ** stretch): with/without the mid-sequence
# decoupling pulse, with entanglement attempts running or an equivalent wait.
MEMORY_FITS = {
    "attempts_decoupled": {"amplitude": 0.875, "scale": 5327.0, "stretch": 1.13},
    "attempts_bare": {"amplitude": 0.806, "scale": 848.0, "stretch": 1.21},
    "wait_decoupled": {"amplitude": 0.884, "scale": 5239.0, "stretch": 1.94},
    "wait_bare": {"amplitude": 0.807, "scale": 880.0, "stretch": 1.37},
}

# Communication-qubit average state fidelity during dynamical decoupling,
# fitted as amplitude * exp(-(t / tau_s) ** stretch) + 0.5, per node, for
# eigenstates and superposition states.
DECOUPLING_FITS = {
    "alice": {
        "eigen": {"amplitude": 0.4930, "scale": 0.459, "stretch": 1.04},
        "super": {"amplitude": 0.4889, "scale": 0.54, "stretch": 1.07},
    },
    "bob": {
        "eigen": {"amplitude": 0.4738, "scale": 0.130, "stretch": 1.41},
        "super": {"amplitude": 0.4634, "scale": 0.177, "stretch": 1.47},
    },
    "charlie": {
        "eigen": {"amplitude": 0.4897, "scale": 0.357, "stretch": 1.67},
        "super": {"amplitude": 0.4936, "scale": 0.56, "stretch": 0.92},
    },
}

# Readout and gate noise used in the teleportation model.
COMM_READOUT = {"bob": (0.93, 0.995), "charlie": (0.92, 0.99), "alice": (0.93, 0.995)}
MEMORY_READOUT_EFFECTIVE = {"bob": (0.99, 0.99), "charlie": (0.98, 0.98)}
MEMORY_STORE_DEPOL = {"bob": 0.12, "charlie": 0.14}
MEMORY_DEPHASING = {"scale": 5327.0, "stretch": 1.13}
IONIZATION_ALICE = 0.007
PREP_INIT_ERROR = 1.2e-3
PREP_PULSE_ERROR = 8e-3

# Basis-alternating readout per-block parameters (calibrated to the measured
# two-repetition fidelities and accepted fractions).
BAR_PARAMS = {
    "bob": {"map_error": 0.02, "flip_pre": 0.005, "flip_post": 0.005},
    "charlie": {"map_error": 0.02, "flip_pre": 0.015, "flip_post": 0.005},
}

BAR_CONSISTENT_FRACTION = 0.88
TIMEOUT_ATTEMPTS = 1000
BAR_REPS = 2

# Timing model (calibration inputs; the experiment reports only end-to-end
# event rates).
ATTEMPT_PERIOD_S = 5.5e-6
CR_CHECK_PASS = 0.95
FIXED_OVERHEAD_ALICE_S = 2.0e-3  # swap + phase stabilization + messaging
CYCLE_OVERHEAD_S = 0.5  # per-cycle charge/resonance checks + stabilization
EVENT_OVERHEAD_S = 20.0  # per-event calibration and dead time
