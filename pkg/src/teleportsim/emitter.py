"""Driven three-level emitter: photon-number statistics and emission timing.

The optically driven transition |0> <-> |e> decays at rate gamma; a photon
emission drops the system into a one-photon manifold that is re-driven by the
same pulse, and a second emission ends in a dark two-photon state.  More than
two emissions are neglected.  The master equation over the basis
{|0>, |e>, |0,1p>, |e,1p>, |0,2p>} yields the probabilities P0/P1/P2 of
emitting zero, one or two photons per attempt, and a propagator decomposition
of the same dynamics yields the emission-time densities needed to split
photons over detection windows.

Time is in nanoseconds, rates in 1/ns.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class EmitterError(ValueError):
    pass


@dataclass(frozen=True)
class PulseShape:
    """Optical excitation pulse: square or (truncated) gaussian envelope."""

    kind: str
    omega_max: float  # peak Rabi amplitude, rad/ns
    duration_ns: float
    start_ns: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("square", "gaussian"):
            raise EmitterError(f"unknown pulse kind {self.kind!r}")
        if self.duration_ns <= 0:
            raise EmitterError("pulse duration must be positive")
        if self.omega_max < 0:
            raise EmitterError("pulse amplitude must be nonnegative")

    @property
    def end_ns(self) -> float:
        return self.start_ns + self.duration_ns

    def amplitude(self, t: np.ndarray | float) -> np.ndarray | float:
        """Rabi amplitude Omega(t)."""
        t = np.asarray(t, dtype=float)
        inside = (t >= self.start_ns) & (t < self.end_ns)
        if self.kind == "square":
            return np.where(inside, self.omega_max, 0.0)
        center = self.start_ns + 0.5 * self.duration_ns
        sigma = self.duration_ns / 4.0
        return np.where(inside, self.omega_max * np.exp(-0.5 * ((t - center) / sigma) ** 2), 0.0)

    def area(self) -> float:
        """Integrated pulse area in radians (factor 2 for the Rabi convention)."""
        if self.kind == "square":
            return 2.0 * self.omega_max * self.duration_ns
        t = np.linspace(self.start_ns, self.end_ns, 4001)
        return float(2.0 * np.trapezoid(self.amplitude(t), t))


@dataclass(frozen=True)
class EmitterParams:
    """Spontaneous decay rate, bright-state population and resonant branching."""

    gamma: float  # 1/ns
    alpha: float  # population prepared in the optically bright state
    p_zpl: float = 0.03  # probability an emitted photon is resonant

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise EmitterError(f"alpha must be in [0,1], got {self.alpha}")
        if not 0.0 < self.p_zpl < 1.0:
            raise EmitterError(f"p_zpl must be in (0,1), got {self.p_zpl}")
        if self.gamma <= 0:
            raise EmitterError("gamma must be positive")


@dataclass(frozen=True)
class TimeGrid:
    dt: float = 0.01
    horizon: float = 200.0

    def __post_init__(self) -> None:
        if self.dt <= 0 or self.horizon <= self.dt:
            raise EmitterError("need 0 < dt < horizon")

    @cached_property
    def times(self) -> np.ndarray:
        n = int(round(self.horizon / self.dt))
        return np.arange(n + 1) * self.dt


def _check_step(pulse: PulseShape, params: EmitterParams, grid: TimeGrid) -> None:
    if pulse.omega_max * grid.dt >= 0.05:
        raise EmitterError(
            f"time step too coarse: |H| dt = {pulse.omega_max * grid.dt:.3f} >= 0.05"
        )
    if params.gamma * grid.dt >= 0.05:
        raise EmitterError(f"time step too coarse: gamma dt = {params.gamma * grid.dt:.3f} >= 0.05")
    if pulse.end_ns > grid.horizon:
        raise EmitterError("pulse extends beyond the simulated horizon")


def _master_equation_populations(
    pulse: PulseShape, params: EmitterParams, grid: TimeGrid
) -> tuple[float, float, float, float]:
    """Integrate the five-level master equation starting from |0>.

    Returns (P0, P1, P2, trace_error) where the populations are read off the
    final state and trace_error is max |tr rho(t) - 1| over the grid.
    """
    g = params.gamma
    d = 5  # basis order: 0, e, 0+1p, e+1p, 0+2p
    l1 = np.zeros((d, d), dtype=complex)
    l1[2, 1] = np.sqrt(g)
    l2 = np.zeros((d, d), dtype=complex)
    l2[4, 3] = np.sqrt(g)
    jumps = (l1, l2)
    decay = sum(l.conj().T @ l for l in jumps)

    def h_of(om: float) -> np.ndarray:
        h = np.zeros((d, d), dtype=complex)
        h[1, 0] = h[0, 1] = om
        h[3, 2] = h[2, 3] = om
        return h

    def rhs(rho: np.ndarray, om: float) -> np.ndarray:
        h = h_of(om)
        out = -1j * (h @ rho - rho @ h)
        for l in jumps:
            out += l @ rho @ l.conj().T
        out -= 0.5 * (decay @ rho + rho @ decay)
        return out

    rho = np.zeros((d, d), dtype=complex)
    rho[0, 0] = 1.0
    t = grid.times
    # Integrate numerically only while the drive is on; afterwards the excited
    # populations decay into their photon-number sinks in closed form.
    n_pulse = min(int(np.ceil(pulse.end_ns / grid.dt + 0.5)), len(t) - 1)
    om_full = np.asarray(pulse.amplitude(t[: n_pulse + 1]))
    om_half = np.asarray(pulse.amplitude(t[:n_pulse] + 0.5 * grid.dt))
    dt = grid.dt
    trace_err = 0.0
    for k in range(n_pulse):
        k1 = rhs(rho, om_full[k])
        k2 = rhs(rho + 0.5 * dt * k1, om_half[k])
        k3 = rhs(rho + 0.5 * dt * k2, om_half[k])
        k4 = rhs(rho + dt * k3, om_full[k + 1])
        rho = rho + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        trace_err = max(trace_err, abs(np.trace(rho).real - 1.0))
    pops = np.real(np.diag(rho))
    # |e> empties into |0,1p>, |e,1p> into |0,2p>; only the part still excited
    # at the horizon is unaccounted for.
    residual_excited = (pops[1] + pops[3]) * np.exp(-g * (t[-1] - t[n_pulse]))
    p0 = pops[0]
    p1 = pops[2] + pops[1]
    p2 = pops[4] + pops[3]
    return float(p0), float(p1), float(p2), max(trace_err, residual_excited)


def _propagators(pulse: PulseShape, params: EmitterParams, grid: TimeGrid) -> np.ndarray:
    """Non-unitary two-level propagators U(t_k) under the no-jump Hamiltonian."""
    t = grid.times
    dt = grid.dt
    g = params.gamma
    n_pulse = min(int(np.ceil(pulse.end_ns / dt + 0.5)), len(t) - 1)
    om_full = np.asarray(pulse.amplitude(t[: n_pulse + 1]))
    om_half = np.asarray(pulse.amplitude(t[:n_pulse] + 0.5 * dt))

    def gen(om: float) -> np.ndarray:
        # -i H_eff with H_eff = om (|e><0| + h.c.) - i g/2 |e><e|
        return np.array([[0.0, -1j * om], [-1j * om, -0.5 * g]], dtype=complex)

    us = np.empty((len(t), 2, 2), dtype=complex)
    u = np.eye(2, dtype=complex)
    us[0] = u
    for k in range(n_pulse):
        a1 = gen(om_full[k])
        a2 = gen(om_half[k])
        a4 = gen(om_full[k + 1])
        k1 = a1 @ u
        k2 = a2 @ (u + 0.5 * dt * k1)
        k3 = a2 @ (u + 0.5 * dt * k2)
        k4 = a4 @ (u + dt * k3)
        u = u + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        us[k + 1] = u
    # Drive off: U(t) = diag(1, exp(-g (t - t_p)/2)) U(t_p), in closed form.
    tail = t[n_pulse:] - t[n_pulse]
    decay = np.exp(-0.5 * g * tail)
    us[n_pulse:, 0, :] = us[n_pulse, 0, :][None, :]
    us[n_pulse:, 1, :] = decay[:, None] * us[n_pulse, 1, :][None, :]
    return us


@dataclass(frozen=True)
class EmissionSolution:
    """Propagator-level emission-time structure backing window integrals."""

    times: np.ndarray
    pulse_end: float
    first_rate: np.ndarray  # w1(t): unconditional first-emission density
    survive_after_first: np.ndarray  # P(no second emission | first at t)
    jump_vectors: np.ndarray  # v(t) = U(t)^{-1} |0>, shape (n, 2)
    cumulative_flux: np.ndarray  # A(t) = gamma * int_0^t M(s)^dag M(s) ds, (n, 2, 2)

    def second_mass(self, lo: np.ndarray | float, hi: np.ndarray | float) -> np.ndarray:
        """P(second emission in [lo, hi] | first at each grid time)."""
        t = self.times
        a_hi = self._a_at(np.minimum(hi, t[-1]))
        lo_eff = np.maximum(lo, t)  # second photon cannot precede the first
        a_lo = self._a_at(lo_eff)
        diff = a_hi - a_lo
        v = self.jump_vectors
        out = np.real(np.einsum("ki,kij,kj->k", v.conj(), diff, v))
        return np.clip(out, 0.0, None)

    def _a_at(self, tq: np.ndarray | float) -> np.ndarray:
        t = self.times
        tq = np.atleast_1d(np.asarray(tq, dtype=float))
        idx = np.clip(np.searchsorted(t, tq - 1e-12), 0, len(t) - 1)
        a = self.cumulative_flux[idx]
        if a.shape[0] == 1:
            a = np.broadcast_to(a, (len(t), 2, 2))
        return a


@dataclass(frozen=True)
class EmissionProbabilities:
    """Photon-number probabilities and emission-time densities for one pulse."""

    p0: float
    p1: float
    p2: float
    times: np.ndarray = field(repr=False)
    first_density: np.ndarray = field(repr=False)  # unconditional, integrates to p1+p2
    second_density: np.ndarray = field(repr=False)  # unconditional, integrates to p2
    pulse_end: float = 0.0
    solution: EmissionSolution | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        s = self.p0 + self.p1 + self.p2
        if abs(s - 1.0) > 1e-6:
            raise EmitterError(f"P0+P1+P2 = {s} deviates from 1 beyond 1e-6")
        if min(self.p0, self.p1, self.p2) < -1e-9:
            raise EmitterError("negative emission probability")
        object.__setattr__(self, "p0", max(self.p0, 0.0))
        object.__setattr__(self, "p1", max(self.p1, 0.0))
        object.__setattr__(self, "p2", max(self.p2, 0.0))

    def without_double_excitation(self) -> "EmissionProbabilities":
        """Counterfactual with the two-photon branch reassigned to one photon."""
        return EmissionProbabilities(
            self.p0,
            self.p1 + self.p2,
            0.0,
            self.times,
            self.first_density,
            np.zeros_like(self.second_density),
            self.pulse_end,
            self.solution,
        )

    def with_double_excitation(self, p2: float) -> "EmissionProbabilities":
        """Counterfactual with the two-photon probability rescaled to ``p2``."""
        if not 0.0 <= p2 < self.p1 + self.p2:
            raise EmitterError(f"cannot rescale double emission to {p2}")
        scale = p2 / self.p2 if self.p2 > 0 else 0.0
        return EmissionProbabilities(
            self.p0,
            self.p1 + self.p2 - p2,
            p2,
            self.times,
            self.first_density,
            self.second_density * scale,
            self.pulse_end,
            self.solution,
        )


def solve_emission(
    pulse: PulseShape, params: EmitterParams, grid: TimeGrid | None = None
) -> EmissionProbabilities:
    """Emission statistics of one excitation attempt, starting in |0>.

    Integrates the master equation for the photon-number probabilities and the
    no-jump propagator for the emission-time densities; the two agree by
    construction and the master-equation trace is monitored to 1e-6.
    """
    grid = grid or TimeGrid()
    _check_step(pulse, params, grid)
    p0, p1, p2, err = _master_equation_populations(pulse, params, grid)
    if err > 1e-6:
        raise EmitterError(f"master equation trace/residual error {err:.2e} exceeds 1e-6")
    # RK4 does not preserve positivity; populations may undershoot zero within
    # the integrator's truncation error, which scales as (|H| dt)^4.
    neg_tol = max(1e-9, 20.0 * (pulse.omega_max * grid.dt) ** 4)
    pops = np.array([p0, p1, p2])
    if pops.min() < -neg_tol:
        raise EmitterError(f"negative emission probability {pops.min():.2e}")
    pops = np.clip(pops, 0.0, None)
    p0, p1, p2 = pops / pops.sum()

    us = _propagators(pulse, params, grid)
    t = grid.times
    g = params.gamma
    psi = us[:, :, 0]  # U(t)|0>
    w1 = g * np.abs(psi[:, 1]) ** 2
    m = us[:, 1, :]  # <e| U(t)
    flux = g * np.einsum("ki,kj->kij", m.conj(), m)
    a = np.zeros_like(flux)
    a[1:] = np.cumsum(0.5 * (flux[1:] + flux[:-1]) * grid.dt, axis=0)
    rhs_e0 = np.zeros((len(t), 2, 1), dtype=complex)
    rhs_e0[:, 0, 0] = 1.0
    v = np.linalg.solve(us, rhs_e0)[:, :, 0]
    chi_end = np.einsum("ij,kj->ki", us[-1], v)
    survive = np.abs(chi_end[:, 0]) ** 2 + np.abs(chi_end[:, 1]) ** 2
    sol = EmissionSolution(t, pulse.end_ns, w1, survive, v, a)

    first_density = w1
    # Second-photon (unconditional) marginal density:
    #   w2(t) = gamma int_0^t w1(t1) |<e| U(t) v(t1)>|^2 dt1
    #         = tr[ G(t) S(t) ],  S(t) = int_0^t w1 v v^dag,  G = gamma M^dag M,
    # so a prefix sum over rank-one outer products suffices (the t1 = t term
    # vanishes because U(t) v(t) = |0> has no excited component).
    weights = _trapezoid_weights(t)
    outer = (w1 * weights)[:, None, None] * np.einsum("ki,kj->kij", v, v.conj())
    s_prefix = np.cumsum(outer, axis=0)
    second_density = np.real(np.einsum("kij,kji->k", flux, s_prefix))
    second_density = np.clip(second_density, 0.0, None)
    return EmissionProbabilities(p0, p1, p2, t, first_density, second_density, pulse.end_ns, sol)


def _trapezoid_weights(t: np.ndarray) -> np.ndarray:
    w = np.full(len(t), t[1] - t[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


@dataclass(frozen=True)
class WindowProbabilities:
    """Conditional window/epoch membership probabilities for emitted photons.

    Epoch labels split the side-band window at the pulse end: "dur" is during
    the optical pulse, "aft" after it, "out" outside the side-band window.
    Two-photon tables are indexed by (first photon class, second photon
    class) in emission-time order.
    """

    zpl_window: tuple[float, float]  # (start, length)
    psb_window: tuple[float, float]
    pulse_end: float
    p_dz1: float
    p_db1_dur: float
    p_db1_aft: float
    zz: np.ndarray  # 2x2 over (in, out)
    bb: np.ndarray  # 3x3 over (dur, aft, out)
    zb: np.ndarray  # 2x3: first photon ZPL class, second PSB class
    bz: np.ndarray  # 3x2: first photon PSB class, second ZPL class

    @property
    def p_db1(self) -> float:
        return self.p_db1_dur + self.p_db1_aft

    @property
    def p_dz2(self) -> float:
        return float(self.zz[0, 0])

    @property
    def p_dz3(self) -> float:
        return float(self.zz[0, 1] + self.zz[1, 0])

    @property
    def p_db2(self) -> float:
        return float(self.bb[:2, :2].sum())

    @property
    def p_db3(self) -> float:
        return float(self.bb[:2, 2].sum() + self.bb[2, :2].sum())

    @property
    def p_dzb1(self) -> float:
        # one ZPL + one PSB photon, both inside their windows
        return float(0.5 * (self.zb[0, :2].sum() + self.bz[:2, 0].sum()))

    @property
    def p_dzb2(self) -> float:
        # ZPL photon outside its window, PSB photon inside
        return float(0.5 * (self.zb[1, :2].sum() + self.bz[:2, 1].sum()))

    @property
    def p_dzb3(self) -> float:
        # ZPL photon inside, PSB photon outside
        return float(0.5 * (self.zb[0, 2] + self.bz[2, 0]))

    def validate(self) -> None:
        vals = [
            self.p_dz1,
            self.p_db1,
            self.p_dz2,
            self.p_dz3,
            self.p_db2,
            self.p_db3,
            self.p_dzb1,
            self.p_dzb2,
            self.p_dzb3,
        ]
        if any(v < -1e-9 or v > 1.0 + 1e-9 for v in vals):
            raise EmitterError("window probability outside [0,1]")
        if self.p_dz2 + self.p_dz3 > 1.0 + 1e-9 or self.p_db2 + self.p_db3 > 1.0 + 1e-9:
            raise EmitterError("grouped window probabilities exceed 1")


def window_probabilities(
    em: EmissionProbabilities,
    zpl_window: tuple[float, float],
    psb_window: tuple[float, float],
    pulse_end: float | None = None,
) -> WindowProbabilities:
    """Integrate emission-time densities over the detection windows.

    Windows are (start_ns, length_ns) and must lie inside the simulated
    horizon.
    """
    sol = em.solution
    if sol is None:
        raise EmitterError("emission object carries no timing solution")
    t = sol.times
    pulse_end = sol.pulse_end if pulse_end is None else pulse_end
    z_lo, z_hi = zpl_window[0], zpl_window[0] + zpl_window[1]
    b_lo, b_hi = psb_window[0], psb_window[0] + psb_window[1]
    for name, (lo, hi) in (("zpl", (z_lo, z_hi)), ("psb", (b_lo, b_hi))):
        if lo < -1e-9 or hi > t[-1] + 1e-9:
            raise EmitterError(f"{name} window [{lo}, {hi}] outside simulated horizon")

    w = _trapezoid_weights(t)
    zin = ((t >= z_lo) & (t < z_hi)).astype(float)
    bdur = ((t >= b_lo) & (t < b_hi) & (t < pulse_end)).astype(float)
    baft = ((t >= b_lo) & (t < b_hi) & (t >= pulse_end)).astype(float)
    bout = 1.0 - bdur - baft
    zout = 1.0 - zin

    # Exactly-one-photon conditional density.
    p1_mass = float(np.sum(sol.first_rate * sol.survive_after_first * w))
    f1 = sol.first_rate * sol.survive_after_first * w / p1_mass if p1_mass > 0 else w * 0.0
    p_dz1 = float(np.sum(f1 * zin))
    p_db1_dur = float(np.sum(f1 * bdur))
    p_db1_aft = float(np.sum(f1 * baft))

    # Two-photon joint tables: first photon class x second photon interval mass.
    def masses(lo: float, hi: float) -> np.ndarray:
        return sol.second_mass(lo, hi)

    m_zin = masses(z_lo, z_hi)
    m_bdur = masses(b_lo, min(b_hi, pulse_end)) if pulse_end > b_lo else np.zeros_like(t)
    m_baft = masses(max(b_lo, pulse_end), b_hi) if b_hi > pulse_end else np.zeros_like(t)
    m_tot = masses(0.0, t[-1])
    m_zout = np.clip(m_tot - m_zin, 0.0, None)
    m_bout = np.clip(m_tot - m_bdur - m_baft, 0.0, None)

    first_w = sol.first_rate * w
    p2_mass = float(np.sum(first_w * m_tot))

    def table(first_classes: list[np.ndarray], second_masses: list[np.ndarray]) -> np.ndarray:
        out = np.empty((len(first_classes), len(second_masses)))
        for i, fc in enumerate(first_classes):
            for j, sm in enumerate(second_masses):
                out[i, j] = float(np.sum(first_w * fc * sm)) / p2_mass if p2_mass > 0 else 0.0
        return out

    zz = table([zin, zout], [m_zin, m_zout])
    bb = table([bdur, baft, bout], [m_bdur, m_baft, m_bout])
    zb = table([zin, zout], [m_bdur, m_baft, m_bout])
    bz = table([bdur, baft, bout], [m_zin, m_zout])

    wp = WindowProbabilities(
        zpl_window, psb_window, pulse_end, p_dz1, p_db1_dur, p_db1_aft, zz, bb, zb, bz
    )
    wp.validate()
    return wp


def post_pulse_state(params: EmitterParams, em: EmissionProbabilities):
    """Spin-photon superposition right after the excitation pulse.

    sqrt(alpha)(sqrt(P0)|0> + sqrt(P1)|0,1p> + sqrt(P2)|0,2p>) + sqrt(1-alpha)|1>,
    photon-number resolved, before any window/branching transformations.
    """
    from .photonics import SpinPhotonState, Branch  # local import to avoid a cycle

    amps = np.zeros((2, 3), dtype=complex)
    amps[1, 0] = np.sqrt(1.0 - params.alpha)
    amps[0, 0] = np.sqrt(params.alpha * em.p0)
    amps[0, 1] = np.sqrt(params.alpha * em.p1)
    amps[0, 2] = np.sqrt(params.alpha * em.p2)
    return SpinPhotonState(branches=(Branch(amps=amps),))


def calibrate_pulse(
    target_p2: float,
    template: PulseShape,
    params: EmitterParams,
    grid: TimeGrid | None = None,
    tol: float = 1e-3,
) -> PulseShape:
    """Choose the pulse amplitude that reproduces a target re-excitation probability.

    Bisects the peak amplitude with the pulse area constrained to
    [0.8 pi, 1.2 pi] (the protocol wants near-maximal excitation); raises if
    the target cannot be bracketed there.
    """
    grid = grid or TimeGrid()
    if not 0.0 <= target_p2 < 0.5:
        raise EmitterError(f"target double-emission probability {target_p2} not in [0, 0.5)")
    area_scale = template.area() / template.omega_max if template.omega_max > 0 else None
    if area_scale is None:
        probe = PulseShape(template.kind, 1.0, template.duration_ns, template.start_ns)
        area_scale = probe.area()

    def pulse_at(om: float) -> PulseShape:
        return PulseShape(template.kind, om, template.duration_ns, template.start_ns)

    def p2_of(om: float) -> float:
        return solve_emission(pulse_at(om), params, grid).p2

    om_lo = 0.8 * np.pi / area_scale
    om_hi = 1.2 * np.pi / area_scale
    p_lo, p_hi = p2_of(om_lo), p2_of(om_hi)
    if target_p2 <= p_lo:
        om_pi = np.pi / area_scale
        if abs(p2_of(om_pi) - target_p2) <= tol:
            return pulse_at(om_pi)
        raise EmitterError(
            f"target P2={target_p2} below reachable range [{p_lo:.4f}, {p_hi:.4f}]"
        )
    if target_p2 > p_hi:
        raise EmitterError(f"target P2={target_p2} above reachable range [{p_lo:.4f}, {p_hi:.4f}]")
    for _ in range(60):
        om_mid = 0.5 * (om_lo + om_hi)
        p_mid = p2_of(om_mid)
        if abs(p_mid - target_p2) < 0.2 * tol:
            break
        if p_mid < target_p2:
            om_lo = om_mid
        else:
            om_hi = om_mid
    pulse = pulse_at(0.5 * (om_lo + om_hi))
    achieved = solve_emission(pulse, params, grid).p2
    if abs(achieved - target_p2) > tol:
        raise EmitterError(f"calibration failed: P2={achieved:.5f} vs target {target_p2}")
    return pulse
