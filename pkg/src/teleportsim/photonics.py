"""Heralded two-node entanglement through a central beam splitter.

Each node's post-pulse spin-photon state is expanded into a list of pure
branches labeled by what happened to every emitted photon: resonant photons
either reach the central station inside the detection window (a coherent mode
kept in the state) or are lost; side-band photons either fire the local
side-band detector (a classical click with a during/after-pulse epoch tag) or
are lost.  Branches with different loss/click records are orthogonal after
tracing the environment, so the state is an incoherent mixture of small pure
states -- which keeps the two-node interference calculation exact and cheap.

The central station interferes the two kept modes on a balanced beam
splitter; partial photon distinguishability enters as a two-temporal-mode
expansion with amplitude overlap sqrt(visibility), optical path-phase
uncertainty as a Gaussian average over the relative phase, and detector dark
counts as independent per-window Bernoulli clicks.  A single click in exactly
one output detector heralds; side-band-flagged heralds are rejected when
tailored heralding is enabled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from itertools import product

import numpy as np

from .emitter import EmissionProbabilities, WindowProbabilities
from .hilbert import QuantumState

EPOCHS = ("dur", "aft")


class PhotonicsError(ValueError):
    pass


@dataclass(frozen=True)
class Branch:
    """One pure branch: spin x kept-mode amplitudes plus its environment record.

    Lost side-band photons keep their window-epoch label because the
    during/after temporal modes are orthogonal; merging them would add
    amplitudes across orthogonal environments.
    """

    amps: np.ndarray  # (2, 3): spin (|0>,|1>) x detected-ZPL Fock number
    psb_epochs: tuple[str, ...] = ()
    z_out: int = 0  # resonant photons outside the detection window
    z_lost: int = 0  # resonant photons lost before/at the central station
    b_out: int = 0  # side-band photons outside the side-band window
    b_lost_epochs: tuple[str, ...] = ()  # in-window side-band photons not detected

    def __post_init__(self) -> None:
        a = np.asarray(self.amps, dtype=complex)
        if a.shape != (2, 3):
            raise PhotonicsError(f"branch amplitude shape {a.shape}, want (2, 3)")
        a = a.copy()
        a.flags.writeable = False
        object.__setattr__(self, "amps", a)
        object.__setattr__(self, "psb_epochs", tuple(self.psb_epochs))
        object.__setattr__(self, "b_lost_epochs", tuple(self.b_lost_epochs))

    @property
    def weight(self) -> float:
        return float(np.sum(np.abs(self.amps) ** 2))

    @property
    def j(self) -> int:
        """Number of detected side-band photons."""
        return len(self.psb_epochs)

    @property
    def b_lost(self) -> int:
        return len(self.b_lost_epochs)

    @property
    def n_lost(self) -> int:
        return self.z_out + self.z_lost + self.b_out + self.b_lost

    @property
    def loss_class(self) -> int:
        """1: nothing lost, 2: one resonant lost, 3: one side-band lost, 4: two lost."""
        if self.n_lost == 0:
            return 1
        if self.n_lost >= 2:
            return 4
        return 2 if (self.z_out + self.z_lost) == 1 else 3


@dataclass(frozen=True)
class SpinPhotonState:
    """Weighted pure-branch decomposition of one node's spin-photon state."""

    branches: tuple[Branch, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "branches", tuple(self.branches))
        total = sum(b.weight for b in self.branches)
        if abs(total - 1.0) > 1e-9:
            raise PhotonicsError(f"branch weights sum to {total}, not 1")
        for b in self.branches:
            if b.j >= 1 and np.any(np.abs(b.amps[1, :]) > 0):
                raise PhotonicsError("side-band-flagged branch has spin-|1> amplitude")
            if b.j >= 2 and np.any(np.abs(b.amps[:, 1:]) > 0):
                raise PhotonicsError("double side-band branch has resonant photon amplitude")

    @property
    def total_weight(self) -> float:
        return sum(b.weight for b in self.branches)


@dataclass(frozen=True)
class NodeOptics:
    """Per-node emission statistics and collection efficiencies."""

    alpha: float
    p_zpl: float
    emission: EmissionProbabilities
    windows: WindowProbabilities
    eta_zpl: float  # transmission+detection of resonant photons to/at the central station
    eta_psb: float  # transmission+detection of side-band photons at the local detector

    def __post_init__(self) -> None:
        for name in ("alpha", "p_zpl", "eta_zpl", "eta_psb"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise PhotonicsError(f"{name} = {v} outside [0, 1]")


@dataclass(frozen=True)
class LinkParams:
    """Everything defining one two-node entanglement link."""

    node1: NodeOptics
    node2: NodeOptics
    visibility: float
    phase_uncertainty_deg: float
    dark_rate_hz: float
    zpl_window_ns: float
    psb_rejection: bool = True

    def __post_init__(self) -> None:
        if not 0.0 <= self.visibility <= 1.0:
            raise PhotonicsError("visibility outside [0, 1]")
        if self.phase_uncertainty_deg < 0 or self.dark_rate_hz < 0:
            raise PhotonicsError("negative noise parameter")


def branch_emission(node: NodeOptics) -> SpinPhotonState:
    """Expand one node's post-pulse state into its orthogonal photon-fate branches."""
    em = node.emission
    wp = node.windows
    a, pz = node.alpha, node.p_zpl
    ez, eb = node.eta_zpl, node.eta_psb
    acc: dict[tuple, np.ndarray] = {}

    def add(key: tuple, spin: int, n: int, amp: float) -> None:
        if amp == 0.0:
            return
        vec = acc.setdefault(key, np.zeros((2, 3), dtype=complex))
        vec[spin, n] += amp

    def key(z_out=0, z_lost=0, b_out=0, b_lost=(), epochs=()) -> tuple:
        return (z_out, z_lost, b_out, tuple(sorted(b_lost)), tuple(sorted(epochs)))

    # No emission: spin |1> (dark state) and the alpha * P0 component share
    # the vacuum environment and stay coherent.
    add(key(), 1, 0, math.sqrt(1.0 - a))
    add(key(), 0, 0, math.sqrt(a * em.p0))

    # Exactly one photon emitted.
    one = a * em.p1
    add(key(), 0, 1, math.sqrt(one * pz * wp.p_dz1 * ez))
    add(key(z_lost=1), 0, 0, math.sqrt(one * pz * wp.p_dz1 * (1.0 - ez)))
    add(key(z_out=1), 0, 0, math.sqrt(one * pz * (1.0 - wp.p_dz1)))
    for epoch, p_e in (("dur", wp.p_db1_dur), ("aft", wp.p_db1_aft)):
        add(key(epochs=(epoch,)), 0, 0, math.sqrt(one * (1.0 - pz) * p_e * eb))
        add(key(b_lost=(epoch,)), 0, 0, math.sqrt(one * (1.0 - pz) * p_e * (1.0 - eb)))
    add(key(b_out=1), 0, 0, math.sqrt(one * (1.0 - pz) * (1.0 - wp.p_db1)))

    # Two photons emitted.
    two = a * em.p2

    # Both resonant.
    zz = two * pz * pz
    add(key(), 0, 2, math.sqrt(zz * wp.p_dz2) * ez)
    add(key(z_lost=1), 0, 1, math.sqrt(zz * wp.p_dz2) * math.sqrt(2.0 * ez * (1.0 - ez)))
    add(key(z_lost=2), 0, 0, math.sqrt(zz * wp.p_dz2) * (1.0 - ez))
    add(key(z_out=1), 0, 1, math.sqrt(zz * wp.p_dz3 * ez))
    add(key(z_out=1, z_lost=1), 0, 0, math.sqrt(zz * wp.p_dz3 * (1.0 - ez)))
    add(key(z_out=2), 0, 0, math.sqrt(zz * max(1.0 - wp.p_dz2 - wp.p_dz3, 0.0)))

    # Both side-band; the two photons form an unordered class pair, so merge
    # the (c1, c2) and (c2, c1) emission orders before taking amplitudes.
    bb = two * (1.0 - pz) ** 2
    classes = ("dur", "aft", "out")
    for i1, c1 in enumerate(classes):
        for i2, c2 in enumerate(classes[i1:], start=i1):
            p_cls = bb * (wp.bb[i1, i2] if i1 == i2 else wp.bb[i1, i2] + wp.bb[i2, i1])
            if p_cls <= 0.0:
                continue
            in1, in2 = c1 != "out", c2 != "out"
            if in1 and in2:
                add(key(epochs=(c1, c2)), 0, 0, math.sqrt(p_cls) * eb)
                if c1 == c2:
                    # Same temporal class: bosonic one-of-two detection amplitude.
                    add(
                        key(b_lost=(c1,), epochs=(c1,)),
                        0,
                        0,
                        math.sqrt(p_cls) * math.sqrt(2.0 * eb * (1.0 - eb)),
                    )
                else:
                    add(key(b_lost=(c2,), epochs=(c1,)), 0, 0, math.sqrt(p_cls * eb * (1.0 - eb)))
                    add(key(b_lost=(c1,), epochs=(c2,)), 0, 0, math.sqrt(p_cls * eb * (1.0 - eb)))
                add(key(b_lost=(c1, c2)), 0, 0, math.sqrt(p_cls) * (1.0 - eb))
            elif in1 or in2:
                c = c1 if in1 else c2
                add(key(b_out=1, epochs=(c,)), 0, 0, math.sqrt(p_cls * eb))
                add(key(b_out=1, b_lost=(c,)), 0, 0, math.sqrt(p_cls * (1.0 - eb)))
            else:
                add(key(b_out=2), 0, 0, math.sqrt(p_cls))

    # One resonant, one side-band; each emission order contributes half the
    # class probability.
    zb = two * 2.0 * pz * (1.0 - pz)
    for zi, zc in enumerate(("in", "out")):
        for bi, bc in enumerate(classes):
            p_cls = zb * 0.5 * (wp.zb[zi, bi] + wp.bz[bi, zi])
            if p_cls <= 0.0:
                continue
            z_fates = (
                [(math.sqrt(ez), dict(n=1)), (math.sqrt(1.0 - ez), dict(z_lost=1))]
                if zc == "in"
                else [(1.0, dict(z_out=1))]
            )
            b_fates = (
                [
                    (math.sqrt(eb), dict(epochs=(bc,))),
                    (math.sqrt(1.0 - eb), dict(b_lost=(bc,))),
                ]
                if bc != "out"
                else [(1.0, dict(b_out=1))]
            )
            for (za, zf), (ba, bf) in product(z_fates, b_fates):
                n = zf.get("n", 0)
                add(
                    key(
                        z_out=zf.get("z_out", 0),
                        z_lost=zf.get("z_lost", 0),
                        b_out=bf.get("b_out", 0),
                        b_lost=bf.get("b_lost", ()),
                        epochs=bf.get("epochs", ()),
                    ),
                    0,
                    n,
                    math.sqrt(p_cls) * za * ba,
                )

    branches = tuple(
        Branch(vec, k[4], z_out=k[0], z_lost=k[1], b_out=k[2], b_lost_epochs=k[3])
        for k, vec in sorted(acc.items())
    )
    return SpinPhotonState(branches)


def detection_probability(node: NodeOptics) -> float:
    """P(at least one resonant photon detected at the central station | bright state)."""
    bright = replace(node, alpha=1.0)
    state = branch_emission(bright)
    return float(
        sum(np.sum(np.abs(b.amps[:, 1:]) ** 2) for b in state.branches)
    )


def calibrate_eta_zpl(node: NodeOptics, target: float, tol: float = 1e-10) -> NodeOptics:
    """Set eta_zpl so the bright-state detection probability matches the target."""
    lo, hi = 0.0, 1.0
    if detection_probability(replace(node, eta_zpl=1.0)) < target:
        raise PhotonicsError(f"detection probability target {target} unreachable")
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if detection_probability(replace(node, eta_zpl=mid)) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return replace(node, eta_zpl=0.5 * (lo + hi))


# Beam splitter output modes, in order: (+A, +B, -A, -B) where +/- are the two
# detectors and A/B the two temporal modes (A: node 1's wave packet, B: the
# orthogonal part of node 2's).
_VACUUM = (0, 0, 0, 0)


def _apply_creation(state: dict, coefs: dict[int, complex]) -> dict:
    out: dict[tuple, complex] = {}
    for cfg, amp in state.items():
        for mode, coef in coefs.items():
            if coef == 0.0:
                continue
            new = list(cfg)
            new[mode] += 1
            out_key = tuple(new)
            out[out_key] = out.get(out_key, 0.0) + amp * coef * math.sqrt(new[mode])
    return out


def _bs_maps(visibility: float) -> dict[tuple[int, int], dict[tuple, complex]]:
    """Output Fock amplitudes for (n1, n2) input photons, n1+n2 <= 2."""
    c = math.sqrt(visibility)
    s = math.sqrt(max(1.0 - visibility, 0.0))
    r = 1.0 / math.sqrt(2.0)
    op1 = {0: r, 2: r}  # node-1 photon -> (+A + -A)/sqrt(2)
    op2 = {0: c * r, 2: -c * r, 1: s * r, 3: -s * r}
    maps = {}
    for n1 in range(3):
        for n2 in range(3 - n1):
            state = {_VACUUM: 1.0}
            for _ in range(n1):
                state = _apply_creation(state, op1)
            for _ in range(n2):
                state = _apply_creation(state, op2)
            norm = math.sqrt(math.factorial(n1) * math.factorial(n2))
            maps[(n1, n2)] = {cfg: amp / norm for cfg, amp in state.items()}
    return maps


def _pattern(cfg: tuple) -> str:
    n_plus = cfg[0] + cfg[1]
    n_minus = cfg[2] + cfg[3]
    if n_plus and n_minus:
        return "both"
    if n_plus:
        return "+"
    if n_minus:
        return "-"
    return "none"


@dataclass
class _Accumulator:
    """Weights and unnormalized conditioned spin matrices for one herald sign."""

    prob: float = 0.0
    rho: np.ndarray = field(default_factory=lambda: np.zeros((4, 4), dtype=complex))
    flag_prob: dict = field(default_factory=dict)
    flag_rho: dict = field(default_factory=dict)

    def add(self, weight: float, rho: np.ndarray, flags: tuple) -> None:
        self.prob += weight
        self.rho += rho
        for f in flags:
            self.flag_prob[f] = self.flag_prob.get(f, 0.0) + weight
            self.flag_rho[f] = self.flag_rho.get(f, np.zeros((4, 4), dtype=complex)) + rho


@dataclass(frozen=True)
class HeraldedLink:
    """Per-herald-sign success probabilities and conditioned two-spin states."""

    p_plus: float
    p_minus: float
    rho_plus: QuantumState
    rho_minus: QuantumState
    p_rejected: float  # flagged would-be heralds removed by tailored heralding
    p_double: float  # multi-detector patterns, always discarded
    flag_prob: dict  # (node, epoch) -> P(flag | herald), when rejection is off
    flag_states: dict  # (node, epoch) -> conditioned QuantumState
    params: LinkParams

    @property
    def p_success(self) -> float:
        return self.p_plus + self.p_minus

    def target_vector(self, sign: int) -> np.ndarray:
        v = np.zeros(4, dtype=complex)
        v[1] = 1.0 / math.sqrt(2.0)
        v[2] = sign / math.sqrt(2.0)
        return v

    def fidelity(self, sign: int = +1) -> float:
        rho = self.rho_plus if sign > 0 else self.rho_minus
        from .hilbert import fidelity as fid

        return fid(rho, self.target_vector(sign))

    def fidelity_avg(self) -> float:
        """Herald-probability-weighted fidelity over both detector signs.

        Interference between the two nodes' photon-loss branches makes the
        two heralds' states differ slightly beyond mirror symmetry; pooled
        statistics correspond to this weighted average.
        """
        return (
            self.p_plus * self.fidelity(+1) + self.p_minus * self.fidelity(-1)
        ) / self.p_success


def interfere_and_herald(
    a: SpinPhotonState, b: SpinPhotonState, link: LinkParams
) -> HeraldedLink:
    """Interfere two nodes' kept modes and condition on single-detector clicks.

    Returns herald probabilities per detector sign, the conditioned
    (normalized) two-spin states, rejected/discarded weights, and the
    side-band flag statistics used for tailored-heralding analysis.
    """
    if not np.allclose(link.node1.windows.zpl_window, link.node2.windows.zpl_window):
        raise PhotonicsError("nodes have mismatched detection windows")
    maps = _bs_maps(link.visibility)
    sigma = math.radians(link.phase_uncertainty_deg)
    # Gaussian-averaged relative-phase factor between components that took a
    # different number of photons from node 2.
    phase_factor = {d: math.exp(-0.5 * (sigma * d) ** 2) for d in (0, 1, 2)}
    p_dark = link.dark_rate_hz * link.zpl_window_ns * 1e-9

    acc = {"+": _Accumulator(), "-": _Accumulator()}
    p_rejected = 0.0
    p_double = 0.0
    dropped = 0.0

    for br1 in a.branches:
        for br2 in b.branches:
            flagged = br1.j > 0 or br2.j > 0
            flags = tuple(
                sorted(
                    {("node1", e) for e in br1.psb_epochs}
                    | {("node2", e) for e in br2.psb_epochs}
                )
            )
            # Spin amplitudes per photon-number pair.
            # amps[s, n]: collect per output config, keyed by n2 for the
            # phase average.
            by_cfg: dict[tuple, dict[int, np.ndarray]] = {}
            for n1 in range(3):
                for n2 in range(3):
                    spin_amp = np.outer(br1.amps[:, n1], br2.amps[:, n2]).ravel()
                    if not np.any(spin_amp):
                        continue
                    if n1 + n2 > 2:
                        dropped += float(np.sum(np.abs(spin_amp) ** 2))
                        continue
                    for cfg, coef in maps[(n1, n2)].items():
                        slot = by_cfg.setdefault(cfg, {})
                        slot[n2] = slot.get(n2, np.zeros(4, dtype=complex)) + coef * spin_amp
            for cfg, by_n2 in by_cfg.items():
                rho = np.zeros((4, 4), dtype=complex)
                weight = 0.0
                for n2a, va in by_n2.items():
                    for n2b, vb in by_n2.items():
                        g = phase_factor[abs(n2a - n2b)]
                        rho += g * np.outer(va, vb.conj())
                weight = float(np.trace(rho).real)
                if weight <= 0.0:
                    continue
                pat = _pattern(cfg)
                if pat == "both":
                    p_double += weight
                    continue
                if pat == "none":
                    # Only a dark count can herald here.
                    w_dark = weight * p_dark * (1.0 - p_dark)
                    for sign in ("+", "-"):
                        if link.psb_rejection and flagged:
                            p_rejected += w_dark
                        else:
                            acc[sign].add(w_dark, rho * p_dark * (1.0 - p_dark), flags)
                    continue
                w_herald = weight * (1.0 - p_dark)
                if link.psb_rejection and flagged:
                    p_rejected += w_herald
                    continue
                acc[pat].add(w_herald, rho * (1.0 - p_dark), flags)

    if dropped > 1e-6:
        raise PhotonicsError(f"truncated photon weight {dropped:.2e} too large")

    def normalize(m: np.ndarray, p: float) -> QuantumState:
        return QuantumState((2, 2), ("q1", "q2"), m / p if p > 0 else np.eye(4) / 4.0)

    flag_prob = {}
    flag_states = {}
    total = acc["+"].prob + acc["-"].prob
    for f in set(acc["+"].flag_prob) | set(acc["-"].flag_prob):
        w = acc["+"].flag_prob.get(f, 0.0) + acc["-"].flag_prob.get(f, 0.0)
        m = acc["+"].flag_rho.get(f, 0.0) + acc["-"].flag_rho.get(f, 0.0)
        flag_prob[f] = w / total if total > 0 else 0.0
        flag_states[f] = normalize(np.asarray(m), w)

    return HeraldedLink(
        p_plus=acc["+"].prob,
        p_minus=acc["-"].prob,
        rho_plus=normalize(acc["+"].rho, acc["+"].prob),
        rho_minus=normalize(acc["-"].rho, acc["-"].prob),
        p_rejected=p_rejected,
        p_double=p_double,
        flag_prob=flag_prob,
        flag_states=flag_states,
        params=link,
    )


_HERALD_CACHE: dict = {}


def build_heralded(link: LinkParams) -> HeraldedLink:
    """Heralded link for a parameter set (memoized on the link object)."""
    slot = _HERALD_CACHE.get(id(link))
    if slot is not None and slot[0] is link:
        return slot[1]
    hl = interfere_and_herald(branch_emission(link.node1), branch_emission(link.node2), link)
    _HERALD_CACHE[id(link)] = (link, hl)
    return hl


BUDGET_SOURCES = ("alpha", "dark", "visibility", "double-excitation", "phase")


def _idealized(link: LinkParams, keep: set[str]) -> LinkParams:
    """All noise sources off except the protocol (alpha) term and ``keep``."""
    out = link
    if "visibility" not in keep:
        out = replace(out, visibility=1.0)
    if "phase" not in keep:
        out = replace(out, phase_uncertainty_deg=0.0)
    if "dark" not in keep:
        out = replace(out, dark_rate_hz=0.0)
    if "double-excitation" not in keep:
        out = replace(
            out,
            node1=replace(out.node1, emission=out.node1.emission.without_double_excitation()),
            node2=replace(out.node2, emission=out.node2.emission.without_double_excitation()),
        )
    return out


def single_error_budget(link: LinkParams, source: str) -> float:
    """Bell-state infidelity attributed to one error source.

    The protocol (bright-state population) term is always present; for the
    other sources the returned value is the infidelity increase over the
    protocol-only link, matching how the combined budget decomposes.
    """
    if source not in BUDGET_SOURCES:
        raise PhotonicsError(f"unknown error source {source!r}")
    base = 1.0 - build_heralded(_idealized(link, set())).fidelity_avg()
    if source == "alpha":
        return base
    with_src = 1.0 - build_heralded(_idealized(link, {source})).fidelity_avg()
    return with_src - base


def combined_infidelity(link: LinkParams) -> float:
    return 1.0 - build_heralded(link).fidelity_avg()


_BASIS_ROT = {
    "z": np.eye(2, dtype=complex),
    "x": np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2.0),
    "y": np.array([[1, -1j], [1, 1j]], dtype=complex) / math.sqrt(2.0),
}


def psb_conditioned_correlations(
    hl: HeraldedLink, node: str, epoch: str, basis: str = "z"
) -> dict[str, float]:
    """Joint measurement outcomes of the two spins given a side-band flag.

    ``node`` is "node1"/"node2", ``epoch`` "dur"/"aft", basis one of z/x/y.
    Outcome keys are two-bit strings (node1 bit, node2 bit).
    """
    key = (node, epoch)
    if key not in hl.flag_states:
        raise PhotonicsError(f"no flagged events recorded for {key}")
    rho = hl.flag_states[key].matrix
    u = _BASIS_ROT[basis]
    uu = np.kron(u, u)
    probs = np.real(np.diag(uu @ rho @ uu.conj().T))
    return {f"{i >> 1}{i & 1}": float(probs[i]) for i in range(4)}


def herald_correlations(hl: HeraldedLink, basis: str = "z", sign: int = +1) -> dict[str, float]:
    """Joint outcome distribution of the heralded state, no flag conditioning."""
    rho = (hl.rho_plus if sign > 0 else hl.rho_minus).matrix
    u = _BASIS_ROT[basis]
    uu = np.kron(u, u)
    probs = np.real(np.diag(uu @ rho @ uu.conj().T))
    return {f"{i >> 1}{i & 1}": float(probs[i]) for i in range(4)}


@dataclass(frozen=True)
class FlagCounts:
    """Observed herald/flag counters from sampled link generation."""

    n_heralds: int
    n_flags: dict  # (node, epoch) -> count
    n_attempts: int | None = None  # when known, the herald rate joins the fit


def expected_flag_rates(link: LinkParams) -> dict:
    """Per-herald flag probabilities of the link model with rejection off."""
    hl = build_heralded(replace(link, psb_rejection=False))
    return dict(hl.flag_prob)


_FLAG_KEYS = (("node1", "dur"), ("node2", "dur"), ("node1", "aft"), ("node2", "aft"))


def _with_error_probs(link: LinkParams, theta: np.ndarray) -> LinkParams:
    """Link variant with per-node (double-excitation, bright-population) set."""
    p2_1, p2_2, a1, a2 = theta
    return replace(
        link,
        node1=replace(
            link.node1, alpha=a1, emission=link.node1.emission.with_double_excitation(p2_1)
        ),
        node2=replace(
            link.node2, alpha=a2, emission=link.node2.emission.with_double_excitation(p2_2)
        ),
    )


def estimate_error_probs(counts: FlagCounts, link: LinkParams) -> dict:
    """Estimate per-node double-excitation and double-bright error probabilities.

    During-pulse side-band flags mark a double excitation at that node,
    after-pulse flags mark both nodes bright; the observed per-herald flag
    rates are corrected for the side-band detection efficiency, window
    acceptance and herald pairing by inverting the link model's (linear)
    flag-rate response around its calibrated design point.  When the attempt
    count is known, the per-attempt herald probability joins the fit as a
    fifth, far more precise observable, pinning the bright-state populations.
    """
    if link.node1.eta_psb <= 0 or link.node2.eta_psb <= 0:
        raise PhotonicsError("side-band efficiency must be positive")
    if counts.n_heralds <= 0:
        raise PhotonicsError("no heralds in flag statistics")
    theta0 = np.array(
        [
            link.node1.emission.p2,
            link.node2.emission.p2,
            link.node1.alpha,
            link.node2.alpha,
        ]
    )
    use_heralds = counts.n_attempts is not None

    def observables(variant: LinkParams | None = None, theta=None) -> np.ndarray:
        ln = link if theta is None else _with_error_probs(link, theta)
        hl = build_heralded(replace(ln, psb_rejection=False))
        flags = np.array([hl.flag_prob.get(k, 0.0) for k in _FLAG_KEYS])
        if use_heralds:
            return np.append(flags, hl.p_success)
        return flags

    observed = np.array([counts.n_flags.get(k, 0) / counts.n_heralds for k in _FLAG_KEYS])
    var = np.maximum(observed, 1e-12) / counts.n_heralds
    if use_heralds:
        p_obs = counts.n_heralds / counts.n_attempts
        observed = np.append(observed, p_obs)
        var = np.append(var, max(p_obs, 1e-15) / counts.n_attempts)

    base = observables(theta=theta0)
    n_obs = len(observed)
    jac = np.empty((n_obs, 4))
    for j in range(4):
        step = 0.25 * theta0[j] if theta0[j] > 0 else 0.01
        up = theta0.copy()
        up[j] += step
        jac[:, j] = (observables(theta=up) - base) / step
    weights = 1.0 / var
    lhs = jac.T @ (weights[:, None] * jac)
    rhs = jac.T @ (weights * (observed - base))
    theta = theta0 + np.linalg.solve(lhs, rhs)
    theta = np.clip(theta, 0.0, 1.0)
    return {
        "double_excitation": (float(theta[0]), float(theta[1])),
        "double_bright": (float(theta[2]), float(theta[3])),
    }
