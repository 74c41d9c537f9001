"""Three-node teleportation protocol.

The sequence, mirroring the experiment: generate entanglement between Alice
and Bob, store Bob's half on his memory qubit, generate entanglement between
Bob and Charlie under a timeout while the memory dephases, perform a Bell
measurement at Bob (entanglement swapping), feed the outcome forward to
Charlie, store at Charlie, prepare an input state, perform Charlie's Bell
measurement, and apply Alice's conditional correction.

Two execution modes share one noise model: the analytic mode averages exactly
over Bell outcomes, herald signs and the attempt-number distribution; the
Monte Carlo mode runs the full sequence shot by shot as three node state
machines exchanging classical messages over an in-process bus.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np

from . import params as defaults
from .hilbert import (
    CARDINAL_STATES,
    PAULI_X,
    PAULI_Z,
    PAULIS,
    QuantumState,
    apply_channel,
    apply_operator,
    apply_unitary,
    fidelity,
    partial_trace,
    rotation_z,
    tensor,
)
from .photonics import HeraldedLink, LinkParams, build_heralded
from .spin_noise import (
    DecayFit,
    ReadoutParams,
    decoupling_channel,
    dephasing_from_factor,
    depolarizing,
    ionization_event,
    single_readout_fidelities,
)


class ProtocolError(ValueError):
    pass


_CFG_CACHE: dict = {}


def _cached(cfg, tag, compute):
    """Per-config memo for the heavy analytic stages (config objects are frozen)."""
    slot = _CFG_CACHE.setdefault(id(cfg), {"pin": cfg})
    if tag not in slot:
        slot[tag] = compute()
    return slot[tag]


# Bell basis |B_mc> = (Z^m X^c (x) 1) |Phi+>, first qubit carries the indices.
def _bell_vector(m: int, c: int) -> np.ndarray:
    v = np.array([1, 0, 0, 1], dtype=complex) / math.sqrt(2.0)
    op = np.linalg.matrix_power(PAULI_Z, m) @ np.linalg.matrix_power(PAULI_X, c)
    return np.kron(op, np.eye(2)) @ v


BELL_OUTCOMES = tuple((m, c) for m in (0, 1) for c in (0, 1))
BELL_VECTORS = {mc: _bell_vector(*mc) for mc in BELL_OUTCOMES}


# Storage frames: the compiled swap stores the communication-qubit state on
# the nuclear spin in a rotated basis (the conditional nuclear gates are
# transverse-axis controlled), so physical memory dephasing acts along a
# logical axis set by this frame.
STORAGE_FRAMES = {
    "computational": np.eye(2, dtype=complex),
    "hadamard": np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2.0),
    "y-conjugate": np.array([[1, -1j], [1, 1j]], dtype=complex) / math.sqrt(2.0),
}


def _psi_sign_vector(sign: int) -> np.ndarray:
    v = np.zeros(4, dtype=complex)
    v[1] = 1.0 / math.sqrt(2.0)
    v[2] = sign / math.sqrt(2.0)
    return v


def _entangled_to_unitary(vec: np.ndarray) -> np.ndarray:
    """For a maximally entangled |chi> = (1 (x) V)|Phi+>, recover V."""
    x = vec.reshape(2, 2) * math.sqrt(2.0)
    # |chi> = (1 (x) V)|Phi+>  <=>  X[a, b] = V[b, a] / ... : X = V^T / 1
    v = x.T
    # Normalize the residual global phase/scale.
    scale = np.sqrt(np.abs(np.linalg.det(v)))
    if scale < 1e-12:
        raise ProtocolError("state is not maximally entangled")
    return v / np.linalg.det(v) ** 0.5


def swap_correction(
    m: int, c: int, sign_ab: int, sign_bc: int, frame_bob: np.ndarray | None = None
) -> np.ndarray:
    """Charlie's frame correction after Bob's Bell measurement.

    Derived so that ideal links of either herald sign and any outcome leave
    Alice-Charlie in |Phi+>; reduces to a Pauli for the computational
    storage frame.
    """
    rb = np.eye(2, dtype=complex) if frame_bob is None else frame_bob
    psi1 = (np.kron(np.eye(2), rb) @ _psi_sign_vector(sign_ab)).reshape(2, 2)
    psi2 = _psi_sign_vector(sign_bc).reshape(2, 2)
    bell = BELL_VECTORS[(m, c)].reshape(2, 2)
    # <B|_{M,CB} (psi1_{A,M} psi2_{CB,CC}) : chi[a, cc] = sum psi1[a,m] B*[m,k] psi2[k,cc]
    chi = psi1 @ bell.conj() @ psi2
    norm = np.linalg.norm(chi)
    if norm < 1e-12:
        raise ProtocolError("vanishing Bell projection for ideal inputs")
    v = _entangled_to_unitary(chi.ravel() / norm)
    return v.conj().T


def teleport_correction(m: int, c: int, frame_charlie: np.ndarray | None = None) -> np.ndarray:
    """Alice's correction from Charlie's Bell outcome (memory bit m, comm bit c)."""
    rc = np.eye(2, dtype=complex) if frame_charlie is None else frame_charlie
    phi = (np.kron(np.eye(2), rc) @ np.array([1, 0, 0, 1], dtype=complex) / math.sqrt(2.0)).reshape(2, 2)
    bell = BELL_VECTORS[(m, c)].reshape(2, 2)
    # Teleporting phi_in through (1 (x) Rc)|Phi+> with <B|_{MC, in}:
    # alice[a] = sum_m phi[a, m] B*[m, k] phi_in[k]  => W = phi @ bell.conj()
    w = phi @ bell.conj()
    scale = np.sqrt(np.abs(np.linalg.det(w)))
    if scale < 1e-12:
        raise ProtocolError("vanishing Bell projection for the ideal teleporter")
    w = w / np.linalg.det(w) ** 0.5
    return w.conj().T


def phase_correction(n: int, phi_a: float) -> np.ndarray:
    """Z rotation undoing the phase picked up over n entanglement attempts."""
    if n < 0:
        raise ProtocolError("attempt count must be nonnegative")
    return rotation_z(-n * phi_a)


def rephase_correction(q: int, phi_b: float) -> np.ndarray:
    """Z rotation undoing the phase imprinted during the rephasing wait."""
    if q < 0:
        raise ProtocolError("attempt count must be nonnegative")
    return rotation_z(-q * phi_b)


@dataclass(frozen=True)
class BsmModel:
    """Noise and acceptance model for one node's Bell-state measurement."""

    comm_fidelities: tuple[float, float]
    memory_fidelities: tuple[float, float]
    accept_fraction: float = 1.0  # consistent repetitive-readout patterns
    cr_pass: float = 1.0
    policy: str = "comm0"  # comm0 | comm0-mem0 | all

    def __post_init__(self) -> None:
        if self.policy not in ("comm0", "comm0-mem0", "all"):
            raise ProtocolError(f"unknown acceptance policy {self.policy!r}")

    def accepts(self, m: int, c: int) -> bool:
        if self.policy == "comm0":
            return c == 0
        if self.policy == "comm0-mem0":
            return c == 0 and m == 0
        return True

    def confusion(self, true_m: int, true_c: int, out_m: int, out_c: int) -> float:
        fm0, fm1 = self.memory_fidelities
        fc0, fc1 = self.comm_fidelities
        pm = (fm0 if out_m == 0 else 1 - fm0) if true_m == 0 else (fm1 if out_m == 1 else 1 - fm1)
        pc = (fc0 if out_c == 0 else 1 - fc0) if true_c == 0 else (fc1 if out_c == 1 else 1 - fc1)
        return pm * pc

    @property
    def acceptance_probability(self) -> float:
        """State-independent acceptance factor (pattern consistency and CR check)."""
        return self.accept_fraction * self.cr_pass


@dataclass(frozen=True)
class ProtocolConfig:
    """Full parameter bundle for one protocol variant."""

    link_ab: LinkParams
    link_bc: LinkParams
    bob_bsm: BsmModel
    charlie_bsm: BsmModel
    memory_fit: DecayFit  # Bob's storage dephasing vs entanglement attempts
    alice_eigen_fit: DecayFit
    alice_super_fit: DecayFit
    store_depol_bob: float = 0.12
    store_depol_charlie: float = 0.14
    ionization_alice: float = 0.007
    prep_init_error: float = defaults.PREP_INIT_ERROR
    prep_pulse_error: float = defaults.PREP_PULSE_ERROR
    timeout: int = defaults.TIMEOUT_ATTEMPTS
    ab_cap: int = 10**6
    phase_a_rad: float = 0.1
    phase_b_rad: float = 0.05
    attempt_period_s: float = defaults.ATTEMPT_PERIOD_S
    alice_total_overhead_s: float = 2.0e-3
    alice_readout: tuple[float, float] = defaults.COMM_READOUT["alice"]
    feed_forward: bool = True
    frame_bob: str = "computational"
    frame_charlie: str = "hadamard"

    def __post_init__(self) -> None:
        if self.timeout < 1:
            raise ProtocolError("timeout must be at least one attempt")
        for f in (self.frame_bob, self.frame_charlie):
            if f not in STORAGE_FRAMES:
                raise ProtocolError(f"unknown storage frame {f!r}")

    @property
    def r_bob(self) -> np.ndarray:
        return STORAGE_FRAMES[self.frame_bob]

    @property
    def r_charlie(self) -> np.ndarray:
        return STORAGE_FRAMES[self.frame_charlie]

    def alice_channel(self, t: float):
        return decoupling_channel(t, self.alice_eigen_fit, self.alice_super_fit)


def _unconditional_bsm(bsm: BsmModel, readout: ReadoutParams) -> BsmModel:
    """Deterministic-measurement variant: accept everything, first readout only."""
    return replace(
        bsm,
        policy="all",
        accept_fraction=1.0,
        cr_pass=1.0,
        memory_fidelities=single_readout_fidelities(readout),
    )


def make_config(
    mode: str = "conditional",
    window_ns: float | None = None,
    bar_on: bool = True,
    improved_memory: bool = True,
    tailored_heralding: bool = True,
    noiseless: bool = False,
    link_ab: LinkParams | None = None,
    link_bc: LinkParams | None = None,
    **overrides,
) -> ProtocolConfig:
    """Assemble a protocol configuration from the calibrated defaults.

    ``mode`` selects Charlie's measurement policy; the three innovation
    toggles reproduce the upgrade ladder: repetitive readout, memory decoupling,
    and side-band herald rejection.
    """
    if mode not in ("conditional", "unconditional"):
        raise ProtocolError(f"unknown mode {mode!r}")
    if noiseless:
        ideal_fit = DecayFit(1.0, 1e15, 1.0)
        flat = DecayFit(0.5, 1e15, 1.0, offset=0.5)
        link = defaults.build_link(defaults.ideal_link_config())
        cfg = ProtocolConfig(
            link_ab=link,
            link_bc=link,
            bob_bsm=BsmModel((1.0, 1.0), (1.0, 1.0), policy="comm0"),
            charlie_bsm=BsmModel(
                (1.0, 1.0), (1.0, 1.0), policy="comm0" if mode == "conditional" else "all"
            ),
            memory_fit=ideal_fit,
            alice_eigen_fit=flat,
            alice_super_fit=flat,
            store_depol_bob=0.0,
            store_depol_charlie=0.0,
            ionization_alice=0.0,
            prep_init_error=0.0,
            prep_pulse_error=0.0,
        )
        return replace(cfg, **overrides)

    ab_cfg = defaults.LINK_AB if tailored_heralding else replace(
        defaults.LINK_AB, psb_rejection=False
    )
    bc_cfg = defaults.LINK_BC if tailored_heralding else replace(
        defaults.LINK_BC, psb_rejection=False
    )
    ab = link_ab or defaults.build_link(ab_cfg, window_ns=window_ns)
    bc = link_bc or defaults.build_link(bc_cfg, window_ns=window_ns)

    readout = {
        node: ReadoutParams(
            comm_fidelities=defaults.COMM_READOUT[node],
            memory_effective=defaults.MEMORY_READOUT_EFFECTIVE[node],
            **defaults.BAR_PARAMS[node],
        )
        for node in ("bob", "charlie")
    }
    mem_key = "attempts_decoupled" if improved_memory else "attempts_bare"
    mem = defaults.MEMORY_FITS[mem_key]
    memory_fit = DecayFit(mem["amplitude"], mem["scale"], mem["stretch"])

    def bsm(node: str) -> BsmModel:
        r = readout[node]
        if bar_on:
            return BsmModel(
                comm_fidelities=r.comm_fidelities,
                memory_fidelities=r.memory_effective,
                accept_fraction=defaults.BAR_CONSISTENT_FRACTION,
                cr_pass=defaults.CR_CHECK_PASS,
                policy="comm0",
            )
        # Pre-upgrade readout: a single memory readout block, no consistency
        # filter, still conditioned on the communication-qubit 0 outcome.
        return BsmModel(
            comm_fidelities=r.comm_fidelities,
            memory_fidelities=single_readout_fidelities(r),
            accept_fraction=1.0,
            cr_pass=defaults.CR_CHECK_PASS,
            policy="comm0",
        )

    charlie = bsm("charlie")
    if mode == "unconditional":
        charlie = _unconditional_bsm(charlie, readout["charlie"])

    ae = defaults.DECOUPLING_FITS["alice"]["eigen"]
    asup = defaults.DECOUPLING_FITS["alice"]["super"]
    cfg = ProtocolConfig(
        link_ab=ab,
        link_bc=bc,
        bob_bsm=bsm("bob"),
        charlie_bsm=charlie,
        memory_fit=memory_fit,
        alice_eigen_fit=DecayFit(ae["amplitude"], ae["scale"], ae["stretch"], offset=0.5),
        alice_super_fit=DecayFit(asup["amplitude"], asup["scale"], asup["stretch"], offset=0.5),
        store_depol_bob=defaults.MEMORY_STORE_DEPOL["bob"],
        store_depol_charlie=defaults.MEMORY_STORE_DEPOL["charlie"],
    )
    return replace(cfg, **overrides)


@dataclass(frozen=True)
class TeleportOutcome:
    """Result of one shot (sampled) or of the exact analytic average."""

    rho: QuantumState | None
    fidelity: float | None = None
    bsm_bob: tuple[int, int] | None = None
    bsm_charlie: tuple[int, int] | None = None
    signs: tuple[int, int] | None = None
    attempts_ab: int | None = None
    attempts_bc: int | None = None
    aborted: str | None = None
    duration_s: float = 0.0
    tomography_bit: int | None = None


@dataclass(frozen=True)
class ClassicalMessage:
    sender: str
    receiver: str
    payload: dict


class MessageBus:
    """In-process ordered classical channels, one FIFO per directed pair."""

    def __init__(self) -> None:
        self._queues: dict[tuple[str, str], deque] = {}
        self.log: list[ClassicalMessage] = []

    def send(self, sender: str, receiver: str, **payload) -> None:
        msg = ClassicalMessage(sender, receiver, payload)
        self._queues.setdefault((sender, receiver), deque()).append(msg)
        self.log.append(msg)

    def receive(self, sender: str, receiver: str) -> dict:
        q = self._queues.get((sender, receiver))
        if not q:
            raise ProtocolError(f"no pending message {sender} -> {receiver}")
        return q.popleft().payload


class Register:
    """Mutable joint state confined to one protocol shot."""

    def __init__(self) -> None:
        self.state: QuantumState | None = None

    def add(self, state: QuantumState) -> None:
        self.state = state if self.state is None else tensor(self.state, state)

    def unitary(self, u: np.ndarray, labels: Iterable[str]) -> None:
        self.state = apply_unitary(self.state, u, list(labels))

    def channel(self, ch, labels: Iterable[str]) -> None:
        self.state = apply_channel(self.state, ch, list(labels))

    def relabel(self, mapping: dict[str, str]) -> None:
        self.state = self.state.relabeled(mapping)

    def bell_measure(self, labels: tuple[str, str], rng: np.random.Generator) -> tuple[int, int]:
        """Projective Bell measurement; collapses and discards the pair."""
        pair = partial_trace(self.state, list(labels))
        probs = np.array(
            [
                max(float(np.real(BELL_VECTORS[mc].conj() @ pair.matrix @ BELL_VECTORS[mc])), 0.0)
                for mc in BELL_OUTCOMES
            ]
        )
        probs = probs / probs.sum()
        k = int(rng.choice(4, p=probs))
        mc = BELL_OUTCOMES[k]
        proj = np.outer(BELL_VECTORS[mc], BELL_VECTORS[mc].conj())
        mat = apply_operator(self.state, proj, list(labels))
        post = QuantumState(self.state.dims, self.state.labels, mat, float(np.trace(mat).real))
        keep = [l for l in self.state.labels if l not in labels]
        self.state = partial_trace(post, keep).normalized()
        return mc

    def density(self, labels: Iterable[str]) -> QuantumState:
        return partial_trace(self.state, list(labels))


def _sample_geometric(p: float, rng: np.random.Generator) -> int:
    if p <= 0.0:
        return np.iinfo(np.int64).max
    if p >= 1.0:
        return 1
    u = rng.uniform()
    return int(math.ceil(math.log1p(-u) / math.log1p(-p)))


def generate_link(
    hl: HeraldedLink, cap: int, rng: np.random.Generator
) -> tuple[int | None, QuantumState | None, int]:
    """Sample one heralding: (sign, conditioned state, attempts) or a timeout.

    Attempts are geometric with the per-attempt herald probability; on
    timeout the sign and state are None and the attempt count equals the cap.
    """
    if cap < 1:
        raise ProtocolError("attempt cap must be at least 1")
    n = _sample_geometric(hl.p_success, rng)
    if n > cap:
        return None, None, cap
    sign = +1 if rng.uniform() < hl.p_plus / hl.p_success else -1
    return sign, (hl.rho_plus if sign > 0 else hl.rho_minus), n


def _confused_outcomes(
    true_states: dict[tuple[int, int], QuantumState], bsm: BsmModel
) -> dict[tuple[int, int], QuantumState]:
    """Mix true Bell-outcome branches into assigned-outcome branches."""
    out: dict[tuple[int, int], np.ndarray] = {}
    ref = next(iter(true_states.values()))
    for assigned in BELL_OUTCOMES:
        acc = np.zeros_like(ref.matrix)
        for true, state in true_states.items():
            w = bsm.confusion(true[0], true[1], assigned[0], assigned[1])
            if w > 0:
                acc = acc + w * state.matrix
        out[assigned] = acc
    return {
        k: QuantumState(ref.dims, ref.labels, m, float(np.trace(m).real))
        for k, m in out.items()
    }


def _bell_project(joint: QuantumState, pair: tuple[str, str]) -> dict:
    """Unnormalized post-measurement branches for all four Bell outcomes."""
    keep = [l for l in joint.labels if l not in pair]
    out = {}
    for mc in BELL_OUTCOMES:
        proj = np.outer(BELL_VECTORS[mc], BELL_VECTORS[mc].conj())
        mat = apply_operator(joint, proj, list(pair))
        post = QuantumState(joint.dims, joint.labels, mat, float(np.trace(mat).real))
        out[mc] = partial_trace(post, keep)
    return out


def entanglement_swap(
    rho_ab: QuantumState,
    rho_bc: QuantumState,
    bsm: BsmModel,
    signs: tuple[int, int] = (+1, +1),
) -> list[tuple[tuple[int, int], float, QuantumState]]:
    """Bell measurement on the middle node with feed-forward correction.

    ``rho_ab`` lives on (far node, middle memory), ``rho_bc`` on (middle
    communication qubit, near node).  Returns, per assigned outcome, its
    probability and the corrected far-near state; with ideal inputs and an
    ideal measurement every outcome yields |Phi+>.
    """
    a = rho_ab.relabeled({rho_ab.labels[0]: "far", rho_ab.labels[1]: "mid_mem"})
    b = rho_bc.relabeled({rho_bc.labels[0]: "mid_comm", rho_bc.labels[1]: "near"})
    joint = tensor(a, b)
    branches = _bell_project(joint, ("mid_mem", "mid_comm"))
    assigned = _confused_outcomes(branches, bsm)
    out = []
    for mc, state in assigned.items():
        u = swap_correction(mc[0], mc[1], *signs)
        corrected = apply_unitary(state, u, ["near"])
        out.append((mc, corrected.weight, corrected.normalized()))
    return out


@dataclass
class _QAverages:
    """Expectations over the truncated attempt-number distribution."""

    p_success: float
    mean_attempts: float
    dephasing: float  # E[lambda(q)]
    alice0: np.ndarray  # E[c_i(t(q))] Pauli weights of Alice's decoupling channel
    alice1: np.ndarray  # E[c_i(t(q)) lambda(q)]


def _pauli_weights(channel) -> np.ndarray:
    """Pauli-diagonal weights of a channel built by pauli_channel."""
    w = np.zeros(4)
    for k in channel.kraus:
        for i, s in enumerate(PAULIS):
            overlap = abs(np.trace(s.conj().T @ k)) ** 2 / 4.0
            w[i] += overlap
    return w


def _q_averages(cfg: ProtocolConfig) -> _QAverages:
    hl = build_heralded(cfg.link_bc)
    p = hl.p_success
    t_max = cfg.timeout
    qs = np.arange(1, t_max + 1, dtype=float)
    log1m = math.log1p(-p) if p < 1.0 else -np.inf
    pmf = np.exp(np.clip((qs - 1) * log1m, -700, 0)) * p
    total = pmf.sum()
    if total <= 0:
        raise ProtocolError("second link can never herald")
    pmf = pmf / total
    lam = np.exp(-((qs / cfg.memory_fit.scale) ** cfg.memory_fit.stretch))
    alice0 = np.zeros(4)
    alice1 = np.zeros(4)
    for q, w, l in zip(qs, pmf, lam):
        t_full = 2.0 * q * cfg.attempt_period_s + cfg.alice_total_overhead_s
        cf = _pauli_weights(cfg.alice_channel(t_full))
        alice0 += w * cf
        alice1 += w * cf * l
    return _QAverages(
        p_success=total,
        mean_attempts=float((qs * pmf).sum()),
        dephasing=float((lam * pmf).sum()),
        alice0=alice0,
        alice1=alice1,
    )


def _link_states(hl: HeraldedLink) -> dict[int, QuantumState]:
    return {+1: hl.rho_plus, -1: hl.rho_minus}


def _sign_probs(hl: HeraldedLink) -> dict[int, float]:
    return {+1: hl.p_plus / hl.p_success, -1: hl.p_minus / hl.p_success}


def _bob_stage(
    cfg: ProtocolConfig, lam: float
) -> dict[tuple[int, int, tuple[int, int]], QuantumState]:
    """Unnormalized Alice-Charlie branches per (sign_ab, sign_bc, bob outcome).

    ``lam`` is the memory dephasing factor; the output is affine in it.
    Branch weights carry the sign and Bell-outcome probabilities; Charlie's
    frame correction and storage depolarizing are applied.
    """
    hl_ab = build_heralded(cfg.link_ab)
    hl_bc = build_heralded(cfg.link_bc)
    out = {}
    for s1, p1 in _sign_probs(hl_ab).items():
        rho_ab = _link_states(hl_ab)[s1].relabeled({"q1": "alice", "q2": "mem_b"})
        rho_ab = apply_unitary(rho_ab, cfg.r_bob, ["mem_b"])
        rho_ab = apply_channel(rho_ab, depolarizing(cfg.store_depol_bob), ["mem_b"])
        rho_ab = apply_channel(rho_ab, dephasing_from_factor(lam), ["mem_b"])
        for s2, p2 in _sign_probs(hl_bc).items():
            rho_bc = _link_states(hl_bc)[s2].relabeled({"q1": "comm_b", "q2": "comm_c"})
            joint = tensor(rho_ab, rho_bc)
            branches = _bell_project(joint, ("mem_b", "comm_b"))
            assigned = _confused_outcomes(branches, cfg.bob_bsm)
            for mc, state in assigned.items():
                if not cfg.bob_bsm.accepts(*mc):
                    continue
                u = swap_correction(mc[0], mc[1], s1, s2, cfg.r_bob)
                corrected = apply_unitary(state, u, ["comm_c"])
                scaled = QuantumState(
                    corrected.dims,
                    corrected.labels,
                    corrected.matrix * (p1 * p2),
                    corrected.weight * p1 * p2,
                )
                out[(s1, s2, mc)] = scaled
    return out


def _store_at_charlie(cfg: ProtocolConfig, state: QuantumState) -> QuantumState:
    stored = apply_unitary(state.relabeled({"comm_c": "mem_c"}), cfg.r_charlie, ["mem_c"])
    return apply_channel(stored, depolarizing(cfg.store_depol_charlie), ["mem_c"])


def _apply_pauli_weights(mat: np.ndarray, weights: np.ndarray) -> np.ndarray:
    return sum(w * (s @ mat @ s.conj().T) for w, s in zip(weights, PAULIS))


@dataclass(frozen=True)
class AnalyticResult:
    """Exact outcome average for one input state."""

    rho: QuantumState
    fidelity: float
    per_outcome: dict  # charlie outcome -> (weight, fidelity)
    accept_probability: float
    teleporter_fidelity: float  # stored at Charlie, before the input measurement
    swap_fidelity: float  # right after the swap correction at Charlie
    bob_accept_weight: float  # probability weight passing Bob's outcome policy
    mean_attempts_bc: float


def _charlie_stage(
    cfg: ProtocolConfig,
    stored_branches: dict,
    psi_in: QuantumState,
) -> dict[tuple[int, int], np.ndarray]:
    """Alice branches (2x2, unnormalized) per assigned Charlie outcome."""
    acc: dict[tuple[int, int], np.ndarray] = {
        mc: np.zeros((2, 2), dtype=complex) for mc in BELL_OUTCOMES
    }
    for (_s1, _s2, _mc1), tele in stored_branches.items():
        joint = tensor(tele, psi_in)
        branches = _bell_project(joint, ("mem_c", "input"))
        assigned = _confused_outcomes(branches, cfg.charlie_bsm)
        for mc, state in assigned.items():
            if not cfg.charlie_bsm.accepts(*mc):
                continue
            mat = state.matrix
            if cfg.feed_forward:
                u = teleport_correction(*mc, cfg.r_charlie)
                mat = u @ mat @ u.conj().T
            acc[mc] = acc[mc] + mat
    return acc


def _input_state(cfg: ProtocolConfig, which) -> tuple[QuantumState, np.ndarray]:
    """Input density matrix and the pure tomography target."""
    from .spin_noise import prepare_input_state

    if isinstance(which, str):
        psi = prepare_input_state(
            which, cfg.prep_init_error, cfg.prep_pulse_error, label="input"
        )
        return psi, CARDINAL_STATES[which]
    vec = np.asarray(which, dtype=complex).ravel()
    vec = vec / np.linalg.norm(vec)
    from .hilbert import state_from_vector

    return state_from_vector(vec, (2,), ("input",)), vec


def run_teleportation_analytic(cfg: ProtocolConfig, which) -> AnalyticResult:
    """Exact average of the protocol output for one input state.

    ``which`` is a cardinal-state name (prepared with the configured
    preparation errors) or an arbitrary pure-state vector (used as is).
    Averages over herald signs, both Bell measurements (with readout
    confusion and the acceptance policy), the truncated geometric attempt
    distribution (memory dephasing and Alice's decoupling channel are
    averaged jointly), ionization, and state-preparation noise.
    """
    qa = _cached(cfg, "qa", lambda: _q_averages(cfg))
    psi_in, target = _input_state(cfg, which)

    bob0 = _cached(cfg, "bob0", lambda: _bob_stage(cfg, 0.0))
    bob1 = _cached(cfg, "bob1", lambda: _bob_stage(cfg, 1.0))
    stored0 = _cached(
        cfg, "stored0", lambda: {k: _store_at_charlie(cfg, v) for k, v in bob0.items()}
    )
    stored1 = _cached(
        cfg, "stored1", lambda: {k: _store_at_charlie(cfg, v) for k, v in bob1.items()}
    )

    # Alice-Charlie fidelities at two cuts, averaged over the attempt count:
    # right after the swap correction, and once Charlie has stored.  Alice's
    # decoupling and the later measurement noise belong to the teleported
    # state's own budget.
    swap_acc = np.zeros((4, 4), dtype=complex)
    tele_acc = np.zeros((4, 4), dtype=complex)
    for key in bob0:
        g0, g1 = bob0[key].matrix, bob1[key].matrix
        avg = g0 + qa.dephasing * (g1 - g0)
        swap_acc += avg
        state = QuantumState((2, 2), ("alice", "comm_c"), avg, float(np.trace(avg).real))
        tele_acc += _store_at_charlie(cfg, state).matrix
    phi_vec = np.array([1, 0, 0, 1], dtype=complex) / math.sqrt(2.0)
    bob_weight = float(np.trace(swap_acc).real)
    swap_fid = float(np.real(phi_vec.conj() @ swap_acc @ phi_vec) / bob_weight)
    tele_vec = np.kron(np.eye(2), cfg.r_charlie) @ phi_vec
    tele_fid = float(
        np.real(tele_vec.conj() @ tele_acc @ tele_vec) / np.trace(tele_acc).real
    )

    out0 = _charlie_stage(cfg, stored0, psi_in)
    out1 = _charlie_stage(cfg, stored1, psi_in)

    per_outcome = {}
    rho_total = np.zeros((2, 2), dtype=complex)
    weight_total = 0.0
    for mc in BELL_OUTCOMES:
        g0, g1 = out0[mc], out1[mc]
        d = g1 - g0
        avg = _apply_pauli_weights(g0, qa.alice0) + _apply_pauli_weights(d, qa.alice1)
        # Ionization replaces Alice's qubit with the maximally mixed state.
        w = float(np.trace(avg).real)
        if w <= 0.0:
            continue
        avg = (1.0 - cfg.ionization_alice) * avg + cfg.ionization_alice * w * np.eye(2) / 2.0
        f = float(np.real(target.conj() @ avg @ target) / w)
        per_outcome[mc] = (w, f)
        rho_total += avg
        weight_total += w

    accept = (
        qa.p_success
        * cfg.bob_bsm.acceptance_probability
        * cfg.charlie_bsm.acceptance_probability
        * weight_total
    )
    rho = QuantumState((2,), ("alice",), rho_total / weight_total)
    return AnalyticResult(
        rho=rho,
        fidelity=float(np.real(target.conj() @ rho.matrix @ target)),
        per_outcome=per_outcome,
        accept_probability=float(accept),
        teleporter_fidelity=tele_fid,
        swap_fidelity=swap_fid,
        bob_accept_weight=bob_weight,
        mean_attempts_bc=qa.mean_attempts,
    )


def six_state_fidelities(cfg: ProtocolConfig) -> dict[str, float]:
    return {w: run_teleportation_analytic(cfg, w).fidelity for w in CARDINAL_STATES}


def average_fidelity(cfg: ProtocolConfig) -> float:
    return float(np.mean(list(six_state_fidelities(cfg).values())))


def teleporter_fidelity(cfg: ProtocolConfig) -> float:
    """Alice-Charlie fidelity of the swapped state with all preparation noise."""
    return run_teleportation_analytic(cfg, "+z").swap_fidelity


def stored_teleporter_fidelity(cfg: ProtocolConfig) -> float:
    """Alice-Charlie fidelity once Charlie has stored his half."""
    return run_teleportation_analytic(cfg, "+z").teleporter_fidelity


def per_bsm_outcome_fidelity(cfg: ProtocolConfig) -> dict[tuple[int, int], float]:
    """Average teleported-state fidelity per assigned Charlie Bell outcome.

    Uses unconditional-style accounting so all four outcomes carry weight.
    """
    cfg_all = replace(cfg, charlie_bsm=replace(cfg.charlie_bsm, policy="all"))
    sums: dict[tuple[int, int], float] = {mc: 0.0 for mc in BELL_OUTCOMES}
    weights: dict[tuple[int, int], float] = {mc: 0.0 for mc in BELL_OUTCOMES}
    for which in CARDINAL_STATES:
        res = run_teleportation_analytic(cfg_all, which)
        for mc, (w, f) in res.per_outcome.items():
            sums[mc] += f
            weights[mc] += w
    return {mc: sums[mc] / 6.0 for mc in BELL_OUTCOMES}


def no_feedforward_fidelity(cfg: ProtocolConfig) -> float:
    """Six-state average if Alice never applied her correction.

    Uses all-outcome accounting (every Bell result weighted in), matching the
    bit-flip reanalysis of the measured data; the outcome average of
    uncorrected teleportation is the maximally mixed state, so ideal
    components give exactly one half.
    """
    cfg_all = replace(
        cfg,
        feed_forward=False,
        charlie_bsm=replace(cfg.charlie_bsm, policy="all"),
    )
    return average_fidelity(cfg_all)


def run_teleportation_shot(cfg: ProtocolConfig, which, rng: np.random.Generator) -> TeleportOutcome:
    """One sampled protocol shot as three nodes exchanging classical messages.

    Charlie's acceptance behavior follows the configured measurement policy:
    an "all" policy (deterministic measurement) never aborts there.
    """
    hl_ab = build_heralded(cfg.link_ab)
    hl_bc = build_heralded(cfg.link_bc)
    bus = MessageBus()
    reg = Register()

    # Alice-Bob link and storage at Bob.
    s1, rho_ab, n_ab = generate_link(hl_ab, cfg.ab_cap, rng)
    if s1 is None:
        return TeleportOutcome(rho=None, aborted="ab_cap", attempts_ab=n_ab)
    # The attempt count of the second link is independent of the stored
    # state, so a timeout can abort before any state algebra runs.
    s2, rho_bc, q = generate_link(hl_bc, cfg.timeout, rng)
    duration = (n_ab + 2 * q) * cfg.attempt_period_s
    if s2 is None:
        return TeleportOutcome(
            rho=None, aborted="bc_timeout", attempts_ab=n_ab, attempts_bc=q,
            duration_s=duration,
        )
    bus.send("station_ab", "alice", herald="ab", sign=s1)
    bus.send("station_ab", "bob", herald="ab", sign=s1)
    reg.add(rho_ab.relabeled({"q1": "alice", "q2": "comm_b"}))
    reg.relabel({"comm_b": "mem_b"})
    reg.unitary(cfg.r_bob, ["mem_b"])
    reg.channel(depolarizing(cfg.store_depol_bob), ["mem_b"])
    bus.receive("station_ab", "bob")

    lam = cfg.memory_fit.decay_factor(q)
    reg.channel(dephasing_from_factor(lam), ["mem_b"])
    # Deterministic phase pickup and its real-time compensation cancel.
    reg.unitary(rotation_z(q * cfg.phase_a_rad), ["mem_b"])
    reg.unitary(phase_correction(q, cfg.phase_a_rad), ["mem_b"])
    reg.unitary(rotation_z(q * cfg.phase_b_rad), ["mem_b"])
    reg.unitary(rephase_correction(q, cfg.phase_b_rad), ["mem_b"])
    bus.send("station_bc", "bob", herald="bc", sign=s2)
    bus.send("station_bc", "charlie", herald="bc", sign=s2)
    reg.add(rho_bc.relabeled({"q1": "comm_b", "q2": "comm_c"}))
    bus.receive("station_bc", "bob")

    # Bob's Bell measurement (entanglement swap).
    true_mc = reg.bell_measure(("mem_b", "comm_b"), rng)
    m1 = _flip_bit(true_mc[0], cfg.bob_bsm.memory_fidelities, rng)
    c1 = _flip_bit(true_mc[1], cfg.bob_bsm.comm_fidelities, rng)
    consistent = rng.uniform() < cfg.bob_bsm.accept_fraction
    cr_ok = rng.uniform() < cfg.bob_bsm.cr_pass
    if not (cfg.bob_bsm.accepts(m1, c1) and consistent and cr_ok):
        return TeleportOutcome(
            rho=None, aborted="bob_bsm", signs=(s1, s2), attempts_ab=n_ab,
            attempts_bc=q, bsm_bob=(m1, c1), duration_s=duration,
        )
    bus.send("bob", "charlie", bsm=(m1, c1), sign_ab=s1)

    # Charlie: frame correction and storage.
    sign_bc = bus.receive("station_bc", "charlie")["sign"]
    msg = bus.receive("bob", "charlie")
    reg.unitary(swap_correction(*msg["bsm"], msg["sign_ab"], sign_bc, cfg.r_bob), ["comm_c"])
    reg.relabel({"comm_c": "mem_c"})
    reg.unitary(cfg.r_charlie, ["mem_c"])
    reg.channel(depolarizing(cfg.store_depol_charlie), ["mem_c"])

    # Input preparation and Charlie's Bell measurement.
    psi_in, target = _input_state(cfg, which)
    reg.add(psi_in)
    true2 = reg.bell_measure(("mem_c", "input"), rng)
    m2 = _flip_bit(true2[0], cfg.charlie_bsm.memory_fidelities, rng)
    c2 = _flip_bit(true2[1], cfg.charlie_bsm.comm_fidelities, rng)
    if cfg.charlie_bsm.policy != "all":
        consistent = rng.uniform() < cfg.charlie_bsm.accept_fraction
        cr_ok = rng.uniform() < cfg.charlie_bsm.cr_pass
        if not (cfg.charlie_bsm.accepts(m2, c2) and consistent and cr_ok):
            return TeleportOutcome(
                rho=None, aborted="charlie_bsm", signs=(s1, s2), attempts_ab=n_ab,
                attempts_bc=q, bsm_bob=(m1, c1), bsm_charlie=(m2, c2),
                duration_s=duration,
            )
    bus.send("charlie", "alice", bsm=(m2, c2))

    # Alice: decoupling noise, possible ionization, feed-forward.
    bus.receive("station_ab", "alice")
    t_alice = 2.0 * q * cfg.attempt_period_s + cfg.alice_total_overhead_s
    reg.channel(cfg.alice_channel(t_alice), ["alice"])
    ionized = ionization_event(cfg.ionization_alice, rng)
    if ionized:
        reg.state = QuantumState((2,), ("alice",), np.eye(2) / 2.0)
    msg = bus.receive("charlie", "alice")
    if cfg.feed_forward:
        reg.unitary(teleport_correction(*msg["bsm"], cfg.r_charlie), ["alice"])
    rho = reg.density(["alice"])
    # Raw verification readout along the target axis (direction alternated by
    # the caller across shots; the estimator in ``tomography`` aggregates).
    p_true = fidelity(rho, target)
    f0, f1 = cfg.alice_readout
    bit = int(rng.uniform() >= f0 * p_true + (1 - f1) * (1 - p_true))
    return TeleportOutcome(
        rho=rho,
        fidelity=fidelity(rho, target),
        bsm_bob=(m1, c1),
        bsm_charlie=(m2, c2),
        signs=(s1, s2),
        attempts_ab=n_ab,
        attempts_bc=q,
        duration_s=duration,
        tomography_bit=bit,
    )


def _flip_bit(true: int, fidelities: tuple[float, float], rng: np.random.Generator) -> int:
    keep = fidelities[0] if true == 0 else fidelities[1]
    return true if rng.uniform() < keep else 1 - true


def tomography(
    rho: QuantumState,
    which: str,
    readout: tuple[float, float],
    rng: np.random.Generator,
    shots: int = 1,
) -> float:
    """Fidelity estimate from readout along both target directions.

    Half the shots measure along the target axis, half along the opposite
    one; inverting the known assignment fidelities makes the estimator
    unbiased and the direction average cancels their asymmetry.
    """
    target = CARDINAL_STATES[which]
    f0, f1 = readout
    slope = f0 + f1 - 1.0
    if slope <= 0:
        raise ProtocolError("readout fidelities too low to invert")
    p_true = fidelity(rho, target)
    hits = 0.0
    for i in range(shots):
        if i % 2 == 0:
            p0 = f0 * p_true + (1 - f1) * (1 - p_true)
            hits += rng.uniform() < p0
        else:
            p0 = f0 * (1 - p_true) + (1 - f1) * p_true
            hits += rng.uniform() >= p0
    m = hits / shots
    return float((m - (2.0 - f0 - f1) / 2.0) / slope)
