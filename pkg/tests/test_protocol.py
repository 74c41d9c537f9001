import math
from dataclasses import replace

import numpy as np
import pytest

from teleportsim import hilbert as hb
from teleportsim import protocol as pt


@pytest.fixture(scope="module")
def noiseless():
    return pt.make_config(noiseless=True)


@pytest.fixture(scope="module")
def experiment():
    return pt.make_config("conditional")


def _ideal_bsm():
    return pt.BsmModel((1.0, 1.0), (1.0, 1.0), policy="all")


def _psi(sign, labels):
    v = np.zeros(4, dtype=complex)
    v[1] = 1 / math.sqrt(2)
    v[2] = sign / math.sqrt(2)
    return hb.state_from_vector(v, (2, 2), labels)


def test_noiseless_identity_small(noiseless):
    rng = np.random.default_rng(0)
    for _ in range(10):
        v = rng.normal(size=2) + 1j * rng.normal(size=2)
        res = pt.run_teleportation_analytic(noiseless, v)
        assert res.fidelity >= 1 - 1e-9


def test_swap_perfect_bells_all_outcomes_and_signs():
    # Every Bell outcome and every herald-sign combination returns |Phi+>
    # after the frame correction; the teleported state is therefore
    # sign-independent.
    for s1 in (+1, -1):
        for s2 in (+1, -1):
            out = pt.entanglement_swap(
                _psi(s1, ("a", "m")), _psi(s2, ("cb", "cc")), _ideal_bsm(), (s1, s2)
            )
            assert len(out) == 4
            for _mc, prob, rho in out:
                assert prob == pytest.approx(0.25, abs=1e-12)
                assert hb.fidelity(rho, hb.bell_state(("a", "n"), "phi+")) == pytest.approx(
                    1.0, abs=1e-9
                )


def test_swap_werner_closed_form():
    # Werner inputs with ideal measurement compose as
    # F = F1 F2 + (1 - F1)(1 - F2)/3, to 1e-9.
    rng = np.random.default_rng(4)
    for _ in range(5):
        f1, f2 = rng.uniform(0.3, 1.0, size=2)
        bell = hb.bell_state(("x", "y"), "psi+").matrix
        w1 = f1 * bell + (1 - f1) * np.eye(4) / 4
        w2 = f2 * bell + (1 - f2) * np.eye(4) / 4
        rho1 = hb.QuantumState((2, 2), ("a", "m"), w1)
        rho2 = hb.QuantumState((2, 2), ("cb", "cc"), w2)
        big_f1 = f1 + (1 - f1) / 4  # Bell fidelity of the mixture
        big_f2 = f2 + (1 - f2) / 4
        want = big_f1 * big_f2 + (1 - big_f1) * (1 - big_f2) / 3
        for _mc, _p, rho in pt.entanglement_swap(rho1, rho2, _ideal_bsm()):
            assert hb.fidelity(rho, hb.bell_state(("a", "n"), "phi+")) == pytest.approx(
                want, abs=1e-9
            )


def test_swap_full_noise_teleporter(experiment):
    f = pt.teleporter_fidelity(experiment)
    assert f == pytest.approx(0.61, abs=0.03)


def test_phase_corrections_cancel():
    rng = np.random.default_rng(1)
    for _ in range(10):
        n = int(rng.integers(0, 2000))
        phi = rng.uniform(0, 0.5)
        u = hb.rotation_z(n * phi) @ pt.phase_correction(n, phi)
        assert np.allclose(u / u[0, 0], np.eye(2), atol=1e-12)
    with pytest.raises(pt.ProtocolError):
        pt.phase_correction(-1, 0.1)


def test_uncompensated_phase_scrambles_coherence():
    # Stored |+> averaged over a uniform attempt count 1..1000 with the
    # pickup left uncorrected: coherence shrinks to the closed-form
    # |sum exp(i n phi)| / N.
    phi = 0.3
    ns = np.arange(1, 1001)
    expect = abs(np.exp(1j * phi * ns).sum()) / 1000
    plus = hb.qubit("m", hb.KET_PLUS)
    acc = np.zeros((2, 2), dtype=complex)
    for n in ns:
        acc += hb.apply_unitary(plus, hb.rotation_z(n * phi), ["m"]).matrix / 1000
    coh = 2 * abs(acc[0, 1])
    assert coh == pytest.approx(expect, abs=1e-12)
    assert coh < 0.01


def test_generate_link_geometric_oracle():
    hl = pt.build_heralded(pt.make_config("conditional").link_ab)
    p = 8.5e-4
    fake = replace(hl, p_plus=p / 2, p_minus=p / 2)
    rng = np.random.default_rng(11)
    draws = np.array([pt.generate_link(fake, 10**7, rng)[2] for _ in range(20000)])
    se = (1 / p) / math.sqrt(len(draws))
    assert abs(draws.mean() - 1 / p) < 3 * se


def test_generate_link_limits():
    hl = pt.build_heralded(pt.make_config(noiseless=True).link_ab)
    rng = np.random.default_rng(0)
    sure = replace(hl, p_plus=1.0, p_minus=0.0)
    assert pt.generate_link(sure, 10, rng)[2] == 1
    never = replace(hl, p_plus=0.0, p_minus=0.0)
    sign, rho, n = pt.generate_link(never, 50, rng)
    assert sign is None and rho is None and n == 50


def test_accept_probability_closed_form(noiseless):
    # Abort probability = 1 - product of the stage acceptance factors.
    cfg = replace(
        noiseless,
        bob_bsm=replace(noiseless.bob_bsm, accept_fraction=0.88, cr_pass=0.95),
        charlie_bsm=replace(
            noiseless.charlie_bsm, accept_fraction=0.88, cr_pass=0.95, policy="comm0"
        ),
    )
    res = pt.run_teleportation_analytic(cfg, "+z")
    p_bc = pt.build_heralded(cfg.link_bc).p_success
    p_timeout_ok = 1 - (1 - p_bc) ** cfg.timeout
    closed = p_timeout_ok * (0.88 * 0.95) ** 2 * 0.25
    assert res.accept_probability == pytest.approx(closed, abs=1e-6)


def test_message_bus_ordering():
    bus = pt.MessageBus()
    with pytest.raises(pt.ProtocolError):
        bus.receive("charlie", "alice")
    bus.send("charlie", "alice", bsm=(0, 1))
    bus.send("charlie", "alice", bsm=(1, 1))
    assert bus.receive("charlie", "alice")["bsm"] == (0, 1)
    assert bus.receive("charlie", "alice")["bsm"] == (1, 1)
    assert [m.payload["bsm"] for m in bus.log] == [(0, 1), (1, 1)]


def test_mc_shot_records(experiment):
    rng = np.random.default_rng(5)
    seen_abort = set()
    for _ in range(400):
        out = pt.run_teleportation_shot(experiment, "+x", rng)
        if out.aborted:
            seen_abort.add(out.aborted)
        else:
            assert out.rho is not None
            assert out.bsm_bob is not None and out.bsm_charlie is not None
            assert out.attempts_bc <= experiment.timeout
            assert out.duration_s > 0
    assert "bc_timeout" in seen_abort


def test_mc_matches_analytic(experiment):
    rng = np.random.default_rng(21)
    fids = []
    for _ in range(25000):
        out = pt.run_teleportation_shot(experiment, "+y", rng)
        if out.aborted is None:
            fids.append(out.fidelity)
    fids = np.array(fids)
    se = fids.std(ddof=1) / math.sqrt(len(fids))
    ana = pt.run_teleportation_analytic(experiment, "+y").fidelity
    assert abs(fids.mean() - ana) < 4 * se


def test_per_outcome_ordering(experiment):
    table = pt.per_bsm_outcome_fidelity(experiment)
    assert table[(0, 0)] > table[(0, 1)]
    assert table[(1, 0)] > table[(1, 1)]


def test_per_outcome_symmetric_readout_spread(experiment):
    sym = replace(
        experiment,
        charlie_bsm=replace(
            experiment.charlie_bsm, comm_fidelities=(0.955, 0.955), memory_fidelities=(0.98, 0.98)
        ),
    )
    table = pt.per_bsm_outcome_fidelity(sym)
    vals = list(table.values())
    assert max(vals) - min(vals) < 0.005


def test_no_feedforward(noiseless, experiment):
    assert pt.no_feedforward_fidelity(noiseless) == pytest.approx(0.5, abs=1e-9)
    assert pt.no_feedforward_fidelity(experiment) == pytest.approx(0.50, abs=0.01)


def test_unconditional_below_conditional(experiment):
    uncond = pt.make_config("unconditional")
    diff = pt.average_fidelity(experiment) - pt.average_fidelity(uncond)
    assert 0.01 <= diff <= 0.05


def test_tomography_estimator():
    rng = np.random.default_rng(8)
    rho = hb.qubit("alice", hb.KET0)
    assert pt.tomography(rho, "+z", (1.0, 1.0), rng, shots=100) == pytest.approx(1.0)
    mixed = hb.maximally_mixed("alice")
    est = pt.tomography(mixed, "+x", (0.93, 0.995), rng, shots=200000)
    assert est == pytest.approx(0.5, abs=0.01)


def test_tomography_unbiased_at_true_fidelity():
    rng = np.random.default_rng(9)
    target = hb.CARDINAL_STATES["+x"]
    rho = hb.QuantumState((2,), ("alice",), 0.7 * np.outer(target, target.conj()) + 0.3 * np.eye(2) / 2)
    true_f = hb.fidelity(rho, target)
    est = pt.tomography(rho, "+x", (0.93, 0.995), rng, shots=100000)
    slope = 0.93 + 0.995 - 1
    se = math.sqrt(0.25 / 100000) / slope
    assert abs(est - true_f) < 3 * se


def test_bad_config_rejected():
    with pytest.raises(pt.ProtocolError):
        pt.make_config("sideways")
    with pytest.raises(pt.ProtocolError):
        pt.BsmModel((1, 1), (1, 1), policy="whenever")
    with pytest.raises(pt.ProtocolError):
        pt.make_config(noiseless=True, timeout=0)
    with pytest.raises(pt.ProtocolError):
        pt.make_config(noiseless=True, frame_bob="diagonal")
