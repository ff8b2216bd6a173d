import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from mucvqkd.errors import WeightOutOfRange
from mucvqkd.lossonly import kj_coefficients
from mucvqkd.protocol import ChannelSpec, ProtocolSpec
from mucvqkd.qmath import displacement_matrix
from mucvqkd.sdpengine import (
    CutoffSpec,
    DisplacedFrame,
    NetworkSpec,
    build_observables,
    build_projection,
    build_region_operators,
    build_rho_A,
    compute_weight,
    delta_correction,
)
from mucvqkd.sdpengine.frame import simulated_state
from mucvqkd.sdpengine.operators import displaced_number_ops, observable_bounds, weight_certificate_min_eig

# --- region operators --------------------------------------------------------


@pytest.mark.parametrize("delta_r", [0.0, 0.3, 0.8])
def test_region_operators_complete(delta_r):
    ops = build_region_operators(ProtocolSpec.psk(1.0, delta_r=delta_r), 30)
    assert np.max(np.abs(sum(ops) - np.eye(31))) < 1e-10
    for op in ops:
        assert np.linalg.eigvalsh(op)[0] > -1e-12


def test_region_diagonal_is_quarter_without_postselection():
    ops = build_region_operators(ProtocolSpec.psk(1.0), 20)
    for op in ops[:4]:
        assert np.allclose(np.diag(op).real, 0.25, atol=1e-14)
    assert np.allclose(ops[4], 0)


def test_region_entry_against_phase_space_quadrature():
    # <0|R^1|4> = (1/pi) int_{wedge 1, r > r0} exp(-r^2) r^4 exp(-4 i theta) / sqrt(4!) r dr dtheta
    r0 = 0.3
    op = build_region_operators(ProtocolSpec.psk(1.0, delta_r=r0), 8)[1]

    def part(fn):
        return integrate.dblquad(
            lambda r, th: fn(th) * math.exp(-r * r) * r**5 / math.sqrt(24) / math.pi,
            math.pi / 4,
            3 * math.pi / 4,
            r0,
            15,
            epsabs=1e-13,
        )[0]

    exact = part(lambda th: math.cos(4 * th)) - 1j * part(lambda th: math.sin(4 * th))
    assert abs(op[0, 4] - exact) < 1e-10


# --- projection and observables ----------------------------------------------


@pytest.mark.parametrize("beta", [0.0, 0.5, 0.9 - 0.4j])
def test_projection_idempotent_and_commutes_with_number(beta):
    n_f = 60
    proj = build_projection(beta, 1, CutoffSpec(3), n_f=n_f)
    num, num_sq = displaced_number_ops(beta, n_f)
    # the top of the ambient space suffers from truncation; compare on the low block
    low = slice(0, 30)
    assert np.max(np.abs((proj @ proj - proj)[low, low])) < 1e-8
    assert np.max(np.abs((proj @ num - num @ proj)[low, low])) < 1e-8
    assert np.max(np.abs((proj @ num_sq - num_sq @ proj)[low, low])) < 1e-8


def test_two_mode_projection_is_product():
    proj = build_projection(0.4, 2, CutoffSpec(2), n_f=25)
    single = build_projection(0.4, 1, CutoffSpec(2), n_f=25)
    assert np.allclose(proj, np.kron(single, single))


def _fock_thermal(n_th, n_f):
    n = np.arange(n_f + 1)
    return np.diag(n_th**n / (1 + n_th) ** (n + 1))


def test_moment_bounds_against_fock_state():
    # displaced thermal output at eta = 0.5, xi = 0.02, built in a 60-photon Fock space
    eta, xi, n_f = 0.5, 0.02, 60
    spec, ch = ProtocolSpec.psk(0.9), ChannelSpec(eta, xi)
    net = NetworkSpec(1, 1)
    n_th = eta * xi
    for i, a in enumerate(spec.amplitudes):
        d = displacement_matrix(math.sqrt(eta) * a, n_f)
        rho = d @ _fock_thermal(n_th, n_f) @ d.conj().T
        for center in (math.sqrt(eta) * a, math.sqrt(eta) * a + 0.3 - 0.1j):
            centers = [math.sqrt(eta) * b for b in spec.amplitudes]
            centers[i] = center
            gam, gam_sq = observable_bounds(spec, ch, net, np.array(centers))
            num, num_sq = displaced_number_ops(center, n_f)
            assert np.trace(rho @ num).real == pytest.approx(gam[i, 0], abs=1e-9)
            assert np.trace(rho @ num_sq).real == pytest.approx(gam_sq[i, 0], abs=1e-9)


def test_observable_operators_reproduce_bounds_on_channel_output():
    spec, ch = ProtocolSpec.psk(0.7), ChannelSpec(0.6, 0.01)
    n_f = 40
    obs = build_observables(spec, ch, NetworkSpec(1, 1), CutoffSpec(3), with_operators=True, n_f=n_f)
    assert len(obs) == 2 * spec.n_states
    # classical-quantum output sum_i p_i |i><i| (x) rho_i has Tr[rho Gamma] = Tr[rho_i n^k]
    n_th = ch.thermal_occupation()
    blocks = []
    for a in spec.amplitudes:
        d = displacement_matrix(math.sqrt(0.6) * a, n_f)
        blocks.append(d @ _fock_thermal(n_th, n_f) @ d.conj().T)
    rho = np.zeros((4 * (n_f + 1),) * 2, dtype=complex)
    for i, b in enumerate(blocks):
        rho[i * (n_f + 1) : (i + 1) * (n_f + 1), i * (n_f + 1) : (i + 1) * (n_f + 1)] = 0.25 * b
    for o in obs:
        assert np.trace(rho @ o.operator).real == pytest.approx(o.bound, abs=1e-9)


# --- weight ------------------------------------------------------------------


def test_weight_single_bob_example():
    w = compute_weight([1.0] * 4, [1.01] * 4, 7, [0.25] * 4)
    assert w == pytest.approx(0.01 / 56, rel=1e-12)


def test_weight_out_of_range():
    with pytest.raises(WeightOutOfRange):
        compute_weight([1.0] * 4, [20.0] * 4, 3, [0.25] * 4)


@given(st.floats(0.0, 0.5), st.integers(2, 7))
def test_weight_bounds_true_tail(n_th, n_c):
    # thermal tail beyond n_c never exceeds the moment-based bound
    g, g2 = n_th, 2 * n_th**2 + n_th
    tail = (n_th / (1 + n_th)) ** (n_c + 1)
    assert tail <= compute_weight([g] * 4, [g2] * 4, n_c, [0.25] * 4) + 1e-15


@pytest.mark.parametrize("n_c,m", [(3, 1), (3, 2), (7, 1)])
def test_union_multipliers_certificate(n_c, m):
    assert weight_certificate_min_eig(n_c, m, rule="union") >= -1e-9


def test_per_bob_scaled_multipliers_break_for_two_bobs():
    # |n_c + 1, 0> sees only half the single-Bob penalty
    assert weight_certificate_min_eig(3, 1, rule="per_bob") >= -1e-9
    assert weight_certificate_min_eig(3, 2, rule="per_bob") == pytest.approx(-0.5, abs=1e-12)


def test_delta_correction_example():
    s = 0.1
    h = -(s / 1.1) * math.log2(s / 1.1) - (1 / 1.1) * math.log2(1 / 1.1)
    assert delta_correction(0.01) == pytest.approx(2 * s + 1.1 * h, abs=1e-14)
    assert delta_correction(0.0) == 0.0
    with pytest.raises(ValueError):
        delta_correction(1.0)


# --- Alice's state and the displaced frame -----------------------------------


@given(st.floats(0.05, 3.0))
def test_rho_a_spectrum_is_kj(alpha):
    ev = np.sort(np.linalg.eigvalsh(build_rho_A(ProtocolSpec.psk(alpha))))
    assert np.allclose(ev, np.sort(kj_coefficients(alpha)), atol=1e-12)


@pytest.fixture(scope="module")
def two_bob_frame():
    return DisplacedFrame(ProtocolSpec.psk(0.8, delta_r=0.2), ChannelSpec(0.5, 0.01), NetworkSpec(3, 2), CutoffSpec(2))


def test_frame_partial_trace_adjoint(two_bob_frame):
    fr = two_bob_frame
    rng = np.random.default_rng(4)
    rho = rng.standard_normal((fr.dim, fr.dim)) + 1j * rng.standard_normal((fr.dim, fr.dim))
    y = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    lhs = np.vdot(y, fr.partial_trace_B(rho))
    rhs = np.vdot(fr.partial_trace_B_adjoint(y), rho)
    assert abs(lhs - rhs) < 1e-10


def test_simulated_state_reproduces_rho_a(two_bob_frame):
    fr = two_bob_frame
    rho_a = build_rho_A(fr.spec)
    sim = simulated_state(fr, rho_a)
    assert np.allclose(fr.partial_trace_B(sim), rho_a, atol=1e-12)
    assert np.linalg.eigvalsh(sim)[0] > -1e-12


def test_frame_regions_close_to_identity():
    fr = DisplacedFrame(ProtocolSpec.psk(0.9, delta_r=0.3), ChannelSpec(0.6), NetworkSpec(1, 1), CutoffSpec(5))
    assert fr.distance_error() < 1e-10
    assert fr.n_f >= fr.cutoff.n_c + 12


def test_frame_overlap_blocks_match_ambient_compression():
    spec, ch = ProtocolSpec.psk(0.8), ChannelSpec(0.5)
    fr = DisplacedFrame(spec, ch, NetworkSpec(1, 1), CutoffSpec(3))
    cols = [displacement_matrix(c, 50)[:, :4] for c in fr.centers]
    for a in range(4):
        for b in range(4):
            assert np.allclose(fr.overlaps[a, b], cols[a].conj().T @ cols[b], atol=1e-12)
