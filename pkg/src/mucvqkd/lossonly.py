"""Analytical key rates for the loss-only (pure-loss, beamsplitter attack) channel.

Two routes to Eve's Holevo information are provided and must agree:

* ``holevo_direct`` writes Eve's multi-port coherent state in the orthonormal
  congruence-class frame {|b_z>} (coefficients ``c_z``), so every conditional
  state is an N_St x N_St matrix.
* ``holevo_reduced`` first combines all of Eve's ports into one mode of
  amplitude sqrt(1 - M_B eta / N_B) alpha_x and diagonalises Gram matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import protocol
from .errors import DegenerateConditioning, NonPSKConstellation
from .protocol import ChannelSpec, JointDistribution, ProtocolSpec
from .qmath import entropy_from_eigenvalues, gram_mixture_spectrum

SERIES_TOL = 1e-15


# ---------------------------------------------------------------------------
# trust scenarios


@dataclass(frozen=True)
class TrustScenario:
    """Which Bobs are trusted, and whether trusted Bobs must stay private from each other.

    ``some_trusted`` covers scenarios a) (m_trusted = 1), b) and c)
    (m_trusted = n_bobs). ``fully_private`` is scenario d).
    """

    kind: str
    m_trusted: int

    SOME_TRUSTED = "some_trusted"
    FULLY_PRIVATE = "fully_private"

    def __post_init__(self):
        if self.kind not in (self.SOME_TRUSTED, self.FULLY_PRIVATE):
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.m_trusted < 1:
            raise ValueError("at least one Bob must be trusted")

    @classmethod
    def some_trusted(cls, m: int) -> "TrustScenario":
        return cls(cls.SOME_TRUSTED, m)

    @classmethod
    def fully_private(cls, m: int) -> "TrustScenario":
        return cls(cls.FULLY_PRIVATE, m)

    @classmethod
    def from_label(cls, label: str, n_bobs: int, m_trusted: Optional[int] = None) -> "TrustScenario":
        """Build from the letters a-d used for the four trust levels."""
        label = label.lower()
        if label == "a":
            return cls.some_trusted(1)
        if label == "c":
            return cls.some_trusted(n_bobs)
        if label == "b":
            return cls.some_trusted(m_trusted if m_trusted is not None else max(1, n_bobs // 2))
        if label == "d":
            return cls.fully_private(m_trusted if m_trusted is not None else n_bobs)
        raise ValueError(f"unknown trust scenario {label!r}")

    def validate(self, n_bobs: int) -> None:
        if self.m_trusted > n_bobs:
            raise ValueError(f"m_trusted={self.m_trusted} exceeds n_bobs={n_bobs}")


@dataclass(frozen=True)
class LossOnlyRate:
    """Key rate per channel use and its ingredients (all in bits)."""

    rate: float
    alpha_opt: float
    holevo: float
    mi_ab: float
    mi_bb_max: float = 0.0
    beta_rec: float = 0.95
    p_pass: float = 1.0

    @property
    def rate_clamped(self) -> float:
        return max(self.rate, 0.0)


# ---------------------------------------------------------------------------
# congruence-class coefficients


def kj_coefficients(beta_mag: float, n_states: int = 4, tol: float = SERIES_TOL) -> np.ndarray:
    """Poisson weight of each photon-number class modulo ``n_states``.

    k_j = exp(-|b|^2) sum_s |b|^(2(N s + j)) / (N s + j)!
    """
    if beta_mag < 0 or tol <= 0:
        raise ValueError("beta_mag must be >= 0 and tol > 0")
    x = float(beta_mag) ** 2
    k = [0.0] * n_states
    term = math.exp(-x)
    n = 0
    while True:
        k[n % n_states] += term
        n += 1
        term *= x / n
        # geometric majorant of the remaining tail once terms decrease
        if n + 1 > x:
            ratio = x / (n + 1)
            if term / (1 - ratio) < tol:
                break
        if term == 0.0:
            break
    return np.asarray(k)


def _cyclic_convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = len(a)
    out = np.zeros(n)
    for i in range(n):
        out += a[i] * np.roll(b, i)
    return out


def _cyclic_power(k: np.ndarray, power: int) -> np.ndarray:
    result = np.zeros_like(k)
    result[0] = 1.0
    base = k.copy()
    while power:
        if power & 1:
            result = _cyclic_convolve(result, base)
        base = _cyclic_convolve(base, base)
        power >>= 1
    return result


def cz_coefficients(k: np.ndarray, n_bobs: int) -> np.ndarray:
    """c_z = sqrt of entry z of the n_bobs-fold cyclic self-convolution of k.

    Binary powering keeps every intermediate a probability vector, so the
    result stays normalised for n_bobs in the thousands.
    """
    if n_bobs < 1:
        raise ValueError("n_bobs must be >= 1")
    return np.sqrt(np.clip(_cyclic_power(np.asarray(k, dtype=float), n_bobs), 0.0, None))


def eve_port_magnitudes(alpha_mag: float, eta: float, n_bobs: int, m_trusted: int) -> list[float]:
    """Magnitudes of Eve's coherent-state shares under the beamsplitter attack.

    One tap per trusted link, sqrt((1 - eta) / N_B) |alpha| each, plus one
    port sqrt(1 - M_B / N_B) |alpha| holding all untrusted outputs.
    """
    mags = [math.sqrt((1 - eta) / n_bobs) * alpha_mag] * m_trusted
    if m_trusted < n_bobs:
        mags.append(math.sqrt(1 - m_trusted / n_bobs) * alpha_mag)
    return mags


def eve_coefficients(alpha_mag: float, eta: float, n_bobs: int, m_trusted: int, n_states: int = 4) -> np.ndarray:
    """c_z for Eve's joint state over all her ports (ports may differ in magnitude)."""
    mags = eve_port_magnitudes(alpha_mag, eta, n_bobs, m_trusted)
    same = [m for m in mags if m == mags[0]]
    conv = _cyclic_power(kj_coefficients(mags[0], n_states), len(same))
    for m in mags[len(same) :]:
        conv = _cyclic_convolve(conv, kj_coefficients(m, n_states))
    return np.sqrt(np.clip(conv, 0.0, None))


def eve_state_vectors(c: np.ndarray, spec: ProtocolSpec) -> np.ndarray:
    """Rows are Eve's states |Psi_x> in the orthonormal frame {|b_z>}.

    Component z of row x is c_z exp(i (2 pi x / N) z).
    """
    if not spec.is_psk():
        raise NonPSKConstellation("the congruence-class frame needs a PSK constellation")
    n = spec.n_states
    x = np.arange(n)[:, None]
    z = np.arange(n)[None, :]
    return np.asarray(c)[None, :] * np.exp(2j * np.pi * x * z / n)


# ---------------------------------------------------------------------------
# Holevo quantities


def _conditional_weights(joint: JointDistribution):
    kept = joint.kept
    p_pass = kept.sum()
    pz = kept.sum(axis=0) / p_pass
    if np.any(pz < 1e-15):
        raise DegenerateConditioning(f"key symbol probabilities {pz} include (near) zero")
    px_given_z = kept / kept.sum(axis=0, keepdims=True)
    px_pass = kept.sum(axis=1) / p_pass
    return pz, px_given_z, px_pass


def _holevo_from_states(psi: np.ndarray, joint: JointDistribution) -> float:
    pz, px_given_z, px_pass = _conditional_weights(joint)

    def entropy(weights):
        rho = (psi.T * weights) @ psi.conj()
        return entropy_from_eigenvalues(np.linalg.eigvalsh((rho + rho.conj().T) / 2))

    chi = entropy(px_pass) - sum(pz[j] * entropy(px_given_z[:, j]) for j in range(len(pz)))
    return max(chi, 0.0)


def holevo_direct(
    spec: ProtocolSpec, eta: float, n_bobs: int, joint: JointDistribution, m_trusted: Optional[int] = None
) -> float:
    """Eve's Holevo information about the kept key symbol, via the {|b_z>} frame.

    Conditional states use the kept-symbol distribution (discards excluded).
    """
    m_trusted = n_bobs if m_trusted is None else m_trusted
    c = eve_coefficients(abs(spec.amplitudes[0]), eta, n_bobs, m_trusted, spec.n_states)
    return _holevo_from_states(eve_state_vectors(c, spec), joint)


def reduce_to_single_bob(eta: float, n_bobs: int, m_trusted: int, alpha: complex = 1.0):
    """Eve's single-mode amplitude after combining all her ports, with the combiner weights.

    Returns ``(amplitude, a, b)`` where ``a`` weights the untrusted-output port
    and ``b`` the taps on trusted links (split evenly, b / sqrt(M_B) each).
    """
    if not 1 <= m_trusted <= n_bobs:
        raise ValueError("need 1 <= m_trusted <= n_bobs")
    # dividing by n_bobs / m_trusted keeps both endpoints exact in floating point
    amp = math.sqrt(1 - eta / (n_bobs / m_trusted)) * alpha
    denom = n_bobs - m_trusted * eta
    if denom == 0:  # eta = 1 and everyone trusted: Eve holds vacuum
        return amp, 0.0, 1.0
    a = math.sqrt((n_bobs - m_trusted) / denom)
    b = math.sqrt(m_trusted * (1 - eta) / denom)
    return amp, a, b


def holevo_reduced(spec: ProtocolSpec, eta: float, n_bobs: int, m_trusted: int, joint: JointDistribution) -> float:
    """Holevo information with Eve reduced to a single coherent-state mode.

    Works for any discrete constellation; cost does not depend on ``n_bobs``.
    """
    factor = reduce_to_single_bob(eta, n_bobs, m_trusted)[0]
    amps = [factor * a for a in spec.amplitudes]
    pz, px_given_z, px_pass = _conditional_weights(joint)
    h_e = entropy_from_eigenvalues(gram_mixture_spectrum(amps, px_pass / px_pass.sum()))
    h_cond = sum(
        pz[j] * entropy_from_eigenvalues(gram_mixture_spectrum(amps, px_given_z[:, j] / px_given_z[:, j].sum()))
        for j in range(len(pz))
    )
    return max(h_e - h_cond, 0.0)


def eve_amplitude_ratio(eta: float, n_bobs: int) -> float:
    """Ratio of Eve's amplitude with all Bobs trusted to that with only one trusted."""
    return math.sqrt((1 - eta) / (1 - eta / n_bobs))


# ---------------------------------------------------------------------------
# rates


def dw_rate(
    scenario: TrustScenario,
    spec: ProtocolSpec,
    eta: float,
    n_bobs: int,
    beta_rec: float = 0.95,
    engine: str = "reduced",
) -> LossOnlyRate:
    """Devetak-Winter rate between Alice and one trusted Bob on a loss-only channel.

    Scenarios a)-c): beta I(A:B_j) - chi. Scenario d): the subtracted term is
    the larger of chi and the best other trusted Bob's mutual information with
    B_j. Both I and chi are per channel use (multiplied by the pass probability).
    """
    scenario.validate(n_bobs)
    ch = ChannelSpec(eta=eta)
    split = 1 / math.sqrt(n_bobs)
    joint = protocol.joint_distribution(spec, ch, split)
    p_pass = joint.pass_probability
    mi_ab = protocol.mutual_information(joint, drop_discard=True)
    if engine == "reduced":
        chi = holevo_reduced(spec, eta, n_bobs, scenario.m_trusted, joint)
    elif engine == "direct":
        chi = holevo_direct(spec, eta, n_bobs, joint, m_trusted=scenario.m_trusted)
    else:
        raise ValueError(f"unknown engine {engine!r}")
    holevo = p_pass * chi
    mi_bb = 0.0
    if scenario.kind == TrustScenario.FULLY_PRIVATE and scenario.m_trusted > 1:
        mi_bb = protocol.mutual_information(protocol.bob_bob_joint(spec, ch, split), drop_discard=True)
    rate = beta_rec * mi_ab - max(holevo, mi_bb)
    return LossOnlyRate(
        rate=rate,
        alpha_opt=abs(spec.amplitudes[0]),
        holevo=holevo,
        mi_ab=mi_ab,
        mi_bb_max=mi_bb,
        beta_rec=beta_rec,
        p_pass=p_pass,
    )


# ---------------------------------------------------------------------------
# amplitude optimisation

INV_PHI = (math.sqrt(5) - 1) / 2


@dataclass(frozen=True)
class AlphaOptimum:
    alpha: float
    value: float
    at_boundary: bool


def golden_section_max(fn: Callable[[float], float], lo: float, hi: float, tol: float = 1e-4) -> tuple[float, float]:
    """Maximise a unimodal ``fn`` on [lo, hi] by golden-section search."""
    a, b = lo, hi
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = fn(d)
    x = (a + b) / 2
    return x, fn(x)


def optimize_alpha(
    rate_fn: Callable[[float], float], lo: float = 0.3, hi: float = 5.0, tol: float = 1e-4, n_scan: int = 20
) -> AlphaOptimum:
    """Maximise ``rate_fn`` over the amplitude interval [lo, hi].

    A coarse ``n_scan``-point pre-scan picks the bracket around the best grid
    point, then golden-section search refines it. The result is flagged when
    the optimum sits on an end of the interval.
    """
    if not lo < hi:
        raise ValueError("need lo < hi")
    grid = np.linspace(lo, hi, n_scan)
    values = np.array([rate_fn(float(a)) for a in grid])
    best = int(np.argmax(values))
    a = grid[max(best - 1, 0)]
    b = grid[min(best + 1, n_scan - 1)]
    x, fx = golden_section_max(rate_fn, float(a), float(b), tol)
    if values[best] > fx:
        x, fx = float(grid[best]), float(values[best])
    at_boundary = x - lo <= tol or hi - x <= tol
    return AlphaOptimum(float(x), float(fx), at_boundary)


def optimal_rate(
    scenario: TrustScenario,
    eta: float,
    n_bobs: int,
    beta_rec: float = 0.95,
    n_states: int = 4,
    delta_r: float = 0.0,
    lo: float = 0.3,
    hi: Optional[float] = None,
    tol: float = 1e-4,
) -> LossOnlyRate:
    """Best loss-only rate over the PSK amplitude.

    The default interval is [0.3, 5], or [0.3, 10] for the fully private scenario.
    """
    if hi is None:
        hi = 10.0 if scenario.kind == TrustScenario.FULLY_PRIVATE else 5.0

    def rate_at(alpha: float) -> LossOnlyRate:
        return dw_rate(scenario, ProtocolSpec.psk(alpha, n_states, delta_r), eta, n_bobs, beta_rec)

    opt = optimize_alpha(lambda a: rate_at(a).rate, lo, hi, tol)
    return rate_at(opt.alpha)
