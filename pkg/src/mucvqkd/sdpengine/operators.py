"""Operators for the dimension-reduced key-rate problem.

Operators here live in the ambient Fock space (cutoff ``n_f`` per mode) unless
noted. The solver itself works in the displaced frame built by
:mod:`mucvqkd.sdpengine.frame`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce
from typing import Optional, Sequence

import numpy as np
from scipy import special

from ..errors import WeightOutOfRange
from ..protocol import ChannelSpec, ProtocolSpec
from ..qmath import binary_entropy, coherent_gram, displacement_matrix

AMBIENT_MARGIN = 12


@dataclass(frozen=True)
class CutoffSpec:
    """Reduction cutoff ``n_c`` (photon numbers 0..n_c kept per Bob) and ambient Fock cutoff ``n_f``."""

    n_c: int = 7
    n_f: Optional[int] = None

    def __post_init__(self):
        if self.n_c < 1:
            raise ValueError("n_c must be >= 1")
        if self.n_f is not None and self.n_f < self.n_c:
            raise ValueError("ambient cutoff n_f must be >= n_c")

    def ambient(self, beta_max: float = 0.0) -> int:
        """Ambient cutoff to use for displacements up to ``beta_max``."""
        if self.n_f is not None:
            return self.n_f
        return self.n_c + AMBIENT_MARGIN + math.ceil(4 * beta_max**2)

    def truncation_risk(self, beta_max: float) -> bool:
        return self.ambient(beta_max) < self.n_c + math.ceil(4 * beta_max**2)

    @property
    def dim(self) -> int:
        return self.n_c + 1


def kron_all(ops: Sequence[np.ndarray]) -> np.ndarray:
    return reduce(np.kron, ops)


def embed(op: np.ndarray, position: int, n_modes: int) -> np.ndarray:
    """``op`` on mode ``position`` of ``n_modes`` identical modes, identity elsewhere."""
    eye = np.eye(op.shape[0])
    return kron_all([op if k == position else eye for k in range(n_modes)])


# ---------------------------------------------------------------------------
# key-map region operators


def _angular_factor(dn: np.ndarray, lo: float, hi: float) -> np.ndarray:
    out = np.empty(dn.shape, dtype=complex)
    zero = dn == 0
    out[zero] = hi - lo
    k = dn[~zero]
    out[~zero] = (np.exp(1j * k * hi) - np.exp(1j * k * lo)) / (1j * k)
    return out


def _radial_factor(m: np.ndarray, n: np.ndarray, r_min: float) -> np.ndarray:
    # int_{r_min}^inf r^(m+n+1) e^(-r^2) dr / sqrt(m! n!) = Gamma(s, r_min^2) / (2 sqrt(m! n!)), s = (m+n)/2 + 1
    s = (m + n) / 2 + 1
    log_norm = special.gammaln(s) - 0.5 * (special.gammaln(m + 1) + special.gammaln(n + 1))
    upper = special.gammaincc(s, r_min**2) if r_min > 0 else 1.0
    return 0.5 * upper * np.exp(log_norm)


def build_region_operators(spec: ProtocolSpec, n_f: int) -> list[np.ndarray]:
    """Coarse-grained heterodyne POVM (1/pi) int_{A_z} |zeta><zeta| d^2 zeta in the Fock basis.

    Returns one operator per key symbol z = 0..N-1 and the discard operator
    last. Matrix elements factor into an angular integral of exp(i(m-n)theta)
    over the wedge and a radial incomplete-gamma integral.
    """
    n = spec.n_states
    idx = np.arange(n_f + 1)
    m_grid, n_grid = np.meshgrid(idx, idx, indexing="ij")
    radial = _radial_factor(m_grid, n_grid, spec.delta_r)
    half = math.pi / n
    ops = []
    for z in range(n):
        angular = _angular_factor(m_grid - n_grid, (2 * z - 1) * half, (2 * z + 1) * half)
        op = angular * radial / math.pi
        ops.append((op + op.conj().T) / 2)
    disc = np.diag(special.gammainc(idx + 1, spec.delta_r**2) if spec.delta_r > 0 else np.zeros(n_f + 1))
    ops.append(disc.astype(complex))
    return ops


# ---------------------------------------------------------------------------
# cutoff projection and observables


def displaced_projector(beta: complex, n_c: int, n_f: int) -> np.ndarray:
    """sum_{n <= n_c} D(beta)|n><n|D(beta)^dag on the ambient space."""
    d = displacement_matrix(beta, n_f)
    cols = d[:, : n_c + 1]
    return cols @ cols.conj().T


def build_projection(beta: complex, m_trusted: int, cutoff: CutoffSpec, n_f: Optional[int] = None) -> np.ndarray:
    """Tensor product over the trusted Bobs of the displaced-number-state projector."""
    n_f = cutoff.ambient(abs(beta)) if n_f is None else n_f
    single = displaced_projector(beta, cutoff.n_c, n_f)
    return kron_all([single] * m_trusted)


def displaced_number_ops(beta: complex, n_f: int) -> tuple[np.ndarray, np.ndarray]:
    """(n_beta, n_beta^2) = D(beta) n^k D(beta)^dag on the ambient space."""
    d = displacement_matrix(beta, n_f)
    n = np.arange(n_f + 1, dtype=float)
    num = (d * n) @ d.conj().T
    num_sq = (d * n**2) @ d.conj().T
    return num, num_sq


def displaced_thermal_moments(offset: complex, n_th: float) -> tuple[float, float]:
    """<n> and <n^2> of D(offset) rho_th(n_th) D(offset)^dag."""
    s = abs(offset) ** 2
    mean = s + n_th
    var = n_th * (n_th + 1) + s * (2 * n_th + 1)
    return mean, var + mean**2


@dataclass(frozen=True)
class NetworkSpec:
    """Star network: ``n_bobs`` receivers of which ``m_trusted`` take part in the optimisation."""

    n_bobs: int = 1
    m_trusted: int = 1

    def __post_init__(self):
        if not 1 <= self.m_trusted <= self.n_bobs:
            raise ValueError("need 1 <= m_trusted <= n_bobs")

    @property
    def split(self) -> float:
        return 1 / math.sqrt(self.n_bobs)


def projection_centers(spec: ProtocolSpec, channel: ChannelSpec, network: NetworkSpec) -> np.ndarray:
    """beta_i = sqrt(eta_eff / N_B) alpha_i: the coherent amplitude each trusted Bob expects."""
    return network.split * math.sqrt(channel.eta_eff) * np.asarray(spec.amplitudes)


def observable_bounds(spec: ProtocolSpec, channel: ChannelSpec, network: NetworkSpec, centers=None):
    """Upper bounds gamma[i, k], gamma_sq[i, k] on <n_beta_i>, <n_beta_i^2> at Bob k.

    The received state is displaced thermal with mean sqrt(eta_eff / N_B) alpha_i
    and occupation ``channel.thermal_occupation(split)``.
    """
    centers = projection_centers(spec, channel, network) if centers is None else np.asarray(centers)
    n_th = channel.thermal_occupation(network.split)
    means = projection_centers(spec, channel, network)
    gam = np.empty((spec.n_states, network.m_trusted))
    gam_sq = np.empty_like(gam)
    for i in range(spec.n_states):
        g, g2 = displaced_thermal_moments(means[i] - centers[i], n_th)
        gam[i, :] = g
        gam_sq[i, :] = g2
    return gam, gam_sq


@dataclass
class Observable:
    """One moment constraint Tr[rho op] <= bound, with op = |i><i|_A (x) (n_beta_i^power)_{B_k} / p_i."""

    state: int
    bob: int
    power: int
    bound: float
    operator: Optional[np.ndarray] = None


def build_observables(
    spec: ProtocolSpec,
    channel: ChannelSpec,
    network: NetworkSpec,
    cutoff: CutoffSpec,
    with_operators: bool = False,
    n_f: Optional[int] = None,
) -> list[Observable]:
    """Moment constraints for every (state i, trusted Bob k, power 1 or 2).

    With ``with_operators`` the full ambient-space operators on
    A (x) B_1 (x) ... (x) B_M are attached; they are large, so the solver
    does without them.
    """
    centers = projection_centers(spec, channel, network)
    gam, gam_sq = observable_bounds(spec, channel, network, centers)
    n_f = cutoff.ambient(float(np.max(np.abs(centers)))) if n_f is None else n_f
    out = []
    for i in range(spec.n_states):
        ops = displaced_number_ops(centers[i], n_f) if with_operators else (None, None)
        proj_a = np.zeros((spec.n_states, spec.n_states))
        proj_a[i, i] = 1.0
        for k in range(network.m_trusted):
            for power, bound, single in ((1, gam[i, k], ops[0]), (2, gam_sq[i, k], ops[1])):
                full = None
                if with_operators:
                    full = np.kron(proj_a, embed(single, k, network.m_trusted)) / spec.probabilities[i]
                out.append(Observable(i, k, power, float(bound), full))
    return out


# ---------------------------------------------------------------------------
# weight outside the cutoff space


def weight_multipliers(n_c: int, m_trusted: int, rule: str = "union") -> tuple[float, float]:
    """Dual multipliers (y_k, y_k^sq) for the weight SDP, identical for every Bob k.

    ``"per_bob"`` scales by 1/M_B; ``"union"`` uses the single-Bob values for
    every Bob, i.e. a union bound over Bobs leaving their cutoff space.
    """
    scale = n_c * (n_c + 1) * (m_trusted if rule == "per_bob" else 1)
    if rule not in ("per_bob", "union"):
        raise ValueError(f"unknown multiplier rule {rule!r}")
    return -1.0 / scale, 1.0 / scale


def weight_certificate_min_eig(
    n_c: int, m_trusted: int, rule: str = "union", y0: float = 0.0, extra_levels: int = 3
) -> float:
    """Smallest eigenvalue of y0 1 + sum_k (y_k n_k + y_k^sq n_k^2) - (1 - Pi).

    In the displaced number basis every term is diagonal, so the operator is
    evaluated on occupations 0..n_c + extra_levels per Bob (the eigenvalues keep
    growing beyond that since y^sq > 0).
    """
    y, y_sq = weight_multipliers(n_c, m_trusted, rule)
    levels = np.arange(n_c + 1 + extra_levels)
    grids = np.meshgrid(*([levels] * m_trusted), indexing="ij")
    value = np.full(grids[0].shape, y0, dtype=float)
    outside = np.zeros(grids[0].shape, dtype=bool)
    for g in grids:
        value += y * g + y_sq * g**2
        outside |= g > n_c
    value -= outside
    return float(value.min())


def compute_weight(gammas, gammas_sq, n_c: int, probabilities, m_trusted: int = 1, rule: str = "union") -> float:
    """Upper bound W on the weight of the state outside the cutoff space.

    W = sum_i p_i sum_k -(y_k gamma[i,k] + y_k^sq gamma_sq[i,k]) with the
    multipliers of :func:`weight_multipliers`. For one Bob this is
    sum_i p_i (gamma_sq - gamma) / (n_c (n_c + 1)).
    """
    y, y_sq = weight_multipliers(n_c, m_trusted, rule)
    g = np.asarray(gammas, dtype=float).reshape(len(probabilities), -1)
    g2 = np.asarray(gammas_sq, dtype=float).reshape(len(probabilities), -1)
    if np.any(g < 0) or np.any(g2 < g - 1e-15):
        raise ValueError("need gamma_sq >= gamma >= 0")
    per_state = (y * g + y_sq * g2).sum(axis=1)
    w = float(np.dot(probabilities, per_state))
    if w >= 1:
        raise WeightOutOfRange(f"W = {w:.3g} >= 1; increase the cutoff")
    return max(w, 0.0)


def delta_correction(weight: float, key_alphabet_size: int = 4) -> float:
    """Correction for the weight outside the cutoff: sqrt(W) log2|Z| + (1 + sqrt(W)) h(sqrt(W) / (1 + sqrt(W)))."""
    if not 0 <= weight < 1:
        raise ValueError("weight must lie in [0, 1)")
    s = math.sqrt(weight)
    return s * math.log2(key_alphabet_size) + (1 + s) * binary_entropy(s / (1 + s))


def build_rho_A(spec: ProtocolSpec) -> np.ndarray:
    """Alice's reduced state in the source-replacement picture.

    rho_A[m, n] = sqrt(p_m p_n) <alpha_n|alpha_m>.
    """
    sp = np.sqrt(spec.p)
    gram = coherent_gram(spec.amplitudes)  # gram[n, m] = <alpha_n|alpha_m>
    return np.outer(sp, sp) * gram.T
