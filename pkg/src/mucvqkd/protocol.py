"""Protocol and channel statistics for phase-shift-keyed coherent-state CV-QKD.

Conventions (shot-noise units): a heterodyne measurement of the vacuum gives a
circular complex Gaussian with variance 1/2 per real component. Excess noise
``xi`` is preparation noise, referred to the channel input, so a port that
receives a fraction ``split**2`` of the signal through transmittance ``eta``
sees a thermal occupation ``split**2 * eta * xi`` on top of the displaced
coherent state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, special, stats

from .errors import QuadratureFailure

DISCARD = None  # the discard symbol, written "⊥" in tables


@dataclass(frozen=True)
class ProtocolSpec:
    """Alice's constellation plus Bob's key map parameters.

    ``amplitudes[x]`` is prepared with probability ``probabilities[x]``. The key
    map has one angular wedge per state and a discard disk of radius ``delta_r``.
    """

    amplitudes: tuple[complex, ...]
    probabilities: tuple[float, ...]
    delta_r: float = 0.0

    def __post_init__(self):
        amps = tuple(complex(a) for a in self.amplitudes)
        probs = tuple(float(p) for p in self.probabilities)
        if len(amps) < 2 or len(amps) != len(probs):
            raise ValueError("need at least two states and one probability per state")
        if any(p < 0 for p in probs) or abs(sum(probs) - 1) > 1e-12:
            raise ValueError("probabilities must be nonnegative and sum to 1")
        for i in range(len(amps)):
            for j in range(i):
                if abs(amps[i] - amps[j]) < 1e-14:
                    raise ValueError("amplitudes must be pairwise distinct")
        if self.delta_r < 0:
            raise ValueError("delta_r must be nonnegative")
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "probabilities", probs)

    @classmethod
    def psk(cls, alpha: float, n_states: int = 4, delta_r: float = 0.0, probabilities=None) -> "ProtocolSpec":
        """Uniform (by default) PSK ring: alpha_x = |alpha| exp(2 pi i x / n_states)."""
        amps = tuple(abs(alpha) * np.exp(2j * np.pi * x / n_states) for x in range(n_states))
        if probabilities is None:
            probabilities = (1.0 / n_states,) * n_states
        return cls(amps, tuple(probabilities), delta_r)

    @property
    def n_states(self) -> int:
        return len(self.amplitudes)

    @property
    def p(self) -> np.ndarray:
        return np.asarray(self.probabilities)

    def is_psk(self, tol: float = 1e-12) -> bool:
        mag = abs(self.amplitudes[0])
        n = self.n_states
        return all(
            abs(a - mag * np.exp(2j * np.pi * x / n)) <= tol * max(1.0, mag) for x, a in enumerate(self.amplitudes)
        )


@dataclass(frozen=True)
class ChannelSpec:
    """Per-link channel and detector parameters.

    The detector is treated as untrusted: ``eta_d`` multiplies the transmittance
    and ``nu_el`` adds ``nu_el / 2`` to the outcome variance per component.
    """

    eta: float
    xi: float = 0.0
    eta_d: float = 1.0
    nu_el: float = 0.0

    def __post_init__(self):
        if not 0 < self.eta <= 1:
            raise ValueError("eta must lie in (0, 1]")
        if not 0 < self.eta_d <= 1:
            raise ValueError("eta_d must lie in (0, 1]")
        if self.xi < 0 or self.nu_el < 0:
            raise ValueError("noise parameters must be nonnegative")

    @property
    def eta_eff(self) -> float:
        return self.eta * self.eta_d

    def thermal_occupation(self, split: float = 1.0) -> float:
        """Mean thermal photon number on top of the displaced signal at one output port."""
        return split**2 * self.eta_eff * self.xi + self.nu_el


@dataclass
class JointDistribution:
    """Table P(row, col); the last column is the discard symbol when ``has_discard``.

    For Alice-Bob tables rows are Alice's state index x and columns Bob's key
    symbol z. For Bob-Bob tables both axes are key symbols (rows: the other Bob,
    including his own discard row when ``has_discard``).
    """

    table: np.ndarray
    has_discard: bool = True
    row_labels: Optional[list] = field(default=None)

    def __post_init__(self):
        self.table = np.asarray(self.table, dtype=float)
        if np.any(self.table < -1e-15):
            raise ValueError("negative probability in joint table")
        if abs(self.table.sum() - 1) > 1e-9:
            raise ValueError(f"joint table sums to {self.table.sum()!r}, not 1")

    @property
    def kept(self) -> np.ndarray:
        return self.table[:, :-1] if self.has_discard else self.table

    @property
    def pass_probability(self) -> float:
        return float(self.kept.sum())

    def column_marginal(self) -> np.ndarray:
        return self.table.sum(axis=0)

    def row_marginal(self) -> np.ndarray:
        return self.table.sum(axis=1)


def key_region(y: complex, spec: ProtocolSpec):
    """Key symbol for heterodyne outcome ``y``: an int in [0, n_states) or ``DISCARD``.

    Wedge z covers arg(y) in [(2z-1) pi/N, (2z+1) pi/N), half open, with the
    angle normalised to [-pi/N, 2 pi - pi/N).
    """
    y = complex(y)
    if abs(y) < spec.delta_r:
        return DISCARD
    n = spec.n_states
    half = math.pi / n
    theta = math.atan2(y.imag, y.real)
    theta = (theta + half) % (2 * math.pi) - half
    z = int(math.floor((theta + half) / (2 * half)))
    return min(z, n - 1)


def heterodyne_outcome_density(x: int, spec: ProtocolSpec, ch: ChannelSpec, split: float = 1.0):
    """Mean and per-component variance of Bob's heterodyne outcome given state ``x``.

    The outcome density is (1 / (2 pi var)) exp(-|y - mean|^2 / (2 var)).
    """
    if not 0 < split <= 1:
        raise ValueError("split must lie in (0, 1]")
    mean = split * math.sqrt(ch.eta_eff) * spec.amplitudes[x]
    var = (1 + ch.thermal_occupation(split)) / 2
    return complex(mean), var


def _wedge_probability(mean: complex, var: float, theta_lo: float, theta_hi: float, r_min: float, tol: float) -> float:
    # rescale to unit-width density (1/pi) exp(-|u - m|^2)
    scale = math.sqrt(2 * var)
    m = abs(mean) / scale
    phi = math.atan2(mean.imag, mean.real)
    r0 = r_min / scale
    sqrt_pi = math.sqrt(math.pi)

    def radial(theta):
        c = m * math.cos(theta - phi)
        s2 = (m * math.sin(theta - phi)) ** 2
        inner = 0.5 * math.exp(-((r0 - c) ** 2)) + c * 0.5 * sqrt_pi * special.erfc(r0 - c)
        return math.exp(-s2) * inner / math.pi

    points = None
    # hint the peak direction to the adaptive rule
    rel = (phi - theta_lo) % (2 * math.pi) + theta_lo
    if theta_lo < rel < theta_hi:
        points = [rel]
    val, err = integrate.quad(radial, theta_lo, theta_hi, epsabs=tol, epsrel=1e-13, limit=200, points=points)
    if err > 10 * tol:
        raise QuadratureFailure(f"wedge integral error estimate {err:.2g} above tolerance")
    return val


def _discard_probability(mean: complex, var: float, r_min: float) -> float:
    if r_min == 0:
        return 0.0
    # |y|^2 / var is noncentral chi-square with 2 dof and noncentrality |mean|^2 / var
    return float(stats.ncx2.cdf(r_min**2 / var, df=2, nc=abs(mean) ** 2 / var))


def outcome_distribution(mean: complex, var: float, spec: ProtocolSpec, tol: float = 1e-10) -> np.ndarray:
    """P(Z = z) for z = 0..N-1 followed by P(discard), for a Gaussian outcome."""
    n = spec.n_states
    half = math.pi / n
    probs = [_wedge_probability(mean, var, (2 * z - 1) * half, (2 * z + 1) * half, spec.delta_r, tol) for z in range(n)]
    probs.append(_discard_probability(mean, var, spec.delta_r))
    out = np.clip(np.asarray(probs), 0.0, None)
    if abs(out.sum() - 1) > 1e-9:
        raise QuadratureFailure(f"outcome probabilities sum to {out.sum():.12f}")
    return out


def conditional_key_distribution(x: int, spec: ProtocolSpec, ch: ChannelSpec, split: float = 1.0) -> np.ndarray:
    """P(Z = z | X = x) including the discard symbol as the last entry."""
    mean, var = heterodyne_outcome_density(x, spec, ch, split)
    return outcome_distribution(mean, var, spec)


def _conditionals(spec: ProtocolSpec, ch: ChannelSpec, split: float) -> np.ndarray:
    if spec.is_psk():
        # one row suffices: the others are cyclic shifts
        base = conditional_key_distribution(0, spec, ch, split)
        n = spec.n_states
        rows = np.empty((n, n + 1))
        for x in range(n):
            rows[x, :n] = np.roll(base[:n], x)
            rows[x, n] = base[n]
        return rows
    return np.array([conditional_key_distribution(x, spec, ch, split) for x in range(spec.n_states)])


def joint_distribution(spec: ProtocolSpec, ch: ChannelSpec, split: float = 1.0) -> JointDistribution:
    """P(X = x, Z = z) = p_x P(Z = z | X = x)."""
    table = spec.p[:, None] * _conditionals(spec, ch, split)
    return JointDistribution(table / table.sum())


def bob_bob_joint(spec: ProtocolSpec, ch: ChannelSpec, split: float) -> JointDistribution:
    """Joint distribution of two Bobs' key symbols on symmetric links.

    P(a, b) = sum_x p_x P(a | x) P(b | x): each output port has independent
    vacuum and noise. Rows are the other Bob (with his discard row), columns
    the key-generating Bob.
    """
    cond = _conditionals(spec, ch, split)
    table = np.einsum("x,xa,xb->ab", spec.p, cond, cond)
    return JointDistribution(table / table.sum())


def shannon_entropy(p) -> float:
    p = np.asarray(p, dtype=float).ravel()
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


def _mi(table: np.ndarray) -> float:
    total = table.sum()
    if total <= 0:
        return 0.0
    t = table / total
    return max(shannon_entropy(t.sum(axis=0)) + shannon_entropy(t.sum(axis=1)) - shannon_entropy(t), 0.0)


def mutual_information(joint: JointDistribution, drop_discard: bool = True) -> float:
    """Shannon mutual information in bits.

    With ``drop_discard`` the discard column is removed, the rest renormalised,
    and the result multiplied by the pass probability (bits per channel use).
    """
    if drop_discard and joint.has_discard:
        kept = joint.kept
        return joint.pass_probability * _mi(kept)
    return _mi(joint.table)


def conditional_entropy_key(joint: JointDistribution) -> float:
    """p_pass * H(Z | row, pass): the key symbol's entropy given the row variable."""
    kept = joint.kept if joint.has_discard else joint.table
    p_pass = kept.sum()
    t = kept / p_pass
    return float(p_pass * (shannon_entropy(t) - shannon_entropy(t.sum(axis=1))))


def ec_leakage(joint: JointDistribution, beta_rec: float) -> float:
    """Error-correction leakage per channel use for reverse reconciliation.

    p_pass * [H(Z | pass) - beta_rec * I(X; Z | pass)].
    """
    if not 0 < beta_rec <= 1:
        raise ValueError("beta_rec must lie in (0, 1]")
    kept = joint.kept
    p_pass = kept.sum()
    t = kept / p_pass
    return float(p_pass * (shannon_entropy(t.sum(axis=0)) - beta_rec * _mi(t)))
