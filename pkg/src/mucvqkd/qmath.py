"""Fock-space and matrix-analysis primitives.

Amplitudes are plain Python ``complex`` numbers in shot-noise-unit phase space,
operators are dense numpy arrays. :class:`HermitianOperator` attaches tensor
factor dimensions to an array where the factor structure matters.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, NonPhysicalState, SupportViolation, TruncationWarning

HERMITIAN_ATOL = 1e-12
EIG_CLAMP = 1e-10  # eigenvalues in [-EIG_CLAMP, 0) are rounding noise
NEGATIVE_EIG_TOL = 1e-8
KERNEL_TOL = 1e-12
SUPPORT_TOL = 1e-8


@dataclass(frozen=True)
class HermitianOperator:
    """Dense Hermitian matrix on a tensor product of factors with dimensions ``dims``."""

    data: np.ndarray
    dims: tuple[int, ...] = field(default=())

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex)
        dims = tuple(int(d) for d in self.dims) or (data.shape[0],)
        if data.ndim != 2 or data.shape[0] != data.shape[1]:
            raise DimensionMismatch(f"expected a square matrix, got shape {data.shape}")
        if any(d < 1 for d in dims) or math.prod(dims) != data.shape[0]:
            raise DimensionMismatch(f"dims {dims} do not multiply to side {data.shape[0]}")
        if np.max(np.abs(data - data.conj().T), initial=0.0) > HERMITIAN_ATOL:
            raise ValueError("matrix is not Hermitian within 1e-12")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "dims", dims)

    @property
    def side(self) -> int:
        return self.data.shape[0]

    def trace(self) -> float:
        return float(np.real(np.trace(self.data)))

    def partial_trace(self, keep: Sequence[int]) -> "HermitianOperator":
        return HermitianOperator(
            partial_trace(self.data, self.dims, keep), tuple(self.dims[k] for k in sorted(set(keep)))
        )

    def spectrum(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.data)[::-1]


def _as_array(rho) -> np.ndarray:
    if isinstance(rho, HermitianOperator):
        return rho.data
    return np.asarray(rho, dtype=complex)


def coherent_overlap(a: complex, b: complex) -> complex:
    """<a|b> for coherent states |a>, |b>."""
    a, b = complex(a), complex(b)
    return complex(np.exp(-(abs(a) ** 2 + abs(b) ** 2) / 2 + a.conjugate() * b))


def coherent_gram(amplitudes: Sequence[complex]) -> np.ndarray:
    """Matrix G[x, y] = <a_x|a_y>."""
    a = np.asarray(amplitudes, dtype=complex)
    mag = np.abs(a) ** 2
    return np.exp(-(mag[:, None] + mag[None, :]) / 2 + np.conj(a)[:, None] * a[None, :])


def coherent_state_vector(alpha: complex, n_f: int) -> np.ndarray:
    """Fock amplitudes <n|alpha> for n = 0..n_f (not renormalised after truncation)."""
    n = np.arange(n_f + 1)
    if alpha == 0:
        out = np.zeros(n_f + 1, dtype=complex)
        out[0] = 1.0
        return out
    logmag = -abs(alpha) ** 2 / 2 + n * math.log(abs(alpha)) - 0.5 * np.array([math.lgamma(k + 1) for k in n])
    return np.exp(logmag) * np.exp(1j * n * np.angle(alpha))


def displacement_matrix(beta: complex, n_f: int, warn: bool = True) -> np.ndarray:
    """Matrix elements <m|D(beta)|n> for 0 <= m, n <= n_f.

    Uses the column recurrence that follows from D a^dag = (a^dag - beta*) D,

        D[m, n+1] = (sqrt(m) D[m-1, n] - conj(beta) D[m, n]) / sqrt(n+1),

    seeded with the coherent-state column D[:, 0] = <m|beta>. Every entry only
    depends on entries with smaller or equal row index, so the returned block
    equals the top-left block of the untruncated operator; no factorials are
    formed, so large cutoffs do not overflow.

    A :class:`TruncationWarning` is emitted when one of the first
    ceil(|beta|^2) + 1 columns has norm below 1 - 1e-8, i.e. when the cutoff
    cannot hold the displaced low-lying number states.
    """
    if n_f < 0:
        raise ValueError("cutoff must be non-negative")
    beta = complex(beta)
    size = n_f + 1
    out = np.zeros((size, size), dtype=complex)
    out[:, 0] = coherent_state_vector(beta, n_f)
    sqrt_m = np.sqrt(np.arange(size))
    for n in range(size - 1):
        col = -np.conj(beta) * out[:, n]
        col[1:] += sqrt_m[1:] * out[:-1, n]
        out[:, n + 1] = col / math.sqrt(n + 1)
    if warn:
        check = min(size, math.ceil(abs(beta) ** 2) + 1)
        norms = np.linalg.norm(out[:, :check], axis=0)
        if np.any(norms < 1 - 1e-8):
            warnings.warn(
                f"Fock cutoff {n_f} too small for displacement {beta:.3g}: column norm {norms.min():.3g}",
                TruncationWarning,
                stacklevel=2,
            )
    return out


def _clamped_eigvals(rho: np.ndarray) -> np.ndarray:
    ev = np.linalg.eigvalsh(rho)
    if ev.size and ev[0] < -NEGATIVE_EIG_TOL:
        raise NonPhysicalState(f"eigenvalue {ev[0]:.3g} below -1e-8")
    return np.clip(ev, 0.0, None)


def entropy_from_eigenvalues(ev) -> float:
    ev = np.asarray(ev, dtype=float)
    ev = ev[ev > 0]
    return float(-np.sum(ev * np.log2(ev)))


def von_neumann_entropy(rho, normalize: bool = False) -> float:
    """Von Neumann entropy in bits; 0 log 0 := 0.

    With ``normalize`` the operator is rescaled to unit trace first.
    """
    data = _as_array(rho)
    if normalize:
        data = data / np.real(np.trace(data))
    return max(entropy_from_eigenvalues(_clamped_eigvals(data)), 0.0)


def _checked_eigh(rho: np.ndarray):
    ev, vec = np.linalg.eigh(rho)
    if ev.size and ev[0] < -NEGATIVE_EIG_TOL:
        raise NonPhysicalState(f"eigenvalue {ev[0]:.3g} below -1e-8")
    return ev, vec


def quantum_relative_entropy(rho, sigma) -> float:
    """D(rho || sigma) = Tr[rho (log2 rho - log2 sigma)] in bits.

    Eigenvalues of sigma below 1e-12 are treated as kernel; weight of rho there
    above 1e-8 raises :class:`SupportViolation`.
    """
    rho, sigma = _as_array(rho), _as_array(sigma)
    ev_r = _checked_eigh(rho)[0]
    ev_s, vec_s = _checked_eigh(sigma)
    ev_r = np.clip(ev_r, 0.0, None)
    kernel = ev_s <= KERNEL_TOL
    # rho in sigma's eigenbasis
    rho_s = vec_s.conj().T @ rho @ vec_s
    if np.any(kernel):
        leak = float(np.real(np.trace(rho_s[np.ix_(kernel, kernel)])))
        if leak > SUPPORT_TOL:
            raise SupportViolation(f"rho has weight {leak:.3g} on the kernel of sigma")
    pos_r = ev_r > 0
    term1 = float(np.sum(ev_r[pos_r] * np.log2(ev_r[pos_r])))
    log_s = np.zeros_like(ev_s)
    log_s[~kernel] = np.log2(ev_s[~kernel])
    term2 = float(np.sum(np.real(np.diag(rho_s)) * log_s))
    return term1 - term2


def partial_trace(rho, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Trace out every factor whose index is not in ``keep``.

    The kept factors stay in their original order.
    """
    data = _as_array(rho)
    dims = [int(d) for d in dims]
    keep = sorted(set(int(k) for k in keep))
    n = len(dims)
    if not keep or any(k < 0 or k >= n for k in keep):
        raise DimensionMismatch(f"invalid keep set {keep} for {n} factors")
    if math.prod(dims) != data.shape[0]:
        raise DimensionMismatch(f"dims {dims} do not match side {data.shape[0]}")
    drop = [k for k in range(n) if k not in keep]
    t = data.reshape(dims + dims)
    # contract dropped factors pairwise, highest index first so axis numbers stay valid
    for k in sorted(drop, reverse=True):
        t = np.trace(t, axis1=k, axis2=k + t.ndim // 2)
    side = math.prod(dims[k] for k in keep)
    return t.reshape(side, side)


def gram_mixture_spectrum(amplitudes: Sequence[complex], weights) -> np.ndarray:
    """Eigenvalues (descending) of sum_x w_x |a_x><a_x| for coherent states |a_x>.

    Computed from the weighted Gram matrix sqrt(w_x w_y) <a_x|a_y>, which has
    the same non-zero spectrum, so no Fock cutoff is involved.
    """
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
        raise ValueError("weights must be a probability vector")
    sw = np.sqrt(w)
    gram = coherent_gram(amplitudes) * np.outer(sw, sw)
    ev = np.linalg.eigvalsh((gram + gram.conj().T) / 2)[::-1]
    return np.where((ev < 0) & (ev > -EIG_CLAMP), 0.0, ev)


def binary_entropy(p: float) -> float:
    if p <= 0 or p >= 1:
        return 0.0
    return float(-p * math.log2(p) - (1 - p) * math.log2(1 - p))
