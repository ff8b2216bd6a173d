"""Displaced frame for the cutoff space.

The cutoff space is spanned by |i>_A (x) D(beta_i)|n_1 ... n_M> with
n_k <= n_c. In the unitary frame U = sum_i |i><i| (x) D(beta_i)^dag^{(x)M}
it becomes |i> (x) |n_1 ... n_M>, so states are plain
``n_states * (n_c+1)^M`` matrices, the moment observables are diagonal and
the partial trace over the Bobs turns into

    Tr_B(rho)[i, j] = Tr[sigma_ij O_ji],   O_ji = P D(beta_j)^dag D(beta_i) P  (x M).

The overlap blocks O are computed exactly from D(beta_i - beta_j), so only
the region operators depend on the ambient cutoff.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ..errors import TruncationWarning
from ..protocol import ChannelSpec, ProtocolSpec
from ..qmath import displacement_matrix
from .operators import (
    CutoffSpec,
    NetworkSpec,
    build_region_operators,
    kron_all,
    observable_bounds,
    projection_centers,
)


def psd_sqrt(a: np.ndarray) -> np.ndarray:
    ev, vec = np.linalg.eigh((a + a.conj().T) / 2)
    return (vec * np.sqrt(np.clip(ev, 0.0, None))) @ vec.conj().T


def overlap_block(beta_a: complex, beta_b: complex, n_c: int) -> np.ndarray:
    """P D(beta_a)^dag D(beta_b) P = exp((conj(a) b - a conj(b)) / 2) P D(b - a) P."""
    phase = np.exp((np.conj(beta_a) * beta_b - beta_a * np.conj(beta_b)) / 2)
    return phase * displacement_matrix(beta_b - beta_a, n_c, warn=False)


@dataclass
class DisplacedFrame:
    """Compressed operators for one (protocol, channel, network, cutoff) point."""

    spec: ProtocolSpec
    channel: ChannelSpec
    network: NetworkSpec
    cutoff: CutoffSpec
    centers: np.ndarray = field(init=False)
    overlaps: np.ndarray = field(init=False)  # overlaps[a, b] = O_ab (full M-mode block)
    regions: list = field(init=False)  # regions[z][i] = compressed R^z on the key Bob, one mode
    n_f: int = field(init=False)

    def __post_init__(self):
        self.centers = projection_centers(self.spec, self.channel, self.network)
        n_c, m = self.cutoff.n_c, self.network.m_trusted
        beta_max = float(np.max(np.abs(self.centers)))
        self.n_f = self.cutoff.ambient(beta_max)
        if self.cutoff.truncation_risk(beta_max):
            warnings.warn(
                f"ambient cutoff {self.n_f} below n_c + 4|beta|^2 for |beta| = {beta_max:.3g}",
                TruncationWarning,
                stacklevel=2,
            )
        n = self.spec.n_states
        single = [[overlap_block(self.centers[a], self.centers[b], n_c) for b in range(n)] for a in range(n)]
        dm = (n_c + 1) ** m
        self.overlaps = np.empty((n, n, dm, dm), dtype=complex)
        for a in range(n):
            for b in range(n):
                self.overlaps[a, b] = kron_all([single[a][b]] * m)
        ambient = build_region_operators(self.spec, self.n_f)
        cols = [displacement_matrix(c, self.n_f)[:, : n_c + 1] for c in self.centers]
        self.regions = []
        for r in ambient:
            blocks = []
            for v in cols:
                b = v.conj().T @ r @ v
                blocks.append((b + b.conj().T) / 2)
            self.regions.append(blocks)

    # sizes --------------------------------------------------------------

    @property
    def mode_dim(self) -> int:
        return self.cutoff.n_c + 1

    @property
    def bob_dim(self) -> int:
        return self.mode_dim**self.network.m_trusted

    @property
    def dim(self) -> int:
        return self.spec.n_states * self.bob_dim

    def block(self, rho: np.ndarray, i: int, j: int) -> np.ndarray:
        d = self.bob_dim
        return rho[i * d : (i + 1) * d, j * d : (j + 1) * d]

    # linear maps ----------------------------------------------------------

    def partial_trace_B(self, rho: np.ndarray) -> np.ndarray:
        """Tr_B of the ambient state, as an n_states x n_states matrix."""
        n, d = self.spec.n_states, self.bob_dim
        blocks = rho.reshape(n, d, n, d).transpose(0, 2, 1, 3)
        # Tr[sigma_ij O_ji] = sum_kl sigma_ij[k, l] O_ji[l, k]
        return np.einsum("ijkl,jilk->ij", blocks, self.overlaps)

    def partial_trace_B_adjoint(self, y: np.ndarray) -> np.ndarray:
        """Adjoint of :meth:`partial_trace_B`: block (a, b) is y[a, b] O_ab."""
        n, d = self.spec.n_states, self.bob_dim
        out = y[:, :, None, None] * self.overlaps
        return out.transpose(0, 2, 1, 3).reshape(n * d, n * d)

    # operators on the full frame space -------------------------------------

    def region_operator(self, z: int, key_bob: int = 0) -> np.ndarray:
        """Block-diagonal compressed region operator for key symbol z (last index: discard) on Bob ``key_bob``."""
        m, dm = self.network.m_trusted, self.mode_dim
        if not 0 <= key_bob < m:
            raise ValueError(f"key_bob must lie in [0, {m})")
        n, d = self.spec.n_states, self.bob_dim
        out = np.zeros((n * d, n * d), dtype=complex)
        for i in range(n):
            factors = [self.regions[z][i] if q == key_bob else np.eye(dm) for q in range(m)]
            out[i * d : (i + 1) * d, i * d : (i + 1) * d] = kron_all(factors)
        return out

    def key_kraus_operators(self, key_bob: int = 0) -> list[np.ndarray]:
        """sqrt of the compressed region operator for each kept key symbol (postselection drops the discard)."""
        return [psd_sqrt(self.region_operator(z, key_bob)) for z in range(self.spec.n_states)]

    def moment_diagonals(self) -> list[tuple[int, int, int, np.ndarray]]:
        """(state i, Bob k, power, diagonal of |i><i| (x) n_k^power / p_i) for every moment constraint."""
        n, m, dm = self.spec.n_states, self.network.m_trusted, self.mode_dim
        occ = np.arange(dm, dtype=float)
        out = []
        for i in range(n):
            for k in range(m):
                mode = kron_all([occ if q == k else np.ones(dm) for q in range(m)]) if m > 1 else occ
                for power in (1, 2):
                    diag = np.zeros(self.dim)
                    diag[i * self.bob_dim : (i + 1) * self.bob_dim] = mode**power / self.spec.probabilities[i]
                    out.append((i, k, power, diag))
        return out

    def moment_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return observable_bounds(self.spec, self.channel, self.network, self.centers)

    def truncated_thermal(self, n_th: float) -> np.ndarray:
        n = np.arange(self.mode_dim)
        if n_th <= 0:
            w = (n == 0).astype(float)
        else:
            w = (n_th / (1 + n_th)) ** n
        return np.diag(w / w.sum())

    def product_state(self, coefficients: np.ndarray, tau: np.ndarray) -> np.ndarray:
        """sum_ij c_ij |i><j| (x) tau^{(x)M}."""
        return np.kron(coefficients, kron_all([tau] * self.network.m_trusted))

    def distance_error(self) -> float:
        """Largest deviation of sum_z R^z from the identity on the compressed space."""
        total = sum(self.region_operator(z) for z in range(len(self.regions)))
        return float(np.max(np.abs(total - np.eye(self.dim))))


def simulated_state(frame: DisplacedFrame, rho_a: np.ndarray) -> np.ndarray:
    """Cutoff-space state with Tr_B = rho_A and Bob marginals equal to the truncated thermal state.

    Returns sum_ij C_ij |i><j| (x) tau^{(x)M} with C_ij = rho_A[i, j] / Tr[tau^{(x)M} O_ji]; for a
    loss-only channel this is exactly the channel output in the displaced frame.
    """
    n_th = frame.channel.thermal_occupation(frame.network.split)
    tau = frame.truncated_thermal(n_th)
    tau_m = kron_all([tau] * frame.network.m_trusted)
    n = frame.spec.n_states
    coeff = np.empty((n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            coeff[i, j] = rho_a[i, j] / np.trace(tau_m @ frame.overlaps[j, i])
    return frame.product_state(coeff, tau)
