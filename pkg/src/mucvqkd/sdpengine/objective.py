"""Relative-entropy objective f(rho) = D(G(rho) || Z(G(rho))) and its gradient.

G(rho) = sum_{z,z'} |z><z'| (x) K_z rho K_z'^dag with K_z = sqrt(R^z) on the key
Bob, and Z pinches the key register. Both arguments are mixed with eps of the
maximally mixed state before logarithms are taken, which keeps the gradient
finite; :func:`regularization_penalty` bounds the cost of doing so.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from ..errors import NonPhysicalState
from ..qmath import HermitianOperator, NEGATIVE_EIG_TOL

EPS_DEFAULT = 1e-12
LN2 = math.log(2)


def _xlogx_and_log(mat: np.ndarray, eps: float, dim_out: int):
    ev, vec = np.linalg.eigh((mat + mat.conj().T) / 2)
    if ev[0] < -NEGATIVE_EIG_TOL:
        raise NonPhysicalState(f"eigenvalue {ev[0]:.3g} below -1e-8")
    ev = (1 - eps) * np.clip(ev, 0.0, None) + eps / dim_out
    pos = ev > 0
    ent = float(np.sum(ev[pos] * np.log(ev[pos])))
    if eps > 0:
        log_mat = (vec * np.log(ev)) @ vec.conj().T
    else:
        log_mat = None
    return ent, log_mat


def regularization_penalty(dim_out: int, eps: float = EPS_DEFAULT) -> float:
    """Upper bound on f(rho) - f_eps(rho) for output dimension ``dim_out``: 2 eps (d-1) log2(d / (eps (d-1)))."""
    if eps <= 0:
        return 0.0
    d = dim_out
    return 2 * eps * (d - 1) * math.log2(d / (eps * (d - 1)))


class KeyMapObjective:
    """f(rho) in bits for Kraus operators ``kraus`` acting on the frame space."""

    def __init__(self, kraus: Sequence[np.ndarray], eps: float = EPS_DEFAULT):
        self.kraus = [np.asarray(k, dtype=complex) for k in kraus]
        self.dim = self.kraus[0].shape[1]
        self.stack = np.vstack(self.kraus)
        self.eps = eps
        gram = self.stack.conj().T @ self.stack
        # with an isometric stack, G(rho) = V rho V^dag has the spectrum of rho
        self.isometric = bool(np.max(np.abs(gram - np.eye(self.dim))) < 1e-12)

    @property
    def dim_out(self) -> int:
        return self.stack.shape[0]

    def value_and_gradient(self, rho, with_gradient: bool = True):
        rho = rho.data if isinstance(rho, HermitianOperator) else np.asarray(rho, dtype=complex)
        eps = self.eps
        d_out = self.dim_out
        if self.isometric:
            # the d_out - dim kernel eigenvalues eps / d_out contribute to the value only;
            # V^dag log(G_eps) V = log((1 - eps) rho + eps / d_out) since V^dag V = 1
            ent_g, grad = _xlogx_and_log(rho, eps, d_out)
            if eps > 0:
                ent_g += (d_out - self.dim) * (eps / d_out) * math.log(eps / d_out)
        else:
            g = self.stack @ rho @ self.stack.conj().T
            ent_g, log_g = _xlogx_and_log(g, eps, d_out)
            grad = self.stack.conj().T @ log_g @ self.stack if log_g is not None else None
        total = ent_g
        for k in self.kraus:
            b = k @ rho @ k.conj().T
            ent_b, log_b = _xlogx_and_log(b, eps, d_out)
            # each pinched block carries eps / d_out on its diagonal too
            total -= ent_b
            if grad is not None:
                grad -= k.conj().T @ log_b @ k
        value = total / LN2
        if not with_gradient or grad is None:
            return value, None
        grad = (1 - eps) * grad / LN2
        return value, (grad + grad.conj().T) / 2

    def __call__(self, rho) -> float:
        return self.value_and_gradient(rho, with_gradient=False)[0]

    def penalty(self) -> float:
        return regularization_penalty(self.dim_out, self.eps)


def objective_and_gradient(rho, kraus: Sequence[np.ndarray], eps: float = EPS_DEFAULT):
    """(f in bits, gradient) of D(G(rho) || Z(G(rho))) for the given key-map Kraus operators."""
    return KeyMapObjective(kraus, eps).value_and_gradient(rho)
