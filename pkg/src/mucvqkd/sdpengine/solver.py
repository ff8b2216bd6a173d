"""Two-step solve: Frank-Wolfe descent (step 1) and a dual certificate (step 2).

The feasible set S of cutoff-space states sigma (displaced frame) is

    sigma >= 0,  1 - W <= Tr sigma <= 1,  1/2 ||Tr_B sigma - rho_A||_1 <= sqrt(W),
    Tr[sigma Gamma_m] <= g_m   for every moment observable.

The linearised problem min_{sigma in S} Tr[grad sigma] is solved through its
Lagrange dual, a small linear matrix inequality in

    x = (u, s, t, v_1..v_K, y_1..y_{N^2}),
    L(x) = grad + u 1 + Tr_B^dag(Y) + sum_m v_m Gamma_m >= 0,  t 1 +- Y >= 0,
    s >= 0,  s >= -u,

maximising -u - W s - Re Tr[Y rho_A] - 2 t sqrt(W) - v.g. A single free trace
multiplier u (with s = max(0, -u) pricing the lower end of the trace window)
avoids the nearly flat direction u1 = u2 -> infinity that a pair of one-sided
multipliers has when W is tiny. The trace norm
enters through the epigraph Tr_B sigma - rho_A = P - N, Tr(P + N) <= 2 sqrt(W).
Any x, feasible or not, yields a valid lower bound once the most negative
eigenvalue of L(x) is charged against the largest admissible trace, which is
what makes step 2 rigorous.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from cvxopt import matrix, solvers
from scipy import optimize

from ..errors import CertificateFailure, Infeasible, NonPhysicalState, Stalled
from ..protocol import ChannelSpec, ProtocolSpec, bob_bob_joint, conditional_entropy_key, ec_leakage, joint_distribution
from ..qmath import HermitianOperator
from .frame import DisplacedFrame, simulated_state
from .objective import EPS_DEFAULT, KeyMapObjective
from .operators import CutoffSpec, NetworkSpec, build_rho_A, compute_weight, delta_correction

log = logging.getLogger(__name__)

# Floors on the constraint data only enlarge S, so bounds stay valid; they
# give the interior-point solver a strictly feasible set when xi = 0.
MOMENT_FLOOR = 1e-9
WEIGHT_FLOOR = 1e-14
FEASIBILITY_BUDGET = 1e-8
SUBPROBLEM_BUDGET = 1e-6


def _as_array(rho) -> np.ndarray:
    return rho.data if isinstance(rho, HermitianOperator) else np.asarray(rho, dtype=complex)


def real_embedding(a: np.ndarray) -> np.ndarray:
    """[[Re A, -Im A], [Im A, Re A]]: symmetric, and PSD exactly when A is."""
    return np.block([[a.real, -a.imag], [a.imag, a.real]])


def hermitian_basis(n: int) -> list[np.ndarray]:
    out = []
    for a in range(n):
        e = np.zeros((n, n), dtype=complex)
        e[a, a] = 1
        out.append(e)
    for a in range(n):
        for b in range(a + 1, n):
            e = np.zeros((n, n), dtype=complex)
            e[a, b] = e[b, a] = 1
            out.append(e)
            e = np.zeros((n, n), dtype=complex)
            e[a, b], e[b, a] = 1j, -1j
            out.append(e)
    return out


def _trace_norm(a: np.ndarray) -> float:
    return float(np.sum(np.abs(np.linalg.eigvalsh((a + a.conj().T) / 2))))


@dataclass
class ConstraintSet:
    """The feasible set S on the displaced-frame cutoff space.

    ``moments`` holds the diagonals of the (diagonal) moment observables and
    ``bounds`` their upper bounds. ``partial_trace`` and its adjoint map between
    the frame space and Alice's register.
    """

    dim: int
    rho_a: np.ndarray
    weight: float
    moments: np.ndarray  # shape (K, dim)
    bounds: np.ndarray  # shape (K,)
    partial_trace: object
    partial_trace_adjoint: object
    labels: list = field(default_factory=list)

    def __post_init__(self):
        if not 0 <= self.weight < 1:
            raise ValueError("W must lie in [0, 1)")
        ev = np.linalg.eigvalsh(self.rho_a)
        if ev[0] < -1e-12 or abs(np.trace(self.rho_a).real - 1) > 1e-12:
            raise ValueError("rho_A must be a density operator")
        self.moments = np.atleast_2d(np.asarray(self.moments, dtype=float))
        self.bounds = np.asarray(self.bounds, dtype=float)

    @classmethod
    def from_frame(
        cls,
        frame: DisplacedFrame,
        weight: float,
        moment_floor: float = MOMENT_FLOOR,
        weight_floor: float = WEIGHT_FLOOR,
    ):
        diags = frame.moment_diagonals()
        gam, gam_sq = frame.moment_bounds()
        bounds = [max((gam if power == 1 else gam_sq)[i, k], moment_floor) for i, k, power, _ in diags]
        return cls(
            dim=frame.dim,
            rho_a=build_rho_A(frame.spec),
            weight=max(weight, weight_floor),
            moments=np.array([d for *_, d in diags]),
            bounds=np.array(bounds),
            partial_trace=frame.partial_trace_B,
            partial_trace_adjoint=frame.partial_trace_B_adjoint,
            labels=[(i, k, power) for i, k, power, _ in diags],
        )

    @property
    def radius(self) -> float:
        return math.sqrt(self.weight)

    def violations(self, rho) -> dict:
        """Amount by which ``rho`` violates each constraint (0 when satisfied)."""
        rho = _as_array(rho)
        tr = float(np.trace(rho).real)
        ball = 0.5 * _trace_norm(self.partial_trace(rho) - self.rho_a)
        moments = self.moments @ np.real(np.diag(rho)) - self.bounds
        return {
            "psd": max(0.0, -float(np.linalg.eigvalsh((rho + rho.conj().T) / 2)[0])),
            "trace_upper": max(0.0, tr - 1),
            "trace_lower": max(0.0, 1 - self.weight - tr),
            "ball": max(0.0, ball - self.radius),
            "moments": np.clip(moments, 0.0, None),
        }

    def max_violation(self, rho) -> float:
        v = self.violations(rho)
        return max(v["psd"], v["trace_upper"], v["trace_lower"], v["ball"], float(np.max(v["moments"], initial=0.0)))


@dataclass
class DualPoint:
    u: float
    t: float
    v: np.ndarray
    y: np.ndarray  # Hermitian n_states x n_states


@dataclass
class LinearSolution:
    sigma: np.ndarray
    value: float  # Tr[grad sigma]
    dual: DualPoint
    status: str


class LinearSubproblem:
    """min Tr[grad sigma] over a :class:`ConstraintSet`, via the dual LMI and CVXOPT."""

    def __init__(self, cs: ConstraintSet, tol: float = 1e-9, max_iters: int = 200):
        self.cs = cs
        n = cs.rho_a.shape[0]
        self.basis = hermitian_basis(n)
        k = cs.moments.shape[0]
        self.n_vars = 3 + k + len(self.basis)
        self._k = k
        d = cs.dim
        ident = np.eye(d)
        cols = [-real_embedding(ident), np.zeros((2 * d, 2 * d)), np.zeros((2 * d, 2 * d))]
        cols += [-real_embedding(np.diag(m).astype(complex)) for m in cs.moments]
        cols += [-real_embedding(cs.partial_trace_adjoint(e)) for e in self.basis]
        self._g1 = matrix(np.array([c.ravel() for c in cols]).T.copy())
        small = np.eye(n)
        g2 = [np.zeros((2 * n, 2 * n))] * 2 + [-real_embedding(small)] + [np.zeros((2 * n, 2 * n))] * k
        g3 = list(g2)
        g2 = g2 + [real_embedding(e) for e in self.basis]
        g3 = g3 + [-real_embedding(e) for e in self.basis]
        self._g2 = matrix(np.array([c.ravel() for c in g2]).T.copy())
        self._g3 = matrix(np.array([c.ravel() for c in g3]).T.copy())
        self._h_small = matrix(np.zeros((2 * n, 2 * n)))
        # rows: -s <= 0, -s - u <= 0, -t <= 0, -v <= 0
        gl = np.zeros((3 + k, self.n_vars))
        gl[0, 1] = -1.0
        gl[1, 0] = gl[1, 1] = -1.0
        for r in range(2, 3 + k):
            gl[r, r] = -1.0
        self._gl = matrix(gl)
        self._hl = matrix(np.zeros(3 + k))
        b = np.concatenate(
            [
                [-1.0, -cs.weight, -2 * cs.radius],
                -cs.bounds,
                [-float(np.real(np.trace(e @ cs.rho_a))) for e in self.basis],
            ]
        )
        self._b = b
        self._c = matrix(-b)
        self.options = {"show_progress": False, "abstol": tol, "reltol": tol, "feastol": tol, "maxiters": max_iters}

    def unpack(self, x: np.ndarray) -> DualPoint:
        k = self._k
        y = sum(c * e for c, e in zip(x[3 + k :], self.basis))
        return DualPoint(float(x[0]), float(x[2]), np.array(x[3 : 3 + k]), np.asarray(y))

    def lagrangian_operator(self, grad: np.ndarray, dual: DualPoint) -> np.ndarray:
        out = grad + dual.u * np.eye(self.cs.dim) + self.cs.partial_trace_adjoint(dual.y)
        out = out + np.diag(dual.v @ self.cs.moments)
        return (out + out.conj().T) / 2

    def _run(self, h1, tol: float):
        opts = dict(self.options, abstol=tol, reltol=tol, feastol=tol)
        return solvers.sdp(
            self._c,
            Gl=self._gl,
            hl=self._hl,
            Gs=[self._g1, self._g2, self._g3],
            hs=[h1, self._h_small, self._h_small],
            options=opts,
        )

    def solve(self, grad, tol: Optional[float] = None) -> LinearSolution:
        """Minimiser sigma of Tr[grad sigma] over S, recovered from the LMI's dual variable.

        When the solver stalls short of its tolerance the solve is repeated with
        looser tolerances; the last attempt is returned whatever its status.
        """
        grad = _as_array(grad)
        d = self.cs.dim
        h1 = matrix(real_embedding((grad + grad.conj().T) / 2))
        first = self.options["abstol"] if tol is None else tol
        for attempt in sorted({first, max(first, 1e-8), max(first, 1e-7)}):
            sol = self._run(h1, attempt)
            if sol["status"] == "optimal":
                break
        status = sol["status"]
        if status == "dual infeasible":
            raise Infeasible("the linearised problem over the constraint set has no feasible point")
        if sol["x"] is None or sol["zs"] is None:
            raise CertificateFailure(f"interior-point solver returned status {status!r} without a solution")
        x = np.array(sol["x"]).ravel()
        z1 = np.array(sol["zs"][0])
        sigma = (z1[:d, :d] + z1[d:, d:]) + 1j * (z1[d:, :d] - z1[:d, d:])
        sigma = (sigma + sigma.conj().T) / 2
        value = float(np.real(np.sum(grad.T * sigma)))
        return LinearSolution(sigma, value, self.unpack(x), status)

    def certified_bound(self, grad, dual: DualPoint, slack: Optional[dict] = None) -> float:
        """Rigorous lower bound on Tr[grad sigma] over S widened by ``slack``.

        ``slack`` holds the per-constraint widening (keys as in
        :meth:`ConstraintSet.violations`); each widening is charged against the
        matching multiplier, and the negative part of the Lagrangian spectrum
        against the largest admissible trace.
        """
        grad = _as_array(grad)
        cs = self.cs
        slack = slack or {}
        up = slack.get("trace_upper", 0.0)
        low = slack.get("trace_lower", 0.0)
        ball = slack.get("ball", 0.0)
        mom = np.asarray(slack.get("moments", np.zeros(len(cs.bounds))))
        dual = DualPoint(dual.u, dual.t, np.clip(dual.v, 0.0, None), dual.y)
        t = max(dual.t, float(np.max(np.abs(np.linalg.eigvalsh(dual.y)))))
        lam = float(np.linalg.eigvalsh(self.lagrangian_operator(grad, dual))[0])
        tr_hi, tr_lo = 1 + up, max(1 - cs.weight - low, 0.0)
        bound = (
            min(-dual.u * tr_hi, -dual.u * tr_lo)
            - float(np.real(np.trace(dual.y @ cs.rho_a)))
            - 2 * t * (cs.radius + ball)
            - float(dual.v @ (cs.bounds + mom))
            + min(lam, 0.0) * (1 + up)
        )
        return bound


@dataclass
class FWResult:
    rho: np.ndarray
    value: float
    gap: float
    iterations: int
    history: list
    stalled: bool = False


def _line_search(obj: KeyMapObjective, rho, direction, f0: float) -> tuple[float, float]:
    res = optimize.minimize_scalar(
        lambda lam: obj(rho + lam * direction), bounds=(0.0, 1.0), method="bounded", options={"xatol": 1e-8}
    )
    lam, val = float(res.x), float(res.fun)
    f1 = obj(rho + direction)
    if f1 < val:
        lam, val = 1.0, f1
    if val > f0:
        # Armijo-style halving as a fallback; never accept an increase
        lam = 0.5
        for _ in range(30):
            val = obj(rho + lam * direction)
            if val <= f0:
                break
            lam *= 0.5
        else:
            return 0.0, f0
    return lam, val


def frank_wolfe_solve(
    constraints: ConstraintSet,
    objective: KeyMapObjective,
    rho0,
    tol: float = 1e-4,
    max_iter: int = 300,
    patience: int = 25,
    subproblem: Optional[LinearSubproblem] = None,
    step_tol: float = 1e-7,
):
    """Step 1: minimise f over the constraint set starting from a feasible ``rho0``.

    Linear subproblems are solved to ``step_tol``; only the step direction
    depends on them. Returns an :class:`FWResult`. Raises :class:`Stalled` (carrying the partial
    result as ``.result``) when the objective stops improving for ``patience``
    iterations while the Frank-Wolfe gap is still above ``tol``.
    """
    rho = _as_array(rho0)
    rho = (rho + rho.conj().T) / 2
    viol = constraints.max_violation(rho)
    if viol > FEASIBILITY_BUDGET:
        raise Infeasible(f"starting point violates the constraints by {viol:.3g}")
    sub = subproblem or LinearSubproblem(constraints)
    f, grad = objective.value_and_gradient(rho)
    history = [f]
    best, since_best = f, 0
    gap = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        lin = sub.solve(grad, step_tol)
        if constraints.max_violation(lin.sigma) > SUBPROBLEM_BUDGET:
            err = Stalled(f"linear subproblem returned an infeasible point (status {lin.status})")
            err.result = FWResult(rho, f, gap, it - 1, history, stalled=True)
            raise err
        gap = float(np.real(np.sum(grad.T * rho))) - lin.value
        if gap < tol:
            it -= 1
            break
        lam, f_new = _line_search(objective, rho, lin.sigma - rho, f)
        if lam > 0:
            rho = rho + lam * (lin.sigma - rho)
            rho = (rho + rho.conj().T) / 2
            f, grad = objective.value_and_gradient(rho)
        history.append(f)
        if f < best - 1e-12:
            best, since_best = f, 0
        else:
            since_best += 1
        if since_best >= patience:
            err = Stalled(f"no progress for {patience} iterations, gap {gap:.3g}")
            err.result = FWResult(rho, f, gap, it, history, stalled=True)
            raise err
    return FWResult(rho, f, gap, it, history)


def dual_lower_bound(
    rho, grad, constraints: ConstraintSet, objective: KeyMapObjective, subproblem: Optional[LinearSubproblem] = None
) -> tuple[float, dict]:
    """Step 2: certified lower bound on min over S of f.

    f_step2 = f_eps(rho) - Tr[rho grad] + (certified dual value over S widened by
    the violations of rho) - (regularisation penalty). Since rho lies in the
    widened set, the result never exceeds f_eps(rho).
    """
    rho = _as_array(rho)
    grad = _as_array(grad)
    sub = subproblem or LinearSubproblem(constraints)
    slack = constraints.violations(rho)
    try:
        lin = sub.solve(grad)
    except (CertificateFailure, ValueError, ArithmeticError) as exc:
        raise CertificateFailure(f"dual solve failed: {exc}") from exc
    dual_value = sub.certified_bound(grad, lin.dual, slack)
    if not math.isfinite(dual_value):
        raise CertificateFailure("dual value is not finite")
    f_rho = objective(rho)
    lin_rho = float(np.real(np.sum(grad.T * rho)))
    f2 = f_rho - lin_rho + dual_value - objective.penalty()
    info = {"dual_value": dual_value, "linear_value": lin.value, "status": lin.status, "slack": slack, "dual": lin.dual}
    return f2, info


def initial_point(frame: DisplacedFrame, constraints: ConstraintSet, subproblem: LinearSubproblem):
    """Simulated channel output in the cutoff space, or an interior point of S if that is infeasible."""
    rho = simulated_state(frame, constraints.rho_a)
    rho = (rho + rho.conj().T) / 2
    if constraints.max_violation(rho) <= FEASIBILITY_BUDGET:
        return rho, "simulated"
    log.info("simulated state infeasible (%.3g); using an interior point", constraints.max_violation(rho))
    sigma = subproblem.solve(np.zeros((frame.dim, frame.dim))).sigma
    if constraints.max_violation(sigma) > FEASIBILITY_BUDGET:
        raise Infeasible("could not find a feasible starting point")
    return sigma, "interior"


@dataclass
class SolveReport:
    """Outcome of one numerical key-rate evaluation (bits per channel use)."""

    f_step1: float
    f_step2: float
    iterations: int
    max_violation: float
    weight: float
    delta_w: float
    delta_ec: float
    rate: float
    fw_gap: float = math.nan
    p_pass: float = 1.0
    h_cond_bob: Optional[float] = None  # min_i H(Z_j | Z_i), classical, FullyPrivate only
    start: str = "simulated"
    stalled: bool = False
    wall_time: float = 0.0

    @property
    def gap(self) -> float:
        return self.f_step1 - self.f_step2

    @property
    def rate_clamped(self) -> float:
        return max(self.rate, 0.0)

    @property
    def negative(self) -> bool:
        return self.rate < 0


def keyrate_numeric(
    spec: ProtocolSpec,
    channel: ChannelSpec,
    network: NetworkSpec,
    cutoff: CutoffSpec = CutoffSpec(),
    beta_rec: float = 0.95,
    fully_private: bool = False,
    tol: float = 1e-4,
    max_iter: int = 300,
    eps: float = EPS_DEFAULT,
    weight_rule: str = "union",
    max_trusted: Optional[int] = 2,
) -> SolveReport:
    """Certified asymptotic key rate for the trusted Bobs of a star network.

    rate = f_step2 - delta_EC - Delta(W), or for fully private Bobs
    min(f_step2 - Delta(W), min_i H(Z_j|Z_i)) - delta_EC with the classical
    conditional entropy from the heterodyne statistics of two Bobs.
    """
    start_time = time.perf_counter()
    if max_trusted is not None and network.m_trusted > max_trusted:
        raise ValueError(f"m_trusted = {network.m_trusted} exceeds the resource guard {max_trusted}")
    frame = DisplacedFrame(spec, channel, network, cutoff)
    gam, gam_sq = frame.moment_bounds()
    weight = compute_weight(gam, gam_sq, cutoff.n_c, spec.p, network.m_trusted, weight_rule)
    cs = ConstraintSet.from_frame(frame, weight)
    sub = LinearSubproblem(cs)
    objective = KeyMapObjective(frame.key_kraus_operators(), eps)
    rho0, start = initial_point(frame, cs, sub)
    try:
        fw = frank_wolfe_solve(cs, objective, rho0, tol, max_iter, subproblem=sub)
    except Stalled as exc:
        log.warning("%s; certifying the last iterate", exc)
        fw = exc.result
    _, grad = objective.value_and_gradient(fw.rho)
    f2, _ = dual_lower_bound(fw.rho, grad, cs, objective, sub)
    joint = joint_distribution(spec, channel, network.split)
    delta_ec = ec_leakage(joint, beta_rec)
    delta_w = delta_correction(weight, spec.n_states)
    h_cond = None
    if fully_private and network.m_trusted > 1:
        h_cond = conditional_entropy_key(bob_bob_joint(spec, channel, network.split))
        rate = min(f2 - delta_w, h_cond) - delta_ec
    else:
        rate = f2 - delta_ec - delta_w
    return SolveReport(
        f_step1=fw.value,
        f_step2=f2,
        iterations=fw.iterations,
        max_violation=cs.max_violation(fw.rho),
        weight=weight,
        delta_w=delta_w,
        delta_ec=delta_ec,
        rate=rate,
        fw_gap=fw.gap,
        p_pass=joint.pass_probability,
        h_cond_bob=h_cond,
        start=start,
        stalled=fw.stalled,
        wall_time=time.perf_counter() - start_time,
    )
