"""Built-in consistency checks behind ``mucvqkd verify``.

Each check compares an engine result against an independent route (closed
form, brute force, second engine, Monte-Carlo) and prints one status line.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .cli import eta_from_distance
from .lossonly import (
    TrustScenario,
    cz_coefficients,
    dw_rate,
    eve_port_magnitudes,
    holevo_direct,
    holevo_reduced,
    kj_coefficients,
    reduce_to_single_bob,
)
from .protocol import ChannelSpec, ProtocolSpec, joint_distribution, outcome_distribution


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _kj_closed(b2: float) -> np.ndarray:
    e = math.exp(-b2)
    return e * np.array(
        [
            (math.cosh(b2) + math.cos(b2)) / 2,
            (math.sinh(b2) + math.sin(b2)) / 2,
            (math.cosh(b2) - math.cos(b2)) / 2,
            (math.sinh(b2) - math.sin(b2)) / 2,
        ]
    )


def check_kj() -> CheckResult:
    err = max(np.max(np.abs(kj_coefficients(math.sqrt(b2)) - _kj_closed(b2))) for b2 in (0.1, 1.0, 4.0))
    return CheckResult("k_j series vs cosh/cos closed forms", err < 1e-12, f"max err {err:.2e} (tol 1e-12)")


def check_cz() -> CheckResult:
    k = _kj_closed(0.7)
    k0, k1, k2, k3 = k
    radicals = np.sqrt(
        [k0**2 + 2 * k1 * k3 + k2**2, 2 * k0 * k1 + 2 * k2 * k3, k1**2 + 2 * k0 * k2 + k3**2, 2 * k0 * k3 + 2 * k1 * k2]
    )
    err2 = float(np.max(np.abs(cz_coefficients(k, 2) - radicals)))
    brute = np.zeros(4)
    for a in itertools.product(range(4), repeat=3):
        brute[sum(a) % 4] += np.prod(k[list(a)])
    err3 = float(np.max(np.abs(cz_coefficients(k, 3) - np.sqrt(brute))))
    norm = max(abs(float(np.sum(cz_coefficients(k, n) ** 2)) - 1) for n in (1, 7, 64, 1024))
    ok = err2 < 1e-12 and err3 < 1e-12 and norm < 1e-9
    return CheckResult(
        "c_z convolution vs radicals / brute force", ok, f"N_B=2 {err2:.1e}, N_B=3 {err3:.1e}, norm {norm:.1e}"
    )


def check_holevo_engines() -> CheckResult:
    worst, slowest = 0.0, 0.0
    for n_bobs in (2, 3, 4):
        for alpha in (0.4, 0.8, 1.2):
            for eta in (0.2, 0.6, 0.95):
                spec = ProtocolSpec.psk(alpha)
                joint = joint_distribution(spec, ChannelSpec(eta), 1 / math.sqrt(n_bobs))
                t = time.perf_counter()
                a = holevo_direct(spec, eta, n_bobs, joint)
                b = holevo_reduced(spec, eta, n_bobs, n_bobs, joint)
                slowest = max(slowest, time.perf_counter() - t)
                worst = max(worst, abs(a - b))
    return CheckResult(
        "direct vs reduced Holevo", worst < 1e-8 and slowest < 1, f"max diff {worst:.1e}, slowest {slowest:.3f}s"
    )


def check_reduction_endpoints() -> CheckResult:
    eta, n_bobs = 0.37, 5
    amp_c = reduce_to_single_bob(eta, n_bobs, n_bobs)[0]
    amp_a = reduce_to_single_bob(eta, n_bobs, 1)[0]
    err = max(abs(amp_c - math.sqrt(1 - eta)), abs(amp_a - math.sqrt(1 - eta / n_bobs)))
    ports = eve_port_magnitudes(1.0, eta, n_bobs, 2)
    photon = abs(sum(p**2 for p in ports) - (1 - 2 * eta / n_bobs))
    return CheckResult("single-Bob reduction endpoints", err < 1e-15 and photon < 1e-15, f"err {err:.1e}")


def check_fiber() -> CheckResult:
    eta1 = eta_from_distance(1)
    r = [math.sqrt((1 - e) / (1 - e / 16)) for e in (eta1, eta_from_distance(100))]
    # the quoted 0.954 is 10^(-0.02) = 0.95499 cut to three decimals
    ok = eta_from_distance(100) == 0.01 and math.floor(eta1 * 1000) / 1000 == 0.954
    ok = ok and round(r[0], 3) == 0.219 and round(r[1], 3) == 0.995
    return CheckResult("fiber model and r(eta)", ok, f"eta_100={eta_from_distance(100)!r}, r=({r[0]:.4f}, {r[1]:.4f})")


def check_weight_certificate() -> CheckResult:
    from .sdpengine.operators import weight_certificate_min_eig

    per_bob = {c: weight_certificate_min_eig(*c, rule="per_bob") for c in ((3, 1), (3, 2), (7, 1))}
    union = {c: weight_certificate_min_eig(*c, rule="union") for c in ((3, 1), (3, 2), (7, 1))}
    ok = all(v >= -1e-9 for v in per_bob.values())
    detail = "1/M_B multipliers: " + ", ".join(f"{c}:{v:+.3g}" for c, v in per_bob.items())
    detail += "; union multipliers: " + ", ".join(f"{c}:{v:+.3g}" for c, v in union.items())
    return CheckResult("weight certificate min eigenvalue >= -1e-9", ok, detail)


def check_wedge_monte_carlo(seed: int, samples: int = 1_000_000) -> CheckResult:
    rng = np.random.default_rng(seed)
    mean, var = 0.6 + 0.2j, 0.75
    spec = ProtocolSpec.psk(1.0, delta_r=0.3)
    exact = outcome_distribution(mean, var, spec)
    y = mean + math.sqrt(var) * (rng.standard_normal(samples) + 1j * rng.standard_normal(samples))
    theta = np.mod(np.angle(y) + math.pi / 4, 2 * math.pi)
    z = np.minimum((theta // (math.pi / 2)).astype(int), 3)
    z[np.abs(y) < spec.delta_r] = 4
    freq = np.bincount(z, minlength=5) / samples
    se = np.sqrt(exact * (1 - exact) / samples)
    worst = float(np.max(np.abs(freq - exact) / np.maximum(se, 1e-300)))
    return CheckResult(
        "wedge probabilities vs Monte-Carlo", worst < 3, f"max |dev|/SE = {worst:.2f} ({samples} samples)"
    )


def check_sdp_convergence() -> CheckResult:
    from .sdpengine import CutoffSpec, NetworkSpec, keyrate_numeric

    eta = eta_from_distance(20)
    spec = ProtocolSpec.psk(0.87)
    parts, ok = [], True
    for n_bobs, n_c in ((1, 7), (2, 3)):
        rep = keyrate_numeric(spec, ChannelSpec(eta, 1e-6), NetworkSpec(n_bobs, n_bobs), CutoffSpec(n_c))
        exact = dw_rate(TrustScenario.some_trusted(n_bobs), spec, eta, n_bobs).rate
        rel = abs(rep.rate - exact) / exact
        ok &= rel < 0.02 and rep.gap < 1e-3
        parts.append(f"N_B={n_bobs}: rel {rel:.2%}, gap {rep.gap:.1e}, {rep.wall_time:.0f}s")
    return CheckResult("numerical vs analytic rate at xi=1e-6, 20 km", ok, "; ".join(parts))


def all_checks(seed: int = 0, include_sdp: bool = True) -> list[Callable[[], CheckResult]]:
    checks = [
        check_kj,
        check_cz,
        check_holevo_engines,
        check_reduction_endpoints,
        check_fiber,
        check_weight_certificate,
        lambda: check_wedge_monte_carlo(seed),
    ]
    if include_sdp:
        checks.append(check_sdp_convergence)
    return checks


def run_checks(seed: int = 0, include_sdp: bool = True) -> bool:
    ok = True
    for check in all_checks(seed, include_sdp):
        res = check()
        ok &= res.passed
        print(f"[{'PASS' if res.passed else 'FAIL'}] {res.name}: {res.detail}", flush=True)
    return ok
