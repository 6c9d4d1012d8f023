"""Two-photon interferometry with photon loss in one arm.

Loss is modelled as a fictitious beam splitter of transmissivity ``eta`` on
arm 1 with Kraus operators ``K_l = (1-eta)^(l/2) eta^(N1/2) a1^l / sqrt(l!)``.
Unlike the rest of the package the phase is imprinted on arm 1 alone,
``exp(-i N1 phi)``, and the default prior is centred at ``pi/4``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .bayes import MseCurve, mse_repeated
from .encoding import EncodedProbe
from .fisher import quantum_fisher
from .fock import FockDims, annihilation, mode1, photon_numbers
from .personick import FlatPrior, PersonickSolution, averaged_moments, solve_estimator
from .povm import optimal_povm

TWO_PHOTON = FockDims(3, 3)
LOSS_PRIOR = FlatPrior(math.pi / 4, math.pi / 2)


class OptimizerStallWarning(RuntimeWarning):
    """Local refinement did not improve on the grid optimum."""


@dataclass(frozen=True)
class LossChannel:
    eta: float

    def __post_init__(self):
        if not 0 < self.eta <= 1:
            raise ValueError(f"transmissivity must lie in (0, 1], got {self.eta}")

    @property
    def kraus(self) -> list[np.ndarray]:
        d = TWO_PHOTON.d1
        a = annihilation(d)
        damp = np.diag(self.eta ** (np.arange(d) / 2))
        ops = []
        for l in range(d):
            k1 = (1 - self.eta) ** (l / 2) * damp @ np.linalg.matrix_power(a, l) / math.sqrt(math.factorial(l))
            ops.append(mode1(k1, TWO_PHOTON))
        return ops

    def completeness_error(self) -> float:
        """``sum K^dag K - I`` on states with at most two photons in arm 1."""
        total = sum(k.conj().T @ k for k in self.kraus)
        return float(np.max(np.abs(total - np.eye(TWO_PHOTON.size))))


@dataclass(frozen=True)
class TwoPhotonProbe:
    """``sum_k c_k |k, 2-k>`` with ``k`` photons in the lossy arm."""

    c0: complex
    c1: complex
    c2: complex

    def __post_init__(self):
        if abs(self.norm - 1) > 1e-10:
            raise ValueError(f"probe amplitudes have norm {self.norm:.12g}, expected 1")

    @property
    def norm(self) -> float:
        return math.sqrt(abs(self.c0) ** 2 + abs(self.c1) ** 2 + abs(self.c2) ** 2)

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([self.c0, self.c1, self.c2], dtype=complex)

    @property
    def vector(self) -> np.ndarray:
        v = np.zeros(TWO_PHOTON.size, dtype=complex)
        for k, c in enumerate(self.amplitudes):
            v[TWO_PHOTON.index(k, 2 - k)] = c
        return v


def lossy_probe(probe: TwoPhotonProbe, channel: LossChannel) -> EncodedProbe:
    """Loss applied before the single-arm phase; components are ``K_l psi``."""
    comps = np.array([k @ probe.vector for k in channel.kraus])
    comps = comps[np.linalg.norm(comps, axis=1) > 0]
    n1, _ = photon_numbers(TWO_PHOTON)
    return EncodedProbe(comps, n1.astype(float), TWO_PHOTON, label="two-photon")


def lossy_encoded_state(probe: TwoPhotonProbe, channel: LossChannel, phi: float) -> np.ndarray:
    return lossy_probe(probe, channel).rho(phi)


# basis order used when printing the populated block
REPORT_BASIS = tuple(TWO_PHOTON.index(n, m) for n, m in ((0, 0), (0, 2), (1, 0), (2, 0)))


def _probe_from_weights(w) -> TwoPhotonProbe:
    w = np.clip(np.asarray(w, dtype=float), 0, None)
    c = np.sqrt(w / w.sum())
    return TwoPhotonProbe(*c)


def _qfi_weights(w, channel) -> float:
    return quantum_fisher(lossy_probe(_probe_from_weights(w), channel))


def best_fisher_two_photon(eta: float, grid: int = 200) -> TwoPhotonProbe:
    """Real non-negative amplitudes that maximise the lossy QFI.

    Dense search over the weight simplex, then a bounded local refinement in
    the two free weights.
    """
    channel = LossChannel(eta)
    best, best_w = -np.inf, None
    for i in range(grid + 1):
        for j in range(grid + 1 - i):
            w = np.array([i, j, grid - i - j], dtype=float) / grid
            f = _qfi_weights(w, channel)
            if f > best + 1e-12:
                best, best_w = f, w
    obj = lambda x: -_qfi_weights(np.array([x[0], x[1], 1 - x[0] - x[1]]), channel)
    res = minimize(obj, best_w[:2], method="L-BFGS-B", bounds=[(0, 1), (0, 1)])
    x = res.x
    w = np.array([x[0], x[1], max(1 - x[0] - x[1], 0.0)])
    if -res.fun + 1e-12 < best:
        warnings.warn("local refinement did not improve the grid optimum",
                      OptimizerStallWarning, stacklevel=2)
        w = best_w
    return _probe_from_weights(w)


def lossy_solution(probe: TwoPhotonProbe, channel: LossChannel,
                   prior: FlatPrior = LOSS_PRIOR) -> PersonickSolution:
    return solve_estimator(averaged_moments(lossy_probe(probe, channel), prior, "full"))


def lossy_personick_sweep(eta: float, prior: FlatPrior = LOSS_PRIOR, mu_max: int = 1000,
                          probe: TwoPhotonProbe | None = None, **kwargs):
    """Repeated optimal single-shot measurement on the lossy two-photon probe.

    Returns ``(curve, solution)``; ``curve.crb`` holds ``1/(mu F_Q)``.
    """
    channel = LossChannel(eta)
    probe = best_fisher_two_photon(eta) if probe is None else probe
    enc = lossy_probe(probe, channel)
    sol = lossy_solution(probe, channel, prior)
    povm = optimal_povm(sol, enc.occupied(), enc.dim)
    fq = quantum_fisher(enc)
    curve = mse_repeated(enc, povm, prior, mu_max, fq=fq, **kwargs)
    meta = dict(curve.meta, state="two-photon-lossy", scheme="optimal", eta=eta,
                encoding="single-arm")
    return MseCurve(curve.mu, curve.mse, curve.stderr, curve.taylor_delta, curve.crb,
                    curve.exact, meta), sol
