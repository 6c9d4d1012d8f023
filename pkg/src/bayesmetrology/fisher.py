"""Classical and quantum Fisher information for phase encodings."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .encoding import EncodedProbe
from .fock import TwoModeState, j_parameter, mandel_q, mean_photon_number
from .povm import PhaseLikelihood, Povm

DROP_BELOW = 1e-14


class DerivativeSingularityWarning(RuntimeWarning):
    """An outcome probability vanishes while its derivative does not."""


@dataclass(frozen=True)
class FisherReport:
    f_classical: float
    f_quantum: float

    def crb(self, mu) -> np.ndarray:
        """Cramer-Rao asymptote ``1 / (mu F)`` for the classical information."""
        return 1.0 / (np.asarray(mu, dtype=float) * self.f_classical)

    def quantum_crb(self, mu) -> np.ndarray:
        return 1.0 / (np.asarray(mu, dtype=float) * self.f_quantum)


def _as_probe(probe) -> EncodedProbe:
    return EncodedProbe.from_state(probe) if isinstance(probe, TwoModeState) else probe


def classical_fisher(povm: Povm, probe, theta: float = 0.0, step: float = 1e-4) -> float:
    """``sum_n p'(n)^2 / p(n)`` with analytic derivatives.

    An outcome whose probability and slope both vanish at ``theta`` sits at a
    quadratic zero, where ``p'^2 / p`` tends to ``2 p''``; that limit is used
    instead of dropping the outcome.
    """
    lik = PhaseLikelihood(_as_probe(probe), povm)
    p, dp = lik.derivatives([theta])
    p, dp = p[:, 0], dp[:, 0]
    small = p < DROP_BELOW
    total = float(np.sum(dp[~small] ** 2 / p[~small]))
    if np.any(small):
        if np.any(np.abs(dp[small]) > 1e-6):
            warnings.warn("outcome with vanishing probability has non-zero slope",
                          DerivativeSingularityWarning, stacklevel=2)
        _, dps = lik.derivatives([theta - step, theta + step])
        curv = (dps[small, 1] - dps[small, 0]) / (2 * step)
        total += float(np.sum(2 * np.clip(curv, 0.0, None)))
    return total


def likelihood_derivative_error(povm: Povm, probe, theta: float = 0.0,
                                step: float = 1e-5) -> float:
    """Largest relative gap between analytic and central-difference slopes."""
    lik = PhaseLikelihood(_as_probe(probe), povm)
    _, dp = lik.derivatives([theta])
    pp = lik.probabilities([theta + step, theta - step])
    fd = (pp[:, 0] - pp[:, 1]) / (2 * step)
    scale = max(np.max(np.abs(dp)), 1e-12)
    return float(np.max(np.abs(dp[:, 0] - fd)) / scale)


def sld_quantum_fisher(rho: np.ndarray, drho: np.ndarray, cutoff: float = 1e-12):
    """Quantum Fisher information and SLD of a mixed state.

    Solves ``L rho + rho L = 2 drho`` in the eigenbasis of ``rho`` for every
    eigenvalue pair whose sum exceeds ``cutoff``. Returns ``(F_Q, L)``.
    """
    rho = (rho + rho.conj().T) / 2
    p, v = np.linalg.eigh(rho)
    p = np.clip(p, 0.0, None)
    d = v.conj().T @ drho @ v
    denom = p[:, None] + p[None, :]
    # pairs with one index in the kernel still carry information
    pairs = denom > cutoff
    l_eig = np.zeros_like(d)
    l_eig[pairs] = 2 * d[pairs] / denom[pairs]
    fq = float(np.real(np.sum(2 * np.abs(d[pairs]) ** 2 / denom[pairs])))
    return fq, v @ l_eig @ v.conj().T


def quantum_fisher(probe, theta: float = 0.0) -> float:
    """QFI of a (possibly mixed) probe under its diagonal encoding.

    Pure probes use ``4 Var(G)``; mixtures go through the SLD.
    """
    p = _as_probe(probe)
    if p.is_pure:
        w = np.abs(p.components[0]) ** 2
        w = w / w.sum()
        m = w @ p.generator
        return float(4 * (w @ (p.generator - m) ** 2))
    idx = p.occupied()
    sub = EncodedProbe(p.components[:, idx], p.generator[idx])
    return sld_quantum_fisher(sub.rho(theta), sub.drho(theta))[0]


def fisher_report(povm: Povm, probe, theta: float = 0.0) -> FisherReport:
    return FisherReport(classical_fisher(povm, probe, theta), quantum_fisher(probe, theta))


def path_symmetric_identity(state: TwoModeState) -> tuple[float, float]:
    """``(F_Q, n (1 + Q)(1 - J))``; equal for path-symmetric pure states."""
    n = mean_photon_number(state)
    q = mandel_q(state)
    j = j_parameter(state)
    return quantum_fisher(state), n * (1 + q) * (1 - j)
