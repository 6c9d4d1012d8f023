"""Optimal single-shot Bayesian estimator under a flat prior.

For a quadratic cost the minimum mean squared error over all measurements is
``Var_prior(theta) - Tr(rho_bar S)``, where ``rho = <rho(theta)>`` and
``rho_bar = <theta rho(theta)>`` are prior averages and ``S`` solves
``S rho + rho S = 2 rho_bar``. For a diagonal generator both averages are
Hadamard products of ``rho0`` with closed-form kernels.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .encoding import EncodedProbe
from .fock import TwoModeState

SUPPORT_CUTOFF = 1e-12


class EmptySupportError(ValueError):
    """No eigenvalue of the averaged state exceeds the support cutoff."""


@dataclass(frozen=True)
class FlatPrior:
    """Uniform prior of the given width centred at ``mean``."""

    mean: float = 0.0
    width: float = math.pi / 2

    def __post_init__(self):
        if not (np.isfinite(self.width) and self.width > 0):
            raise ValueError(f"prior width must be positive and finite, got {self.width}")
        if not np.isfinite(self.mean):
            raise ValueError(f"prior mean must be finite, got {self.mean}")

    @property
    def lower(self) -> float:
        return self.mean - self.width / 2

    @property
    def upper(self) -> float:
        return self.mean + self.width / 2

    @property
    def variance(self) -> float:
        return self.width ** 2 / 12

    @property
    def second_moment(self) -> float:
        return self.variance + self.mean ** 2

    def sample(self, rng: np.random.Generator, size=None):
        return rng.uniform(self.lower, self.upper, size)


def kernel_values(x, prior: FlatPrior) -> tuple[np.ndarray, np.ndarray]:
    """Prior averages of ``exp(-i x theta / 2)`` and ``theta exp(-i x theta / 2)``.

    ``x`` is twice the difference of generator eigenvalues between the row
    and column basis state.
    """
    x = np.asarray(x, dtype=float)
    w, tb = prior.width, prior.mean
    zero = np.abs(x) < 1e-12
    xs = np.where(zero, 1.0, x)
    a = np.exp(-1j * xs * tb / 2)
    b = np.sin(xs * w / 4)
    c = np.cos(xs * w / 4)
    d = tb - 2j / xs
    k = (4 / w) * a * b / xs
    l = (2 * a / xs) * (2 * b * d / w + 1j * c)
    k = np.where(zero, 1.0 + 0j, k)
    l = np.where(zero, tb + 0j, l)
    return k, l


def kernel_matrices(generator, prior: FlatPrior) -> tuple[np.ndarray, np.ndarray]:
    g = np.asarray(generator, dtype=float)
    return kernel_values(2 * (g[:, None] - g[None, :]), prior)


@dataclass(frozen=True)
class MomentPair:
    """Prior-averaged state and first moment, in a reduced basis.

    ``basis`` is a ``(full_dim, r)`` isometry; the full-space operators are
    ``basis @ rho @ basis^H``.
    """

    rho: np.ndarray
    rho_bar: np.ndarray
    prior: FlatPrior
    basis: np.ndarray
    generator: np.ndarray

    @property
    def dim(self) -> int:
        return self.rho.shape[0]

    def full(self) -> tuple[np.ndarray, np.ndarray]:
        q = self.basis
        return q @ self.rho @ q.conj().T, q @ self.rho_bar @ q.conj().T


def _as_probe(probe) -> EncodedProbe:
    if isinstance(probe, EncodedProbe):
        return probe
    if isinstance(probe, TwoModeState):
        return EncodedProbe.from_state(probe)
    raise TypeError(f"expected EncodedProbe or TwoModeState, got {type(probe).__name__}")


def averaged_moments(probe, prior: FlatPrior, method: str = "full") -> MomentPair:
    """Compute ``rho`` and ``rho_bar``.

    ``method="full"`` keeps every occupied basis state; ``"sector"`` first
    projects onto the span of the probe inside each generator eigenspace,
    which is exact and usually far smaller.
    """
    p = _as_probe(probe)
    if method == "full":
        idx = p.occupied()
        q = np.zeros((p.dim, idx.size), dtype=complex)
        q[idx, np.arange(idx.size)] = 1.0
        g = p.generator[idx]
        comps = p.components[:, idx]
    elif method == "sector":
        q, g = p.sector_basis()
        comps = p.components @ q.conj()
    else:
        raise ValueError(f"unknown method {method!r}; use 'full' or 'sector'")
    rho0 = comps.T @ comps.conj()
    k, l = kernel_matrices(g, prior)
    return MomentPair(rho0 * k, rho0 * l, prior, q, g)


@dataclass(frozen=True)
class PersonickSolution:
    moments: MomentPair
    estimator: np.ndarray
    estimates: np.ndarray
    eigenvectors: np.ndarray
    bound: float
    support_dim: int
    residual: float
    degenerate_groups: list = field(default_factory=list)

    @property
    def dual_bound(self) -> float:
        """``Var_prior - Var_rho(S)``; must agree with :attr:`bound`."""
        rho = self.moments.rho
        s = self.estimator
        mean = np.real(np.trace(rho @ s))
        spread = np.real(np.trace(rho @ s @ s)) - mean ** 2
        return self.moments.prior.variance - float(spread)

    @property
    def mean_estimate(self) -> float:
        """``Tr(rho S)``, equal to the prior mean."""
        s = self.estimator
        return float(np.real(np.trace(self.moments.rho @ s)))

    def full_estimator(self) -> np.ndarray:
        """``S`` embedded in the full probe basis."""
        q = self.moments.basis
        return q @ self.estimator @ q.conj().T

    @property
    def projectors(self) -> np.ndarray:
        """Optimal measurement kets in the full basis, one column per outcome."""
        return self.moments.basis @ self.eigenvectors


def _degenerate_groups(vals: np.ndarray, rtol: float) -> list:
    groups, start = [], 0
    scale = max(np.max(np.abs(vals)), 1.0) if vals.size else 1.0
    for i in range(1, vals.size + 1):
        if i == vals.size or vals[i] - vals[i - 1] > rtol * scale:
            if i - start > 1:
                groups.append(list(range(start, i)))
            start = i
    return groups


def solve_estimator(moments: MomentPair, support_cutoff: float = SUPPORT_CUTOFF,
                    degeneracy_rtol: float = 1e-9) -> PersonickSolution:
    """Solve ``S rho + rho S = 2 rho_bar`` on the support of ``rho``."""
    rho = (moments.rho + moments.rho.conj().T) / 2
    rbar = (moments.rho_bar + moments.rho_bar.conj().T) / 2
    p, v = np.linalg.eigh(rho)
    keep = p > support_cutoff
    if not keep.any():
        raise EmptySupportError(f"no eigenvalue of rho above {support_cutoff}")
    p, v = p[keep], v[:, keep]
    b = v.conj().T @ rbar @ v
    s_eig = 2 * b / (p[:, None] + p[None, :])
    s_eig = (s_eig + s_eig.conj().T) / 2
    est, u = np.linalg.eigh(s_eig)
    s = v @ s_eig @ v.conj().T
    lhs = s @ rho + rho @ s
    pv = v @ v.conj().T
    rhs = 2 * pv @ rbar @ pv
    residual = float(np.linalg.norm(lhs - rhs) / max(np.linalg.norm(rhs), 1e-300))
    gain = float(np.real(np.sum(b.T * s_eig)))
    bound = moments.prior.second_moment - gain
    return PersonickSolution(moments, s, est, v @ u, bound, int(keep.sum()),
                             residual, _degenerate_groups(est, degeneracy_rtol))


def single_shot_bound(probe, prior: FlatPrior, method: str = "sector") -> float:
    return solve_estimator(averaged_moments(probe, prior, method)).bound


def narrow_prior_bound(probe, prior: FlatPrior, fq: float | None = None) -> float:
    """First-order small-width approximation ``s2 (1 - s2 F_Q)`` with
    ``s2`` the prior variance and ``F_Q`` evaluated at the prior mean."""
    if prior.width > 0.5:
        warnings.warn(f"narrow-prior approximation used with width {prior.width:.3g}",
                      stacklevel=2)
    if fq is None:
        from .fisher import quantum_fisher
        fq = quantum_fisher(probe, prior.mean)
    s2 = prior.variance
    return s2 * (1 - s2 * fq)


def _sector_weights(probe: EncodedProbe) -> tuple[np.ndarray, np.ndarray]:
    """Generator eigenvalues (as integers times 1/2) and populations."""
    twice = np.round(2 * probe.generator).astype(np.int64)
    if not np.allclose(twice, 2 * probe.generator, atol=1e-9):
        raise ValueError("sector convolution needs half-integer generator eigenvalues")
    pops = np.abs(probe.components[0]) ** 2
    lo = twice.min()
    w = np.bincount(twice - lo, weights=pops)
    return lo, w


def collective_bound(probe, prior: FlatPrior, copies: int, method: str = "sector",
                     max_dim: int = 4096) -> float:
    """Single-shot bound for ``copies`` identical pure probes measured jointly.

    ``"sector"`` uses that the joint state only depends on the total generator
    value, so its reduced form is fixed by the convolved sector weights.
    ``"tensor"`` builds the occupied part of the tensor power explicitly.
    """
    if copies < 1:
        raise ValueError("copies must be >= 1")
    p = _as_probe(probe)
    if not p.is_pure:
        raise ValueError("collective bound implemented for pure probes only")
    if method == "sector":
        lo, w = _sector_weights(p)
        total = np.array([1.0])
        for _ in range(copies):
            total = np.convolve(total, w)
        twice = copies * lo + np.arange(total.size)
        nz = total > 1e-300
        amp = np.sqrt(total[nz])
        gen = twice[nz] / 2
        reduced = EncodedProbe(amp[None, :], gen, label=p.label)
        return solve_estimator(averaged_moments(reduced, prior, "full")).bound
    if method == "tensor":
        idx = p.occupied()
        v, g = p.components[0, idx], p.generator[idx]
        if idx.size ** copies > max_dim:
            raise ValueError(f"tensor power has dimension {idx.size ** copies} > {max_dim}")
        vec, gen = v.copy(), g.copy()
        for _ in range(copies - 1):
            vec = np.kron(vec, v)
            gen = (gen[:, None] + g[None, :]).ravel()
        joint = EncodedProbe(vec[None, :], gen, label=p.label)
        return solve_estimator(averaged_moments(joint, prior, "full")).bound
    raise ValueError(f"unknown method {method!r}; use 'sector' or 'tensor'")


def write_spectrum_csv(path, solutions: dict) -> None:
    """Write estimator eigenvalues, one row per (label, outcome index).

    Estimates are ascending and repeated with their multiplicity.
    """
    import io

    from .bayes import atomic_write, fmt_float

    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["state", "index", "estimate"])
    for label, sol in solutions.items():
        for i, e in enumerate(np.sort(sol.estimates)):
            w.writerow([label, i, fmt_float(e)])
    atomic_write(path, buf.getvalue())
