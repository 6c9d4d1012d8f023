"""Probes under a diagonal phase encoding.

Every estimation problem in this package has the form
``rho(theta) = exp(-i G theta) rho0 exp(i G theta)`` with ``G`` diagonal in the
working basis (``J_z`` for the interferometer, ``N_1`` for the lossy arm).
:class:`EncodedProbe` stores ``rho0`` as a sum of unnormalised pure
components together with the diagonal of ``G``; everything else (moments,
likelihoods, Fisher information) is derived from that.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fock import FockDims, TwoModeState, jz_diagonal


@dataclass(frozen=True)
class EncodedProbe:
    components: np.ndarray
    generator: np.ndarray
    dims: FockDims | None = None
    label: str = field(default="", compare=False)

    def __post_init__(self):
        comps = np.atleast_2d(np.asarray(self.components, dtype=complex))
        gen = np.asarray(self.generator, dtype=float).ravel()
        if comps.shape[1] != gen.size:
            raise ValueError(f"components have dimension {comps.shape[1]}, "
                             f"generator has {gen.size}")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "generator", gen)

    @classmethod
    def from_state(cls, state: TwoModeState) -> "EncodedProbe":
        """Pure two-mode probe encoded with ``exp(-i J_z theta)``."""
        return cls(state.vector[None, :], jz_diagonal(state.dims), state.dims, state.label)

    @classmethod
    def from_density(cls, rho0, generator, dims=None, label="", tol=1e-14):
        rho0 = np.asarray(rho0, dtype=complex)
        vals, vecs = np.linalg.eigh((rho0 + rho0.conj().T) / 2)
        keep = vals > tol
        comps = (vecs[:, keep] * np.sqrt(vals[keep])).T
        return cls(comps, generator, dims, label)

    @property
    def dim(self) -> int:
        return self.generator.size

    @property
    def is_pure(self) -> bool:
        return self.components.shape[0] == 1

    @property
    def rho0(self) -> np.ndarray:
        c = self.components
        return c.T @ c.conj()

    def rho(self, theta: float) -> np.ndarray:
        ph = np.exp(-1j * self.generator * theta)
        return ph[:, None] * self.rho0 * ph.conj()[None, :]

    def drho(self, theta: float) -> np.ndarray:
        """Derivative ``-i [G, rho(theta)]``."""
        r = self.rho(theta)
        g = self.generator
        return -1j * (g[:, None] - g[None, :]) * r

    def trace(self) -> float:
        return float(np.sum(np.abs(self.components) ** 2))

    def occupied(self, tol: float = 1e-32) -> np.ndarray:
        """Indices of basis states that carry any population."""
        weight = np.sum(np.abs(self.components) ** 2, axis=0)
        return np.flatnonzero(weight > tol * max(weight.max(), 1e-300))

    def sector_basis(self, tol: float = 1e-13) -> tuple[np.ndarray, np.ndarray]:
        """Orthonormal basis of the span of the generator-sector projections of
        the components.

        Returns ``(Q, g)``: ``Q`` is a ``(dim, r)`` isometry whose columns each
        lie inside a single eigenspace of ``G`` (eigenvalue ``g[j]``). Because
        ``U(theta) Q = Q diag(exp(-i g theta))``, the whole orbit
        ``rho(theta)`` is supported on ``range(Q)``.
        """
        keys = np.round(self.generator * 1e9).astype(np.int64)
        cols, gens = [], []
        for key in np.unique(keys):
            idx = np.flatnonzero(keys == key)
            block = self.components[:, idx]
            if not np.any(block):
                continue
            u, s, vh = np.linalg.svd(block, full_matrices=False)
            rank = int(np.sum(s > tol * s[0]))
            for k in range(rank):
                col = np.zeros(self.dim, dtype=complex)
                col[idx] = vh[k]
                cols.append(col)
                gens.append(self.generator[idx[0]])
        if not cols:
            return np.zeros((self.dim, 0), dtype=complex), np.zeros(0)
        return np.array(cols).T, np.array(gens)
