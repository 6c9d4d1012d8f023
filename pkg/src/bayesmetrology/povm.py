"""Measurement schemes and phase likelihoods.

Every scheme here is a rank-one POVM ``{|k><k|}`` whose kets are grouped into
physical outcomes (photon pairs, parity pairs, quadrature eigenvalue pairs or
estimator eigenspaces). Kets are stored on the subset of basis states where
the probe can live, which keeps large truncations cheap: restricting a
complete set of kets to a subspace still resolves the identity there.

Output optics (beam splitter, phases, displacement) are applied to each input
basis state exactly; the beam splitter is exponentiated inside each fixed
total-photon block, so no truncation error enters at the box edges.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import expm

from .encoding import EncodedProbe
from .fock import FockDims, TwoModeState, displacement, photon_numbers, quadrature

SCHEMES = ("counting-even", "counting-odd", "quadratures", "undo", "parity", "optimal")
QUADRATURE_ANGLE = math.pi / 8


@dataclass(frozen=True)
class Povm:
    """Rank-one POVM on a subspace of a ``dim``-dimensional basis.

    ``kets[:, i]`` are the components of ket ``i`` on the basis states listed
    in ``support``; ``groups[i]`` is its outcome index and ``labels`` names the
    outcomes. With ``remainder=True`` an extra final outcome carries
    ``I - sum |k><k|`` (used when the kets only span part of the support).
    """

    kets: np.ndarray
    groups: np.ndarray
    labels: tuple
    support: np.ndarray
    dim: int
    name: str = ""
    remainder: bool = False
    estimates: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        kets = np.asarray(self.kets, dtype=complex)
        groups = np.asarray(self.groups, dtype=np.int64)
        order = np.argsort(groups, kind="stable")
        object.__setattr__(self, "kets", kets[:, order])
        object.__setattr__(self, "groups", groups[order])
        object.__setattr__(self, "support", np.asarray(self.support, dtype=np.int64))
        if kets.shape[0] != self.support.size:
            raise ValueError("kets must have one row per support index")

    @property
    def n_outcomes(self) -> int:
        return len(self.labels)

    @property
    def _starts(self) -> np.ndarray:
        return np.flatnonzero(np.r_[True, np.diff(self.groups) != 0])

    def effects(self) -> list[np.ndarray]:
        """Dense effects on the full basis. Only sensible for small ``dim``."""
        out = []
        n_real = self.n_outcomes - int(self.remainder)
        for g in range(n_real):
            e = np.zeros((self.dim, self.dim), dtype=complex)
            k = self.kets[:, self.groups == g]
            e[np.ix_(self.support, self.support)] = k @ k.conj().T
            out.append(e)
        if self.remainder:
            e = np.zeros((self.dim, self.dim), dtype=complex)
            e[self.support, self.support] = 1.0
            out.append(e - sum(out))
        return out

    def completeness_error(self) -> float:
        """Deviation of ``sum E`` from the identity on the support."""
        if self.remainder:
            return 0.0
        gram = self.kets @ self.kets.conj().T
        return float(np.max(np.abs(gram - np.eye(self.support.size))))


# -- output optics ------------------------------------------------------------

@lru_cache(maxsize=512)
def _bs_block(total: int, angle: float) -> np.ndarray:
    """``exp(-i angle J_x)`` on the block ``|n, total-n>``, n = 0..total."""
    n = np.arange(total)
    off = 0.5 * np.sqrt((n + 1) * (total - n))
    jx = np.diag(off, 1) + np.diag(off, -1)
    return expm(-1j * angle * jx)


def _beam_split(vecs: dict, angle: float) -> dict:
    return {t: _bs_block(t, angle) @ v for t, v in vecs.items()}


def _basis_blocks(dims: FockDims, support: np.ndarray) -> tuple[dict, int]:
    """Input support as columns of per-total-photon blocks.

    Returns ``{total: (total+1, |support|) array}`` with a unit entry at
    position ``n1`` of block ``n1 + n2`` for each support state.
    """
    n1, n2 = photon_numbers(dims)
    n1, n2 = n1[support], n2[support]
    tot = n1 + n2
    blocks = {}
    for t in np.unique(tot):
        b = np.zeros((t + 1, support.size), dtype=complex)
        cols = np.flatnonzero(tot == t)
        b[n1[cols], cols] = 1.0
        blocks[int(t)] = b
    return blocks, int(tot.max())


def _blocks_to_box(blocks: dict, d: int, n_cols: int, phase1=0.0, phase2=0.0) -> np.ndarray:
    """Scatter block vectors into a ``d x d`` output box (rows ``n1*d+n2``),
    applying ``exp(-i phase1 N1 - i phase2 N2)``."""
    out = np.zeros((d * d, n_cols), dtype=complex)
    for t, b in blocks.items():
        n1 = np.arange(t + 1)
        n2 = t - n1
        ph = np.exp(-1j * (phase1 * n1 + phase2 * n2))
        out[n1 * d + n2] = ph[:, None] * b
    return out


def _output_amplitudes(dims, support, phase2: float, phase1: float = 0.0,
                       angle: float = math.pi / 2):
    """Columns ``V |j>`` for support states ``j``, grouped by total photons,
    with ``V = exp(-i angle J_x) exp(-i phase1 N1 - i phase2 N2)``.

    Counting outcomes then have probability ``|<k|V|psi>|^2``. This is the
    complex conjugate of writing the measurement kets as
    ``exp(-i phase2 N2) exp(-i angle J_x)|k>``; with the encoding
    ``exp(-i J_z theta)`` it is the choice that puts the informative fringe
    at a prior centred on zero.
    """
    blocks, nmax = _basis_blocks(dims, support)
    out = {}
    for t, b in blocks.items():
        n1 = np.arange(t + 1)
        ph = np.exp(-1j * (phase1 * n1 + phase2 * (t - n1)))
        out[t] = _bs_block(t, angle) @ (ph[:, None] * b)
    return out, nmax


def _default_support(dims: FockDims, support) -> np.ndarray:
    if support is None:
        return np.arange(dims.size)
    return np.asarray(support, dtype=np.int64)


def _counting(dims, support, pre_phase2, name, group_fn, labels_fn):
    blocks, nmax = _output_amplitudes(dims, support, pre_phase2)
    d = nmax + 1
    amp = _blocks_to_box(blocks, d, support.size)
    # ket_k restricted to support: <j|k> = conj(<k|V|j>)
    kets = amp.conj().T
    live = np.flatnonzero(np.linalg.norm(kets, axis=0) > 1e-14)
    kets = kets[:, live]
    k1, k2 = np.divmod(live, d)
    keys, groups = group_fn(k1, k2)
    return Povm(kets, groups, labels_fn(keys), support, dims.size, name)


def _pairs(k1, k2):
    uniq, inv = np.unique(np.stack([k1, k2], 1), axis=0, return_inverse=True)
    return uniq, inv.ravel()


def _pair_labels(uniq):
    return tuple((int(a), int(b)) for a, b in uniq)


def _parity_groups(k1, k2):
    code = 2 * (k1 % 2) + (k2 % 2)
    uniq, inv = np.unique(code, return_inverse=True)
    return uniq, inv.ravel()


def _parity_labels(codes):
    sign = lambda b: "+" if b == 0 else "-"
    return tuple(sign(c // 2) + sign(c % 2) for c in codes)


def quadrature_basis(d: int, angle: float = QUADRATURE_ANGLE) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and eigenvectors of the truncated single-mode quadrature."""
    vals, vecs = np.linalg.eigh(quadrature(d, angle))
    return vals, vecs


def _quadratures(dims, support, quad_dim, angle):
    blocks, nmax = _output_amplitudes(dims, support, 0.0, phase1=-math.pi / 4)
    d = nmax + 1
    if quad_dim is None:
        quad_dim = d
    if quad_dim < d:
        raise ValueError(f"quadrature dimension {quad_dim} below output support {d}")
    amp = _blocks_to_box(blocks, d, support.size).reshape(d, d, support.size)
    # optics run in the conjugate convention (see _output_amplitudes), which
    # flips the sign of the quadrature angle as well
    vals, vecs = quadrature_basis(quad_dim, -angle)
    v = vecs[:d]
    # <q1 q2 | V | j>
    proj = np.einsum("ap,bq,abj->pqj", v.conj(), v.conj(), amp, optimize=True)
    kets = proj.reshape(quad_dim * quad_dim, support.size).conj().T
    labels = tuple((float(a), float(b)) for a in vals for b in vals)
    return Povm(kets, np.arange(quad_dim * quad_dim), labels, support, dims.size, "quadratures")


def _undo(dims, support, alpha, pad, jz_phase):
    """Invert the coherent-probe preparation and count photons.

    The probe is ``exp(-i pi/2 J_x) D1(alpha)|0,0>``; outcomes are counted
    after ``D1(-alpha) exp(i pi/2 J_x) exp(-i jz_phase J_z)``. The probe
    encoded at ``theta = -jz_phase`` is mapped back to vacuum. The default
    ``jz_phase = pi`` puts that point at the edge of the default prior.
    """
    blocks, nmax = _basis_blocks(dims, support)
    out = {}
    for t, b in blocks.items():
        n1 = np.arange(t + 1)
        jz = (n1 - (t - n1)) / 2
        out[t] = _bs_block(t, -math.pi / 2) @ (np.exp(-1j * jz_phase * jz)[:, None] * b)
    d = nmax + 1 + pad
    amp = _blocks_to_box(out, d, support.size).reshape(d, d, support.size)
    # unitary on the padded box, so completeness is exact
    amp = np.einsum("ab,bcj->acj", displacement(-alpha, d), amp).reshape(d * d, support.size)
    kets = amp.conj().T
    live = np.flatnonzero(np.linalg.norm(kets, axis=0) > 1e-14)
    k1, k2 = np.divmod(live, d)
    uniq, inv = _pairs(k1, k2)
    return Povm(kets[:, live], inv, _pair_labels(uniq), support, dims.size, "undo")


def optimal_povm(solution, support=None, dim=None) -> Povm:
    """Projective measurement on the eigenspaces of the optimal estimator.

    Degenerate eigenvalues share one outcome, so the statistics do not depend
    on the basis chosen inside an eigenspace.
    """
    q = solution.projectors
    if support is None:
        support = np.flatnonzero(np.linalg.norm(q, axis=1) > 0)
    dim = q.shape[0] if dim is None else dim
    kets = q[support]
    est = solution.estimates
    groups = np.zeros(est.size, dtype=np.int64)
    for grp in solution.degenerate_groups:
        groups[grp] = -1 - grp[0]
    # relabel contiguously in ascending estimate order
    _, groups = np.unique(np.where(groups < 0, -1 - groups, np.arange(est.size)),
                          return_inverse=True)
    n_groups = int(groups.max()) + 1
    outcome_est = np.array([est[groups == g].mean() for g in range(n_groups)])
    remainder = kets.shape[1] < support.size or not np.allclose(
        kets @ kets.conj().T, np.eye(support.size), atol=1e-10)
    labels = tuple(range(n_groups)) + (("rest",) if remainder else ())
    return Povm(kets, groups, labels, np.asarray(support), dim, "optimal", remainder,
                estimates=outcome_est)


def build_scheme(kind: str, dims: FockDims, support=None, *, alpha: complex = math.sqrt(2),
                 quad_dim: int | None = None, angle: float = QUADRATURE_ANGLE,
                 solution=None, undo_pad: int = 30, jz_phase: float = math.pi) -> Povm:
    """Construct a measurement scheme by name.

    ``support`` restricts the kets to the given basis indices (default: the
    whole box). ``optimal`` needs the :class:`PersonickSolution` to extract.
    """
    support = _default_support(dims, support)
    if kind == "counting-even":
        return _counting(dims, support, math.pi / 4, kind, _pairs, _pair_labels)
    if kind == "counting-odd":
        return _counting(dims, support, math.pi / 2, kind, _pairs, _pair_labels)
    if kind == "parity":
        return _counting(dims, support, math.pi / 4, kind, _parity_groups, _parity_labels)
    if kind == "quadratures":
        return _quadratures(dims, support, quad_dim, angle)
    if kind == "undo":
        return _undo(dims, support, alpha, undo_pad, jz_phase)
    if kind == "optimal":
        if solution is None:
            raise ValueError("optimal scheme needs a PersonickSolution")
        return optimal_povm(solution, support, dims.size)
    raise ValueError(f"unknown scheme {kind!r}; choose from {', '.join(SCHEMES)}")


# -- likelihoods --------------------------------------------------------------

class PhaseLikelihood:
    """Outcome probabilities ``p(n | theta)`` for a probe and a POVM.

    Each ket amplitude is a trigonometric polynomial in ``theta``:
    ``<k|psi_c(theta)> = sum_j conj(k_j) c_j exp(-i g_j theta)``. Amplitudes
    are summed in modulus square over the kets of an outcome and over the
    mixture components.
    """

    def __init__(self, probe, povm: Povm, chunk: int = 256):
        if isinstance(probe, TwoModeState):
            probe = EncodedProbe.from_state(probe)
        outside = np.ones(probe.dim, dtype=bool)
        outside[povm.support] = False
        leak = float(np.sum(np.abs(probe.components[:, outside]) ** 2))
        if leak > 1e-12:
            raise ValueError(f"probe has weight {leak:.3g} outside the POVM support")
        comps = probe.components[:, povm.support]
        self.generator = probe.generator[povm.support]
        # A[c, k, j]
        self._amp = povm.kets.conj().T[None, :, :] * comps[:, None, :]
        self.povm = povm
        self.chunk = chunk
        self._starts = povm._starts

    @property
    def n_outcomes(self) -> int:
        return self.povm.n_outcomes

    def _phases(self, thetas):
        return np.exp(-1j * np.outer(self.generator, thetas))

    def _reduce(self, per_ket: np.ndarray) -> np.ndarray:
        if per_ket.shape[0] == 0:
            return np.zeros((0, per_ket.shape[1]))
        return np.add.reduceat(per_ket, self._starts, axis=0)

    def _group(self, per_ket: np.ndarray) -> np.ndarray:
        grouped = self._reduce(per_ket)
        if self.povm.remainder:
            rest = np.clip(1.0 - grouped.sum(axis=0), 0.0, None)
            grouped = np.vstack([grouped, rest[None]])
        return grouped

    def probabilities(self, thetas) -> np.ndarray:
        """Array ``(n_outcomes, len(thetas))``."""
        thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
        out = np.empty((self.n_outcomes, thetas.size))
        for s in range(0, thetas.size, self.chunk):
            sl = slice(s, s + self.chunk)
            e = self._phases(thetas[sl])
            per_ket = np.zeros((self._amp.shape[1], e.shape[1]))
            for a in self._amp:
                per_ket += np.abs(a @ e) ** 2
            out[:, sl] = self._group(per_ket)
        return out

    def derivatives(self, thetas) -> tuple[np.ndarray, np.ndarray]:
        """Probabilities and their ``theta`` derivatives."""
        thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
        p = np.empty((self.n_outcomes, thetas.size))
        dp = np.empty_like(p)
        for s in range(0, thetas.size, self.chunk):
            sl = slice(s, s + self.chunk)
            e = self._phases(thetas[sl])
            de = -1j * self.generator[:, None] * e
            pk = np.zeros((self._amp.shape[1], e.shape[1]))
            dk = np.zeros_like(pk)
            for a in self._amp:
                amp = a @ e
                pk += np.abs(amp) ** 2
                dk += 2 * np.real(amp.conj() * (a @ de))
            p[:, sl] = self._group(pk)
            dg = self._reduce(dk)
            if self.povm.remainder:
                dg = np.vstack([dg, -dg.sum(axis=0)[None]])
            dp[:, sl] = dg
        return p, dp


def likelihood(povm: Povm, state) -> np.ndarray:
    """Outcome distribution for an already-encoded state (vector or TwoModeState)."""
    vec = state.vector if isinstance(state, TwoModeState) else np.asarray(state, dtype=complex)
    probe = EncodedProbe(vec[None, :], np.zeros(vec.size))
    return PhaseLikelihood(probe, povm).probabilities([0.0])[:, 0]


def scheme_for_probe(kind: str, probe, prior=None, **kwargs) -> Povm:
    """Build a scheme on the occupied basis states of ``probe``.

    For ``"optimal"`` the single-shot optimal estimator is solved first
    (``prior`` required).
    """
    from .personick import averaged_moments, solve_estimator

    enc = EncodedProbe.from_state(probe) if isinstance(probe, TwoModeState) else probe
    support = enc.occupied()
    if kind == "optimal":
        if prior is None:
            raise ValueError("optimal scheme needs a prior")
        sol = solve_estimator(averaged_moments(enc, prior, "sector"))
        return optimal_povm(sol, support, enc.dim)
    if enc.dims is None:
        raise ValueError("physical schemes need a two-mode probe")
    return build_scheme(kind, enc.dims, support, **kwargs)
