"""Bayesian mean squared error for repeated independent measurements.

The average error after ``mu`` shots is
``E_{theta'} E_{s|theta'} Var(theta | s)``, i.e. the posterior variance
averaged over the joint distribution of the true phase and the outcome record.
Posteriors live on a fixed theta grid and are accumulated in log space.

When the number of distinct count vectors is small the average is computed
exactly by summing over multinomial count vectors; otherwise it is estimated
by Monte Carlo over trajectories.
"""
from __future__ import annotations

import csv
import io
import math
import os
import tempfile
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.special import gammaln

from .personick import FlatPrior
from .povm import PhaseLikelihood

DEFAULT_GRID = 1001
DEFAULT_SAMPLES = 50_000
EXACT_LIMIT = 100_000
CSV_COLUMNS = ("state", "scheme", "W0", "theta_bar", "mu", "mse", "stderr",
               "taylor_delta", "crb", "seed")


class ZeroEvidenceError(ValueError):
    """The observed record has vanishing probability under the model."""


class BudgetWarning(RuntimeWarning):
    """Monte Carlo error is above the requested precision."""


class NotReachedError(ValueError):
    """The relative-error threshold is never met on the curve."""


@dataclass(frozen=True)
class ThetaGrid:
    """Composite Simpson rule over the prior support."""

    points: np.ndarray
    weights: np.ndarray

    @classmethod
    def for_prior(cls, prior: FlatPrior, n: int = DEFAULT_GRID) -> "ThetaGrid":
        if n < 3:
            raise ValueError("grid needs at least 3 points")
        if n % 2 == 0:
            n += 1
        pts = np.linspace(prior.lower, prior.upper, n)
        h = (prior.upper - prior.lower) / (n - 1)
        w = np.full(n, 2.0)
        w[1::2] = 4.0
        w[0] = w[-1] = 1.0
        return cls(pts, w * h / 3)

    @property
    def size(self) -> int:
        return self.points.size

    def integrate(self, f, axis=-1):
        return np.tensordot(f, self.weights, axes=([axis], [0]))


def _log(p):
    with np.errstate(divide="ignore"):
        return np.log(p)


def posterior(grid: ThetaGrid, prior: FlatPrior, likelihood_rows, outcomes=()) -> np.ndarray:
    """Posterior density on the grid after observing ``outcomes``.

    ``likelihood_rows`` has shape ``(n_outcomes, grid.size)``.
    """
    logl = np.zeros(grid.size)
    rows = _log(np.asarray(likelihood_rows, dtype=float))
    for s in outcomes:
        logl = logl + rows[s]
    top = logl.max()
    if not np.isfinite(top) or top < math.log(1e-300):
        raise ZeroEvidenceError("observed outcomes have zero probability")
    dens = np.exp(logl - top) / prior.width
    return dens / grid.integrate(dens)


def posterior_variance(grid: ThetaGrid, density) -> float:
    m = grid.integrate(density * grid.points)
    return float(max(grid.integrate(density * (grid.points - m) ** 2), 0.0))


def _central_moments(logw: np.ndarray, grid: ThetaGrid):
    """Evidence, mean, variance and fourth central moment of each row.

    ``logw`` holds unnormalised log posteriors (rows) on the grid. The
    evidence is returned as a log value relative to a flat prior of unit
    integral weight.
    """
    top = logw.max(axis=1, keepdims=True)
    w = np.exp(logw - top) * grid.weights
    z = w.sum(axis=1)
    mean = (w @ grid.points) / z
    d = grid.points[None, :] - mean[:, None]
    d2 = d * d
    var = np.einsum("ij,ij->i", w, d2) / z
    m4 = np.einsum("ij,ij->i", w, d2 * d2) / z
    return np.log(z) + top[:, 0], mean, var, m4


def _compositions(total: int, parts: int):
    """All count vectors of length ``parts`` summing to ``total``."""
    for bars in combinations(range(total + parts - 1), parts - 1):
        prev, out = -1, []
        for b in bars:
            out.append(b - prev - 1)
            prev = b
        out.append(total + parts - 2 - prev)
        yield out


def n_compositions(total: int, parts: int) -> int:
    return math.comb(total + parts - 1, parts - 1)


def _exact_point(mu, logp, grid, prior, chunk=4096):
    """Exact average posterior variance and Taylor term at ``mu`` shots."""
    k = logp.shape[0]
    mse = taylor = norm = 0.0
    gen = _compositions(mu, k)
    while True:
        block = np.array([c for _, c in zip(range(chunk), gen)], dtype=float)
        if block.size == 0:
            break
        logmult = gammaln(mu + 1) - gammaln(block + 1).sum(axis=1)
        with np.errstate(invalid="ignore"):
            logw = block @ np.where(np.isfinite(logp), logp, -1e300)
        logz, _, var, m4 = _central_moments(logw, grid)
        ev = np.exp(logz + logmult) / prior.width
        mse += float(ev @ var)
        taylor += float(ev @ m4) / 12
        norm += float(ev.sum())
    return mse, taylor, norm


def atomic_write(path, text: str) -> None:
    """Write ``text`` to a temporary file in the target folder, then rename."""
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt_float(x) -> str:
    """Scientific notation with 12 significant digits."""
    return f"{float(x):.11e}"


@dataclass(frozen=True)
class MseCurve:
    mu: np.ndarray
    mse: np.ndarray
    stderr: np.ndarray
    taylor_delta: np.ndarray
    crb: np.ndarray | None = None
    exact: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def relative_error(self, fq: float) -> np.ndarray:
        target = 1.0 / (self.mu * fq)
        return np.abs(self.mse - target) / self.mse

    def rows(self):
        m = self.meta
        crb = self.crb if self.crb is not None else np.full(self.mu.size, np.nan)
        for i, mu in enumerate(self.mu):
            yield {
                "state": m.get("state", ""), "scheme": m.get("scheme", ""),
                "W0": fmt_float(m.get("W0", np.nan)),
                "theta_bar": fmt_float(m.get("theta_bar", np.nan)),
                "mu": int(mu), "mse": fmt_float(self.mse[i]),
                "stderr": fmt_float(self.stderr[i]),
                "taylor_delta": fmt_float(self.taylor_delta[i]),
                "crb": fmt_float(crb[i]), "seed": m.get("seed", ""),
            }

    def to_csv(self, path, extra: dict | None = None) -> None:
        """Write atomically: a partial file never replaces a finished one."""
        extra = extra or {}
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(CSV_COLUMNS) + list(extra))
        w.writeheader()
        for row in self.rows():
            row.update(extra)
            w.writerow(row)
        atomic_write(path, buf.getvalue())

    @classmethod
    def from_csv(cls, path) -> "MseCurve":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ValueError(f"{path}: no rows")
        col = lambda k, t=float: np.array([t(r[k]) for r in rows])
        meta = {k: rows[0][k] for k in ("state", "scheme", "seed")}
        meta["W0"] = float(rows[0]["W0"])
        meta["theta_bar"] = float(rows[0]["theta_bar"])
        return cls(col("mu", int), col("mse"), col("stderr"), col("taylor_delta"),
                   col("crb"), None, meta)


def _threads(threads):
    if threads is None:
        threads = int(os.environ.get("METROLOGY_THREADS", "1") or 1)
    return max(1, int(threads))


def _mc_batch(args):
    """Trajectory batch: returns per-mu sums of var, var^2 and m4."""
    (index, start, count, n_total, seed, prior, grid, lik, logp_t, eval_mu) = args
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed).spawn(index + 1)[index]))
    # stratified true phases: one per stratum of the prior support
    strata = start + np.arange(count) + rng.random(count)
    theta = prior.lower + prior.width * strata / n_total
    probs = lik.probabilities(theta).T
    cdf = np.cumsum(probs, axis=1)
    cdf /= cdf[:, -1:]
    mu_max = int(eval_mu[-1])
    u = rng.random((count, mu_max))
    outcomes = np.empty((count, mu_max), dtype=np.int64)
    for b in range(count):
        outcomes[b] = np.searchsorted(cdf[b], u[b], side="right")
    np.minimum(outcomes, cdf.shape[1] - 1, out=outcomes)

    sums = np.zeros((3, eval_mu.size))
    logl = np.zeros((count, grid.size))
    j = 0
    for t in range(1, mu_max + 1):
        logl += logp_t[outcomes[:, t - 1]]
        if t == eval_mu[j]:
            _, _, var, m4 = _central_moments(logl, grid)
            sums[0, j] = var.sum()
            sums[1, j] = (var * var).sum()
            sums[2, j] = m4.sum()
            j += 1
    return sums


def single_shot_mse(lik: PhaseLikelihood, grid: ThetaGrid, prior: FlatPrior) -> float:
    p = lik.probabilities(grid.points)
    z = grid.integrate(p) / prior.width
    m1 = grid.integrate(p * grid.points) / prior.width
    m2 = grid.integrate(p * grid.points ** 2) / prior.width
    ok = z > 1e-300
    return float(np.sum(m2[ok] - m1[ok] ** 2 / z[ok]))


def refined_grid(lik: PhaseLikelihood, prior: FlatPrior, n: int = DEFAULT_GRID,
                 rtol: float = 1e-4, max_points: int = 16_001) -> ThetaGrid:
    """Double the grid until the single-shot error is stable to ``rtol``."""
    grid = ThetaGrid.for_prior(prior, n)
    prev = single_shot_mse(lik, grid, prior)
    while grid.size < max_points:
        finer = ThetaGrid.for_prior(prior, 2 * grid.size - 1)
        cur = single_shot_mse(lik, finer, prior)
        if abs(cur - prev) <= rtol * abs(cur):
            return grid
        grid, prev = finer, cur
    return grid


def default_mus(mu_max: int) -> np.ndarray:
    """Every count up to 100, every 2nd up to 500, then every 10th; ends at ``mu_max``."""
    mus = np.concatenate([np.arange(1, 101), np.arange(102, 501, 2), np.arange(510, mu_max + 1, 10)])
    mus = mus[mus <= mu_max]
    return np.unique(np.append(mus, mu_max))


def mse_repeated(probe, povm, prior: FlatPrior, mu_max: int, *, mus=None,
                 samples: int = DEFAULT_SAMPLES, seed: int = 0, grid: ThetaGrid | None = None,
                 exact_limit: int = EXACT_LIMIT, batch: int = 2000, threads=None,
                 fq: float | None = None, precision: float = 5e-3) -> MseCurve:
    """Average posterior variance after ``mu`` repetitions, for each ``mu``.

    ``mus`` selects the repetition counts to report (default :func:`default_mus`).
    Counts with at most ``exact_limit`` distinct count vectors are summed
    exactly; the rest share one set of Monte Carlo trajectories, so the curve
    is smooth in ``mu``. Results depend only on ``seed``, not on ``threads``.
    """
    if mu_max < 1:
        raise ValueError("mu_max must be >= 1")
    eval_mu = default_mus(mu_max) if mus is None else np.unique(np.asarray(mus, int))
    if eval_mu[0] < 1 or eval_mu[-1] > mu_max:
        raise ValueError("requested mu outside 1..mu_max")
    lik = PhaseLikelihood(probe, povm)
    if grid is None:
        grid = refined_grid(lik, prior)
    p_grid = lik.probabilities(grid.points)
    live = np.flatnonzero(p_grid.max(axis=1) > 0)
    logp = _log(p_grid[live])

    mse = np.empty(eval_mu.size)
    err = np.zeros(eval_mu.size)
    tay = np.empty(eval_mu.size)
    exact = np.array([n_compositions(int(m), live.size) <= exact_limit for m in eval_mu])
    for i in np.flatnonzero(exact):
        mse[i], tay[i], _ = _exact_point(int(eval_mu[i]), logp, grid, prior)

    mc_mu = eval_mu[~exact]
    if mc_mu.size:
        logp_full = _log(p_grid).T.copy()
        logp_full = np.where(np.isfinite(logp_full), logp_full, -1e300).T.copy()
        starts = list(range(0, samples, batch))
        jobs = [(i, s, min(batch, samples - s), samples, seed, prior, grid, lik,
                 logp_full, mc_mu) for i, s in enumerate(starts)]
        with ThreadPoolExecutor(_threads(threads)) as pool:
            parts = list(pool.map(_mc_batch, jobs))
        tot = np.sum(parts, axis=0)
        mean = tot[0] / samples
        var = np.maximum(tot[1] / samples - mean ** 2, 0.0)
        mse[~exact] = mean
        err[~exact] = np.sqrt(var / max(samples - 1, 1))
        tay[~exact] = tot[2] / samples / 12
        if np.any(err[~exact] > precision * mean):
            warnings.warn(f"Monte Carlo stderr above {precision:g} relative; "
                          "raise the sample budget", BudgetWarning, stacklevel=2)

    crb = None if fq is None else 1.0 / (eval_mu * fq)
    meta = {"W0": prior.width, "theta_bar": prior.mean, "seed": seed,
            "samples": samples, "grid": grid.size}
    return MseCurve(eval_mu, mse, err, tay, crb, exact, meta)


def taylor_error_band(probe, povm, prior, mu_max, **kwargs) -> np.ndarray:
    """``(1/12) E[(g(s) - theta)^4]`` per repetition count."""
    return mse_repeated(probe, povm, prior, mu_max, **kwargs).taylor_delta


def mu_tau(curve: MseCurve, fq: float, target: float = 0.05, nsigma: float = 2.0) -> int:
    """Repetitions after which the error stays within ``target`` of ``1/(mu F)``.

    Finds the first ``mu`` from which the relative error remains at or below
    ``target`` (allowing ``nsigma`` standard errors), then returns whichever of
    that point and its predecessor lies closer to ``target``.
    """
    if fq <= 0:
        raise ValueError("Fisher information must be positive")
    rel = curve.relative_error(fq)
    crb = 1.0 / (curve.mu * fq)
    slack = nsigma * crb * curve.stderr / curve.mse ** 2
    ok = rel <= target + slack
    # index of the first point of the trailing run of True values
    if not ok[-1]:
        raise NotReachedError(f"relative error {rel[-1]:.3g} above {target} at mu={curve.mu[-1]}")
    bad = np.flatnonzero(~ok)
    first = 0 if bad.size == 0 else int(bad[-1]) + 1
    if first > 0 and abs(rel[first - 1] - target) < abs(rel[first] - target):
        first -= 1
    return int(curve.mu[first])
