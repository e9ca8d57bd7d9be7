"""Numerical nondegeneracy checks and density estimates.

Nothing here proves absolute continuity.  The statements are numerical:
the fraction of simulated configurations whose carré du champ matrix has a
determinant above a threshold, the rank of a span of diffusion vectors, and
kernel density estimates of the law of the functional together with a
rotational-symmetry check.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import trapezoid

from .config_space import (Configuration, MarkedPoint, ProcessSpec, child_seed,
                           make_rng, mark_points, simulate_base)
from .errors import BandwidthNonPositive
from .lent import gamma_total


# ---------------------------------------------------------------------------
# Isotropic planar jumps
# ---------------------------------------------------------------------------

def isotropic_gamma(config: Configuration, t: float | None = None) -> np.ndarray:
    """Closed-form carré du champ of ``Z_t = sum r (cos theta, sin theta)``.

    Each jump contributes ``r^2 [[sin^2, -sin cos], [-sin cos, cos^2]]``, the
    outer product of the angular derivative of the jump with itself.
    """
    G = np.zeros((2, 2))
    for p in config.points:
        if t is not None and p.base.time > t:
            continue
        r2 = p.base.attribute[0] ** 2
        s, c = math.sin(p.mark), math.cos(p.mark)
        G = G + r2 * np.array([[s * s, -s * c], [-s * c, c * c]])
    return G


def det_lower_bound(p1: MarkedPoint, p2: MarkedPoint) -> float:
    """``min(r1^2, r2^2)^2 sin^2(theta1 - theta2)``."""
    r2 = min(p1.base.attribute[0] ** 2, p2.base.attribute[0] ** 2)
    return r2 * r2 * math.sin(p1.mark - p2.mark) ** 2


def det2(G) -> float:
    """Determinant of a 2x2 matrix without going through LU."""
    return float(G[0, 0] * G[1, 1] - G[0, 1] * G[1, 0])


def _det(G) -> float:
    return det2(G) if G.shape == (2, 2) else float(np.linalg.det(G))


# ---------------------------------------------------------------------------
# Surveys
# ---------------------------------------------------------------------------

@dataclass
class NondegeneracyReport:
    n_samples: int
    threshold: float
    truncation: float
    fraction: float
    dets: np.ndarray = field(repr=False)
    min_eigenvalues: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)

    @property
    def stderr(self) -> float:
        p = self.fraction
        return math.sqrt(max(p * (1 - p), 0.0) / self.n_samples)

    def min_eig_histogram(self, bins: int = 20):
        """Histogram of ``log10`` of the smallest eigenvalue (nonpositive values counted apart)."""
        lam = self.min_eigenvalues
        pos = lam[lam > 0]
        if pos.size:
            counts, edges = np.histogram(np.log10(pos), bins=bins)
        else:
            counts, edges = np.zeros(0, dtype=int), np.zeros(0)
        return {"log10_edges": edges.tolist(), "counts": counts.tolist(),
                "nonpositive": int(np.sum(lam <= 0))}

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "threshold": self.threshold,
            "truncation": self.truncation,
            "fraction": self.fraction,
            "stderr": self.stderr,
            "mean_points": float(np.mean(self.counts)) if self.n_samples else 0.0,
            "min_eigenvalue_histogram": self.min_eig_histogram(),
        }


def _survey_from_gammas(gammas, counts, threshold, truncation) -> NondegeneracyReport:
    dets = np.array([_det(G) for G in gammas])
    mins = np.array([float(np.linalg.eigvalsh(G)[0]) for G in gammas])
    n = len(gammas)
    frac = float(np.mean(dets > threshold)) if n else 0.0
    return NondegeneracyReport(n, threshold, truncation, frac, dets, mins, np.asarray(counts))


def survey_configurations(configs, gamma_fn: Callable, threshold: float = 1e-10,
                          truncation: float = float("nan")) -> NondegeneracyReport:
    """Survey over given configurations (injected or externally simulated)."""
    configs = list(configs)
    return _survey_from_gammas([gamma_fn(w) for w in configs], [len(w) for w in configs],
                               threshold, truncation)


def _replicate(fn, n, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, range(n)))
    return [fn(i) for i in range(n)]


def simulate_replica(spec: ProcessSpec, space, seed, index: int) -> Configuration:
    """Replica ``index``: base points and marks from independent children of ``seed``."""
    base = simulate_base(spec, child_seed(seed, index, 0))
    return mark_points(base, space, child_seed(seed, index, 1), horizon=spec.horizon)


def nondegeneracy_survey(F, spec: ProcessSpec, space, n_samples: int, threshold: float = 1e-10,
                         seed=0, gamma_fn: Callable | None = None, threads: int = 1
                         ) -> NondegeneracyReport:
    """Fraction of simulated configurations with ``det Gamma[F] > threshold``.

    ``gamma_fn(config)`` replaces the generic lent-particle assembly when a
    closed form is known (e.g. :func:`isotropic_gamma`).
    """
    gamma_fn = gamma_fn or (lambda w: gamma_total(F, w, space))

    def one(i):
        w = simulate_replica(spec, space, seed, i)
        return gamma_fn(w), len(w)

    results = _replicate(one, n_samples, threads)
    return _survey_from_gammas([r[0] for r in results], [r[1] for r in results],
                               threshold, spec.truncation)


def survey_truncations(F, spec: ProcessSpec, space, truncations: Sequence[float], n_samples: int,
                       threshold: float = 1e-10, seed=0, gamma_fn: Callable | None = None,
                       threads: int = 1) -> list[NondegeneracyReport]:
    """Surveys at several truncation levels on coupled configurations.

    Each replica is simulated once at the smallest level and thinned to the
    larger ones (restricting a Poisson measure to ``|jump| >= eps`` gives the
    process truncated at ``eps``), so lowering the level only adds points.
    """
    gamma_fn = gamma_fn or (lambda w: gamma_total(F, w, space))
    levels = sorted(truncations)
    fine = spec.with_truncation(levels[0])

    def one(i):
        w = simulate_replica(fine, space, seed, i)
        out = []
        for eps in truncations:
            we = w.truncate(eps)
            out.append((gamma_fn(we), len(we)))
        return out

    results = _replicate(one, n_samples, threads)
    return [
        _survey_from_gammas([r[j][0] for r in results], [r[j][1] for r in results], threshold, eps)
        for j, eps in enumerate(truncations)
    ]


def poisson_two_point_bound(mass: float) -> float:
    """``P(Poisson(mass) >= 2) = 1 - (1 + mass) e^-mass``."""
    return 1.0 - (1.0 + mass) * math.exp(-mass)


# ---------------------------------------------------------------------------
# Span criterion
# ---------------------------------------------------------------------------

def span_matrix(A_funcs: Sequence[Callable], jumps) -> np.ndarray:
    """Columns ``A_j(x_n)`` for all ``j`` and ``n``."""
    cols = [np.atleast_1d(np.asarray(A(x), dtype=float)) for x in jumps for A in A_funcs]
    return np.column_stack(cols)


def prop4_span_test(A_funcs: Sequence[Callable], jumps, tol: float = 1e-10) -> int:
    """Numerical rank of the span of ``A_j(x_n)``, relative to the largest singular value."""
    jumps = list(jumps)
    if not jumps:
        raise ValueError("need at least one jump")
    s = np.linalg.svd(span_matrix(A_funcs, jumps), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > tol * s[0]))


def jump_sequence_to_zero(m: int, n: int, seed, decay: float = 0.7) -> np.ndarray:
    """A generic sequence ``x_n -> 0`` in R^m: random directions, geometric radii."""
    rng = make_rng(seed)
    dirs = rng.standard_normal((n, m))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = decay ** np.arange(1, n + 1) * rng.uniform(0.5, 1.0, size=n)
    return dirs * radii[:, None]


# ---------------------------------------------------------------------------
# Kernel density estimation
# ---------------------------------------------------------------------------

def scott_bandwidth(samples) -> np.ndarray:
    """``n^(-1/(k+4))`` times the per-coordinate standard deviation."""
    x = np.atleast_2d(np.asarray(samples, dtype=float))
    n, k = x.shape
    return n ** (-1.0 / (k + 4)) * np.std(x, axis=0, ddof=1)


class DensityEstimate:
    """Gaussian product-kernel density estimate."""

    def __init__(self, samples, bandwidth):
        x = np.asarray(samples, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        h = np.broadcast_to(np.asarray(bandwidth, dtype=float), (x.shape[1],)).copy()
        if not np.all(h > 0):
            raise BandwidthNonPositive(f"bandwidth must be positive, got {bandwidth!r}")
        self.samples = x
        self.bandwidth = h

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def evaluate(self, q, chunk: int = 2_000_000) -> np.ndarray:
        """Density at ``q`` (shape ``(k,)`` or ``(nq, k)``)."""
        q = np.asarray(q, dtype=float)
        single = q.ndim == 1
        q = np.atleast_2d(q)
        n, k = self.samples.shape
        norm = n * np.prod(self.bandwidth) * (2 * math.pi) ** (k / 2)
        xs = self.samples / self.bandwidth
        qs = q / self.bandwidth
        out = np.zeros(len(q))
        step = max(1, chunk // max(n, 1))
        for a in range(0, len(q), step):
            d2 = ((qs[a:a + step, None, :] - xs[None, :, :]) ** 2).sum(axis=-1)
            out[a:a + step] = np.exp(-0.5 * d2).sum(axis=1) / norm
        return out[0] if single else out

    __call__ = evaluate

    def grid(self, lo, hi, n: int = 101):
        """Evaluate on a regular 2-d grid; returns ``(xs, ys, values[ny, nx])``."""
        if self.dim != 2:
            raise ValueError("grid evaluation is implemented for 2-d estimates")
        xs = np.linspace(lo[0], hi[0], n)
        ys = np.linspace(lo[1], hi[1], n)
        X, Y = np.meshgrid(xs, ys)
        vals = self.evaluate(np.column_stack([X.ravel(), Y.ravel()])).reshape(X.shape)
        return xs, ys, vals

    def mass(self, lo, hi, n: int = 201) -> float:
        xs, ys, vals = self.grid(lo, hi, n)
        return float(trapezoid(trapezoid(vals, xs, axis=1), ys))


def kde_estimate(samples, bandwidth=None) -> DensityEstimate:
    if bandwidth is None:
        bandwidth = scott_bandwidth(samples)
    return DensityEstimate(samples, bandwidth)


def grid_csv(xs, ys, vals) -> str:
    """CSV with columns ``x, y, density``, shortest round-trip decimals."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["x", "y", "density"])
    for j, y in enumerate(ys):
        for i, x in enumerate(xs):
            writer.writerow([repr(float(x)), repr(float(y)), repr(float(vals[j, i]))])
    return buf.getvalue()


@dataclass
class IsotropyReport:
    radii: list
    n_angles: int
    deviations: list         # max relative deviation from the angular mean, per radius
    means: list
    tol: float

    @property
    def max_deviation(self) -> float:
        return max(self.deviations) if self.deviations else 0.0

    @property
    def passed(self) -> bool:
        return self.max_deviation < self.tol

    def to_dict(self) -> dict:
        return {"radii": self.radii, "n_angles": self.n_angles, "deviations": self.deviations,
                "angular_means": self.means, "max_deviation": self.max_deviation,
                "tol": self.tol, "passed": self.passed}


def isotropy_check(est: DensityEstimate, radii, n_angles: int = 64, tol: float = 0.1) -> IsotropyReport:
    """Compare the estimate along circles with its angular mean."""
    angles = np.arange(n_angles) * (2 * math.pi / n_angles)
    devs, means = [], []
    for r in radii:
        vals = est.evaluate(np.column_stack([r * np.cos(angles), r * np.sin(angles)]))
        mean = float(np.mean(vals))
        devs.append(float(np.max(np.abs(vals - mean)) / mean) if mean > 0 else 0.0)
        means.append(mean)
    return IsotropyReport([float(r) for r in radii], n_angles, devs, means, tol)


def sample_isotropic_endpoint(spec: ProcessSpec, n: int, seed) -> np.ndarray:
    """``n`` independent draws of ``Z_T = sum r (cos theta, sin theta)`` over ``[0, horizon]``.

    Vectorized equivalent of simulating ``n`` marked configurations and
    evaluating the polar jump sum on each.
    """
    rng = make_rng(seed)
    counts = rng.poisson(spec.expected_count, size=n)
    total = int(counts.sum())
    radii = spec.levy.sample_radii(total, spec.truncation, rng)
    theta = rng.uniform(0.0, 2 * math.pi, size=total)
    owner = np.repeat(np.arange(n), counts)
    out = np.zeros((n, 2))
    np.add.at(out, owner, np.column_stack([radii * np.cos(theta), radii * np.sin(theta)]))
    return out
