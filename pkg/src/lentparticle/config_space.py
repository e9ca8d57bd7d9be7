"""Configurations of marked points, the add/remove operators and simulation.

A configuration is a finite simple point measure on ``R_+ x R^m`` whose atoms
carry a mark from a mark space.  Configurations are immutable: ``eps_plus`` and
``eps_minus`` return new values.  Points are stored in a canonical order
(time, attribute, mark) so that every downstream computation is independent of
the order in which points were supplied.
"""
from __future__ import annotations

import json
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Iterator, Sequence

import numpy as np
from scipy import integrate

from .errors import TruncatedMassZero

DEFAULT_TRUNCATION = 1e-3


# ---------------------------------------------------------------------------
# Seeds
# ---------------------------------------------------------------------------

def child_seed(seed, *keys: int) -> np.random.SeedSequence:
    """Derive a reproducible child seed from ``seed`` and integer ``keys``.

    ``child_seed(s, i, j)`` is the same sequence no matter in which order or on
    which thread it is requested, which is what makes replica-level
    parallelism deterministic.
    """
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + tuple(keys))
    return np.random.SeedSequence(int(seed), spawn_key=tuple(keys))


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(int(seed))
    return np.random.default_rng(seed)


# ---------------------------------------------------------------------------
# Points and configurations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BasePoint:
    """Location of an atom: a jump time and an attribute vector (jump radius or jump)."""

    time: float
    attribute: tuple

    def __post_init__(self):
        attr = self.attribute
        ndim = np.ndim(attr)
        if ndim == 0:
            attr = (attr,)
        elif ndim > 1:
            raise ValueError("attribute must be a vector")
        attr = tuple(float(a) for a in attr)
        if not attr:
            raise ValueError("attribute must be a non-empty vector")
        if not self.time >= 0:
            raise ValueError(f"time must be nonnegative, got {self.time}")
        object.__setattr__(self, "time", float(self.time))
        object.__setattr__(self, "attribute", attr)

    @property
    def dim(self) -> int:
        return len(self.attribute)

    @property
    def radius(self) -> float:
        return math.sqrt(sum(a * a for a in self.attribute))


def mark_sort_key(mark) -> tuple:
    if hasattr(mark, "sort_key"):
        return tuple(mark.sort_key())
    if isinstance(mark, (int, float, np.floating, np.integer)):
        return (float(mark),)
    return tuple(np.ravel(np.asarray(mark, dtype=float)))


@dataclass(frozen=True)
class MarkedPoint:
    base: BasePoint
    mark: Any

    def sort_key(self) -> tuple:
        return (self.base.time, self.base.attribute, mark_sort_key(self.mark))


@dataclass(frozen=True)
class Configuration:
    """Finite set of marked points, kept in canonical order.

    ``horizon`` is informational (the time window the configuration was
    simulated on) and is carried through serialization.
    """

    points: tuple = ()
    mark_space_id: str = "circle"
    horizon: float | None = None

    def __post_init__(self):
        pts = sorted(self.points, key=MarkedPoint.sort_key)
        unique = [p for i, p in enumerate(pts) if i == 0 or p != pts[i - 1]]
        object.__setattr__(self, "points", tuple(unique))

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self) -> Iterator[MarkedPoint]:
        return iter(self.points)

    def __contains__(self, p) -> bool:
        return p in self.points

    def _replace_points(self, points) -> "Configuration":
        return Configuration(tuple(points), self.mark_space_id, self.horizon)

    def with_mark(self, index: int, mark) -> "Configuration":
        """Same configuration with the mark of point ``index`` replaced in place."""
        pts = list(self.points)
        pts[index] = MarkedPoint(pts[index].base, mark)
        return self._replace_points(pts)

    def restrict(self, predicate: Callable[[MarkedPoint], bool]) -> "Configuration":
        return self._replace_points(p for p in self.points if predicate(p))

    def truncate(self, eps0: float) -> "Configuration":
        """Keep only the points whose attribute norm is at least ``eps0``."""
        return self.restrict(lambda p: p.base.radius >= eps0)

    def until(self, t: float) -> "Configuration":
        return self.restrict(lambda p: p.base.time <= t)

    def times(self) -> np.ndarray:
        return np.array([p.base.time for p in self.points], dtype=float)

    def attributes(self) -> np.ndarray:
        if not self.points:
            return np.zeros((0, 1))
        return np.array([p.base.attribute for p in self.points], dtype=float)

    def marks(self) -> list:
        return [p.mark for p in self.points]


def eps_plus(config: Configuration, p: MarkedPoint) -> Configuration:
    """Add the point ``p`` (set union)."""
    if p in config.points:
        return config
    return config._replace_points(config.points + (p,))


def eps_minus(config: Configuration, p: MarkedPoint) -> Configuration:
    """Remove the point ``p`` if present."""
    if p not in config.points:
        return config
    return config._replace_points(q for q in config.points if q != p)


# ---------------------------------------------------------------------------
# Jump measures
# ---------------------------------------------------------------------------

class LevyMeasure(ABC):
    """Jump-size measure on (0, inf), sampled after truncation at ``eps0``."""

    @abstractmethod
    def truncated_mass(self, eps0: float) -> float:
        ...

    @abstractmethod
    def sample_radii(self, n: int, eps0: float, rng: np.random.Generator) -> np.ndarray:
        ...

    @property
    def infinite_activity(self) -> bool:
        return False


@dataclass(frozen=True)
class PowerLawLevy(LevyMeasure):
    """``scale * r**(-exponent)`` on ``(0, upper]``; infinite mass iff exponent >= 1."""

    exponent: float = 1.5
    upper: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        if self.upper <= 0 or self.scale < 0:
            raise ValueError("upper must be positive and scale nonnegative")

    @property
    def infinite_activity(self) -> bool:
        return self.exponent >= 1 and self.scale > 0

    def _primitive(self, r):
        e = self.exponent
        if e == 1.0:
            return np.log(r)
        return r ** (1.0 - e) / (1.0 - e)

    def truncated_mass(self, eps0: float) -> float:
        if eps0 >= self.upper:
            return 0.0
        if eps0 <= 0 and self.exponent >= 1:
            return math.inf
        lo = max(eps0, 0.0)
        if lo == 0.0:
            return float(self.scale * self._primitive(self.upper))
        return float(self.scale * (self._primitive(self.upper) - self._primitive(lo)))

    def sample_radii(self, n, eps0, rng):
        u = rng.uniform(size=n)
        e, lo, hi = self.exponent, eps0, self.upper
        if e == 1.0:
            return lo * (hi / lo) ** u
        a, b = lo ** (1.0 - e), hi ** (1.0 - e)
        r = (a + u * (b - a)) ** (1.0 / (1.0 - e))
        # guard the open lower end against rounding
        return np.clip(r, np.nextafter(lo, np.inf), hi)


@dataclass(frozen=True)
class DiracLevy(LevyMeasure):
    """Weighted sum of Dirac masses at positive radii."""

    atoms: tuple
    weights: tuple

    def __post_init__(self):
        atoms = tuple(float(a) for a in self.atoms)
        weights = tuple(float(w) for w in self.weights)
        if len(atoms) != len(weights):
            raise ValueError("atoms and weights must have the same length")
        if any(a <= 0 for a in atoms) or any(w < 0 for w in weights):
            raise ValueError("atoms must be positive and weights nonnegative")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    def _kept(self, eps0):
        a = np.array(self.atoms)
        w = np.array(self.weights)
        keep = a >= eps0
        return a[keep], w[keep]

    def truncated_mass(self, eps0):
        return float(self._kept(eps0)[1].sum())

    def sample_radii(self, n, eps0, rng):
        a, w = self._kept(eps0)
        return rng.choice(a, size=n, p=w / w.sum())


class DensityLevy(LevyMeasure):
    """Arbitrary density on ``(0, upper]``, sampled by numerical inverse CDF."""

    def __init__(self, density: Callable[[float], float], upper: float = 1.0, grid_size: int = 4097):
        self.density = density
        self.upper = float(upper)
        self.grid_size = grid_size
        self._tables: dict = {}

    def truncated_mass(self, eps0):
        if eps0 >= self.upper:
            return 0.0
        return float(integrate.quad(self.density, eps0, self.upper, limit=200)[0])

    def _table(self, eps0):
        if eps0 not in self._tables:
            grid = np.geomspace(eps0, self.upper, self.grid_size)
            dens = np.array([self.density(r) for r in grid], dtype=float)
            cdf = integrate.cumulative_trapezoid(dens, grid, initial=0.0)
            self._tables[eps0] = (grid, cdf / cdf[-1])
        return self._tables[eps0]

    def sample_radii(self, n, eps0, rng):
        grid, cdf = self._table(eps0)
        return np.interp(rng.uniform(size=n), cdf, grid)


def as_levy_measure(levy) -> LevyMeasure:
    if isinstance(levy, LevyMeasure):
        return levy
    if callable(levy):
        return DensityLevy(levy)
    atoms, weights = zip(*levy)
    return DiracLevy(atoms, weights)


# ---------------------------------------------------------------------------
# Attribute samplers: radii (n,) -> attributes (n, m)
# ---------------------------------------------------------------------------

def radial_attribute(radii, rng):
    """The attribute is the jump radius itself (m = 1)."""
    return np.asarray(radii, dtype=float)[:, None]


def isotropic_attribute(dim: int):
    """Jumps ``r * e`` with ``e`` uniform on the unit sphere of R^dim."""

    def sampler(radii, rng):
        g = rng.standard_normal((len(radii), dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        return np.asarray(radii, dtype=float)[:, None] * g

    sampler.dim = dim
    return sampler


@dataclass(frozen=True)
class ProcessSpec:
    """Poisson base process on ``[0, horizon]`` with intensity ``ds x nu``."""

    horizon: float
    levy: Any
    truncation: float = DEFAULT_TRUNCATION
    attribute_sampler: Callable = radial_attribute

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if not self.truncation > 0:
            raise ValueError("truncation must be positive")
        object.__setattr__(self, "levy", as_levy_measure(self.levy))

    @property
    def truncated_mass(self) -> float:
        return self.levy.truncated_mass(self.truncation)

    @property
    def expected_count(self) -> float:
        return self.horizon * self.truncated_mass

    def with_truncation(self, eps0: float) -> "ProcessSpec":
        return ProcessSpec(self.horizon, self.levy, eps0, self.attribute_sampler)


def simulate_base(spec: ProcessSpec, seed) -> list[BasePoint]:
    """Simulate the base Poisson measure: Poisson count, uniform times, i.i.d. jumps."""
    mass = spec.truncated_mass
    if not mass > 0:
        raise TruncatedMassZero(f"jump measure has no mass above truncation {spec.truncation}")
    rng = make_rng(seed)
    n = int(rng.poisson(spec.horizon * mass))
    times = rng.uniform(0.0, spec.horizon, size=n)
    attrs = spec.attribute_sampler(spec.levy.sample_radii(n, spec.truncation, rng), rng)
    points = [BasePoint(t, a) for t, a in zip(times, attrs)]
    # keep the measure simple: re-draw the (probability zero) duplicates
    seen = set()
    for i, p in enumerate(points):
        while (p.time, p.attribute) in seen:
            t = rng.uniform(0.0, spec.horizon)
            a = spec.attribute_sampler(spec.levy.sample_radii(1, spec.truncation, rng), rng)[0]
            p = BasePoint(t, a)
        seen.add((p.time, p.attribute))
        points[i] = p
    return sorted(points, key=lambda p: (p.time, p.attribute))


def mark_points(points: Sequence[BasePoint], space, seed, horizon: float | None = None) -> Configuration:
    """Attach an independent mark from ``space`` to every base point."""
    marks = space.sample_many(len(points), seed)
    return Configuration(
        tuple(MarkedPoint(b, m) for b, m in zip(points, marks)), space.space_id, horizon
    )


def simulate(spec: ProcessSpec, space, seed) -> Configuration:
    """Base process and marks from independent child streams of ``seed``."""
    base = simulate_base(spec, child_seed(seed, 0))
    return mark_points(base, space, child_seed(seed, 1), horizon=spec.horizon)


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------

def config_to_dict(config: Configuration, space) -> dict:
    return {
        "horizon": config.horizon,
        "mark_space": config.mark_space_id,
        "points": [
            {
                "time": p.base.time,
                "attribute": list(p.base.attribute),
                "mark": space.encode_mark(p.mark),
            }
            for p in config.points
        ],
    }


def config_from_dict(data: dict, space) -> Configuration:
    points = tuple(
        MarkedPoint(BasePoint(d["time"], d["attribute"]), space.decode_mark(d["mark"]))
        for d in data["points"]
    )
    return Configuration(points, data.get("mark_space", space.space_id), data.get("horizon"))


def config_to_json(config: Configuration, space) -> str:
    # Python's float repr is the shortest decimal that round-trips binary64
    return json.dumps(config_to_dict(config, space), allow_nan=False)


def config_from_json(text: str, space) -> Configuration:
    return config_from_dict(json.loads(text), space)


def configuration(points: Iterable[tuple], mark_space_id: str = "circle", horizon=None) -> Configuration:
    """Convenience constructor from ``(time, attribute, mark)`` triples."""
    return Configuration(
        tuple(MarkedPoint(BasePoint(t, a), m) for t, a, m in points), mark_space_id, horizon
    )
