"""Carré du champ and gradient of functionals of a marked configuration.

The carré du champ of ``F`` at a configuration is obtained by lending each
particle: remove it, regard ``F`` as a function of the mark of a particle
added back at the same base location, take the one-mark carré du champ at the
particle's own mark, and sum over the particles.  ``gamma_total_oracle``
computes the same sum by perturbing marks in place, without going through the
add/remove operators.
"""
from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .config_space import (BasePoint, Configuration, MarkedPoint, child_seed,
                           eps_minus, eps_plus)
from .marks import MarkFunction


class Functional:
    """A map from configurations to ``R^k``.

    Subclasses override :meth:`lend` and :meth:`section` when they know a
    cheaper or analytic form of the one-mark map; the defaults rebuild the
    configuration for every evaluation.
    """

    output_dim: int = 1

    def eval(self, config: Configuration) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, config):
        return self.eval(config)

    def lend(self, rest: Configuration, base: BasePoint) -> MarkFunction:
        """``u -> F(rest + (base, u))``."""
        return MarkFunction(lambda u: self.eval(eps_plus(rest, MarkedPoint(base, u))))

    def section(self, config: Configuration, index: int) -> MarkFunction:
        """``u -> F(config with the mark of point index set to u)``."""
        return MarkFunction(lambda u: self.eval(config.with_mark(index, u)))


class CallableFunctional(Functional):
    """Wrap a plain function ``config -> R^k``."""

    def __init__(self, fn: Callable, output_dim: int = 1):
        self.fn = fn
        self.output_dim = output_dim

    def eval(self, config):
        return np.atleast_1d(np.asarray(self.fn(config), dtype=float))


class SumFunctional(Functional):
    """``N(f) = sum_{points with time <= until} f(base, mark)``.

    ``f_gradient(base, mark)``, when given, is the analytic gradient matrix of
    ``mark -> f(base, mark)`` in the mark space's convention.
    """

    def __init__(self, f: Callable, output_dim: int = 1, f_gradient: Callable | None = None,
                 until: float | None = None):
        self.f = f
        self.f_gradient = f_gradient
        self.output_dim = output_dim
        self.until = until

    def _active(self, base: BasePoint) -> bool:
        return self.until is None or base.time <= self.until

    def term(self, base, mark) -> np.ndarray:
        if not self._active(base):
            return np.zeros(self.output_dim)
        return np.atleast_1d(np.asarray(self.f(base, mark), dtype=float))

    def _sum(self, points) -> np.ndarray:
        total = np.zeros(self.output_dim)
        for p in points:
            total = total + self.term(p.base, p.mark)
        return total

    def eval(self, config):
        return self._sum(config.points)

    def term_map(self, base) -> MarkFunction:
        if not self._active(base):
            k = self.output_dim
            return MarkFunction(lambda u: np.zeros(k), gradient=lambda u: np.zeros((k, 1)))
        gradient = None
        if self.f_gradient is not None:
            gradient = lambda u: self.f_gradient(base, u)
        return MarkFunction(lambda u: self.term(base, u), gradient=gradient)

    def _one_mark(self, offset, base) -> MarkFunction:
        inner = self.term_map(base)
        k = self.output_dim
        return MarkFunction(lambda u: offset + inner(u), inner=inner, outer_jac=lambda u: np.eye(k))

    def lend(self, rest, base):
        return self._one_mark(self.eval(rest), base)

    def section(self, config, index):
        others = config.points[:index] + config.points[index + 1:]
        return self._one_mark(self._sum(others), config.points[index].base)


class ExpFunctional(Functional):
    """``exp(-N(f))`` for a scalar sum functional ``N(f)``."""

    output_dim = 1

    def __init__(self, linear: SumFunctional):
        if linear.output_dim != 1:
            raise ValueError("ExpFunctional needs a scalar f")
        self.linear = linear

    def eval(self, config):
        return np.exp(-self.linear.eval(config))

    def _one_mark(self, offset, base) -> MarkFunction:
        inner = self.linear.term_map(base)

        def value(u):
            return np.exp(-(offset + inner(u)))

        return MarkFunction(value, inner=inner, outer_jac=lambda u: -value(u)[:, None])

    def lend(self, rest, base):
        return self._one_mark(self.linear.eval(rest), base)

    def section(self, config, index):
        others = config.points[:index] + config.points[index + 1:]
        return self._one_mark(self.linear._sum(others), config.points[index].base)


class StackedFunctional(Functional):
    """``(F_1, ..., F_n)`` concatenated into one vector functional."""

    def __init__(self, *components: Functional):
        self.components = components
        self.output_dim = sum(c.output_dim for c in components)

    def eval(self, config):
        return np.concatenate([c.eval(config) for c in self.components])

    def _stack(self, maps):
        return MarkFunction(lambda u: np.concatenate([np.atleast_1d(m(u)) for m in maps]), parts=maps)

    def lend(self, rest, base):
        return self._stack([c.lend(rest, base) for c in self.components])

    def section(self, config, index):
        return self._stack([c.section(config, index) for c in self.components])


def make_linear(f, output_dim: int = 1, f_gradient=None, until=None) -> SumFunctional:
    return SumFunctional(f, output_dim, f_gradient, until)


def make_exp(f, f_gradient=None, until=None) -> ExpFunctional:
    return ExpFunctional(SumFunctional(f, 1, f_gradient, until))


def make_jump_sum(transform, output_dim: int, transform_gradient=None, until=None) -> SumFunctional:
    """``sum_points transform(base, mark)``, e.g. the terminal value of a compound process."""
    return SumFunctional(transform, output_dim, transform_gradient, until)


def polar_jump(base: BasePoint, theta) -> np.ndarray:
    r = base.attribute[0]
    return np.array([r * math.cos(theta), r * math.sin(theta)])


def polar_jump_gradient(base: BasePoint, theta) -> np.ndarray:
    r = base.attribute[0]
    return np.array([[-r * math.sin(theta)], [r * math.cos(theta)]])


def make_polar_jump_sum(until=None, analytic: bool = True) -> SumFunctional:
    """``Z_t = sum_{s <= t} r (cos theta, sin theta)`` for radius attributes and circle marks."""
    return make_jump_sum(polar_jump, 2, polar_jump_gradient if analytic else None, until)


def _accumulate(terms, k: int) -> np.ndarray:
    out = np.zeros((k, k))
    for term in terms:
        out = out + term
    return 0.5 * (out + out.T)


def gamma_total(F: Functional, config: Configuration, space) -> np.ndarray:
    """Carré du champ of ``F`` at ``config``, assembled particle by particle."""

    def terms():
        for p in config.points:
            g = F.lend(eps_minus(config, p), p.base)
            yield space.gamma_one(g, p.mark)

    return _accumulate(terms(), F.output_dim)


def gamma_total_oracle(F: Functional, config: Configuration, space) -> np.ndarray:
    """Same quantity from the product construction: differentiate each mark in place."""

    def terms():
        for i, p in enumerate(config.points):
            yield space.gamma_one(F.section(config, i), p.mark)

    return _accumulate(terms(), F.output_dim)


def gamma_contributions(F: Functional, config: Configuration, space) -> list[np.ndarray]:
    """Per-point rank-one terms of :func:`gamma_total`, in canonical order."""
    return [space.gamma_one(F.lend(eps_minus(config, p), p.base), p.mark) for p in config.points]


def sharp_sample(F: Functional, config: Configuration, space, seed, size: int | None = None) -> np.ndarray:
    """Draw(s) of the configuration gradient ``F#`` under the auxiliary measure.

    The auxiliary draw at the ``i``-th point (canonical order) comes from
    ``child_seed(seed, i)``, so the result does not depend on how the points
    were listed.  Returns ``(k,)`` or ``(size, k)``.
    """
    k = F.output_dim
    out = np.zeros(k) if size is None else np.zeros((size, k))
    for i, p in enumerate(config.points):
        g = F.lend(eps_minus(config, p), p.base)
        out = out + space.flat_sample(g, p.mark, child_seed(seed, i), size=size)
    return out


def relative_error(a, b, floor: float = 1e-300) -> float:
    """``max|a - b| / max(max|b|, floor)``: normwise relative deviation."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = max(float(np.max(np.abs(b))) if b.size else 0.0, floor)
    diff = float(np.max(np.abs(a - b))) if a.size else 0.0
    if diff == 0.0:
        return 0.0
    return diff / scale
