"""Dirichlet structures on the mark space.

Every mark space exposes its gradient through a *gradient matrix*: for a
one-mark map ``g: mark -> R^k`` and a mark ``u`` it returns a ``k x q`` matrix
``D`` such that

* the carré du champ is ``gamma_one(g, u) = D @ D.T``;
* one draw of the gradient ``g_flat(u, .)`` under the auxiliary Gaussian
  measure is ``D @ xi`` with ``xi ~ N(0, I_q)``.

Both facts are built in, so the isometry ``E_rho[g_flat g_flat^T] = gamma`` and
the centering ``E_rho[g_flat] = 0`` hold by construction.
"""
from __future__ import annotations

import math
from abc import ABC, abstractmethod
from typing import Callable

import numpy as np

from .config_space import child_seed, make_rng
from .errors import NonFiniteValue

TWO_PI = 2.0 * math.pi


class MarkFunction:
    """A one-mark map with optional derivative structure.

    ``gradient(u)``: analytic ``k x q`` gradient matrix in the convention of
    the mark space the map is used with; takes precedence over finite
    differences.

    ``inner`` / ``outer_jac``: the map is ``outer(inner(u))`` and the space
    differentiates ``inner`` then applies the ``k x k_inner`` matrix
    ``outer_jac(u)`` (chain rule).

    ``parts``: the map is the concatenation of the given maps.
    """

    def __init__(self, fn: Callable, gradient: Callable | None = None,
                 inner: Callable | None = None, outer_jac: Callable | None = None,
                 parts: list | None = None):
        self.fn = fn
        self.gradient = gradient
        self.inner = inner
        self.outer_jac = outer_jac
        self.parts = parts

    def __call__(self, u):
        return self.fn(u)


def _eval_vector(g, u) -> np.ndarray:
    val = np.atleast_1d(np.asarray(g(u), dtype=float))
    if not np.all(np.isfinite(val)):
        raise NonFiniteValue(f"one-mark map returned {val!r}")
    return val


class MarkSpace(ABC):
    space_id = "abstract"

    @abstractmethod
    def sample_many(self, n: int, seed) -> list:
        ...

    def sample(self, seed):
        return self.sample_many(1, seed)[0]

    @abstractmethod
    def fd_gradient(self, g, u) -> np.ndarray:
        """Finite-difference gradient matrix of ``g`` at ``u``."""

    def gradient(self, g, u) -> np.ndarray:
        parts = getattr(g, "parts", None)
        if parts:
            return np.vstack([self.gradient(part, u) for part in parts])
        inner = getattr(g, "inner", None)
        if inner is not None:
            J = np.atleast_2d(np.asarray(g.outer_jac(u), dtype=float))
            return J @ self.gradient(inner, u)
        analytic = getattr(g, "gradient", None)
        if analytic is not None:
            D = np.atleast_2d(np.asarray(analytic(u), dtype=float))
            if not np.all(np.isfinite(D)):
                raise NonFiniteValue("analytic mark gradient is not finite")
            return D
        return self.fd_gradient(g, u)

    def gamma_one(self, g, u) -> np.ndarray:
        D = self.gradient(g, u)
        return D @ D.T

    def flat_sample(self, g, u, seed, size: int | None = None) -> np.ndarray:
        """Draw(s) of the gradient of ``g`` at ``u`` under the auxiliary measure.

        Returns a ``(k,)`` vector, or ``(size, k)`` when ``size`` is given.
        """
        D = self.gradient(g, u)
        rng = make_rng(seed)
        if size is None:
            return D @ rng.standard_normal(D.shape[1])
        return rng.standard_normal((size, D.shape[1])) @ D.T

    def encode_mark(self, mark):
        return mark

    def decode_mark(self, data):
        return data


class CircleMarkSpace(MarkSpace):
    """Uniform law on the circle with the H^1 form: ``gamma[g] = g'(theta) g'(theta)^T``."""

    space_id = "circle"

    def __init__(self, fd_step: float = 1e-5):
        if not fd_step > 0:
            raise ValueError("fd_step must be positive")
        self.fd_step = fd_step

    def sample_many(self, n, seed):
        return [float(a) for a in make_rng(seed).uniform(0.0, TWO_PI, size=n)]

    def derivative(self, g, theta) -> np.ndarray:
        h = self.fd_step
        up = _eval_vector(g, (theta + h) % TWO_PI)
        down = _eval_vector(g, (theta - h) % TWO_PI)
        return (up - down) / (2.0 * h)

    def fd_gradient(self, g, theta):
        return self.derivative(g, theta)[:, None]

    def encode_mark(self, mark):
        return {"angle": float(mark)}

    def decode_mark(self, data):
        return float(data["angle"])


def circle_sample(seed) -> float:
    return CircleMarkSpace().sample(seed)


def circle_gamma_one(g, theta, fd_step: float = 1e-5) -> np.ndarray:
    return CircleMarkSpace(fd_step).gamma_one(g, theta)


def circle_flat_sample(g, theta, seed, fd_step: float = 1e-5, size=None) -> np.ndarray:
    return CircleMarkSpace(fd_step).flat_sample(g, theta, seed, size=size)


__all__ = [
    "MarkFunction",
    "MarkSpace",
    "CircleMarkSpace",
    "circle_sample",
    "circle_gamma_one",
    "circle_flat_sample",
]
