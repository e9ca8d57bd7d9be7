"""Jumps transformed by an SDE, with Wiener-space marks.

Each jump ``x`` of the base process is pushed through

    X_t^x = x + sum_j int_0^t A_j(X^x, x) dB^j + int_0^t B(X^x, x) dtau

driven by the point's own Brownian path (its mark).  The Euler scheme carries
the flow Jacobian ``K`` (derivative in the first argument), from which the
Ornstein-Uhlenbeck carré du champ and gradient of ``X_T^x`` are read off:

    gamma = K_T [sum_v K_v^-1 sigma_v sigma_v^T K_v^-T dt] K_T^T
    flat  = K_T  sum_v K_v^-1 sigma_v dB_hat_v

with ``B_hat`` an independent copy of the driver.

Coefficient callables take ``z`` of shape ``(..., m)`` and ``x`` of shape
``(m,)`` and must broadcast over the leading axes: ``drift`` returns
``(..., m)``, ``diffusion`` returns ``(..., m, d)`` (the columns are the
``A_j``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.special import lambertw

from .config_space import make_rng
from .errors import CoefficientNotVanishing, NonFiniteState, SingularJacobian
from .marks import MarkSpace, _eval_vector

COND_LIMIT = 1e12
DEFAULT_STEPS = 256


# ---------------------------------------------------------------------------
# Coefficients
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SDECoefficients:
    drift: Callable
    diffusion: Callable
    dim: int
    noise_dim: int
    drift_jacobian: Callable | None = None
    diffusion_jacobian: Callable | None = None
    name: str = "custom"

    def b(self, z, x) -> np.ndarray:
        return np.asarray(self.drift(z, x), dtype=float)

    def sigma(self, z, x) -> np.ndarray:
        return np.asarray(self.diffusion(z, x), dtype=float)

    def _fd_step(self, z):
        return 1e-6 * (np.linalg.norm(z) + 1.0)

    def jac_drift(self, z, x) -> np.ndarray:
        """``(m, m)`` Jacobian of ``B`` in its first argument."""
        if self.drift_jacobian is not None:
            return np.asarray(self.drift_jacobian(z, x), dtype=float)
        h = self._fd_step(z)
        cols = []
        for k in range(self.dim):
            e = np.zeros(self.dim)
            e[k] = h
            cols.append((self.b(z + e, x) - self.b(z - e, x)) / (2 * h))
        return np.stack(cols, axis=-1)

    def jac_diffusion(self, z, x) -> np.ndarray:
        """``(d, m, m)`` stack of the Jacobians of ``A_j`` in the first argument."""
        if self.diffusion_jacobian is not None:
            return np.asarray(self.diffusion_jacobian(z, x), dtype=float)
        h = self._fd_step(z)
        out = np.empty((self.noise_dim, self.dim, self.dim))
        for k in range(self.dim):
            e = np.zeros(self.dim)
            e[k] = h
            diff = (self.sigma(z + e, x) - self.sigma(z - e, x)) / (2 * h)
            out[:, :, k] = diff.T
        return out


def _zero_drift(m):
    return lambda z, x: np.zeros(np.shape(z)[:-1] + (m,))


def zero_preset(m: int = 2, d: int = 1) -> SDECoefficients:
    return SDECoefficients(
        _zero_drift(m),
        lambda z, x: np.zeros(np.shape(z)[:-1] + (m, d)),
        m, d,
        drift_jacobian=lambda z, x: np.zeros((m, m)),
        diffusion_jacobian=lambda z, x: np.zeros((d, m, m)),
        name="zero",
    )


def additive_preset(sigma=None, m: int = 2) -> SDECoefficients:
    """Constant diffusion matrix, no drift."""
    sigma = np.eye(m) * 0.5 if sigma is None else np.atleast_2d(np.asarray(sigma, dtype=float))
    m, d = sigma.shape
    return SDECoefficients(
        _zero_drift(m),
        lambda z, x: np.broadcast_to(sigma, np.shape(z)[:-1] + (m, d)).copy(),
        m, d,
        drift_jacobian=lambda z, x: np.zeros((m, m)),
        diffusion_jacobian=lambda z, x: np.zeros((d, m, m)),
        name="additive",
    )


def linear_preset(c: float = 0.5, drift: float = 0.0, m: int = 2, matrices=None) -> SDECoefficients:
    """``A_j(z) = C_j z`` and ``B(z) = drift * z``; ``C_1 = c I`` by default."""
    C = (np.array([c * np.eye(m)]) if matrices is None
         else np.asarray(matrices, dtype=float).reshape(-1, m, m))
    d = C.shape[0]

    def diffusion(z, x):
        return np.einsum("jab,...b->...aj", C, z)

    return SDECoefficients(
        lambda z, x: drift * np.asarray(z, dtype=float),
        diffusion,
        m, d,
        drift_jacobian=lambda z, x: drift * np.eye(m),
        diffusion_jacobian=lambda z, x: C.copy(),
        name="linear",
    )


def rotation_preset(c: float = 0.8, damping: float = 0.3) -> SDECoefficients:
    """Planar rotation noise ``A_1(z) = c J z`` with linear damping ``B(z) = -damping z``."""
    J = np.array([[0.0, -1.0], [1.0, 0.0]])
    return replace(linear_preset(m=2, matrices=[c * J], drift=-damping), name="rotation")


def nonlinear_preset(c: float = 0.6, a: float = 0.4, m: int = 2) -> SDECoefficients:
    """Smooth, Lipschitz and vanishing at zero: ``A_1 = c sin(z)``, ``A_2 = c tanh(z_rev)``, ``B = -a tanh(z)``."""

    def diffusion(z, x):
        z = np.asarray(z, dtype=float)
        return np.stack([c * np.sin(z), c * np.tanh(z[..., ::-1])], axis=-1)

    def diffusion_jacobian(z, x):
        z = np.asarray(z, dtype=float)
        j1 = np.diag(c * np.cos(z))
        sech2 = 1.0 / np.cosh(z[::-1]) ** 2
        j2 = np.zeros((m, m))
        for i in range(m):
            j2[i, m - 1 - i] = c * sech2[i]
        return np.stack([j1, j2])

    return SDECoefficients(
        lambda z, x: -a * np.tanh(np.asarray(z, dtype=float)),
        diffusion,
        m, 2,
        drift_jacobian=lambda z, x: np.diag(-a / np.cosh(np.asarray(z, dtype=float)) ** 2),
        diffusion_jacobian=diffusion_jacobian,
        name="nonlinear",
    )


def spiral_field(x) -> np.ndarray:
    """``|x| (cos(1/|x|), sin(1/|x|))``; zero at the origin."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        phase = np.where(r > 0, 1.0 / np.where(r > 0, r, 1.0), 0.0)
    return np.stack([r * np.cos(phase), r * np.sin(phase)], axis=-1)


def jump_dependent_preset(field_fn: Callable = spiral_field, damping: float = 0.2,
                          m: int = 2) -> SDECoefficients:
    """Diffusion depending only on the jump: ``A_1(z, x) = field(x)``, ``B = -damping z``."""

    def diffusion(z, x):
        col = np.asarray(field_fn(x), dtype=float)
        return np.broadcast_to(col[:, None], np.shape(z)[:-1] + (m, 1)).copy()

    return SDECoefficients(
        lambda z, x: -damping * np.asarray(z, dtype=float),
        diffusion,
        m, 1,
        drift_jacobian=lambda z, x: -damping * np.eye(m),
        diffusion_jacobian=lambda z, x: np.zeros((1, m, m)),
        name="jump_dependent",
    )


def constant_deficient_preset(m: int = 2) -> SDECoefficients:
    """Constant rank-one diffusion ``A_1 = e_1``: its span never fills R^m."""
    sigma = np.zeros((m, 1))
    sigma[0, 0] = 1.0
    return replace(additive_preset(sigma), name="constant_deficient")


PRESETS = {
    "zero": zero_preset,
    "additive": additive_preset,
    "linear": linear_preset,
    "rotation": rotation_preset,
    "nonlinear": nonlinear_preset,
    "jump_dependent": jump_dependent_preset,
    "constant_deficient": constant_deficient_preset,
}


def preset(name: str, **params) -> SDECoefficients:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown SDE preset {name!r}; choose from {sorted(PRESETS)}") from None
    return factory(**params)


# ---------------------------------------------------------------------------
# Driver paths and the Euler scheme
# ---------------------------------------------------------------------------

class DriverPath:
    """Brownian increments on a uniform grid: ``increments[v, j] = B^j_{v+1} - B^j_v``."""

    __slots__ = ("increments", "dt", "_hash")

    def __init__(self, increments, dt: float):
        inc = np.array(increments, dtype=float, ndmin=2)
        inc.setflags(write=False)
        if not dt > 0:
            raise ValueError("dt must be positive")
        self.increments = inc
        self.dt = float(dt)
        self._hash = hash((inc.shape, inc.tobytes(), self.dt))

    @property
    def n_steps(self) -> int:
        return self.increments.shape[0]

    @property
    def noise_dim(self) -> int:
        return self.increments.shape[1]

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt

    def __eq__(self, other):
        return (isinstance(other, DriverPath) and self.dt == other.dt
                and np.array_equal(self.increments, other.increments))

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"DriverPath(n_steps={self.n_steps}, noise_dim={self.noise_dim}, dt={self.dt})"

    def sort_key(self):
        return (float(self.increments[0, 0]), float(self.increments.sum()), self._hash)

    def brownian(self) -> np.ndarray:
        """Path values ``B_0 = 0, ..., B_n``."""
        return np.vstack([np.zeros((1, self.noise_dim)), np.cumsum(self.increments, axis=0)])

    def perturbed(self, flat_index: int, delta: float) -> "DriverPath":
        inc = self.increments.copy()
        inc.flat[flat_index] += delta
        return DriverPath(inc, self.dt)

    def coarsened(self) -> "DriverPath":
        """Same Brownian path on a grid with twice the step."""
        n = self.n_steps - self.n_steps % 2
        inc = self.increments[:n].reshape(n // 2, 2, self.noise_dim).sum(axis=1)
        return DriverPath(inc, 2 * self.dt)


def sample_driver(n_steps: int, noise_dim: int, horizon: float, seed) -> DriverPath:
    dt = horizon / n_steps
    rng = make_rng(seed)
    return DriverPath(rng.standard_normal((n_steps, noise_dim)) * math.sqrt(dt), dt)


@dataclass
class FlowState:
    trajectory: np.ndarray          # (n+1, m)
    jacobian: np.ndarray            # (n+1, m, m)
    inverse_jacobian: np.ndarray    # (n+1, m, m)
    sigmas: np.ndarray              # (n+1, m, d): sigma(X_v, x)
    dt: float
    condition: np.ndarray = field(default=None)

    @property
    def terminal(self) -> np.ndarray:
        return self.trajectory[-1]


def euler_solve(coeffs: SDECoefficients, x, path: DriverPath, start=None,
                check_condition: bool = True) -> FlowState:
    """Euler-Maruyama for the state and the variational equation for ``K``.

    ``x`` is the parameter (second argument of the coefficients); the state
    starts at ``start``, which defaults to ``x``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    m, d = coeffs.dim, coeffs.noise_dim
    if path.noise_dim != d:
        raise ValueError(f"driver has {path.noise_dim} components, coefficients need {d}")
    n, dt = path.n_steps, path.dt
    X = np.empty((n + 1, m))
    K = np.empty((n + 1, m, m))
    S = np.empty((n + 1, m, d))
    X[0] = x if start is None else np.asarray(start, dtype=float)
    K[0] = np.eye(m)
    eye = np.eye(m)
    for v in range(n):
        z = X[v]
        S[v] = coeffs.sigma(z, x)
        dB = path.increments[v]
        X[v + 1] = z + S[v] @ dB + coeffs.b(z, x) * dt
        J = eye + np.tensordot(dB, coeffs.jac_diffusion(z, x), axes=1) + coeffs.jac_drift(z, x) * dt
        K[v + 1] = J @ K[v]
        if not (np.all(np.isfinite(X[v + 1])) and np.all(np.isfinite(K[v + 1]))):
            raise NonFiniteState(f"non-finite state at step {v + 1}")
    S[n] = coeffs.sigma(X[n], x)
    cond = np.linalg.cond(K) if check_condition else None
    if check_condition and np.any(cond > COND_LIMIT):
        v = int(np.argmax(cond > COND_LIMIT))
        raise SingularJacobian(f"flow Jacobian condition number {cond[v]:.3g} at step {v}")
    Kinv = np.linalg.inv(K)
    return FlowState(X, K, Kinv, S, dt, cond)


def euler_paths(coeffs: SDECoefficients, x, increments, dt: float, start=None) -> np.ndarray:
    """State-only Euler scheme on a batch of drivers.

    ``increments`` has shape ``(n_steps, n_paths, d)``; returns the terminal
    states, shape ``(n_paths, m)``.  No Jacobian is carried.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    inc = np.asarray(increments, dtype=float)
    n_paths = inc.shape[1]
    Z = np.broadcast_to(x if start is None else np.asarray(start, dtype=float),
                        (n_paths, coeffs.dim)).copy()
    for dB in inc:
        Z = Z + np.einsum("sad,sd->sa", coeffs.sigma(Z, x), dB) + coeffs.b(Z, x) * dt
    if not np.all(np.isfinite(Z)):
        raise NonFiniteState("Euler scheme diverged")
    return Z


def _propagators(flow: FlowState) -> np.ndarray:
    """``K_T K_v^-1 sigma(X_v, x)`` for ``v = 0..n``, shape ``(n+1, m, d)``."""
    return np.einsum("ab,vbc,vcd->vad", flow.jacobian[-1], flow.inverse_jacobian, flow.sigmas)


def gradient_matrix(flow: FlowState) -> np.ndarray:
    """``m x (n d)`` matrix whose product with a standard normal vector is ``(X_T)_flat``.

    Column ``v * d + j`` is ``K_T K_v^-1 A_j(X_v, x) sqrt(dt)``, matching the
    row-major flattening of the increment matrix.
    """
    P = _propagators(flow)[:-1] * math.sqrt(flow.dt)
    n, m, d = P.shape
    return P.transpose(1, 0, 2).reshape(m, n * d)


def gamma_sde(coeffs: SDECoefficients, x, path: DriverPath, flow: FlowState | None = None) -> np.ndarray:
    """Discrete carré du champ of ``X_T^x`` for the OU structure on the driver."""
    flow = euler_solve(coeffs, x, path) if flow is None else flow
    D = gradient_matrix(flow)
    G = D @ D.T
    return 0.5 * (G + G.T)


def flat_sde_sample(coeffs: SDECoefficients, x, path: DriverPath, seed, size: int | None = None,
                    flow: FlowState | None = None, chunk: int = 4096) -> np.ndarray:
    """``K_T sum_v K_v^-1 sigma_v dB_hat_v`` for independent copies ``B_hat`` of the driver.

    Returns ``(m,)`` or ``(size, m)``.
    """
    flow = euler_solve(coeffs, x, path) if flow is None else flow
    P = _propagators(flow)[:-1]
    rng = make_rng(seed)
    sqdt = math.sqrt(path.dt)
    if size is None:
        dBh = rng.standard_normal(path.increments.shape) * sqdt
        return np.einsum("vad,vd->a", P, dBh)
    out = np.empty((size, coeffs.dim))
    for start in range(0, size, chunk):
        stop = min(size, start + chunk)
        dBh = rng.standard_normal((stop - start,) + path.increments.shape) * sqdt
        out[start:stop] = np.einsum("vad,svd->sa", P, dBh)
    return out


def spanning_matrices(coeffs: SDECoefficients, x, path: DriverPath, v_indices: Sequence[int],
                      flow: FlowState | None = None) -> list[np.ndarray]:
    """``K_T K_v^-1 sigma(X_v, x)`` for each grid index ``v`` in ``0..n``."""
    flow = euler_solve(coeffs, x, path) if flow is None else flow
    P = _propagators(flow)
    return [P[v] for v in v_indices]


# ---------------------------------------------------------------------------
# Moment bound check
# ---------------------------------------------------------------------------

@dataclass
class MomentReport:
    t: float
    norms: list
    ratios: dict              # p -> list of E|X_t^x|^p / |x|^p over the grid
    variation: dict           # p -> max/min - 1
    k: float                  # fitted envelope constant
    envelope: float           # k * exp(k t)
    max_ratio: float
    bounded: bool

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "norms": self.norms,
            "ratios": {str(p): r for p, r in self.ratios.items()},
            "variation": {str(p): v for p, v in self.variation.items()},
            "k": self.k,
            "envelope": self.envelope,
            "max_ratio": self.max_ratio,
            "bounded": self.bounded,
        }


def fit_envelope(ratio: float, t: float) -> float:
    """Smallest ``k`` with ``k exp(k t) >= ratio``."""
    if t <= 0:
        return float(ratio)
    return float(np.real(lambertw(ratio * t)) / t)


def lemma3_moment_check(coeffs: SDECoefficients, t: float, x_grid, n_paths: int, seed,
                        n_steps: int = DEFAULT_STEPS, powers=(1, 2), tol: float = 0.2) -> MomentReport:
    """Estimate ``E|X_t^x|^p / |x|^p`` along ``x_grid`` with common random numbers.

    The envelope constant ``k`` is fitted on the half of the grid with the
    largest ``|x|``; the report is ``bounded`` when every ratio, including the
    small-``|x|`` half, stays below ``(1 + tol)`` times that envelope.
    """
    m, d = coeffs.dim, coeffs.noise_dim
    zero = np.zeros(m)
    if (np.max(np.abs(coeffs.sigma(zero, zero)), initial=0.0) >= 1e-12
            or np.max(np.abs(coeffs.b(zero, zero)), initial=0.0) >= 1e-12):
        raise CoefficientNotVanishing("coefficients must vanish at the origin")
    xs = [np.atleast_1d(np.asarray(x, dtype=float)) for x in x_grid]
    norms = np.array([np.linalg.norm(x) for x in xs])
    if np.any(norms == 0):
        raise ValueError("x_grid must not contain the origin")
    dt = t / n_steps
    rng = make_rng(seed)
    inc = rng.standard_normal((n_steps, n_paths, d)) * math.sqrt(dt)
    ratios = {p: [] for p in powers}
    for x, nx in zip(xs, norms):
        size = np.linalg.norm(euler_paths(coeffs, x, inc, dt), axis=1)
        for p in powers:
            ratios[p].append(float(np.mean(size ** p) / nx ** p))
    order = np.argsort(norms)
    large = order[len(order) // 2:]
    fit_ratio = max(ratios[p][i] for p in powers for i in large)
    k = fit_envelope(fit_ratio, t)
    envelope = k * math.exp(k * t)
    max_ratio = max(max(r) for r in ratios.values())
    variation = {p: float(max(r) / min(r) - 1.0) for p, r in ratios.items()}
    bounded = bool(np.isfinite(max_ratio) and max_ratio <= (1.0 + tol) * envelope)
    return MomentReport(t, norms.tolist(), ratios, variation, k, envelope, max_ratio, bounded)


# ---------------------------------------------------------------------------
# Wiener mark space and the transformed-jump functional
# ---------------------------------------------------------------------------

class WienerMarkSpace(MarkSpace):
    """Discretized Wiener space with the Ornstein-Uhlenbeck structure.

    Marks are :class:`DriverPath` values.  The gradient matrix is taken with
    respect to the standardized increments ``dB / sqrt(dt)``, so the auxiliary
    draw ``D @ xi`` is the gradient evaluated on an independent driver copy.
    """

    space_id = "wiener"

    def __init__(self, noise_dim: int = 1, n_steps: int = DEFAULT_STEPS, horizon: float = 1.0,
                 fd_step: float = 1e-5):
        self.noise_dim = noise_dim
        self.n_steps = n_steps
        self.horizon = horizon
        self.fd_step = fd_step

    def sample_many(self, n, seed):
        rng = make_rng(seed)
        dt = self.horizon / self.n_steps
        return [DriverPath(rng.standard_normal((self.n_steps, self.noise_dim)) * math.sqrt(dt), dt)
                for _ in range(n)]

    def fd_gradient(self, g, path):
        sqdt = math.sqrt(path.dt)
        h = self.fd_step * sqdt
        cols = []
        for k in range(path.increments.size):
            up = _eval_vector(g, path.perturbed(k, h))
            down = _eval_vector(g, path.perturbed(k, -h))
            cols.append((up - down) / (2 * h) * sqdt)
        return np.stack(cols, axis=1)

    def encode_mark(self, mark):
        return {"dt": mark.dt, "increments": mark.increments.tolist()}

    def decode_mark(self, data):
        return DriverPath(data["increments"], data["dt"])


class TransformedJump:
    """``(base, path) -> X_T^x(path)`` with ``x`` the base attribute, plus its gradient matrix."""

    def __init__(self, coeffs: SDECoefficients, cache_size: int = 512):
        self.coeffs = coeffs
        self._cache: dict = {}
        self._cache_size = cache_size

    def flow(self, base, path) -> FlowState:
        key = (base.attribute, path)
        flow = self._cache.get(key)
        if flow is None:
            flow = euler_solve(self.coeffs, base.attribute, path)
            if len(self._cache) >= self._cache_size:
                self._cache.clear()
            self._cache[key] = flow
        return flow

    def __call__(self, base, path):
        return self.flow(base, path).terminal

    def gradient(self, base, path):
        return gradient_matrix(self.flow(base, path))


def make_sde_jump_sum(coeffs: SDECoefficients, until: float | None = None):
    """``F = sum_points X_T^{x}(y)`` over the points with time <= until."""
    from .lent import make_jump_sum

    transform = TransformedJump(coeffs)
    return make_jump_sum(transform, coeffs.dim, transform.gradient, until)


def prop4_fields(coeffs: SDECoefficients) -> list[Callable]:
    """The maps ``x -> A_j(x, x)``; for jump-only diffusions these are the ``A_j(x)``."""

    def column(j):
        def A(x):
            x = np.atleast_1d(np.asarray(x, dtype=float))
            return coeffs.sigma(x, x)[:, j]
        return A

    return [column(j) for j in range(coeffs.noise_dim)]
