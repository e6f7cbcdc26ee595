"""Resolvent of block-scaled Wishart matrices M = (1/P) Vhat F F^T.

The matrix has D rows split into blocks of fractions phi_i, each scaled by a
nonnegative vhat_i; F has i.i.d. standard Gaussian entries and P = D / gamma
columns. The saddle-point equations consume g(z) = (1/D) tr (z - M)^{-1} on
the negative real axis together with per-block restrictions of the trace.

Three closures for the per-block fixed point are available:

  "deterministic"  q_i = Omega/(z Omega - vhat_i),  Omega = 1 - gamma * sum_j phi_j vhat_j q_j
  "printed"        q_i = Omega/(z Omega - vhat_i),  Omega = 1 - sum_j phi_j vhat_j q_j
  "action"         q_i = Omega/(z Omega - vhat_i/gamma),  Omega as in "printed"

Only "deterministic" reproduces the empirical spectrum for gamma != 1 (it is
the standard sample-covariance deterministic equivalent with population
covariance blockdiag(vhat)); the other two are kept behind the flag because
they circulate in derivations of this system. empirical_resolvent is the
ground-truth oracle used to select the default.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky, get_lapack_funcs
from scipy.optimize import brentq

from .errors import ConvergenceError, ParameterError, SingularityError

DEFAULT_VARIANT = "deterministic"
_VARIANTS = ("deterministic", "printed", "action")


@dataclass(frozen=True)
class BlockSpectrumSpec:
    """Block fractions, per-block scalings and aspect ratio gamma = D/P."""

    phis: tuple[float, ...]
    vhats: tuple[float, ...]
    gamma: float

    def __post_init__(self):
        phis = np.asarray(self.phis, dtype=float)
        vhats = np.asarray(self.vhats, dtype=float)
        if phis.ndim != 1 or phis.size < 1 or phis.size != vhats.size:
            raise ParameterError("phis and vhats must be equal-length, non-empty")
        if abs(phis.sum() - 1.0) > 1e-12:
            raise ParameterError(f"block fractions must sum to 1, got {phis.sum()!r}")
        if np.any(phis <= 0) or np.any(phis > 1):
            raise ParameterError("every block fraction must lie in (0, 1]")
        if np.any(vhats < 0):
            raise ParameterError("block scalings must be nonnegative")
        if self.gamma <= 0:
            raise ParameterError(f"gamma must be positive, got {self.gamma}")
        object.__setattr__(self, "phis", tuple(float(p) for p in phis))
        object.__setattr__(self, "vhats", tuple(float(v) for v in vhats))


@dataclass(frozen=True)
class ResolventPoint:
    z: float
    g: float
    g_prime: float
    q_blocks: tuple[float, ...]
    omega: float          # 1 - sum_i phi_i vhat_i q_i
    residual: float


@dataclass(frozen=True)
class BlockResolventMoments:
    """Block-restricted traces of R = (c + M)^{-1} at a positive shift c.

    t[i]     = (1/D) tr_i R
    u[i]     = (1/D) tr_i R^2
    cross[i,j] = (1/D) tr[P_i R P_j R]  (so u = cross.sum(axis=1))
    """

    c: float
    t: np.ndarray
    u: np.ndarray
    cross: np.ndarray


def block_sizes(phis, d: int) -> list[int]:
    """round(phi_i d) per block, last block absorbing the rounding remainder."""
    sizes = [int(round(p * d)) for p in phis[:-1]]
    sizes.append(d - sum(sizes))
    if any(s <= 0 for s in sizes):
        raise ParameterError(f"dimension {d} is too small for fractions {tuple(phis)}")
    return sizes


def _closure(spec: BlockSpectrumSpec, variant: str):
    """Coefficients (kappa, a_i) of q_i = Omega/(z Omega - a_i), Omega = 1 - kappa sum phi vhat q."""
    vhats = np.asarray(spec.vhats)
    if variant == "deterministic":
        return spec.gamma, vhats
    if variant == "printed":
        return 1.0, vhats
    if variant == "action":
        return 1.0, vhats / spec.gamma
    raise ParameterError(f"unknown variant {variant!r}; choose from {_VARIANTS}")


def solve_block_resolvent(spec: BlockSpectrumSpec, z: float, tol: float = 1e-12,
                          max_iter: int = 10000,
                          variant: str = DEFAULT_VARIANT) -> ResolventPoint:
    """Fixed point of the coupled block equations at real z below the spectrum."""
    if tol <= 0:
        raise ParameterError("tol must be positive")
    if z >= 0:
        raise ParameterError(f"z must be on the negative real axis, got {z}")
    phis = np.asarray(spec.phis)
    vhats = np.asarray(spec.vhats)
    kappa, a = _closure(spec, variant)

    if np.all(vhats == 0.0):
        q = np.full_like(phis, 1.0 / z)
        return ResolventPoint(z=z, g=1.0 / z, g_prime=-1.0 / z ** 2,
                              q_blocks=tuple(q), omega=1.0, residual=0.0)

    def q_of_omega(om):
        den = z * om - a
        if np.any(den == 0.0):
            raise SingularityError("update hit z*Omega == a_i")
        return om / den

    def rel_residual(q):
        q_next = q_of_omega(1.0 - kappa * float(np.sum(phis * vhats * q)))
        return float(np.max(np.abs(q_next - q)) / max(1.0, np.max(np.abs(q))))

    # damped fixed-point iteration on q, exact for vhat = 0 at the start;
    # the residual is scale-relative since q grows like 1/|z| toward the spectrum
    q = np.full_like(phis, 1.0 / z)
    damping = 0.5
    residual = np.inf
    converged = False
    for _ in range(max_iter):
        omega = 1.0 - kappa * float(np.sum(phis * vhats * q))
        q_new = q_of_omega(omega)
        residual = float(np.max(np.abs(q_new - q)) / max(1.0, np.max(np.abs(q))))
        q = (1.0 - damping) * q + damping * q_new
        if residual < tol:
            converged = True
            break
    if not converged:
        # safeguarded scalar solve: the system reduces to one equation in Omega
        def h(om):
            return om - 1.0 + kappa * float(np.sum(phis * vhats * q_of_omega(om)))

        lo, hi = 1.0, 2.0
        for _ in range(200):
            if h(hi) > 0:
                break
            hi *= 2.0
        else:
            raise ConvergenceError("no bracket for the Omega reduction",
                                   residual=residual, iterations=max_iter)
        omega = brentq(h, lo, hi, xtol=1e-15, rtol=8.9e-16)
        q = q_of_omega(omega)
        residual = rel_residual(q)
        if residual > tol:
            raise ConvergenceError("Omega reduction left a residual above tol",
                                   residual=residual, iterations=max_iter)

    omega = 1.0 - kappa * float(np.sum(phis * vhats * q))
    # implicit differentiation of the converged system
    s2 = float(np.sum(phis * vhats * q ** 2))
    s2a = float(np.sum(phis * vhats * a * q ** 2))
    s = -s2 / (1.0 - kappa * s2a / omega ** 2)
    dq = -(q ** 2) * (1.0 - kappa * a * s / omega ** 2)
    return ResolventPoint(
        z=z,
        g=float(np.sum(phis * q)),
        g_prime=float(np.sum(phis * dq)),
        q_blocks=tuple(float(v) for v in q),
        omega=float(1.0 - np.sum(phis * vhats * q)),
        residual=residual,
    )


def block_resolvent_moments(spec: BlockSpectrumSpec, c: float,
                            tol: float = 1e-13) -> BlockResolventMoments:
    """t, u and cross traces of R = (c + M)^{-1}, via the deterministic closure.

    The cross matrix comes from differentiating the closure with respect to
    independent per-block shifts; it is what multi-block second-moment
    updates need (plain u double-counts the off-block response).
    """
    if c <= 0:
        raise SingularityError(f"shift c must be positive, got {c}")
    phis = np.asarray(spec.phis)
    vhats = np.asarray(spec.vhats)
    gamma = spec.gamma
    point = solve_block_resolvent(spec, -c, tol=tol, variant="deterministic")
    q = np.asarray(point.q_blocks)
    psi = 1.0 / (1.0 - gamma * float(np.sum(phis * vhats * q)))
    den = psi * vhats + c
    t = phis / den
    b = phis * vhats / den ** 2
    a2 = float(np.sum(phis * vhats ** 2 / den ** 2))
    scale = 1.0 - gamma * psi ** 2 * a2
    if scale <= 0:
        raise SingularityError("shift derivative is singular; c is inside the spectrum")
    psi_j = gamma * psi ** 2 * b / scale
    cross = (phis / den ** 2)[:, None] * (np.eye(len(phis)) + vhats[:, None] * psi_j[None, :])
    return BlockResolventMoments(c=c, t=t, u=cross.sum(axis=1), cross=cross)


def _scaled_gram(spec: BlockSpectrumSpec, d: int, rng: np.random.Generator) -> np.ndarray:
    p = int(round(d / spec.gamma))
    if p < 1:
        raise ParameterError(f"gamma {spec.gamma} yields no columns at dim {d}")
    sizes = block_sizes(spec.phis, d)
    scale = np.concatenate([np.full(s, np.sqrt(v)) for s, v in zip(sizes, spec.vhats)])
    f = rng.standard_normal((d, p))
    g = scale[:, None] * f
    return g @ g.T / p


def empirical_resolvent(spec: BlockSpectrumSpec, z: float, dim: int,
                        draws: int, seed: int) -> tuple[float, float]:
    """Sample mean and standard error of (1/D) tr (z - M)^{-1} over fresh draws."""
    if dim < 100:
        raise ParameterError(f"dim must be at least 100, got {dim}")
    if draws < 1:
        raise ParameterError("draws must be at least 1")
    if z >= 0:
        raise ParameterError(f"z must be negative, got {z}")
    if all(v == 0.0 for v in spec.vhats):
        return 1.0 / z, 0.0
    values = np.empty(draws)
    for k in range(draws):
        rng = np.random.default_rng([seed, k])
        m = _scaled_gram(spec, dim, rng)
        m[np.diag_indices_from(m)] -= z          # m - z = -(z - M), positive definite
        lower = cholesky(m, lower=True)
        trtri = get_lapack_funcs(("trtri",), (lower,))[0]
        inv_l, info = trtri(lower, lower=1)
        if info != 0:
            raise SingularityError("triangular inversion failed in the oracle")
        values[k] = -float(np.sum(inv_l ** 2)) / dim
    stderr = float(np.std(values, ddof=1) / np.sqrt(draws)) if draws > 1 else 0.0
    return float(np.mean(values)), stderr
