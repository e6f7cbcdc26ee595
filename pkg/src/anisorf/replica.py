"""Saddle-point equations of the anisotropic random-features model.

State lives in per-block overlaps (m_s, q_s, v_s) plus the weight-space pair
(q_w, v_w). One sweep alternates a loss-dependent step that produces conjugate
sources from the scalar statistics (rho, M, Q, V), and a task-independent step
that resolves those sources through the block resolvent. Asymptotic train and
test errors are closed-form functions of the converged statistics.

All conjugate variables are the zero-temperature rescaled ones: the estimator
is the regularized empirical-risk minimizer, and the bare regularization
strength lam appears wherever a finite-temperature treatment would carry an
inverse-temperature factor.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import expit, ndtr

from .blockspectra import BlockSpectrumSpec, block_resolvent_moments
from .errors import (DegenerateStudentError, ParameterError, SingularityError)
from .gaussmoments import DEFAULT_ORDER, Activation, KappaSet, gauss_hermite, kappa_constants

CHANNEL_KINDS = ("regression_gaussian", "classification_square",
                 "classification_logistic")


@dataclass(frozen=True)
class BlockModel:
    """Data-structure specification: per-block (fraction, input var, teacher var)."""

    blocks: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        blocks = tuple((float(p), float(sx), float(sb)) for p, sx, sb in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        phis = self.phis
        if abs(phis.sum() - 1.0) > 1e-12:
            raise ParameterError(f"block fractions must sum to 1, got {phis.sum()!r}")
        if np.any(phis <= 0) or np.any(phis > 1):
            raise ParameterError("block fractions must lie in (0, 1]")
        if np.any(self.sigma_x <= 0):
            raise ParameterError("input variances must be positive")
        if np.any(self.sigma_beta < 0):
            raise ParameterError("teacher variances must be nonnegative")
        if self.rho <= 0:
            raise ParameterError("the teacher is empty: sum phi sigma_beta sigma_x must be positive")

    @property
    def phis(self) -> np.ndarray:
        return np.array([b[0] for b in self.blocks])

    @property
    def sigma_x(self) -> np.ndarray:
        return np.array([b[1] for b in self.blocks])

    @property
    def sigma_beta(self) -> np.ndarray:
        return np.array([b[2] for b in self.blocks])

    @property
    def r(self) -> float:
        """Effective input variance sum phi_i sigma_x_i."""
        return float(np.sum(self.phis * self.sigma_x))

    @property
    def rho(self) -> float:
        """Teacher score variance sum phi_i sigma_beta_i sigma_x_i."""
        return float(np.sum(self.phis * self.sigma_beta * self.sigma_x))

    @classmethod
    def isotropic(cls, sigma_x: float = 1.0, sigma_beta: float = 1.0) -> "BlockModel":
        return cls(blocks=((1.0, sigma_x, sigma_beta),))

    @classmethod
    def strong_weak(cls, phi1: float, r_x: float, r_beta: float) -> "BlockModel":
        """Two blocks with saliency r_x and relevance r_beta, normalized so the
        total input variance and the teacher score variance are both one."""
        phi2 = 1.0 - phi1
        sx2 = 1.0 / (phi1 * r_x + phi2)
        sx1 = r_x * sx2
        sb2 = 1.0 / (phi1 * sx1 * r_beta + phi2 * sx2)
        sb1 = r_beta * sb2
        return cls(blocks=((phi1, sx1, sb1), (phi2, sx2, sb2)))


@dataclass(frozen=True)
class Channel:
    """Teacher/loss pairing. delta is the noise variance for regression and the
    label-flip probability for the two classification kinds."""

    kind: str
    delta: float = 0.0

    def __post_init__(self):
        if self.kind not in CHANNEL_KINDS:
            raise ParameterError(f"unknown channel {self.kind!r}; choose from {CHANNEL_KINDS}")
        if self.kind == "regression_gaussian":
            if self.delta < 0:
                raise ParameterError("regression noise variance must be nonnegative")
        elif not 0.0 <= self.delta <= 1.0:
            raise ParameterError("flip probability must lie in [0, 1]")

    @property
    def is_classification(self) -> bool:
        return self.kind != "regression_gaussian"

    @property
    def loss(self) -> str:
        return "logistic" if self.kind == "classification_logistic" else "square"


@dataclass(frozen=True)
class OrderParams:
    m_s: np.ndarray
    q_s: np.ndarray
    v_s: np.ndarray
    q_w: float
    v_w: float

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.m_s, self.q_s, self.v_s, [self.q_w, self.v_w]])

    @staticmethod
    def from_vector(vec: np.ndarray, n_blocks: int) -> "OrderParams":
        k = n_blocks
        return OrderParams(m_s=vec[:k].copy(), q_s=vec[k:2 * k].copy(),
                           v_s=vec[2 * k:3 * k].copy(),
                           q_w=float(vec[3 * k]), v_w=float(vec[3 * k + 1]))


@dataclass(frozen=True)
class HatParams:
    m_hat: np.ndarray
    q_hat: np.ndarray
    v_hat: np.ndarray
    q_hat_w: float
    v_hat_w: float


@dataclass(frozen=True)
class ScalarStats:
    rho: float
    m: float
    q: float
    v: float


@dataclass(frozen=True)
class SaddleSolution:
    order: OrderParams
    hats: HatParams
    stats: ScalarStats
    eps_g: float
    eps_t: float
    iterations: int
    residual: float
    converged: bool


@lru_cache(maxsize=8)
def _unit_gaussian_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    quad = gauss_hermite(order)
    return np.sqrt(2.0) * quad.nodes, quad.weights / np.sqrt(np.pi)


def scalar_stats(order: OrderParams, model: BlockModel, kappas: KappaSet) -> ScalarStats:
    sx = model.sigma_x
    k1, ks = kappas.kappa1, kappas.kappa_star
    return ScalarStats(
        rho=model.rho,
        m=float(k1 * np.sum(sx * order.m_s)),
        q=float(k1 ** 2 * np.sum(sx * order.q_s) + ks ** 2 * order.q_w),
        v=float(k1 ** 2 * np.sum(sx * order.v_s) + ks ** 2 * order.v_w),
    )


def test_error(stats: ScalarStats, channel: Channel) -> float:
    if not channel.is_classification:
        return 0.5 * (stats.rho + stats.q - 2.0 * stats.m)
    if stats.q <= 0:
        raise DegenerateStudentError("classification error is undefined at Q = 0")
    arg = stats.m / np.sqrt(stats.rho * stats.q)
    if abs(arg) > 1.0 + 1e-8:
        warnings.warn(f"overlap ratio {arg} exceeds 1 beyond tolerance; clamping",
                      RuntimeWarning, stacklevel=2)
    return float(np.arccos(np.clip(arg, -1.0, 1.0)) / np.pi)


def proximal(y: float, omega, v: float, loss: str):
    """argmin_x (x - omega)^2 / (2 v) + loss(y, x); accepts scalar or array omega."""
    if v < 0:
        raise ParameterError(f"proximal width v must be nonnegative, got {v}")
    scalar = np.isscalar(omega)
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if v == 0.0:
        out = omega
    elif loss == "square":
        out = (omega + v * y) / (1.0 + v)
    elif loss == "logistic":
        out = _prox_logistic(float(y), omega, v)
    else:
        raise ParameterError(f"unknown loss {loss!r}")
    return float(out[0]) if scalar else out


def _prox_logistic(y: float, omega: np.ndarray, v: float) -> np.ndarray:
    # solved in the shift d = x - omega, which lies in [0, v] for y = +1 and
    # [-v, 0] for y = -1: bisection is unconditionally safe there, and a few
    # Newton steps polish the root to machine precision even for tiny v
    lo = np.where(y > 0, 0.0, -v) * np.ones_like(omega)
    hi = np.where(y > 0, v, 0.0) * np.ones_like(omega)
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        below = mid / v - y * expit(-y * (omega + mid)) < 0
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    d = 0.5 * (lo + hi)
    for _ in range(4):
        s = expit(-y * (omega + d))
        d = d - (d / v - y * s) / (1.0 / v + s * (1.0 - s))
    return omega + d


def teacher_partition(y: float, omega, v0: float, channel: Channel):
    """Probability weight the teacher assigns to label y at score mean omega."""
    if v0 <= 0:
        raise ParameterError(f"teacher score variance v0 must be positive, got {v0}")
    omega = np.asarray(omega, dtype=float)
    if channel.kind == "regression_gaussian":
        var = v0 + channel.delta
        out = np.exp(-0.5 * (y - omega) ** 2 / var) / np.sqrt(2.0 * np.pi * var)
    else:
        d = channel.delta
        out = d + (1.0 - 2.0 * d) * ndtr(y * omega / np.sqrt(v0))
    return float(out) if out.ndim == 0 else out


def _teacher_partition_slope(y: float, omega: np.ndarray, v0: float,
                             channel: Channel) -> np.ndarray:
    """d/d omega of teacher_partition (flip channels only)."""
    d = channel.delta
    pdf = np.exp(-0.5 * (omega / np.sqrt(v0)) ** 2) / np.sqrt(2.0 * np.pi)
    return (1.0 - 2.0 * d) * y * pdf / np.sqrt(v0)


def _logistic_channel(stats: ScalarStats, channel: Channel,
                      order: int = DEFAULT_ORDER):
    """Quadrature evaluation of (i_v, i_q, i_m, train_loss) for the logistic loss."""
    rho, m, q, v = stats.rho, stats.m, stats.q, stats.v
    if q <= 0:
        raise DegenerateStudentError("channel integrals need Q > 0")
    xi, w = _unit_gaussian_rule(order)
    v0 = max(rho - m * m / q, 1e-14)
    om0 = m / np.sqrt(q) * xi
    om1 = np.sqrt(q) * xi
    i_v = i_q = i_m = loss = 0.0
    for y in (1.0, -1.0):
        z0 = teacher_partition(y, om0, v0, channel)
        dz0 = _teacher_partition_slope(y, om0, v0, channel)
        eta = _prox_logistic(y, om1, v)
        s = expit(-y * eta)
        score = y * s                       # (eta - om1)/v by prox optimality
        curv = s * (1.0 - s)
        i_v += float(np.sum(w * z0 * curv / (1.0 + v * curv)))
        i_q += float(np.sum(w * z0 * score ** 2))
        i_m += float(np.sum(w * dz0 * score))
        loss += float(np.sum(w * z0 * np.logaddexp(0.0, -y * eta)))
    return i_v, i_q, i_m, loss


def _channel_integrals(stats: ScalarStats, channel: Channel,
                       order: int = DEFAULT_ORDER) -> tuple[float, float, float]:
    rho, m, q, v = stats.rho, stats.m, stats.q, stats.v
    if v <= -1.0:
        raise ParameterError(f"composite variance V must exceed -1, got {v}")
    d = channel.delta
    if channel.kind == "regression_gaussian":
        return (1.0 / (1.0 + v),
                (rho + d + q - 2.0 * m) / (1.0 + v) ** 2,
                1.0 / (1.0 + v))
    if channel.kind == "classification_square":
        coef = (1.0 - 2.0 * d) * np.sqrt(2.0 / np.pi) / np.sqrt(rho)
        return (1.0 / (1.0 + v),
                (1.0 + q - 2.0 * coef * m) / (1.0 + v) ** 2,
                coef / (1.0 + v))
    i_v, i_q, i_m, _ = _logistic_channel(stats, channel, order)
    return i_v, i_q, i_m


def train_error(stats: ScalarStats, channel: Channel,
                order: int = DEFAULT_ORDER) -> float:
    if stats.v <= -1.0:
        raise ParameterError(f"composite variance V must exceed -1, got {stats.v}")
    d = channel.delta
    denom = (1.0 + stats.v) ** 2
    if channel.kind == "regression_gaussian":
        eps_g = 0.5 * (stats.rho + stats.q - 2.0 * stats.m)
        return (eps_g + d / 2.0) / denom
    if channel.kind == "classification_square":
        # sum over y in {-1, +1}: E[y^2] = 1 and E[y omega_1] carries the
        # sign-teacher overlap sqrt(2/pi) M / sqrt(rho), not M itself
        coef = (1.0 - 2.0 * d) * np.sqrt(2.0 / np.pi) / np.sqrt(stats.rho)
        return (1.0 + stats.q - 2.0 * coef * stats.m) / (2.0 * denom)
    return _logistic_channel(stats, channel, order)[3]


def energetic_update(stats: ScalarStats, channel: Channel, alpha: float,
                     gamma: float, model: BlockModel, kappas: KappaSet,
                     order: int = DEFAULT_ORDER) -> HatParams:
    """Loss-dependent conjugate sources from the current scalar statistics."""
    if alpha <= 0 or gamma <= 0:
        raise ParameterError("alpha and gamma must be positive")
    i_v, i_q, i_m = _channel_integrals(stats, channel, order)
    sx = model.sigma_x
    k1, ks = kappas.kappa1, kappas.kappa_star
    ratio = alpha / gamma
    return HatParams(
        m_hat=sx * k1 * ratio * i_m,
        q_hat=sx * k1 ** 2 * ratio * i_q,
        v_hat=sx * k1 ** 2 * ratio * i_v,
        q_hat_w=alpha * ks ** 2 * i_q,
        v_hat_w=alpha * ks ** 2 * i_v,
    )


def entropic_update(hats: HatParams, model: BlockModel, lam: float,
                    gamma: float) -> OrderParams:
    """Task-independent overlap updates, resolved through the block resolvent."""
    v_hat = np.asarray(hats.v_hat, dtype=float)
    if np.any(v_hat <= 0):
        raise SingularityError("every v_hat entry must be positive")
    c = lam + hats.v_hat_w
    if c <= 0:
        raise SingularityError(
            f"effective ridge lam + v_hat_w = {c} is not positive; "
            "the regularized problem lost strong convexity")
    phis, sb = model.phis, model.sigma_beta
    spec = BlockSpectrumSpec(phis=tuple(phis), vhats=tuple(v_hat), gamma=gamma)
    mom = block_resolvent_moments(spec, c)
    t, u, cross = mom.t, mom.u, mom.cross
    chat = sb * np.asarray(hats.m_hat) ** 2 + np.asarray(hats.q_hat)
    depletion = phis - c * t
    m_s = sb * np.asarray(hats.m_hat) * depletion / v_hat
    q_s = (chat / v_hat ** 2) * (phis - 2.0 * c * t) \
        + (c ** 2 / v_hat) * (cross @ (chat / v_hat)) \
        + (hats.q_hat_w / v_hat) * (t - c * u)
    v_s = depletion / v_hat
    v_w = (1.0 - gamma) / c + gamma * float(np.sum(t))
    q_w = hats.q_hat_w * ((1.0 - gamma) / c ** 2 + gamma * float(np.sum(u))) \
        + gamma * float(np.sum((chat / v_hat) * (t - c * u)))
    return OrderParams(m_s=m_s, q_s=q_s, v_s=v_s, q_w=q_w, v_w=v_w)


def default_init(model: BlockModel) -> OrderParams:
    phis, sb = model.phis, model.sigma_beta
    return OrderParams(m_s=0.1 * np.sqrt(phis * sb), q_s=phis.copy(),
                       v_s=np.ones_like(phis), q_w=1.0, v_w=1.0)


def solve_saddle_point(model: BlockModel, channel: Channel,
                       activation: Activation, alpha: float, gamma: float,
                       lam: float, damping: float = 0.5, tol: float = 1e-9,
                       max_iter: int = 10000,
                       init: OrderParams | None = None,
                       order: int = DEFAULT_ORDER) -> SaddleSolution:
    """Damped alternation of the energetic and entropic updates.

    alpha = N/P and gamma = D/P. Non-convergence is reported through the
    converged flag, never raised; singular configurations (for instance a
    negative lam driving lam + v_hat_w through zero) do raise.
    """
    if not 0.0 < damping <= 1.0:
        raise ParameterError("damping must lie in (0, 1]")
    if tol <= 0 or max_iter < 1:
        raise ParameterError("tol must be positive and max_iter at least 1")
    kappas = kappa_constants(activation, model.r, order=order)
    current = init if init is not None else default_init(model)
    n_blocks = len(model.blocks)
    damp = damping
    residual = np.inf
    prev_residual = np.inf
    alternations = 0
    prev_delta_sign = 0
    converged = False
    hats = None
    iterations = 0
    for iterations in range(1, max_iter + 1):
        stats = scalar_stats(current, model, kappas)
        hats = energetic_update(stats, channel, alpha, gamma, model, kappas, order)
        proposal = entropic_update(hats, model, lam, gamma)
        old_vec = current.as_vector()
        new_vec = (1.0 - damp) * old_vec + damp * proposal.as_vector()
        residual = float(np.max(np.abs(new_vec - old_vec)))
        current = OrderParams.from_vector(new_vec, n_blocks)
        if residual < tol:
            converged = True
            break
        delta_sign = int(np.sign(residual - prev_residual))
        if delta_sign != 0 and delta_sign == -prev_delta_sign:
            alternations += 1
            if alternations >= 3:
                damp = max(0.05, damp * 0.5)
                alternations = 0
        else:
            alternations = 0
        prev_delta_sign = delta_sign
        prev_residual = residual
    stats = scalar_stats(current, model, kappas)
    if converged:
        slack = current.m_s ** 2 - current.q_s * model.phis * model.sigma_beta * (1 + 1e-6)
        if np.any(slack > 0):
            warnings.warn("converged overlaps violate the Cauchy-Schwarz bound",
                          RuntimeWarning, stacklevel=2)
    return SaddleSolution(
        order=current,
        hats=hats,
        stats=stats,
        eps_g=test_error(stats, channel),
        eps_t=train_error(stats, channel, order),
        iterations=iterations,
        residual=residual,
        converged=converged,
    )
