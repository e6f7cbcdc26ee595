"""One-dimensional Gaussian expectations of activations and the equivalence constants.

A pointwise nonlinearity sigma applied to a Gaussian projection behaves, at the
level of second-order statistics, like a linear map plus independent noise.
The three constants of that linear surrogate are

    kappa0 = E[sigma(z)]
    kappa1 = E[z sigma(z)] / r
    kappa_star = sqrt(E[sigma(z)^2] - kappa0^2 - r kappa1^2)

with z ~ N(0, r) and r the effective input variance. Closed forms are used for
identity, relu and sign; tanh goes through Gauss-Hermite quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import roots_hermite

from .errors import NumericalError, ParameterError

DEFAULT_ORDER = 128

_KINDS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "identity": lambda u: u,
    "relu": lambda u: np.maximum(u, 0.0),
    "tanh": np.tanh,
    "sign": np.sign,
}

_ODD_KINDS = frozenset({"identity", "tanh", "sign"})


@dataclass(frozen=True)
class Activation:
    """A pointwise activation, identified by name."""

    kind: str

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ParameterError(f"unknown activation {self.kind!r}; "
                                 f"choose from {sorted(_KINDS)}")

    def __call__(self, u):
        return _KINDS[self.kind](np.asarray(u, dtype=float))

    @property
    def is_odd(self) -> bool:
        return self.kind in _ODD_KINDS


@dataclass(frozen=True)
class Quadrature:
    """Physicists' Gauss-Hermite rule: integrates f against exp(-u^2)."""

    nodes: np.ndarray
    weights: np.ndarray
    order: int


@dataclass(frozen=True)
class KappaSet:
    """Gaussian-equivalence constants of an activation at effective variance r."""

    kappa0: float
    kappa1: float
    kappa_star: float
    r: float


def gauss_hermite(order: int) -> Quadrature:
    """Nodes and weights of the order-point Gauss-Hermite rule, nodes ascending.

    scipy's Golub-Welsch rule stays finite at high orders where the numpy
    recurrence overflows.
    """
    if not 2 <= order <= 512:
        raise ParameterError(f"quadrature order must be in [2, 512], got {order}")
    nodes, weights = roots_hermite(order)
    return Quadrature(nodes=nodes, weights=weights, order=order)


def expect_gaussian(f: Callable[[np.ndarray], np.ndarray], variance: float,
                    quad: Quadrature) -> float:
    """E[f(z)] for z ~ N(0, variance), by change of variables z = sqrt(2 var) u."""
    if variance <= 0:
        raise ParameterError(f"variance must be positive, got {variance}")
    z = np.sqrt(2.0 * variance) * quad.nodes
    try:
        values = np.asarray(f(z), dtype=float)
        if values.shape != z.shape:
            raise TypeError
    except (TypeError, ValueError):
        values = np.array([float(f(zi)) for zi in z])
    if not np.all(np.isfinite(values)):
        raise NumericalError("integrand is non-finite at a quadrature node")
    return float(np.sum(quad.weights * values) / np.sqrt(np.pi))


def _kappas_by_quadrature(activation: Activation, r: float, order: int):
    quad = gauss_hermite(order)
    k0 = expect_gaussian(activation, r, quad)
    k1 = expect_gaussian(lambda z: z * activation(z), r, quad) / r
    second = expect_gaussian(lambda z: activation(z) ** 2, r, quad)
    return k0, k1, second


def kappa_constants(activation: Activation, r: float,
                    order: int = DEFAULT_ORDER) -> KappaSet:
    """Equivalence constants at effective input variance r.

    Quadrature-evaluated activations refine the rule by doubling from the
    requested order until two consecutive evaluations agree to 1e-10 (or the
    512-point cap is hit); the returned constants come from the finest rule.
    kappa_star^2 values within -1e-12 of zero clamp to exactly zero; the
    identity activation sits on that boundary.
    """
    if r <= 0:
        raise ParameterError(f"effective variance r must be positive, got {r}")
    kind = activation.kind
    if kind == "identity":
        k0, k1, second = 0.0, 1.0, r
    elif kind == "relu":
        k0 = np.sqrt(r / (2.0 * np.pi))
        k1 = 0.5
        second = r / 2.0
    elif kind == "sign":
        k0 = 0.0
        k1 = np.sqrt(2.0 / (np.pi * r))
        second = 1.0
    else:
        k0, k1, second = _kappas_by_quadrature(activation, r, order)
        while order < 512:
            order = min(2 * order, 512)
            n0, n1, ns = _kappas_by_quadrature(activation, r, order)
            drift = max(abs(n0 - k0), abs(n1 - k1), abs(ns - second))
            k0, k1, second = n0, n1, ns
            if drift < 1e-10:
                break
    kstar_sq = second - k0 ** 2 - r * k1 ** 2
    if kstar_sq < -1e-12:
        raise NumericalError(
            f"kappa_star^2 = {kstar_sq} is negative beyond tolerance; "
            "quadrature is inconsistent")
    return KappaSet(kappa0=float(k0), kappa1=float(k1),
                    kappa_star=float(np.sqrt(max(kstar_sq, 0.0))), r=float(r))
