"""Finite-size simulator for the strong-and-weak features model.

Samples block-Gaussian data, trains random-feature students with ridge or
logistic objectives, and measures the empirical errors and overlaps that the
asymptotic theory predicts. Everything is deterministic in an integer seed:
independent streams are derived per purpose so that e.g. regenerating a
dataset never perturbs the feature matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import expit

from .blockspectra import block_sizes
from .errors import ConvergenceError, ParameterError, SingularityError
from .gaussmoments import Activation, kappa_constants
from .replica import BlockModel, Channel, OrderParams

_STREAM = {"inputs": 1, "teacher": 2, "noise": 3, "features": 4,
           "corrupt": 5, "probe": 6}


def _rng(seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    return np.random.default_rng([int(seed), _STREAM[purpose], int(index)])


def _block_scales(model: BlockModel, d: int, which: str) -> np.ndarray:
    sizes = block_sizes(model.phis, d)
    var = model.sigma_x if which == "x" else model.sigma_beta
    return np.concatenate([np.full(s, np.sqrt(v)) for s, v in zip(sizes, var)])


@dataclass(frozen=True)
class SyntheticDataset:
    inputs: np.ndarray          # N x D
    teacher: np.ndarray         # D
    labels: np.ndarray          # N
    model: BlockModel
    channel: Channel
    seed: int

    @property
    def clean_scores(self) -> np.ndarray:
        d = self.inputs.shape[1]
        return self.inputs @ self.teacher / np.sqrt(d)


@dataclass(frozen=True)
class FeatureMap:
    f_matrix: np.ndarray        # P x D
    activation: Activation
    seed: int

    def features(self, inputs: np.ndarray) -> np.ndarray:
        """z = activation(x F^T / sqrt(D)) / sqrt(P); the 1/sqrt(P) is part of the map."""
        p, d = self.f_matrix.shape
        return self.activation(inputs @ self.f_matrix.T / np.sqrt(d)) / np.sqrt(p)


@dataclass(frozen=True)
class TrainedStudent:
    weights: np.ndarray
    lam: float
    loss: str                   # "square" or "logistic"
    iterations: int
    grad_norm: float


def sample_dataset(model: BlockModel, channel: Channel, n: int, d: int,
                   seed: int, teacher: np.ndarray | None = None) -> SyntheticDataset:
    """Fresh inputs and labels; the teacher is resampled unless one is passed in
    (test sets must share the training teacher)."""
    if n < 1:
        raise ParameterError("need at least one sample")
    sx = _block_scales(model, d, "x")
    sb = _block_scales(model, d, "beta")
    inputs = sx * _rng(seed, "inputs").standard_normal((n, d))
    if teacher is None:
        teacher = sb * _rng(seed, "teacher").standard_normal(d)
    elif teacher.shape != (d,):
        raise ParameterError(f"teacher must have shape ({d},), got {teacher.shape}")
    scores = inputs @ teacher / np.sqrt(d)
    noise_rng = _rng(seed, "noise")
    if channel.kind == "regression_gaussian":
        labels = scores + np.sqrt(channel.delta) * noise_rng.standard_normal(n)
    else:
        flips = np.where(noise_rng.random(n) < channel.delta, -1.0, 1.0)
        labels = flips * np.sign(scores)
    return SyntheticDataset(inputs=inputs, teacher=teacher, labels=labels,
                            model=model, channel=channel, seed=seed)


def sample_feature_map(p: int, d: int, activation: Activation,
                       seed: int) -> FeatureMap:
    if p < 1 or d < 1:
        raise ParameterError("feature count and dimension must be positive")
    f = _rng(seed, "features").standard_normal((p, d))
    return FeatureMap(f_matrix=f, activation=activation, seed=seed)


def ridge_fit(features: np.ndarray, labels: np.ndarray, lam: float) -> TrainedStudent:
    """Exact minimizer of (1/2) sum (y - w.z)^2 + (lam/2) |w|^2."""
    z = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    n, p = z.shape
    try:
        if lam > 0 and p > n:
            w = z.T @ cho_solve(cho_factor(z @ z.T + lam * np.eye(n)), y)
        elif lam > 0:
            w = cho_solve(cho_factor(z.T @ z + lam * np.eye(p)), z.T @ y)
        else:
            w = np.linalg.solve(z.T @ z + lam * np.eye(p), z.T @ y)
    except np.linalg.LinAlgError as exc:
        raise SingularityError(f"normal equations are singular: {exc}") from exc
    grad = z.T @ (z @ w - y) + lam * w
    scale = max(float(np.linalg.norm(z.T @ y)), 1.0)
    if not np.all(np.isfinite(w)) or float(np.linalg.norm(grad)) > 1e-9 * scale:
        raise SingularityError("normal-equation residual is too large; "
                               f"lam={lam} leaves the system near-singular")
    return TrainedStudent(weights=w, lam=lam, loss="square", iterations=1,
                          grad_norm=float(np.linalg.norm(grad, np.inf)))


def _logistic_objective(u: np.ndarray, y: np.ndarray) -> float:
    return float(np.sum(np.logaddexp(0.0, -y * u)))


def logistic_fit(features: np.ndarray, labels: np.ndarray, lam: float,
                 tol: float = 1e-8, max_iter: int = 500) -> TrainedStudent:
    """Damped Newton with backtracking for sum log(1+e^{-y w.z}) + (lam/2)|w|^2.

    Runs in whichever of weight space / sample space is smaller; the optimality
    certificate is always the weight-space gradient.
    """
    if lam <= 0:
        raise ParameterError("logistic fit needs lam > 0 for a unique finite minimizer")
    if tol <= 0:
        raise ParameterError("tol must be positive")
    z = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    n, p = z.shape
    dual = p > n
    kernel = z @ z.T if dual else None
    x = np.zeros(n if dual else p)
    grad_norm = np.inf
    for it in range(1, max_iter + 1):
        u = kernel @ x if dual else z @ x
        s = expit(-y * u)
        if dual:
            resid = -(y * s) + lam * x
            grad = z.T @ resid
        else:
            grad = -z.T @ (y * s) + lam * x
        grad_norm = float(np.linalg.norm(grad, np.inf))
        if grad_norm <= tol:
            w = z.T @ x if dual else x
            return TrainedStudent(weights=w, lam=lam, loss="logistic",
                                  iterations=it, grad_norm=grad_norm)
        curv = s * (1.0 - s)
        try:
            if dual:
                step = np.linalg.solve(curv[:, None] * kernel + lam * np.eye(n), resid)
            else:
                step = np.linalg.solve(z.T @ (curv[:, None] * z) + lam * np.eye(p), grad)
        except np.linalg.LinAlgError:
            step = (grad if not dual else resid) / (0.25 + lam)   # gradient fallback
        obj = _logistic_objective(u, y) + 0.5 * lam * float(x @ (kernel @ x if dual else x))
        t = 1.0
        while t > 1e-10:
            cand = x - t * step
            u2 = kernel @ cand if dual else z @ cand
            o2 = _logistic_objective(u2, y) + 0.5 * lam * float(cand @ (kernel @ cand if dual else cand))
            if o2 <= obj:
                break
            t *= 0.5
        x = x - t * step
    raise ConvergenceError(f"logistic fit stalled at grad norm {grad_norm}",
                           residual=grad_norm, iterations=max_iter)


def empirical_errors(student: TrainedStudent, fmap: FeatureMap,
                     train: SyntheticDataset, test: SyntheticDataset,
                     corrupted_test: bool = False) -> tuple[float, float]:
    """(train loss without regularizer, generalization error).

    Test-side classification error is measured against the clean teacher sign
    (and regression against the clean teacher score) unless corrupted_test.
    The test set must share the training teacher.
    """
    if not np.array_equal(train.teacher, test.teacher):
        raise ParameterError("test set was generated by a different teacher; "
                             "pass teacher=train.teacher to sample_dataset")
    w = student.weights
    z_train = fmap.features(train.inputs)
    u = z_train @ w
    if student.loss == "square":
        eps_t = 0.5 * float(np.mean((train.labels - u) ** 2))
    else:
        eps_t = float(np.mean(np.logaddexp(0.0, -train.labels * u)))
    z_test = fmap.features(test.inputs)
    pred = z_test @ w
    if train.channel.is_classification:
        reference = test.labels if corrupted_test else np.sign(test.clean_scores)
        decision = np.where(pred >= 0, 1.0, -1.0)      # zero scores break to +1
        eps_g = float(np.mean(decision != reference))
    else:
        target = test.labels if corrupted_test else test.clean_scores
        eps_g = 0.5 * float(np.mean((pred - target) ** 2))
    return eps_t, eps_g


def empirical_order_params(student: TrainedStudent, fmap: FeatureMap,
                           teacher: np.ndarray, model: BlockModel) -> OrderParams:
    p, d = fmap.f_matrix.shape
    s = fmap.f_matrix.T @ student.weights / np.sqrt(p)
    sizes = block_sizes(model.phis, d)
    m_s, q_s = [], []
    start = 0
    for size in sizes:
        sl = slice(start, start + size)
        m_s.append(float(s[sl] @ teacher[sl] / d))
        q_s.append(float(s[sl] @ s[sl] / d))
        start += size
    return OrderParams(m_s=np.array(m_s), q_s=np.array(q_s),
                       v_s=np.zeros(len(sizes)),
                       q_w=float(student.weights @ student.weights / p), v_w=0.0)


def get_covariance_check(model: BlockModel, activation: Activation, d: int,
                         pairs: int, samples: int, seed: int,
                         batch: int = 4096, include_diagonal: bool = False) -> float:
    """Largest |z-score| of empirical feature-pair covariances against the
    linear-plus-noise surrogate prediction, over `pairs` distinct feature pairs.

    Feature rows are normalized to |F_mu|^2 = d. Diagonal self-moments are
    excluded by default: their surrogate prediction linearizes the activation
    second moment around the reference variance, which leaves an O(1/sqrt(d))
    bias in block-anisotropic settings that any large-sample z-test resolves.
    """
    if d < 500:
        raise ParameterError("the covariance check needs d >= 500")
    n_feat = 2
    while n_feat * (n_feat - 1) // 2 < pairs:
        n_feat += 1
    f = _rng(seed, "features").standard_normal((n_feat, d))
    f *= np.sqrt(d) / np.linalg.norm(f, axis=1, keepdims=True)
    sx_scale = _block_scales(model, d, "x")

    kset = kappa_constants(activation, model.r)
    sizes = block_sizes(model.phis, d)
    pred = np.full((n_feat, n_feat), kset.kappa0 ** 2)
    start = 0
    for size, sx in zip(sizes, model.sigma_x):
        sl = slice(start, start + size)
        pred += kset.kappa1 ** 2 * sx * (f[:, sl] @ f[:, sl].T) / d
        start += size
    pred += kset.kappa_star ** 2 * np.eye(n_feat)

    s1 = np.zeros((n_feat, n_feat))
    s2 = np.zeros((n_feat, n_feat))
    done = 0
    probe = _rng(seed, "probe")
    while done < samples:
        m = min(batch, samples - done)
        x = sx_scale * probe.standard_normal((m, d))
        u = activation(x @ f.T / np.sqrt(d))
        prod = u[:, :, None] * u[:, None, :]
        s1 += prod.sum(axis=0)
        s2 += (prod ** 2).sum(axis=0)
        done += m
    mean = s1 / samples
    var = (s2 / samples - mean ** 2) / samples
    idx_i, idx_j = np.triu_indices(n_feat)
    keep = []
    off = 0
    for i, j in zip(idx_i, idx_j):
        if i == j:
            if include_diagonal:
                keep.append((i, j))
        elif off < pairs:
            keep.append((i, j))
            off += 1
    zmax = 0.0
    for i, j in keep:
        z = (mean[i, j] - pred[i, j]) / np.sqrt(var[i, j])
        zmax = max(zmax, abs(float(z)))
    return zmax
