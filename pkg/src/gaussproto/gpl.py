"""Gaussian prototype layer.

A mixture of anisotropic Gaussians over latent vectors in which every
component is a prototype permanently assigned to one class.  Mixture
weights come from a softmax over unconstrained logits, covariances from
Cholesky factors whose diagonal passes through exp (plus a small
isotropic floor), and the linear classification head is kept positive
through a softplus.  All constraints therefore survive arbitrary
gradient steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .errors import EmptyBatchError, NotFiniteError, ShapeMismatchError
from .numerics import Tensor

COV_FLOOR = 1e-4
LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class GplParams:
    """Trainable mixture parameters plus the fixed component->class map."""

    logits: Tensor       # (N,)
    means: Tensor        # (N, dim)
    chol_raw: Tensor     # (N, dim, dim); strict lower used as-is, diagonal through exp
    class_of: np.ndarray  # (N,) class labels in 1..C, fixed at construction

    def __post_init__(self):
        self.class_of = np.asarray(self.class_of, dtype=np.int64)
        self.class_of.setflags(write=False)
        if self.class_of.shape != (self.num_components,):
            raise ShapeMismatchError("class_of must assign every component a class")

    @property
    def num_components(self) -> int:
        return self.logits.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def num_classes(self) -> int:
        return int(self.class_of.max())

    def trainables(self) -> list[Tensor]:
        return [self.logits, self.means, self.chol_raw]

    @staticmethod
    def create(num_components: int, dim: int, class_of, rng: np.random.Generator,
               mean_scale: float = 1.0, dtype=np.float64) -> "GplParams":
        means = rng.normal(scale=mean_scale, size=(num_components, dim))
        raw = np.zeros((num_components, dim, dim))
        return GplParams(
            logits=Tensor(np.zeros(num_components, dtype=dtype), requires_grad=True),
            means=Tensor(means.astype(dtype), requires_grad=True),
            chol_raw=Tensor(raw.astype(dtype), requires_grad=True),
            class_of=class_of,
        )

    def log_prior_weights(self) -> Tensor:
        """log softmax(logits): the mixture's log prior over components."""
        return nm.sub(self.logits, nm.logsumexp(self.logits, axis=0))

    def component_scale_tril(self, k: int) -> Tensor:
        """Cholesky factor of the floored covariance of component k."""
        raw = nm.take(self.chol_raw, k)
        dim = self.dim
        eye = np.eye(dim, dtype=self.chol_raw.dtype)
        strict = nm.mul(raw, Tensor(np.tril(np.ones((dim, dim)), k=-1).astype(self.chol_raw.dtype)))
        idx = np.arange(dim)
        diag = nm.exp(nm.take(raw, (idx, idx)))
        ltilde = nm.add(strict, nm.mul(nm.reshape(diag, (dim, 1)), Tensor(eye)))
        cov = nm.add(nm.matmul(ltilde, nm.transpose(ltilde)),
                     Tensor(COV_FLOOR * eye))
        return nm.cholesky(cov)

    def covariances(self) -> np.ndarray:
        """Plain-array floored covariance matrices, one per component."""
        out = np.empty((self.num_components, self.dim, self.dim), dtype=np.float64)
        for k in range(self.num_components):
            L = self.component_scale_tril(k).data
            out[k] = L @ L.T
        return out


@dataclass
class LinearHead:
    """Positive linear read-out of the log-responsibilities; no bias."""

    raw_weights: Tensor  # (C, N); effective weights are softplus(raw)
    num_classes: int

    def trainables(self) -> list[Tensor]:
        return [self.raw_weights]

    def effective(self) -> Tensor:
        return nm.softplus(self.raw_weights)

    @staticmethod
    def create(num_classes: int, num_components: int, dtype=np.float64) -> "LinearHead":
        # softplus(0.5413) ~= 1.0: start close to an all-ones head
        raw = np.full((num_classes, num_components), 0.5413, dtype=dtype)
        return LinearHead(Tensor(raw, requires_grad=True), num_classes)

    @staticmethod
    def from_effective(matrix, dtype=np.float64) -> "LinearHead":
        """Build a head with the given effective weights (entries >= 0)."""
        eff = np.asarray(matrix, dtype=np.float64)
        if np.any(eff < 0):
            raise ValueError("effective head weights must be non-negative")
        # inverse softplus; exact zero is unreachable, park it far in the tail
        raw = np.where(eff > 1e-12, np.log(np.expm1(np.maximum(eff, 1e-12))), -40.0)
        return LinearHead(Tensor(raw.astype(dtype), requires_grad=True), eff.shape[0])


def _flatten_latent(z, dim: int) -> tuple[Tensor, tuple[int, ...]]:
    z = nm.as_tensor(z)
    if z.shape[-1] != dim:
        raise ShapeMismatchError(f"latent dim {z.shape[-1]} != mixture dim {dim}")
    lead = z.shape[:-1]
    return nm.reshape(z, (-1, dim)), lead


def component_log_joint(params: GplParams, z) -> Tensor:
    """log w_k + log N(z; mu_k, Sigma_k) for every component, shape (B, N)."""
    z2, _ = _flatten_latent(z, params.dim)
    B = z2.shape[0]
    if B == 0:
        raise EmptyBatchError("no latent vectors given")
    dim = params.dim
    log_w = params.log_prior_weights()
    cols = []
    for k in range(params.num_components):
        L = params.component_scale_tril(k)
        mu = nm.reshape(nm.take(params.means, k), (1, dim))
        diff = nm.transpose(nm.sub(z2, mu))            # (dim, B)
        u = nm.solve_triangular_lower(L, diff)         # L u = z - mu
        quad = nm.tsum(nm.mul(u, u), axis=0)           # Mahalanobis distances
        idx = np.arange(dim)
        half_logdet = nm.tsum(nm.log(nm.take(L, (idx, idx))))
        logdens = nm.sub(nm.mul(quad, -0.5),
                         nm.add(half_logdet, 0.5 * dim * LOG_2PI))
        cols.append(nm.add(logdens, nm.take(log_w, k)))
    return nm.stack(cols, axis=1)


def mixture_log_density(params: GplParams, z) -> Tensor:
    """log p(z) = log sum_k w_k N(z; mu_k, Sigma_k), shape (B,)."""
    return nm.logsumexp(component_log_joint(params, z), axis=1)


def log_responsibilities(params: GplParams, z) -> Tensor:
    """Normalized log p(K = k | Z = z); rows log-sum-exp to zero."""
    z2, lead = _flatten_latent(z, params.dim)
    joint = component_log_joint(params, z2)
    out = nm.sub(joint, nm.logsumexp(joint, axis=1, keepdims=True))
    if not np.all(np.isfinite(out.data)):
        raise NotFiniteError("log-responsibilities are not finite")
    if lead:
        out = nm.reshape(out, lead + (params.num_components,))
    return out


def gmm_nll(params: GplParams, z) -> Tensor:
    """Mean negative log-likelihood of the mixture over a batch."""
    joint = component_log_joint(params, z)
    nll = nm.neg(nm.mean(nm.logsumexp(joint, axis=1)))
    if not np.isfinite(nll.data):
        raise NotFiniteError("mixture NLL is not finite")
    return nll


def class_scores(head: LinearHead, logresp) -> Tensor:
    """c_y = sum_k a_{y,k} log p(K=k|z): linear, positive weights, no bias."""
    logresp = nm.as_tensor(logresp)
    lead = logresp.shape[:-1]
    flat = nm.reshape(logresp, (-1, logresp.shape[-1]))
    scores = nm.matmul(flat, nm.transpose(head.effective()))
    return nm.reshape(scores, lead + (head.num_classes,)) if lead else scores


def classify(head: LinearHead, params: GplParams, z) -> np.ndarray:
    """Predicted class labels (1-based); ties go to the smaller class index."""
    scores = class_scores(head, log_responsibilities(params, z))
    return np.argmax(scores.data, axis=-1).astype(np.int64) + 1


def classification_loss(head: LinearHead, logresp, labels) -> Tensor:
    """Mean crossentropy between softmax(class scores) and the labels."""
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.size == 0:
        raise EmptyBatchError("no labels given")
    if labels.min() < 1 or labels.max() > head.num_classes:
        raise ValueError(f"labels must lie in 1..{head.num_classes}")
    scores = class_scores(head, logresp)
    scores = nm.reshape(scores, (-1, head.num_classes))
    if scores.shape[0] != labels.size:
        raise ShapeMismatchError("one label per latent vector required")
    logp = nm.sub(scores, nm.logsumexp(scores, axis=1, keepdims=True))
    return nm.neg(nm.mean(nm.take_rows(logp, labels - 1)))


def l1_cross_class(head: LinearHead, class_of) -> Tensor:
    """Sum of effective weights linking a class to other classes' prototypes."""
    class_of = np.asarray(class_of, dtype=np.int64)
    classes = np.arange(1, head.num_classes + 1).reshape(-1, 1)
    mask = (class_of.reshape(1, -1) != classes).astype(head.raw_weights.dtype)
    return nm.tsum(nm.mul(head.effective(), Tensor(mask)))


# -- data-driven initialization ----------------------------------------------------


def _kmeans_pp_seeds(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = np.empty((k, x.shape[1]), dtype=x.dtype)
    centers[0] = x[rng.integers(len(x))]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[i] = x[rng.integers(len(x))]
            continue
        centers[i] = x[rng.choice(len(x), p=d2 / total)]
        d2 = np.minimum(d2, np.sum((x - centers[i]) ** 2, axis=1))
    return centers


def _lloyd(x: np.ndarray, centers: np.ndarray, max_iter: int = 100) -> tuple[np.ndarray, np.ndarray]:
    assign = np.zeros(len(x), dtype=np.int64)
    for _ in range(max_iter):
        d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_assign = np.argmin(d2, axis=1)
        for j in range(len(centers)):
            sel = new_assign == j
            if np.any(sel):
                centers[j] = x[sel].mean(axis=0)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
    return centers, assign


def init_from_data(z, num_components: int, class_of, labels=None,
                   rng: np.random.Generator | None = None,
                   dtype=np.float64) -> GplParams:
    """Seed a mixture from data: k-means++ means, isotropic covariances.

    With labels, each component is initialized from the samples of its
    assigned class; without, all samples are pooled.
    """
    x = np.asarray(z.data if isinstance(z, Tensor) else z, dtype=np.float64)
    x = x.reshape(-1, x.shape[-1])
    if len(x) == 0:
        raise EmptyBatchError("cannot initialize a mixture from an empty batch")
    if len(x) < num_components:
        raise EmptyBatchError(f"need at least {num_components} samples, got {len(x)}")
    rng = rng or np.random.default_rng(0)
    class_of = np.asarray(class_of, dtype=np.int64)
    dim = x.shape[1]

    means = np.zeros((num_components, dim))
    sq_err, count = 0.0, 0
    groups: list[np.ndarray]
    if labels is None:
        groups = [np.arange(num_components)]
        samples = [x]
    else:
        labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        groups = [np.flatnonzero(class_of == c) for c in np.unique(class_of)]
        samples = [x[labels == c] for c in np.unique(class_of)]
    for comp_idx, xs in zip(groups, samples):
        if len(xs) == 0:
            xs = x  # class unseen in this batch: fall back to the pool
        k = len(comp_idx)
        centers = _kmeans_pp_seeds(xs, k, rng)
        centers, assign = _lloyd(xs, centers)
        means[comp_idx] = centers
        sq_err += float(((xs - centers[assign]) ** 2).sum())
        count += xs.size
    sigma2 = max(sq_err / max(count, 1), 1e-6)

    raw = np.zeros((num_components, dim, dim))
    idx = np.arange(dim)
    raw[:, idx, idx] = 0.5 * np.log(max(sigma2 - COV_FLOOR, 1e-8))
    return GplParams(
        logits=Tensor(np.zeros(num_components, dtype=dtype), requires_grad=True),
        means=Tensor(means.astype(dtype), requires_grad=True),
        chol_raw=Tensor(raw.astype(dtype), requires_grad=True),
        class_of=class_of,
    )
