"""Dirichlet-family worker priors over confusion matrices.

Three families are supported:

* ``dirichlet`` -- each row ``k`` of the confusion matrix is drawn from
  ``Dir(alpha[k])`` independently (full K x K concentration matrix).
* ``onecoin`` -- a single correctness probability ``p ~ Beta(a1, a2)``;
  ``theta[k, k] = p`` and every off-diagonal entry is ``(1 - p) / (K - 1)``.
* ``twocoin`` -- one ``p_k ~ Beta(a1, a2)`` per row with the same spreading.

All count arguments are K x K matrices ``gamma[k1, k2]`` (possibly
fractional) counting answers ``k2`` on tasks of latent class ``k1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import betaln, digamma, gammaln

FAMILIES = ("dirichlet", "onecoin", "twocoin")


@dataclass(frozen=True)
class WorkerPrior:
    family: str
    alpha: np.ndarray

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown prior family {self.family!r}")
        alpha = np.array(self.alpha, dtype=np.float64)
        if self.family == "dirichlet":
            if alpha.ndim != 2 or alpha.shape[0] != alpha.shape[1]:
                raise ValueError("dirichlet prior needs a square K x K concentration matrix")
        elif alpha.shape != (2,):
            raise ValueError(f"{self.family} prior needs two concentrations (a1, a2)")
        if not np.all(np.isfinite(alpha)) or np.any(alpha <= 0):
            raise ValueError("prior concentrations must be strictly positive")
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def one_coin(cls, a1: float, a2: float) -> "WorkerPrior":
        return cls("onecoin", np.array([a1, a2]))

    @classmethod
    def two_coin(cls, a1: float, a2: float) -> "WorkerPrior":
        return cls("twocoin", np.array([a1, a2]))

    @classmethod
    def dirichlet(cls, alpha) -> "WorkerPrior":
        return cls("dirichlet", np.asarray(alpha))

    @classmethod
    def diagonal_dirichlet(cls, num_classes: int, diag: float, off: float) -> "WorkerPrior":
        alpha = np.full((num_classes, num_classes), float(off))
        np.fill_diagonal(alpha, diag)
        return cls("dirichlet", alpha)

    @property
    def num_classes(self):
        """K for the full family, ``None`` for the coin families (any K)."""
        return self.alpha.shape[0] if self.family == "dirichlet" else None

    def check_classes(self, num_classes: int) -> None:
        if self.family == "dirichlet" and self.alpha.shape[0] != num_classes:
            raise ValueError(f"prior is {self.alpha.shape[0]}-class, data has K={num_classes}")

    def __str__(self):
        if self.family == "dirichlet":
            return "dirichlet:" + ";".join(",".join(repr(float(v)) for v in row) for row in self.alpha)
        return f"{self.family}:{float(self.alpha[0])!r},{float(self.alpha[1])!r}"


def parse_prior(text: str) -> WorkerPrior:
    """Parse ``onecoin:2,1``, ``twocoin:2,1``, ``diag:K,8,1`` or ``dirichlet:a,b;c,d``."""
    family, _, rest = text.strip().partition(":")
    family = family.strip().lower()
    try:
        if family in ("onecoin", "twocoin"):
            a1, a2 = (float(v) for v in rest.split(","))
            return WorkerPrior(family, np.array([a1, a2]))
        if family == "diag":
            k, diag, off = rest.split(",")
            return WorkerPrior.diagonal_dirichlet(int(k), float(diag), float(off))
        if family == "dirichlet":
            rows = [[float(v) for v in row.split(",")] for row in rest.split(";")]
            return WorkerPrior.dirichlet(rows)
    except ValueError as exc:
        raise ValueError(f"cannot parse prior {text!r}: {exc}") from None
    raise ValueError(f"cannot parse prior {text!r}")


def dirichlet_rows(prior: WorkerPrior, num_classes: int) -> np.ndarray:
    """Per-row Dirichlet concentrations induced by ``prior``.

    Coin priors map to diagonal ``a1`` and off-diagonal ``a2 / (K - 1)``,
    which keeps the prior mean of every row.
    """
    prior.check_classes(num_classes)
    if prior.family == "dirichlet":
        return np.array(prior.alpha)
    a1, a2 = prior.alpha
    if num_classes == 1:
        return np.array([[a1]])
    alpha = np.full((num_classes, num_classes), a2 / (num_classes - 1))
    np.fill_diagonal(alpha, a1)
    return alpha


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _spread(p: np.ndarray, num_classes: int) -> np.ndarray:
    # p has shape (..., K) of per-row correctness; returns (..., K, K)
    off = (1.0 - p) / max(num_classes - 1, 1)
    theta = np.repeat(off[..., :, None], num_classes, axis=-1)
    idx = np.arange(num_classes)
    theta[..., idx, idx] = p
    return theta


def sample_confusions(prior: WorkerPrior, num_classes: int, size: int, seed=None) -> np.ndarray:
    """Draw ``size`` confusion matrices, shape (size, K, K)."""
    prior.check_classes(num_classes)
    rng = _rng(seed)
    K = num_classes
    if prior.family == "dirichlet":
        out = np.empty((size, K, K))
        for k in range(K):
            out[:, k, :] = rng.dirichlet(prior.alpha[k], size=size)
        return out
    a1, a2 = prior.alpha
    if prior.family == "onecoin":
        p = np.repeat(rng.beta(a1, a2, size=size)[:, None], K, axis=1)
    else:
        p = rng.beta(a1, a2, size=(size, K))
    return _spread(p, K)


def sample_confusion(prior: WorkerPrior, num_classes: int, seed=None) -> np.ndarray:
    return sample_confusions(prior, num_classes, 1, seed)[0]


def _log_off_diagonal(num_classes: int) -> float:
    return float(np.log(num_classes - 1)) if num_classes > 1 else 0.0


def log_marginal(prior: WorkerPrior, gamma) -> np.ndarray:
    """log of the integral of p(theta | prior) * prod theta^gamma over theta.

    ``gamma`` may carry leading batch dimensions: shape (..., K, K).
    Fractional counts are handled through the log-Gamma continuation.
    """
    gamma = np.asarray(gamma, dtype=np.float64)
    if gamma.ndim < 2 or gamma.shape[-1] != gamma.shape[-2]:
        raise ValueError("counts must have trailing shape (K, K)")
    if np.any(gamma < 0):
        raise ValueError("counts must be non-negative")
    K = gamma.shape[-1]
    prior.check_classes(K)
    if prior.family == "dirichlet":
        alpha = prior.alpha
        post = alpha + gamma
        log_b_post = gammaln(post).sum(-1) - gammaln(post.sum(-1))
        log_b_prior = gammaln(alpha).sum(-1) - gammaln(alpha.sum(-1))
        return (log_b_post - log_b_prior).sum(-1)
    a1, a2 = prior.alpha
    diag = np.diagonal(gamma, axis1=-2, axis2=-1)
    wrong = gamma.sum(-1) - diag
    lk = _log_off_diagonal(K)
    if prior.family == "onecoin":
        c, w = diag.sum(-1), wrong.sum(-1)
        return betaln(a1 + c, a2 + w) - betaln(a1, a2) - w * lk
    return (betaln(a1 + diag, a2 + wrong) - betaln(a1, a2) - wrong * lk).sum(-1)


def _check_positive(x: np.ndarray, name: str) -> None:
    if np.any(~(x > 0)):
        raise ValueError(f"{name} must be strictly positive")


def expected_log_theta(beta) -> np.ndarray:
    """E[log theta] under row-wise Dirichlet(beta); works on (..., K, K) or rows."""
    beta = np.asarray(beta, dtype=np.float64)
    _check_positive(beta, "Dirichlet parameters")
    return digamma(beta) - digamma(beta.sum(-1, keepdims=True))


def kl_dirichlet(beta, alpha) -> np.ndarray:
    """KL(Dir(beta) || Dir(alpha)) along the last axis."""
    beta = np.asarray(beta, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    if beta.shape[-1] != alpha.shape[-1]:
        raise ValueError(f"dimension mismatch: {beta.shape[-1]} vs {alpha.shape[-1]}")
    _check_positive(beta, "beta")
    _check_positive(alpha, "alpha")
    b0 = beta.sum(-1)
    a0 = alpha.sum(-1)
    kl = (gammaln(b0) - gammaln(beta).sum(-1) - gammaln(a0) + gammaln(alpha).sum(-1)
          + ((beta - alpha) * (digamma(beta) - digamma(b0)[..., None])).sum(-1))
    return np.maximum(kl, 0.0)


def posterior_mean_diagonal(beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=np.float64)
    _check_positive(beta, "beta")
    return np.diagonal(beta, axis1=-2, axis2=-1) / beta.sum(-1)


PriorLike = Union[WorkerPrior, str]


def as_prior(prior: PriorLike) -> WorkerPrior:
    return prior if isinstance(prior, WorkerPrior) else parse_prior(prior)
