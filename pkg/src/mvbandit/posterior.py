"""Per-arm Bayesian state.

For the contextual policies each arm carries ridge accumulators (A, b) and
the gamma shape/rate of the joint normal-gamma posterior over (mean vector,
reward precision), updated incrementally per observation. The context-free
baseline keeps a scalar normal-gamma state per arm. All updates are value
semantics: they return new states and never mutate their inputs.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import ConsistencyError, InvalidObservation, NoObservations

# Refresh A_inv from A by a fresh factorization this often to bound
# Sherman-Morrison rounding drift over long runs.
REINVERT_EVERY = 256

_NEG_RATE_TOL = 1e-12


@dataclass
class ArmPosterior:
    """Sufficient statistics for one arm of the contextual model.

    A is the identity plus the sum of context outer products over the arm's
    pulls, b the sum of reward-weighted contexts; shape and rate parameterize
    the gamma posterior of the reward precision (shape = half the pull count,
    rate = half the ridge residual sum of squares). A_inv, its lower Cholesky
    factor, and mu_hat = A_inv @ b are maintained alongside as caches.
    """

    A: np.ndarray
    A_inv: np.ndarray
    b: np.ndarray
    shape: float
    rate: float
    n_pulls: int
    A_inv_chol: np.ndarray
    mu_hat: np.ndarray


def init_arm(d: int) -> ArmPosterior:
    """Empty-history state: A = I, b = 0, shape = rate = 0, no pulls."""
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    eye = np.eye(d)
    zeros = np.zeros(d)
    return ArmPosterior(A=eye, A_inv=eye.copy(), b=zeros, shape=0.0, rate=0.0,
                        n_pulls=0, A_inv_chol=eye.copy(), mu_hat=zeros.copy())


def observe(state: ArmPosterior, x: np.ndarray, r: float) -> ArmPosterior:
    """State after seeing reward r in context x.

    A gains x xᵀ, b gains r x, shape gains 1/2, and rate gains half of
    (bᵀA⁻¹b before - bᵀA⁻¹b after + r²). A_inv is advanced by a rank-one
    inverse update, with a periodic full re-inversion to bound drift.
    """
    x = np.asarray(x, dtype=float)
    r = float(r)
    if x.shape != state.b.shape:
        raise ValueError(f"context shape {x.shape} does not match dim {state.b.shape}")
    if not np.all(np.isfinite(x)) or not math.isfinite(r):
        raise InvalidObservation(f"non-finite observation: x={x!r}, r={r!r}")
    norm2 = float(x @ x)
    if norm2 > 1.0 + 1e-9:
        warnings.warn(f"context norm {math.sqrt(norm2):.6f} exceeds 1; "
                      "updates proceed but estimator guarantees assume unit-ball contexts",
                      stacklevel=2)

    a_new = state.A + np.outer(x, x)
    b_new = state.b + r * x
    n_new = state.n_pulls + 1
    if n_new % REINVERT_EVERY == 0:
        a_inv_new = linalg.spd_inverse(a_new)
    else:
        a_inv_new = linalg.sherman_morrison(state.A_inv, x)
    mu_hat_new = a_inv_new @ b_new

    quad_old = float(state.b @ state.mu_hat)
    quad_new = float(b_new @ mu_hat_new)
    rate_new = state.rate + 0.5 * (quad_old - quad_new + r * r)
    if rate_new < 0.0:
        if rate_new < -_NEG_RATE_TOL:
            raise ConsistencyError(
                f"gamma rate went negative ({rate_new!r}); posterior state is corrupt")
        rate_new = 0.0

    return ArmPosterior(A=a_new, A_inv=a_inv_new, b=b_new, shape=state.shape + 0.5,
                        rate=rate_new, n_pulls=n_new,
                        A_inv_chol=linalg.cholesky(a_inv_new), mu_hat=mu_hat_new)


def batch_rebuild(history: list[tuple[np.ndarray, float]], d: int | None = None) -> ArmPosterior:
    """State recomputed from scratch off the raw history.

    Serves as the from-scratch oracle for chains of observe(): A = I + Σ x xᵀ
    inverted directly, b = Σ r x, shape = n/2, rate = (Σ r² - bᵀA⁻¹b)/2.
    """
    pairs = [(np.asarray(x, dtype=float), float(r)) for x, r in history]
    if d is None:
        if not pairs:
            raise ValueError("empty history needs an explicit dimension")
        d = pairs[0][0].shape[0]
    a = np.eye(d)
    b = np.zeros(d)
    sq_sum = 0.0
    for x, r in pairs:
        a += np.outer(x, x)
        b += r * x
        sq_sum += r * r
    a_inv = linalg.spd_inverse(a)
    mu_hat = a_inv @ b
    rate = 0.5 * (sq_sum - float(b @ mu_hat))
    if rate < 0.0:
        if rate < -_NEG_RATE_TOL:
            raise ConsistencyError(f"gamma rate went negative ({rate!r}) in batch rebuild")
        rate = 0.0
    return ArmPosterior(A=a, A_inv=a_inv, b=b, shape=0.5 * len(pairs), rate=rate,
                        n_pulls=len(pairs), A_inv_chol=linalg.cholesky(a_inv),
                        mu_hat=mu_hat)


def mean_estimate(state: ArmPosterior) -> np.ndarray:
    """Ridge estimate A⁻¹ b of the arm's mean parameter."""
    return state.mu_hat.copy()


def variance_estimate(state: ArmPosterior) -> float:
    """Posterior point estimate rate/shape of the reward variance."""
    if state.n_pulls < 1:
        raise NoObservations("variance estimate needs at least one pull")
    return state.rate / state.shape


def snapshot(state: ArmPosterior, arm: int) -> dict:
    """JSON-serializable dump of one arm's state for post-mortem debugging."""
    return {
        "arm": arm,
        "shape": state.shape,
        "rate": state.rate,
        "n_pulls": state.n_pulls,
        "b": state.b.tolist(),
        "A": state.A.tolist(),
    }


@dataclass(frozen=True)
class ScalarArmPosterior:
    """Normal-gamma state over (mean, precision) of one context-free arm."""

    mean: float
    n_obs: float
    shape: float
    rate: float


def init_scalar_arm(first_reward: float) -> ScalarArmPosterior:
    """State right after the arm's single initialization pull."""
    if not math.isfinite(first_reward):
        raise InvalidObservation(f"non-finite reward: {first_reward!r}")
    return ScalarArmPosterior(mean=float(first_reward), n_obs=1.0, shape=0.5, rate=0.5)


def cf_observe(state: ScalarArmPosterior, r: float) -> ScalarArmPosterior:
    """State after one more scalar reward.

    The mean moves to the running average, the count and gamma shape advance
    by 1 and 1/2, and the gamma rate grows by the shrunk squared residual
    (n/(n+1)) (r - mean)² / 2, so it never decreases.
    """
    r = float(r)
    if not math.isfinite(r):
        raise InvalidObservation(f"non-finite reward: {r!r}")
    t = state.n_obs
    return ScalarArmPosterior(
        mean=(t * state.mean + r) / (t + 1.0),
        n_obs=t + 1.0,
        shape=state.shape + 0.5,
        rate=state.rate + (t / (t + 1.0)) * (r - state.mean) ** 2 / 2.0,
    )
