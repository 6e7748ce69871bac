"""Arm-selection policies behind one interface.

Every policy scores all arms from draws off its posterior state and plays the
argmax, with ties always resolved to the lowest index. Draw order is part of
the reproducibility contract and is documented per policy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import posterior
from .errors import InvalidParameter, PolicyStateError
from .posterior import ArmPosterior, ScalarArmPosterior
from .sampling import Sampler

POLICY_TAGS = ("mvts_d", "mvts_dn", "ts_a", "cf_mvts", "uniform")

# Guard rails for degenerate posteriors: a gamma rate of exactly zero and a
# precision draw of (numerical) zero both get floored before division.
RATE_FLOOR = 1e-300
PRECISION_FLOOR = 1e-12


@dataclass(frozen=True)
class Decision:
    """One round's selection plus the per-arm draws behind it.

    scores drive the argmax; means and variances are the sampled components
    (score = mean - rho * variance where the policy has a variance part).
    """

    arm: int
    scores: np.ndarray
    means: np.ndarray | None = None
    variances: np.ndarray | None = None


def dn_constants(r_sub_gaussian: float, epsilon: float, delta: float,
                 d: int, n_arms: int) -> tuple[float, float]:
    """Theoretical (u, v) scales for the normal-variance policy.

    u widens the variance draw and v the mean draw; both grow with the
    context dimension and arm count and shrink as epsilon grows. epsilon must
    lie in (0, 1/2) and delta in (0, 1).
    """
    if not r_sub_gaussian > 0.0:
        raise InvalidParameter(f"noise scale must be positive, got {r_sub_gaussian!r}")
    if not 0.0 < epsilon < 0.5:
        raise InvalidParameter(f"epsilon must lie in (0, 0.5), got {epsilon!r}")
    if not 0.0 < delta < 1.0:
        raise InvalidParameter(f"delta must lie in (0, 1), got {delta!r}")
    if d < 1 or n_arms < 1:
        raise InvalidParameter(f"need d >= 1 and n_arms >= 1, got d={d}, n_arms={n_arms}")
    log_term = math.log(4.0 * n_arms / delta)
    v = r_sub_gaussian * math.sqrt(4.0 / epsilon * d * log_term)
    u = 8.0 * r_sub_gaussian ** 2 * d * log_term / math.sqrt(epsilon)
    return u, v


def ts_a_scale(r_sub_gaussian: float, epsilon: float, delta: float, d: int) -> float:
    """Default mean-draw width for the risk-neutral policy; epsilon in (0, 1)."""
    if not r_sub_gaussian > 0.0:
        raise InvalidParameter(f"noise scale must be positive, got {r_sub_gaussian!r}")
    if not 0.0 < epsilon < 1.0:
        raise InvalidParameter(f"epsilon must lie in (0, 1), got {epsilon!r}")
    if not 0.0 < delta < 1.0:
        raise InvalidParameter(f"delta must lie in (0, 1), got {delta!r}")
    if d < 1:
        raise InvalidParameter(f"need d >= 1, got {d}")
    return r_sub_gaussian * math.sqrt(24.0 / epsilon * d * math.log(1.0 / delta))


def _require_initialized(states: list[ArmPosterior]) -> None:
    for i, s in enumerate(states):
        if s.n_pulls < 1:
            raise PolicyStateError(f"arm {i} has no pulls yet; run the round-0 pulls first")


def choose_mvts_d(states: list[ArmPosterior], contexts: np.ndarray, rho: float,
                  sampler: Sampler) -> Decision:
    """Normal-gamma Thompson selection.

    Per arm, in index order: one gamma draw gives the precision (variance =
    its reciprocal), then d normals give the mean vector around the ridge
    estimate with covariance A⁻¹ / precision. Score = context·mean -
    rho * variance.
    """
    _require_initialized(states)
    n_arms = len(states)
    scores = np.empty(n_arms)
    means = np.empty(n_arms)
    variances = np.empty(n_arms)
    for i, s in enumerate(states):
        lam = sampler.gamma(s.shape, max(s.rate, RATE_FLOOR))
        lam = max(lam, PRECISION_FLOOR)
        z = sampler.standard_normals(s.mu_hat.size)
        mu = s.mu_hat + (s.A_inv_chol @ z) * (1.0 / math.sqrt(lam))
        means[i] = float(contexts[i] @ mu)
        variances[i] = 1.0 / lam
        scores[i] = means[i] - rho * variances[i]
    return Decision(arm=int(np.argmax(scores)), scores=scores, means=means,
                    variances=variances)


def choose_mvts_dn(states: list[ArmPosterior], contexts: np.ndarray, rho: float,
                   u: float, v: float, sampler: Sampler) -> Decision:
    """Normal-variance Thompson selection (the analysis variant).

    Per arm, in index order: one normal draw gives the variance, centred on
    the posterior variance estimate with width u / sqrt(pulls) and left
    unclamped (it may go negative); then d normals give the mean around the
    ridge estimate with covariance v² A⁻¹, independent of the variance draw.
    """
    if not u > 0.0 or not v > 0.0:
        raise InvalidParameter(f"u and v must be positive, got u={u!r}, v={v!r}")
    _require_initialized(states)
    n_arms = len(states)
    scores = np.empty(n_arms)
    means = np.empty(n_arms)
    variances = np.empty(n_arms)
    for i, s in enumerate(states):
        sig2 = s.rate / s.shape + (u / math.sqrt(s.n_pulls)) * sampler.standard_normal()
        z = sampler.standard_normals(s.mu_hat.size)
        mu = s.mu_hat + (s.A_inv_chol @ z) * v
        means[i] = float(contexts[i] @ mu)
        variances[i] = sig2
        scores[i] = means[i] - rho * sig2
    return Decision(arm=int(np.argmax(scores)), scores=scores, means=means,
                    variances=variances)


def choose_ts_a(states: list[ArmPosterior], contexts: np.ndarray, v: float,
                sampler: Sampler) -> Decision:
    """Risk-neutral Thompson selection: per arm, in index order, d normals
    give a mean around the ridge estimate with covariance v² A⁻¹; the score
    is just context·mean. No variance enters the decision."""
    if not v > 0.0:
        raise InvalidParameter(f"v must be positive, got {v!r}")
    _require_initialized(states)
    n_arms = len(states)
    scores = np.empty(n_arms)
    for i, s in enumerate(states):
        z = sampler.standard_normals(s.mu_hat.size)
        mu = s.mu_hat + (s.A_inv_chol @ z) * v
        scores[i] = float(contexts[i] @ mu)
    return Decision(arm=int(np.argmax(scores)), scores=scores, means=scores.copy(),
                    variances=None)


def choose_cf_mvts(states: list[ScalarArmPosterior | None], rho: float,
                   sampler: Sampler) -> Decision:
    """Context-free mean-variance Thompson selection.

    Per arm, in index order: a gamma draw gives the precision, then one
    normal gives the mean around the running average with variance 1/count;
    the score penalizes rho times the reciprocal precision. Contexts never
    enter.
    """
    n_arms = len(states)
    scores = np.empty(n_arms)
    means = np.empty(n_arms)
    variances = np.empty(n_arms)
    for i, s in enumerate(states):
        if s is None:
            raise PolicyStateError(f"arm {i} has no pulls yet; run the round-0 pulls first")
        tau = sampler.gamma(s.shape, max(s.rate, RATE_FLOOR))
        tau = max(tau, PRECISION_FLOOR)
        theta = s.mean + sampler.standard_normal() / math.sqrt(s.n_obs)
        means[i] = theta
        variances[i] = 1.0 / tau
        scores[i] = theta - rho / tau
    return Decision(arm=int(np.argmax(scores)), scores=scores, means=means,
                    variances=variances)


def choose_uniform(n_arms: int, sampler: Sampler) -> Decision:
    """Uniformly random arm; scores are a one-hot marker so the argmax
    contract still holds."""
    if n_arms < 1:
        raise InvalidParameter(f"need at least one arm, got {n_arms}")
    arm = min(int(sampler.random() * n_arms), n_arms - 1)
    scores = np.zeros(n_arms)
    scores[arm] = 1.0
    return Decision(arm=arm, scores=scores)


class _ContextualPolicy:
    """Shared state handling for policies backed by per-arm ridge posteriors."""

    tag = ""

    def __init__(self, n_arms: int, d: int, sampler: Sampler):
        self.n_arms = n_arms
        self.d = d
        self.sampler = sampler
        self.states = [posterior.init_arm(d) for _ in range(n_arms)]

    def start(self, contexts0: np.ndarray, rewards0: np.ndarray) -> None:
        """Round-0 initialization: one forced pull per arm."""
        for i in range(self.n_arms):
            self.states[i] = posterior.observe(self.states[i], contexts0[i], rewards0[i])

    def update(self, arm: int, x: np.ndarray, r: float) -> None:
        """Fold the pulled arm's observation in; other arms are untouched."""
        if not 0 <= arm < self.n_arms:
            raise IndexError(f"arm {arm} out of range [0, {self.n_arms})")
        self.states[arm] = posterior.observe(self.states[arm], x, r)

    def state_snapshot(self) -> list[dict]:
        return [posterior.snapshot(s, i) for i, s in enumerate(self.states)]


class MvtsD(_ContextualPolicy):
    """Mean-variance Thompson sampling with gamma precision draws."""

    tag = "mvts_d"

    def __init__(self, n_arms: int, d: int, rho: float, sampler: Sampler):
        if rho < 0.0:
            raise InvalidParameter(f"risk tolerance must be >= 0, got {rho!r}")
        super().__init__(n_arms, d, sampler)
        self.rho = rho

    def choose(self, contexts: np.ndarray) -> Decision:
        return choose_mvts_d(self.states, contexts, self.rho, self.sampler)


class MvtsDn(_ContextualPolicy):
    """Mean-variance Thompson sampling with normal variance draws."""

    tag = "mvts_dn"

    def __init__(self, n_arms: int, d: int, rho: float, u: float, v: float,
                 sampler: Sampler):
        if rho < 0.0:
            raise InvalidParameter(f"risk tolerance must be >= 0, got {rho!r}")
        if not u > 0.0 or not v > 0.0:
            raise InvalidParameter(f"u and v must be positive, got u={u!r}, v={v!r}")
        super().__init__(n_arms, d, sampler)
        self.rho = rho
        self.u = u
        self.v = v

    def choose(self, contexts: np.ndarray) -> Decision:
        return choose_mvts_dn(self.states, contexts, self.rho, self.u, self.v, self.sampler)


class TsA(_ContextualPolicy):
    """Risk-neutral Thompson sampling baseline; ignores reward variance."""

    tag = "ts_a"

    def __init__(self, n_arms: int, d: int, v: float, sampler: Sampler):
        if not v > 0.0:
            raise InvalidParameter(f"v must be positive, got {v!r}")
        super().__init__(n_arms, d, sampler)
        self.v = v

    def choose(self, contexts: np.ndarray) -> Decision:
        return choose_ts_a(self.states, contexts, self.v, self.sampler)


class CfMvts:
    """Context-free mean-variance Thompson sampling baseline."""

    tag = "cf_mvts"

    def __init__(self, n_arms: int, rho: float, sampler: Sampler):
        if rho < 0.0:
            raise InvalidParameter(f"risk tolerance must be >= 0, got {rho!r}")
        self.n_arms = n_arms
        self.rho = rho
        self.sampler = sampler
        self.states: list[ScalarArmPosterior | None] = [None] * n_arms

    def start(self, contexts0: np.ndarray, rewards0: np.ndarray) -> None:
        for i in range(self.n_arms):
            self.states[i] = posterior.init_scalar_arm(rewards0[i])

    def choose(self, contexts: np.ndarray) -> Decision:
        return choose_cf_mvts(self.states, self.rho, self.sampler)

    def update(self, arm: int, x: np.ndarray, r: float) -> None:
        if not 0 <= arm < self.n_arms:
            raise IndexError(f"arm {arm} out of range [0, {self.n_arms})")
        state = self.states[arm]
        if state is None:
            raise PolicyStateError(f"arm {arm} has no pulls yet; run the round-0 pulls first")
        self.states[arm] = posterior.cf_observe(state, r)

    def state_snapshot(self) -> list[dict]:
        return [
            {"arm": i, "mean": s.mean, "n_obs": s.n_obs, "shape": s.shape, "rate": s.rate}
            for i, s in enumerate(self.states) if s is not None
        ]


class UniformRandom:
    """Stateless uniform-random baseline."""

    tag = "uniform"

    def __init__(self, n_arms: int, sampler: Sampler):
        if n_arms < 1:
            raise InvalidParameter(f"need at least one arm, got {n_arms}")
        self.n_arms = n_arms
        self.sampler = sampler

    def start(self, contexts0: np.ndarray, rewards0: np.ndarray) -> None:
        pass

    def choose(self, contexts: np.ndarray) -> Decision:
        return choose_uniform(self.n_arms, self.sampler)

    def update(self, arm: int, x: np.ndarray, r: float) -> None:
        pass

    def state_snapshot(self) -> list[dict]:
        return []
