"""Simulated reward environment: context generation, hidden per-arm
parameters, reward draws, and the exact mean-variance oracle behind regret."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameter
from .sampling import NoiseKind, RngStream, Sampler, sample_noise

_NORM_SLACK = 1e-9

# Ten-arm reference market: eight mean sensitivities and the reward variance
# per portfolio.
_BUILTIN_TABLE = (
    ((0.15, 0.33, -0.10, 0.08, -0.01, -0.04, 0.01, 0.11), 0.89),
    ((0.14, 0.22, 0.15, 0.31, 0.02, 0.43, -0.08, 0.30), 0.66),
    ((0.15, 0.24, -0.02, 0.02, 0.38, 0.48, 0.09, 0.32), 0.78),
    ((0.43, 0.44, -0.05, -0.08, 0.00, 0.43, -0.04, 0.15), 0.41),
    ((0.47, 0.22, 0.32, 0.09, 0.31, 0.40, -0.09, 0.35), 0.34),
    ((0.49, 0.35, 0.07, 0.37, -0.04, 0.17, 0.45, 0.08), 0.91),
    ((0.07, -0.02, -0.09, 0.31, 0.03, 0.06, 0.19, -0.07), 0.49),
    ((0.24, -0.01, 0.25, 0.32, -0.04, 0.15, 0.32, 0.15), 0.97),
    ((-0.07, 0.22, 0.30, 0.21, 0.47, 0.25, 0.44, -0.02), 0.70),
    ((-0.02, 0.38, 0.14, 0.00, 0.46, 0.11, 0.35, 0.33), 0.66),
)


@dataclass(frozen=True, eq=False)
class ArmTruth:
    """Hidden parameters of one arm: mean vector, reward variance, noise kind.

    The mean must sit in the unit ball unless allow_large_mean is set; the
    bypass exists for externally supplied parameter tables.
    """

    mu: np.ndarray
    sigma2: float
    noise: NoiseKind
    allow_large_mean: bool = False

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        object.__setattr__(self, "mu", mu)
        if mu.ndim != 1 or mu.size < 1:
            raise InvalidParameter(f"mean parameter must be a vector, got shape {mu.shape}")
        if not np.all(np.isfinite(mu)):
            raise InvalidParameter("mean parameter has non-finite entries")
        if not self.sigma2 > 0.0:
            raise InvalidParameter(f"reward variance must be positive, got {self.sigma2!r}")
        norm = float(np.linalg.norm(mu))
        if norm > 1.0 + _NORM_SLACK and not self.allow_large_mean:
            raise InvalidParameter(
                f"mean parameter norm {norm:.6f} exceeds 1; pass allow_large_mean=True to bypass")


def builtin_truths(noise: NoiseKind) -> list[ArmTruth]:
    """The built-in ten-portfolio parameter table (d = 8)."""
    return [ArmTruth(mu=np.array(mu), sigma2=s2, noise=noise) for mu, s2 in _BUILTIN_TABLE]


def format_truths(truths: list[ArmTruth]) -> str:
    """Plain-text table: one line per arm with index, mean entries, variance.

    Values are rendered with repr, the shortest form that parses back to the
    identical float.
    """
    lines = ["# arm  mean entries ...  variance"]
    for i, t in enumerate(truths):
        entries = " ".join(repr(float(v)) for v in t.mu)
        lines.append(f"{i} {entries} {t.sigma2!r}")
    return "\n".join(lines) + "\n"


def parse_truths(text: str, noise: NoiseKind, allow_large_mean: bool = False) -> list[ArmTruth]:
    """Parse the plain-text table written by format_truths.

    Each non-comment line is: arm index, the mean entries, then the variance.
    Lines must be indexed 0..K-1 in order and share one dimension.
    """
    truths: list[ArmTruth] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) < 3:
            raise InvalidParameter(f"truth table line {lineno}: expected index, means, variance")
        idx = int(fields[0])
        if idx != len(truths):
            raise InvalidParameter(f"truth table line {lineno}: arm index {idx} out of order")
        values = [float(v) for v in fields[1:]]
        truths.append(ArmTruth(mu=np.array(values[:-1]), sigma2=values[-1], noise=noise,
                               allow_large_mean=allow_large_mean))
    if not truths:
        raise InvalidParameter("truth table is empty")
    dims = {t.mu.size for t in truths}
    if len(dims) != 1:
        raise InvalidParameter(f"truth table mixes dimensions: {sorted(dims)}")
    return truths


def load_truths(path: str, noise: NoiseKind, allow_large_mean: bool = False) -> list[ArmTruth]:
    with open(path, encoding="utf-8") as fh:
        return parse_truths(fh.read(), noise, allow_large_mean)


def gen_contexts(n_arms: int, d: int, rng: RngStream) -> np.ndarray:
    """(K, d) context matrix: entries uniform on [-1, 1], rows scaled into the
    unit ball (multiplied by min(1, 1/norm))."""
    m = 2.0 * rng.randoms(n_arms * d).reshape(n_arms, d) - 1.0
    norms = np.sqrt(np.einsum("kd,kd->k", m, m))
    np.maximum(norms, 1.0, out=norms)
    return m / norms[:, None]


def draw_reward(truth: ArmTruth, x: np.ndarray, rng: Sampler) -> float:
    """Stochastic reward: context-mean product plus zero-mean noise of the
    arm's variance and kind."""
    return float(x @ truth.mu) + sample_noise(truth.noise, truth.sigma2, rng)


def mv_value(x: np.ndarray, mu: np.ndarray, sigma2: float, rho: float) -> float:
    """Mean-variance score xᵀmu - rho * sigma2; larger is better."""
    return float(x @ mu) - rho * sigma2


def mv_scores(contexts: np.ndarray, mu_matrix: np.ndarray, sigma2s: np.ndarray,
              rho: float) -> np.ndarray:
    """Per-arm mean-variance scores for one round, vectorized over arms."""
    return np.einsum("kd,kd->k", contexts, mu_matrix) - rho * sigma2s


def regret(contexts: np.ndarray, truths: list[ArmTruth], rho: float, chosen: int) -> float:
    """Gap between the best arm's mean-variance and the chosen arm's.

    Nonnegative, and zero exactly when the chosen arm attains the maximum.
    """
    if not 0 <= chosen < len(truths):
        raise IndexError(f"chosen arm {chosen} out of range [0, {len(truths)})")
    mu_matrix = np.array([t.mu for t in truths])
    sigma2s = np.array([t.sigma2 for t in truths])
    scores = mv_scores(np.asarray(contexts, dtype=float), mu_matrix, sigma2s, rho)
    return float(np.max(scores) - scores[chosen])
