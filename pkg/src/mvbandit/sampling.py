"""Seeded random streams and the distribution samplers used by the policies
and the reward environment.

The generator is counter-based splitmix64: raw word ``i`` of a lane with
sub-seed ``s`` is ``mix64(s + (i + 1) * GOLDEN_GAMMA)`` where ``mix64`` is the
splitmix64 finalizer. Each :class:`RngStream` expands its seed into two
independent lanes, one feeding uniform draws and one feeding normal draws
(cosine-branch Box-Muller, two raw words per normal), so a stream's complete
state is the seed plus the two per-lane draw counters. Identical seeds
therefore reproduce identical sequences run to run; uniform draws are exact
integer arithmetic plus a power-of-two scale, while normal and gamma draws
additionally depend on the platform's IEEE-754 ``log``/``cos``/``sqrt``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Protocol

import numpy as np

from .errors import InvalidParameter

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

_MIX_MUL_1 = 0xBF58476D1CE4E5B9
_MIX_MUL_2 = 0x94D049BB133111EB
_UNIFORM_LANE_SALT = 0x9E3779B97F4A7C15
_NORMAL_LANE_SALT = 0xD1B54A32D192ED03

_U53 = 1.0 / (1 << 53)
_TWO_PI = 2.0 * math.pi
_UNIFORM_BLOCK = 1024
_NORMAL_BLOCK = 512


def mix64(z: int) -> int:
    """splitmix64 finalizer: a 64-bit avalanching mix."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX_MUL_1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX_MUL_2) & MASK64
    return z ^ (z >> 31)


def derive_seed(master_seed: int, *tokens: int | str) -> int:
    """Fold tokens into a 64-bit stream seed.

    The state starts as ``mix64(master_seed)`` (avalanched so that nearby
    master seeds share no structure with small integer tokens). Each token is
    then rendered as bytes (non-negative ints as 8 bytes little-endian,
    strings as UTF-8), absorbed FNV-1a style, and the state is passed through
    ``mix64`` after every token. The scheme is fixed so that other
    implementations can reproduce per-stream seeds from the master seed and
    the token list.
    """
    h = mix64(master_seed & MASK64)
    for tok in tokens:
        data = tok.encode("utf-8") if isinstance(tok, str) else int(tok).to_bytes(8, "little")
        for byte in data:
            h = ((h ^ byte) * 0x100000001B3) & MASK64
        h = mix64(h)
    return h


def _raw_words(sub_seed: int, start: int, count: int) -> np.ndarray:
    """Raw words [start, start + count) of one splitmix64 lane, vectorized."""
    idx = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    z = np.uint64(sub_seed) + idx * np.uint64(GOLDEN_GAMMA)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX_MUL_1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX_MUL_2)
    return z ^ (z >> np.uint64(31))


class RngStream:
    """Deterministic random stream; logical state is (seed, two counters).

    Draws are produced in vectorized blocks and buffered; buffering never
    affects the sequences, which are pure functions of the seed and of how
    many uniform and normal draws have been handed out.
    """

    def __init__(self, seed: int, uniform_count: int = 0, normal_count: int = 0):
        self.seed = seed & MASK64
        self._u_seed = mix64(self.seed ^ _UNIFORM_LANE_SALT)
        self._n_seed = mix64(self.seed ^ _NORMAL_LANE_SALT)
        self.uniform_count = uniform_count
        self.normal_count = normal_count
        self._u_buf: list[float] = []
        self._u_pos = 0
        self._n_buf = np.empty(0)
        self._n_pos = 0

    def __repr__(self) -> str:
        return (f"RngStream(seed={self.seed:#x}, uniform_count={self.uniform_count}, "
                f"normal_count={self.normal_count})")

    def __getstate__(self):
        return {"seed": self.seed, "uniform_count": self.uniform_count,
                "normal_count": self.normal_count}

    def __setstate__(self, state):
        self.__init__(state["seed"], state["uniform_count"], state["normal_count"])

    # -- uniform lane -------------------------------------------------------

    def _refill_uniform(self, at_least: int = 1) -> None:
        count = max(_UNIFORM_BLOCK, at_least)
        words = _raw_words(self._u_seed, self.uniform_count, count)
        self._u_buf = ((words >> np.uint64(11)) * _U53).tolist()
        self._u_pos = 0

    def random(self) -> float:
        """Uniform draw in [0, 1) with 53 random bits."""
        if self._u_pos >= len(self._u_buf):
            self._refill_uniform()
        u = self._u_buf[self._u_pos]
        self._u_pos += 1
        self.uniform_count += 1
        return u

    def randoms(self, n: int) -> np.ndarray:
        """n uniform draws in [0, 1), identical to n calls of random()."""
        out = np.empty(n)
        filled = 0
        while filled < n:
            if self._u_pos >= len(self._u_buf):
                self._refill_uniform(n - filled)
            take = min(len(self._u_buf) - self._u_pos, n - filled)
            out[filled:filled + take] = self._u_buf[self._u_pos:self._u_pos + take]
            self._u_pos += take
            self.uniform_count += take
            filled += take
        return out

    def uniform(self, lo: float, hi: float) -> float:
        """Uniform draw in [lo, hi)."""
        return lo + (hi - lo) * self.random()

    # -- normal lane ----------------------------------------------------------

    def _refill_normal(self, at_least: int = 1) -> None:
        count = max(_NORMAL_BLOCK, at_least)
        words = _raw_words(self._n_seed, 2 * self.normal_count, 2 * count)
        u = (words >> np.uint64(11)) * _U53
        # cosine-branch Box-Muller; normal j uses raw words 2j and 2j + 1
        self._n_buf = np.sqrt(-2.0 * np.log(1.0 - u[0::2])) * np.cos(_TWO_PI * u[1::2])
        self._n_pos = 0

    def standard_normal(self) -> float:
        """One N(0, 1) draw."""
        if self._n_pos >= self._n_buf.size:
            self._refill_normal()
        z = self._n_buf[self._n_pos]
        self._n_pos += 1
        self.normal_count += 1
        return float(z)

    def standard_normals(self, n: int) -> np.ndarray:
        """n N(0, 1) draws, identical to n calls of standard_normal()."""
        out = np.empty(n)
        filled = 0
        while filled < n:
            if self._n_pos >= self._n_buf.size:
                self._refill_normal(n - filled)
            take = min(self._n_buf.size - self._n_pos, n - filled)
            out[filled:filled + take] = self._n_buf[self._n_pos:self._n_pos + take]
            self._n_pos += take
            self.normal_count += take
            filled += take
        return out

    # -- gamma ---------------------------------------------------------------

    def gamma(self, shape: float, rate: float) -> float:
        """Gamma(shape, rate) draw with mean shape/rate, Marsaglia-Tsang method.

        Shapes below one use the boost Gamma(shape + 1) * U^(1/shape).
        """
        if not shape > 0.0 or not rate > 0.0:
            raise InvalidParameter(
                f"gamma needs shape > 0 and rate > 0, got shape={shape!r} rate={rate!r}")
        if shape < 1.0:
            boost = (1.0 - self.random()) ** (1.0 / shape)
            return self._gamma_std(shape + 1.0) * boost / rate
        return self._gamma_std(shape) / rate

    def _gamma_std(self, shape: float) -> float:
        d = shape - 1.0 / 3.0
        c = 1.0 / math.sqrt(9.0 * d)
        while True:
            x = self.standard_normal()
            t = 1.0 + c * x
            if t <= 0.0:
                continue
            v = t * t * t
            u = self.random()
            x2 = x * x
            if u < 1.0 - 0.0331 * x2 * x2:
                return d * v
            if u <= 0.0 or math.log(u) < 0.5 * x2 + d * (1.0 - v + math.log(v)):
                return d * v


class Sampler(Protocol):
    """Draw interface the policies depend on.

    RngStream implements it; tests may substitute stubs that return scripted
    values to make policy decisions deterministic.
    """

    def random(self) -> float: ...

    def standard_normal(self) -> float: ...

    def standard_normals(self, n: int) -> np.ndarray: ...

    def gamma(self, shape: float, rate: float) -> float: ...


def sample_mvn(mean: np.ndarray, cov_chol: np.ndarray, sampler: Sampler) -> np.ndarray:
    """Multivariate normal draw mean + L z with z i.i.d. standard normal.

    ``cov_chol`` is the (lower) factor L of the intended covariance L Lᵀ;
    consumes exactly len(mean) normal draws.
    """
    mean = np.asarray(mean, dtype=float)
    d = mean.shape[0]
    if cov_chol.shape != (d, d):
        raise ValueError(f"covariance factor shape {cov_chol.shape} does not match dim {d}")
    z = sampler.standard_normals(d)
    return mean + cov_chol @ z


NOISE_TAGS = ("gaussian", "truncated_normal", "uniform")


@dataclass(frozen=True)
class NoiseKind:
    """Noise family for reward draws; bounds apply to truncated_normal only."""

    tag: str
    lo: float = -5.0
    hi: float = 5.0

    def __post_init__(self):
        if self.tag not in NOISE_TAGS:
            raise InvalidParameter(f"unknown noise kind {self.tag!r}, expected one of {NOISE_TAGS}")
        if not self.lo < self.hi:
            raise InvalidParameter(f"truncation bounds must satisfy lo < hi, got [{self.lo}, {self.hi}]")


def _std_normal_pdf(x: float) -> float:
    return math.exp(-0.5 * x * x) / math.sqrt(_TWO_PI)


def _std_normal_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


@lru_cache(maxsize=None)
def truncated_std_moments(lo: float, hi: float) -> tuple[float, float]:
    """Mean and variance of a standard normal restricted to [lo, hi]."""
    z = _std_normal_cdf(hi) - _std_normal_cdf(lo)
    if z <= 0.0:
        raise InvalidParameter(f"degenerate truncation window [{lo}, {hi}]")
    mean = (_std_normal_pdf(lo) - _std_normal_pdf(hi)) / z
    var = 1.0 + (lo * _std_normal_pdf(lo) - hi * _std_normal_pdf(hi)) / z - mean * mean
    return mean, var


def sample_noise(noise: NoiseKind, variance: float, sampler: Sampler) -> float:
    """Zero-mean noise draw with the requested variance.

    gaussian: plain scaled normal. uniform: uniform on [-sqrt(3)*sd, sqrt(3)*sd],
    the symmetric zero-mean uniform with that variance. truncated_normal: a
    standard normal restricted to [lo, hi] by rejection, then centred and
    rescaled so the requested variance survives the truncation.
    """
    if not variance > 0.0:
        raise InvalidParameter(f"noise variance must be positive, got {variance!r}")
    sd = math.sqrt(variance)
    if noise.tag == "gaussian":
        return sd * sampler.standard_normal()
    if noise.tag == "uniform":
        return math.sqrt(3.0) * sd * (2.0 * sampler.random() - 1.0)
    t_mean, t_var = truncated_std_moments(noise.lo, noise.hi)
    scale = sd / math.sqrt(t_var)
    while True:
        z = sampler.standard_normal()
        if noise.lo <= z <= noise.hi:
            return (z - t_mean) * scale
