"""Scripted sampler stubs shared by the policy and environment tests."""

from __future__ import annotations

import numpy as np

from mvbandit.sampling import RngStream


class StubSampler:
    """Sampler returning scripted values so decisions become deterministic.

    normal_value: constant returned by every standard normal draw.
    gamma_value: constant, or a callable (shape, rate) -> draw; the default
        pins the draw at the distribution mean shape/rate.
    random_values: optional list consumed by random(); falls back to
        random_value once exhausted.
    """

    def __init__(self, normal_value=0.0, gamma_value=None, random_value=0.5,
                 random_values=None):
        self.normal_value = normal_value
        self.gamma_value = gamma_value
        self.random_value = random_value
        self.random_values = list(random_values or [])

    def random(self):
        if self.random_values:
            return self.random_values.pop(0)
        return self.random_value

    def standard_normal(self):
        return self.normal_value

    def standard_normals(self, n):
        return np.full(n, self.normal_value, dtype=float)

    def gamma(self, shape, rate):
        if self.gamma_value is None:
            return shape / rate
        if callable(self.gamma_value):
            return self.gamma_value(shape, rate)
        return self.gamma_value


class CountingSampler:
    """Wraps a real stream and counts draws per kind (normals by value)."""

    def __init__(self, seed=0):
        self.rng = RngStream(seed)
        self.n_gamma = 0
        self.n_normal = 0
        self.n_random = 0
        self.call_log: list[str] = []

    def random(self):
        self.n_random += 1
        self.call_log.append("random")
        return self.rng.random()

    def standard_normal(self):
        self.n_normal += 1
        self.call_log.append("normal:1")
        return self.rng.standard_normal()

    def standard_normals(self, n):
        self.n_normal += n
        self.call_log.append(f"normal:{n}")
        return self.rng.standard_normals(n)

    def gamma(self, shape, rate):
        self.n_gamma += 1
        self.call_log.append("gamma")
        return self.rng.gamma(shape, rate)
