"""Covariance matrix adaptation evolution strategy (ask/tell).

Standard (mu/mu_w, lambda) CMA-ES with rank-one and rank-mu covariance
updates, cumulative step-size adaptation, and lazily refreshed
eigendecomposition so high-dimensional searches stay tractable. The
caller ranks candidates (best first) and passes them back via ``tell``;
nothing here assumes a particular objective sign.
"""
from __future__ import annotations

import math

import numpy as np


def default_population(dimension: int) -> int:
    return 4 + int(3 * math.log(dimension))


class CmaEs:
    def __init__(self, mean: np.ndarray, sigma: float, rng: np.random.Generator,
                 population: int | None = None):
        self.mean = np.asarray(mean, dtype=np.float64).copy()
        self.sigma = float(sigma)
        self.rng = rng
        n = len(self.mean)
        self.n = n
        self.lam = population or default_population(n)
        self.mu = self.lam // 2
        w = np.log(self.mu + 0.5) - np.log(np.arange(1, self.mu + 1))
        self.weights = w / w.sum()
        self.mueff = 1.0 / np.sum(self.weights ** 2)

        self.cc = (4 + self.mueff / n) / (n + 4 + 2 * self.mueff / n)
        self.cs = (self.mueff + 2) / (n + self.mueff + 5)
        self.c1 = 2 / ((n + 1.3) ** 2 + self.mueff)
        self.cmu = min(
            1 - self.c1,
            2 * (self.mueff - 2 + 1 / self.mueff) / ((n + 2) ** 2 + self.mueff),
        )
        self.damps = 1 + 2 * max(0.0, math.sqrt((self.mueff - 1) / (n + 1)) - 1) + self.cs
        self.chi_n = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n * n))

        self.pc = np.zeros(n)
        self.ps = np.zeros(n)
        self.cov = np.eye(n)
        self._basis = np.eye(n)
        self._scales = np.ones(n)
        self._invsqrt = np.eye(n)
        self._eigen_evals = 0
        self.count_evals = 0
        self.generation = 0

    def _update_eigensystem(self):
        # Refresh when the covariance has drifted enough to matter.
        if self.count_evals - self._eigen_evals < self.lam / (self.c1 + self.cmu) / self.n / 10:
            return
        self._eigen_evals = self.count_evals
        self.cov = np.triu(self.cov) + np.triu(self.cov, 1).T
        vals, vecs = np.linalg.eigh(self.cov)
        vals = np.maximum(vals, 1e-20)
        self._scales = np.sqrt(vals)
        self._basis = vecs
        self._invsqrt = vecs @ np.diag(1.0 / self._scales) @ vecs.T

    def ask(self) -> np.ndarray:
        """Sample a (lambda, n) batch from N(mean, sigma^2 C)."""
        self._update_eigensystem()
        z = self.rng.standard_normal((self.lam, self.n))
        return self.mean + self.sigma * (z * self._scales) @ self._basis.T

    def tell(self, solutions: np.ndarray) -> None:
        """Update state from candidates sorted best-first (rows)."""
        xs = np.asarray(solutions, dtype=np.float64)
        if xs.shape != (self.lam, self.n):
            raise ValueError(f"expected ({self.lam}, {self.n}) solutions, got {xs.shape}")
        self.count_evals += self.lam
        self.generation += 1
        old_mean = self.mean
        selected = xs[: self.mu]
        self.mean = self.weights @ selected
        y = (self.mean - old_mean) / self.sigma

        self.ps = (1 - self.cs) * self.ps + math.sqrt(
            self.cs * (2 - self.cs) * self.mueff
        ) * (self._invsqrt @ y)
        ps_norm = float(np.linalg.norm(self.ps))
        denom = math.sqrt(1 - (1 - self.cs) ** (2 * self.count_evals / self.lam))
        hsig = ps_norm / denom / self.chi_n < 1.4 + 2 / (self.n + 1)
        self.pc = (1 - self.cc) * self.pc + (
            math.sqrt(self.cc * (2 - self.cc) * self.mueff) * y if hsig else 0.0
        )

        artmp = (selected - old_mean) / self.sigma
        rank_mu = artmp.T @ (self.weights[:, None] * artmp)
        self.cov = (
            (1 - self.c1 - self.cmu) * self.cov
            + self.c1
            * (np.outer(self.pc, self.pc) + (0 if hsig else self.cc * (2 - self.cc)) * self.cov)
            + self.cmu * rank_mu
        )
        self.sigma *= math.exp((self.cs / self.damps) * (ps_norm / self.chi_n - 1))

    @property
    def degenerate(self) -> bool:
        return (
            not math.isfinite(self.sigma)
            or self.sigma <= 1e-12
            or self.sigma > 1e6
            or not np.all(np.isfinite(self.mean))
        )
