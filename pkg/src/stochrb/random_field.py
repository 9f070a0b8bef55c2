"""Analytic Karhunen-Loeve expansion of the separable exponential covariance.

The 1D kernel ``exp(-|s - t| / L)`` on ``[-1/2, 1/2]`` has eigenpairs

* even:  ``cos(w s)`` with ``c - w tan(w a) = 0``
* odd:   ``sin(w s)`` with ``w + c tan(w a) = 0``

where ``c = 1/L`` and ``a = 1/2``; the eigenvalue is ``2c / (w**2 + c**2)``.
The 2D field uses tensor products of 1D modes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigurationError, SolverError

HALF_WIDTH = 0.5
_BRACKET_EPS = 1e-9


@dataclass(frozen=True)
class Kl1dMode:
    omega: float
    lambda_1d: float
    parity: str
    norm_const: float

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.parity == "even":
            return np.cos(self.omega * s) / self.norm_const
        return np.sin(self.omega * s) / self.norm_const

    def residual(self, c: float) -> float:
        """Residual of the transcendental equation defining ``omega``."""
        wa = self.omega * HALF_WIDTH
        if self.parity == "even":
            return c - self.omega * np.tan(wa)
        return self.omega + c * np.tan(wa)


def _root(parity: str, branch: int, c: float) -> float:
    a = HALF_WIDTH
    # Pole-free forms; even roots lie in (2m pi, (2m+1) pi), odd in ((2m+1) pi, (2m+2) pi)
    if parity == "even":
        g = lambda w: c * np.cos(w * a) - w * np.sin(w * a)  # noqa: E731
        lo, hi = 2 * branch * np.pi, (2 * branch + 1) * np.pi
    else:
        g = lambda w: w * np.cos(w * a) + c * np.sin(w * a)  # noqa: E731
        lo, hi = (2 * branch + 1) * np.pi, (2 * branch + 2) * np.pi
    lo = lo + _BRACKET_EPS
    hi = hi - _BRACKET_EPS
    glo, ghi = g(lo), g(hi)
    if glo * ghi > 0:
        raise SolverError(f"KL root bracketing failed for {parity} branch {branch}")
    return brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


def solve_covariance_eigenpairs_1d(L: float, count: int) -> list[Kl1dMode]:
    """Return the ``count`` largest eigenpairs of the 1D exponential kernel.

    Modes alternate even, odd, even, ...; eigenvalues are strictly decreasing.
    """
    if L <= 0:
        raise ConfigurationError("correlation length must be positive")
    if count < 1:
        raise ConfigurationError("count must be >= 1")
    c = 1.0 / L
    a = HALF_WIDTH
    modes = []
    for idx in range(count):
        parity = "even" if idx % 2 == 0 else "odd"
        w = _root(parity, idx // 2, c)
        lam = 2 * c / (w**2 + c**2)
        if parity == "even":
            nrm2 = a + np.sin(2 * w * a) / (2 * w)
        else:
            nrm2 = a - np.sin(2 * w * a) / (2 * w)
        modes.append(Kl1dMode(omega=w, lambda_1d=lam, parity=parity, norm_const=np.sqrt(nrm2)))
    return modes


@dataclass(frozen=True)
class KlExpansion:
    """Truncated 2D expansion with ``K`` modes sorted by decreasing eigenvalue.

    ``pairs[k] = (i, j)`` are zero-based 1D mode indices; the eigenfunction is
    ``modes_1d[i](x1) * modes_1d[j](x2)``.
    """

    L: float
    pairs: tuple[tuple[int, int], ...]
    lambdas: np.ndarray
    modes_1d: tuple[Kl1dMode, ...] = field(repr=False)

    @property
    def K(self) -> int:
        return len(self.pairs)

    def eigenfunction(self, k: int, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        i, j = self.pairs[k]
        return self.modes_1d[i](x[:, 0]) * self.modes_1d[j](x[:, 1])

    def eigenfunctions(self, x) -> np.ndarray:
        """Evaluate all K eigenfunctions at points ``x`` (shape (n, 2)); returns (n, K)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.stack([self.eigenfunction(k, x) for k in range(self.K)], axis=1)


def build_kl_2d(L: float, K: int) -> KlExpansion:
    if K < 1:
        raise ConfigurationError("K must be >= 1")
    # the K largest products only involve 1D indices < K
    modes = solve_covariance_eigenpairs_1d(L, K)
    lam = np.array([m.lambda_1d for m in modes])
    cand = [(lam[i] * lam[j], i, j) for i in range(K) for j in range(K)]
    # sort by eigenvalue desc, ties lexicographic in (i, j)
    cand.sort(key=lambda t: (-t[0], t[1], t[2]))
    chosen = cand[:K]
    return KlExpansion(
        L=L,
        pairs=tuple((i, j) for _, i, j in chosen),
        lambdas=np.array([v for v, _, _ in chosen]),
        modes_1d=tuple(modes),
    )


def evaluate_kl_field(kl: KlExpansion, kappa0: float, sigma: float, x, y) -> np.ndarray:
    """Pointwise value of ``kappa0 + sigma * sum_k sqrt(lambda_k) kappa_k(x) y_k``."""
    y = np.asarray(y, dtype=float)
    phi = kl.eigenfunctions(x)
    out = kappa0 + sigma * phi @ (np.sqrt(kl.lambdas) * y)
    return out if np.ndim(x) > 1 else out[0]
