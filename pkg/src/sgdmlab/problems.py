"""Convex test objectives and stochastic-gradient oracles.

Every objective exposes a batched interface: ``eval`` accepts ``(d,)`` or
``(m, d)`` arrays and returns a scalar or ``(m,)``; ``grad`` preserves the
input shape. This keeps ensemble runners vectorized across Monte-Carlo runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

__all__ = [
    "Objective",
    "NoiseModel",
    "quadratic_new",
    "logreg_new",
    "fstar_refine",
    "sample_gradient",
    "synthetic_blobs",
    "load_csv_dataset",
]


@dataclass(frozen=True)
class Objective:
    """A differentiable convex objective with exact gradient and reference optimum.

    ``lipschitz`` is the gradient Lipschitz constant; ``fstar``/``xstar`` are
    the (possibly refined) minimal value and minimizer.
    """

    dim: int
    eval: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    lipschitz: float
    fstar: float
    xstar: np.ndarray
    name: str = "objective"

    def f_gap(self, x: np.ndarray) -> np.ndarray:
        """f(x) - f*, batched like ``eval``."""
        return self.eval(x) - self.fstar


@dataclass(frozen=True)
class NoiseModel:
    """Distribution of the additive gradient perturbation.

    ``sigma2`` is the second-moment constant E[||xi||^2] entering the variance
    bound of the stochastic gradient; ``hp_sigma2`` is the (different)
    sub-Gaussian scale certified to satisfy E[exp(||xi||^2 / hp_sigma2)] <= e.
    The two scales share a symbol in the underlying analysis but are distinct
    quantities and are never conflated here.
    """

    kind: str  # "gaussian_isotropic" | "bounded_uniform"
    dim: int
    scale: float  # per-coordinate std (gaussian) or half-width (uniform)
    sigma2: float
    hp_sigma2: float

    @staticmethod
    def gaussian(dim: int, per_coord_var: float) -> "NoiseModel":
        """Isotropic Gaussian noise N(0, s^2 I) with s^2 = per_coord_var.

        The sub-Gaussian scale is set conservatively to
        ``2 * dim * s^2 / (1 - exp(-2/dim))``, which makes the exponential
        moment E[exp(||xi||^2 / hp_sigma2)] = (1 - 2 s^2/hp_sigma2)^(-dim/2)
        at most e with ample margin.
        """
        if per_coord_var < 0:
            raise ValueError("per_coord_var must be >= 0")
        s2 = float(per_coord_var)
        if s2 == 0.0:
            hp = 0.0
        else:
            hp = 2.0 * dim * s2 / (1.0 - np.exp(-2.0 / dim))
        return NoiseModel("gaussian_isotropic", dim, np.sqrt(s2), dim * s2, hp)

    @staticmethod
    def bounded_uniform(dim: int, half_width: float) -> "NoiseModel":
        """Coordinate-wise uniform noise on [-a, a] with a = half_width.

        ||xi||^2 <= dim * a^2 deterministically, so hp_sigma2 = dim * a^2
        satisfies the exponential-moment condition with equality at the corner.
        """
        if half_width < 0:
            raise ValueError("half_width must be >= 0")
        a = float(half_width)
        return NoiseModel("bounded_uniform", dim, a, dim * a * a / 3.0, dim * a * a)

    @staticmethod
    def noiseless(dim: int) -> "NoiseModel":
        return NoiseModel("gaussian_isotropic", dim, 0.0, 0.0, 0.0)

    def sample(self, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
        """Draw one ``(dim,)`` sample or a batch ``(n, dim)``."""
        shape = (self.dim,) if n is None else (n, self.dim)
        if self.scale == 0.0:
            return np.zeros(shape)
        if self.kind == "gaussian_isotropic":
            return self.scale * rng.standard_normal(shape)
        if self.kind == "bounded_uniform":
            return rng.uniform(-self.scale, self.scale, shape)
        raise ValueError(f"unknown noise kind {self.kind!r}")


def _largest_eigenvalue(A: np.ndarray, tol: float = 1e-10) -> float:
    """lambda_max of a symmetric PSD matrix.

    Dense symmetric eigensolve for dim <= 64; power iteration to ``tol``
    relative change otherwise (desk-scale problems never hit that branch).
    """
    n = A.shape[0]
    if n <= 64:
        return float(np.linalg.eigvalsh(A)[-1])
    rng = np.random.default_rng(0)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(100_000):
        w = A @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        lam_new = float(v @ (A @ v))
        if abs(lam_new - lam) <= tol * max(1.0, abs(lam_new)):
            return lam_new
        lam = lam_new
    return lam


def quadratic_new(A: np.ndarray) -> Objective:
    """Objective f(x) = 0.5 x^T A x for symmetric PSD ``A``.

    ``A`` is symmetrized as (A + A^T)/2; eigenvalues below -1e-10 are
    rejected with a diagnostic naming the most negative one.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got shape {A.shape}")
    A = 0.5 * (A + A.T)
    eigs = np.linalg.eigvalsh(A)
    if eigs[0] < -1e-10:
        raise ValueError(
            f"matrix is not positive semidefinite: most negative eigenvalue {eigs[0]:.6e}"
        )
    dim = A.shape[0]

    def f(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return 0.5 * np.sum((x @ A) * x, axis=-1)

    def g(x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) @ A

    return Objective(
        dim=dim,
        eval=f,
        grad=g,
        lipschitz=float(eigs[-1]),
        fstar=0.0,
        xstar=np.zeros(dim),
        name=f"quadratic{dim}d",
    )


def logreg_new(features: np.ndarray, labels: np.ndarray, refine_tol: float = 1e-10) -> Objective:
    """Average logistic loss over a binary dataset.

    f(b) = mean_i [ log(1 + exp(x_i^T b)) - y_i x_i^T b ], the negated
    average log-likelihood, so the task is a minimization. The smoothness
    constant is lambda_max(X^T X) / (4 N). The reference optimum is filled by
    :func:`fstar_refine` unless ``refine_tol`` is None.
    """
    X = np.atleast_2d(np.asarray(features, dtype=float))
    y = np.asarray(labels, dtype=float).ravel()
    N, d = X.shape
    if N == 0:
        raise ValueError("dataset must contain at least one sample")
    if y.shape[0] != N:
        raise ValueError(f"got {N} feature rows but {y.shape[0]} labels")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("labels must lie in {0, 1}")
    L = _largest_eigenvalue(X.T @ X) / (4.0 * N)

    def f(beta: np.ndarray) -> np.ndarray:
        beta = np.asarray(beta, dtype=float)
        z = beta @ X.T  # (..., N)
        return np.mean(np.logaddexp(0.0, z) - y * z, axis=-1)

    def g(beta: np.ndarray) -> np.ndarray:
        beta = np.asarray(beta, dtype=float)
        z = beta @ X.T
        p = 1.0 / (1.0 + np.exp(-z))
        return (p - y) @ X / N

    obj = Objective(
        dim=d,
        eval=f,
        grad=g,
        lipschitz=L,
        fstar=float(f(np.zeros(d))),
        xstar=np.zeros(d),
        name=f"logreg{d}d",
    )
    if refine_tol is not None:
        fstar, xstar = fstar_refine(obj, refine_tol)
        obj = replace(obj, fstar=fstar, xstar=xstar)
    return obj


def fstar_refine(
    obj: Objective, tol: float, max_iter: int = 200_000
) -> tuple[float, np.ndarray]:
    """Refine (f*, x*) by accelerated full-gradient descent.

    Uses the 1/L step with Nesterov extrapolation and gradient-based
    adaptive restarts, which handles the poorly conditioned logistic
    problems that plain gradient descent stalls on. Returns the analytic
    optimum unchanged when it already satisfies the tolerance
    (quadratics). Raises if ``||grad|| > tol`` persists after ``max_iter``
    iterations.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    x = np.array(obj.xstar, dtype=float)
    if np.linalg.norm(obj.grad(x)) <= tol:
        return float(obj.eval(x)), x
    step = 1.0 / max(obj.lipschitz, 1e-12)
    y = x.copy()
    t = 1.0
    for _ in range(max_iter):
        gy = obj.grad(y)
        x_new = y - step * gy
        if float(gy @ (x_new - x)) > 0.0:
            # extrapolation overshot: restart the momentum sequence
            t = 1.0
            x_new = x - step * obj.grad(x)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = x_new + ((t - 1.0) / t_new) * (x_new - x)
        t = t_new
        x = x_new
        if np.linalg.norm(obj.grad(x)) <= tol:
            return float(obj.eval(x)), x
    raise RuntimeError(
        f"optimum refinement did not reach ||grad|| <= {tol:g} "
        f"within {max_iter} iterations (current {np.linalg.norm(obj.grad(x)):.3e})"
    )


def sample_gradient(
    obj: Objective, noise: NoiseModel, x: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """One stochastic-gradient draw grad(x) + xi; deterministic given the rng state."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("query point must be finite")
    return obj.grad(x) + noise.sample(rng)


def synthetic_blobs(
    n_samples: int, dim: int, seed: int, separation: float = 1.0
) -> tuple[np.ndarray, np.ndarray]:
    """Seeded two-class Gaussian-blob dataset with labels in {0, 1}.

    Class means sit at +-separation/2 along a random unit direction, keeping
    the classes overlapping so the logistic optimum stays finite.
    """
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(dim)
    u /= np.linalg.norm(u)
    y = (rng.random(n_samples) < 0.5).astype(float)
    X = rng.standard_normal((n_samples, dim)) + np.outer(2.0 * y - 1.0, 0.5 * separation * u)
    return X, y


def load_csv_dataset(path: str) -> tuple[np.ndarray, np.ndarray]:
    """Load a `y,x1,...,xd` CSV (header row required); labels must be {0, 1}."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    y = data[:, 0]
    X = data[:, 1:]
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("labels column must contain only 0 or 1")
    return X, y
