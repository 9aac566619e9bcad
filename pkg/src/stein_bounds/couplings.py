"""Distributional transforms that generate Stein identities for sums.

The K-kernel of a centered summand, the zero-bias transform of a centered
law, and the size-bias transform of a nonnegative law.  All densities here
are piecewise constant with breakpoints at the atoms of the source law, so
integrals against polynomials are closed-form and sampling is exact
inverse-cdf — no quadrature, no rejection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import FiniteDist, IndepSumModel, make_finite, moments

__all__ = [
    "KKernel",
    "ZeroBias",
    "SizeBias",
    "k_kernel",
    "zero_bias",
    "zero_bias_indep_sampler",
    "size_bias",
]


@dataclass(frozen=True)
class _PiecewiseConstant:
    """Nonnegative piecewise-constant function on (breaks[k], breaks[k+1]]."""

    breaks: np.ndarray   # strictly increasing, len(values) + 1
    values: np.ndarray   # value on the k-th half-open interval

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.breaks, t_arr, side="left") - 1
        inside = (idx >= 0) & (idx < len(self.values))
        out = np.where(inside, self.values[np.clip(idx, 0, len(self.values) - 1)], 0.0)
        return float(out) if np.ndim(t) == 0 else out

    def integral(self) -> float:
        return float(math.fsum((self.values * np.diff(self.breaks)).tolist()))

    def moment(self, k: int) -> float:
        """integral of t^k times the function, exact per segment."""
        lo, hi = self.breaks[:-1], self.breaks[1:]
        seg = (hi ** (k + 1) - lo ** (k + 1)) / (k + 1)
        return float(math.fsum((self.values * seg).tolist()))

    def abs_first_moment(self) -> float:
        """integral of |t| times the function; assumes 0 is a breakpoint."""
        lo, hi = self.breaks[:-1], self.breaks[1:]
        seg = np.abs(hi * hi - lo * lo) / 2.0
        return float(math.fsum((self.values * seg).tolist()))

    def sample(self, rng: np.random.Generator, size: int, total: float) -> np.ndarray:
        """Inverse-cdf draws treating the function / total as a density."""
        seg_mass = self.values * np.diff(self.breaks) / total
        cum = np.concatenate([[0.0], np.cumsum(seg_mass)])
        cum[-1] = 1.0
        u = rng.random(size)
        idx = np.clip(np.searchsorted(cum, u, side="right") - 1, 0, len(self.values) - 1)
        frac = (u - cum[idx]) / np.maximum(seg_mass[idx], 1e-300)
        return self.breaks[idx] + frac * (self.breaks[idx + 1] - self.breaks[idx])


@dataclass(frozen=True)
class KKernel:
    """K_i(t) = E X_i [I(X_i > t > 0) - I(X_i < t <= 0)] for a centered X_i.

    Nonnegative, supported on [min atom, max atom], with total mass equal to
    the variance, so K_i / sigma_i^2 is a probability density.
    """

    source: FiniteDist
    pieces: _PiecewiseConstant
    total_mass: float

    def __call__(self, t):
        return self.pieces(t)

    def mean_abs(self) -> float:
        """E|T_i| for T_i ~ K_i / sigma_i^2; zero-mass kernels return 0."""
        if self.total_mass == 0:
            return 0.0
        return self.pieces.abs_first_moment() / self.total_mass

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.total_mass == 0:
            raise ValueError("cannot sample from a zero-mass kernel")
        return self.pieces.sample(rng, size, self.total_mass)


def k_kernel(x: FiniteDist) -> KKernel:
    """Exact K-kernel of one centered summand.

    Breakpoints are the atoms together with 0; between breakpoints the
    defining expectation is constant: for t > 0 it is the upper partial sum
    E X I(X > t), for t <= 0 the lower one -E X I(X < t).
    """
    mom = moments(x)
    if abs(mom.mean) > 1e-12:
        raise ValueError("K-kernel needs a centered law (|mean| <= 1e-12)")
    breaks = np.unique(np.concatenate([x.atoms, [0.0]]))
    mids = 0.5 * (breaks[:-1] + breaks[1:])
    ap = x.atoms * x.masses
    values = np.empty(len(mids))
    for k, t in enumerate(mids):
        if t > 0:
            values[k] = math.fsum(ap[x.atoms > t].tolist())
        else:
            values[k] = -math.fsum(ap[x.atoms < t].tolist())
    values = np.maximum(values, 0.0)  # exact nonnegativity, clear float dust
    pieces = _PiecewiseConstant(breaks=breaks, values=values)
    total = pieces.integral()
    if abs(total - mom.variance) > 1e-12 * max(1.0, mom.variance):
        raise AssertionError("kernel mass does not match the variance")
    return KKernel(source=x, pieces=pieces, total_mass=total)


@dataclass(frozen=True)
class ZeroBias:
    """The zero-bias transform W* of a centered W with variance B^2.

    W* is absolutely continuous with density E[W I(W > x)] / B^2, piecewise
    constant between the atoms of W; E W f(W) = B^2 E f'(W*) for absolutely
    continuous f.
    """

    base: FiniteDist
    b_squared: float
    pieces: _PiecewiseConstant
    sampler_spec: str = "inverse-cdf on the piecewise-constant density"

    def density(self, x):
        return self.pieces(x)

    def expect_power(self, k: int) -> float:
        """E (W*)^k, exact piecewise integration."""
        return self.pieces.moment(k)

    def expect_poly(self, coeffs) -> float:
        """E p(W*) for p given by ascending power coefficients."""
        return float(math.fsum(c * self.expect_power(k) for k, c in enumerate(coeffs)))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.pieces.sample(rng, size, 1.0)


def zero_bias(w: FiniteDist) -> ZeroBias:
    """Exact zero-bias transform of a centered finitely supported law."""
    mom = moments(w)
    if abs(mom.mean) > 1e-12:
        raise ValueError("zero bias needs a centered law (|mean| <= 1e-12)")
    if mom.variance <= 0:
        raise ValueError("zero bias needs positive variance")
    # E[W I(W > x)] for x in (a_k, a_{k+1}) is the suffix sum over atoms > x
    ap = w.atoms * w.masses
    suffix = np.concatenate([np.cumsum(ap[::-1])[::-1], [0.0]])  # suffix[k] = sum_{j>=k} a_j p_j
    values = np.maximum(suffix[1:-1], 0.0) / mom.variance
    pieces = _PiecewiseConstant(breaks=w.atoms.copy(), values=values)
    total = pieces.integral()
    if abs(total - 1.0) > 1e-10:
        raise AssertionError(f"zero-bias density integrates to {total}, not 1")
    return ZeroBias(base=w, b_squared=mom.variance, pieces=pieces)


def zero_bias_indep_sampler(
    m: IndepSumModel,
    rng: np.random.Generator,
    reps: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Coupled draws of (W, W*) for an independent-sum model with Var(W) = 1.

    One probability space per draw: all X_i are drawn, an index I is drawn
    with P(I = i) proportional to sigma_i^2, X_I* is drawn from the kernel
    density K_I / sigma_I^2 by exact inverse cdf, and W* = W - X_I + X_I*.
    Draw order (X matrix, then I, then X*) is fixed for reproducibility.
    """
    if not m.normalized:
        raise ValueError("sampler needs a normalized model (Var(W) = 1)")
    n = m.n
    variances = np.array([moments(c).variance for c in m.components])
    kernels = [k_kernel(c) for c in m.components]
    x = np.empty((reps, n))
    for i, comp in enumerate(m.components):
        x[:, i] = comp.sample(rng, reps)
    cum = np.cumsum(variances)
    cum[-1] = max(cum[-1], 1.0)
    index = np.searchsorted(cum, rng.random(reps), side="right").clip(0, n - 1)
    x_star = np.empty(reps)
    for i in range(n):
        mask = index == i
        if np.any(mask):
            x_star[mask] = kernels[i].sample(rng, int(mask.sum()))
    w = x.sum(axis=1)
    w_star = w - x[np.arange(reps), index] + x_star
    return w, w_star


@dataclass(frozen=True)
class SizeBias:
    """The size-bias transform Y^s of a nonnegative Y with mean mu.

    P(Y^s = y) = y P(Y = y) / mu, so E Y f(Y) = mu E f(Y^s) holds exactly for
    any f tabulated on the support.  Only the marginal transform is exposed;
    no canonical joint coupling of (Y, Y^s) exists in general, and bound
    quality in coupling-based identities depends on the coupling chosen.
    """

    base: FiniteDist
    transformed: FiniteDist
    mu: float
    truncation_deficit: float = 0.0


def size_bias(y: FiniteDist, truncation_deficit: float = 0.0) -> SizeBias:
    """Exact size-bias transform; atoms must be >= 0 with positive mean.

    Unbounded laws are supported only through finite truncations supplied by
    the caller; pass the discarded tail mass as ``truncation_deficit`` so the
    report carries it.
    """
    if np.any(y.atoms < 0):
        raise ValueError("size bias needs a nonnegative law")
    if not 0.0 <= truncation_deficit < 1.0:
        raise ValueError("truncation deficit must lie in [0, 1)")
    mu = moments(y).mean
    if mu <= 0:
        raise ValueError("size bias needs positive mean")
    transformed = make_finite(y.atoms, y.atoms * y.masses)
    return SizeBias(base=y, transformed=transformed, mu=mu,
                    truncation_deficit=truncation_deficit)
