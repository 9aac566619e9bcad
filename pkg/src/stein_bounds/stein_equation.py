"""Bounded solutions of f'(w) - w f(w) = h(w) - E h(Z) and their certificates.

Half-line indicators get the closed-form solution; Lipschitz and bounded test
functions are solved by adaptive quadrature of the tail representation that
never forms the raw exp(w^2/2) prefactor.  Every solution carries grid-based
sup-norm certificates for the constants the error bounds consume.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad
from scipy.special import erfcx

from .distances import normal_cdf, normal_pdf
from .distributions import FiniteDist

__all__ = [
    "TestFunction",
    "SteinSolution",
    "QuadratureError",
    "CertificateError",
    "indicator",
    "lipschitz",
    "bounded",
    "smoothed_indicator",
    "expect_normal",
    "solve_indicator",
    "solve_smooth",
    "solve",
    "ode_residual",
    "characterization_residual",
    "discrepancy_identity_check",
]

SQRT2 = math.sqrt(2.0)
SQRT_2PI = math.sqrt(2.0 * math.pi)

# Certificate grid: [-8, 8] with this default spacing.
CERT_RANGE = 8.0
CERT_STEP = 1e-2

# Centered-difference steps for residual checks: the closed-form indicator
# solution is noise-free so a tight step works; quadrature-backed solutions
# carry ~1e-13 absolute noise, so the step balances that against f''' error.
FD_STEP_CLOSED_FORM = 5e-7
FD_STEP_QUADRATURE = 5e-5


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the requested tolerance."""


class CertificateError(RuntimeError):
    """A computed solution violates a sup-norm fact it must satisfy."""


def _vectorized(fn: Callable) -> Callable:
    """Return a callable that accepts numpy arrays, wrapping scalar-only fns."""
    try:
        probe = fn(np.array([0.0, 0.5]))
        if np.shape(probe) == (2,):
            return fn
    except Exception:
        pass
    return np.vectorize(fn, otypes=[float])


@dataclass(frozen=True)
class TestFunction:
    """A test function h in one of the three separating classes.

    kind 'indicator': h(w) = I(w <= jump)            (Kolmogorov class)
    kind 'lipschitz': |h(u) - h(v)| <= lip_const|u-v| (Wasserstein class)
    kind 'bounded':   0 <= h <= sup_bound, continuous (total-variation class)

    Constructors spot-check the declared property: Lipschitz on random pairs,
    boundedness on a grid.
    """

    kind: str
    fn: Callable
    jump: float | None = None
    lip_const: float | None = None
    sup_bound: float | None = None
    label: str = ""

    def __call__(self, w):
        return self.fn(w)


def indicator(x: float) -> TestFunction:
    """h(w) = I(w <= x)."""
    if not math.isfinite(x):
        raise ValueError("jump point must be finite")

    def fn(w):
        out = (np.asarray(w, dtype=float) <= x).astype(float)
        return float(out) if np.ndim(w) == 0 else out

    return TestFunction(kind="indicator", fn=fn, jump=x, label=f"indicator({x:g})")


def lipschitz(h: Callable, lip_const: float, label: str = "", spot_checks: int = 64) -> TestFunction:
    """Wrap a Lipschitz test function, spot-checking the constant on random pairs."""
    if not (lip_const > 0 and math.isfinite(lip_const)):
        raise ValueError("lip_const must be positive and finite")
    fn = _vectorized(h)
    rng = np.random.default_rng(0)  # fixed: construction must be deterministic
    u = rng.uniform(-8, 8, spot_checks)
    v = rng.uniform(-8, 8, spot_checks)
    gaps = np.abs(fn(u) - fn(v)) - lip_const * np.abs(u - v)
    if np.any(gaps > 1e-9):
        raise ValueError("function violates the declared Lipschitz constant")
    return TestFunction(kind="lipschitz", fn=fn, lip_const=lip_const, label=label or "lipschitz")


def bounded(h: Callable, sup_bound: float, label: str = "") -> TestFunction:
    """Wrap a continuous [0, sup_bound]-valued test function, grid-checked."""
    if not (sup_bound > 0 and math.isfinite(sup_bound)):
        raise ValueError("sup_bound must be positive and finite")
    fn = _vectorized(h)
    grid = np.linspace(-10, 10, 2001)
    vals = fn(grid)
    if np.any(vals < -1e-12) or np.any(vals > sup_bound + 1e-12):
        raise ValueError("function leaves [0, sup_bound] on the check grid")
    return TestFunction(kind="bounded", fn=fn, sup_bound=sup_bound, label=label or "bounded")


def smoothed_indicator(x: float, eps: float) -> TestFunction:
    """Continuous surrogate for I(w <= x): falls linearly to 0 over [x, x+eps].

    Lies in [0, 1] and is (1/eps)-Lipschitz, so it serves both the
    total-variation and Wasserstein classes.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")

    def fn(w):
        out = np.clip((x + eps - np.asarray(w, dtype=float)) / eps, 0.0, 1.0)
        return float(out) if np.ndim(w) == 0 else out

    return TestFunction(
        kind="bounded", fn=fn, sup_bound=1.0, lip_const=1.0 / eps,
        label=f"smoothed_indicator({x:g},{eps:g})",
    )


def expect_normal(fn: Callable, tol: float = 1e-12) -> float:
    """E fn(Z) by adaptive quadrature of fn * pdf over the real line."""
    val, err = quad(lambda t: fn(t) * normal_pdf(t), -np.inf, np.inf,
                    epsabs=tol, epsrel=tol, limit=300)
    if err > 1e-10:
        raise QuadratureError(f"E h(Z) quadrature error estimate {err:.2e} exceeds 1e-10")
    return float(val)


@dataclass(frozen=True)
class SteinSolution:
    """An evaluable solution f with its derivative and sup-norm certificates.

    ``f_prime`` is recovered from the equation itself, f'(w) = w f(w) + h(w) -
    E h(Z), so residual checks must differentiate ``f`` numerically to stay
    independent (see :func:`ode_residual`).  ``norm_*`` are maxima over the
    certificate grid; ``norm_f_double_prime`` is None for indicator solutions,
    whose derivative jumps at the indicator's discontinuity.
    """

    test_fn: TestFunction
    f: Callable
    f_prime: Callable
    norm_f: float
    norm_f_prime: float
    norm_f_double_prime: float | None
    eh_z: float
    fd_step: float

    def evaluate(self, w):
        """(f(w), f'(w)) with a single evaluation of f."""
        w_arr = np.asarray(w, dtype=float)
        fv = np.asarray(self.f(w_arr))
        fpv = w_arr * fv + self.test_fn.fn(w_arr) - self.eh_z
        return fv, fpv

    def residual_grid(self, lo: float = -CERT_RANGE, hi: float = CERT_RANGE,
                      step: float = 1e-3) -> float:
        return ode_residual(self, lo=lo, hi=hi, step=step)


def solve_indicator(x: float) -> SteinSolution:
    """Closed-form bounded solution for h(w) = I(w <= x).

    f_x(w) = sqrt(2 pi) e^{w^2/2} Phi(min(w,x)) (1 - Phi(max(w,x))), evaluated
    in the overflow-free scaled-erfc form
    sqrt(2 pi)/4 * erfcx(-min/sqrt2) * erfcx(max/sqrt2) * e^{-x^2/2}.
    The derivative follows from the equation, with the h = 1 branch taken at
    the jump itself (one-sided).
    """
    if not math.isfinite(x):
        raise ValueError("jump point must be finite")
    h = indicator(x)
    phi_x = normal_cdf(x)
    tail_factor = (SQRT_2PI / 4.0) * math.exp(-0.5 * x * x)

    def f(w):
        w_arr = np.asarray(w, dtype=float)
        u = np.minimum(w_arr, x)
        v = np.maximum(w_arr, x)
        out = tail_factor * erfcx(-u / SQRT2) * erfcx(v / SQRT2)
        return float(out) if np.ndim(w) == 0 else out

    def f_prime(w):
        w_arr = np.asarray(w, dtype=float)
        out = w_arr * f(w_arr) + (w_arr <= x) - phi_x
        return float(out) if np.ndim(w) == 0 else out

    grid = np.arange(-CERT_RANGE, CERT_RANGE + CERT_STEP / 2, CERT_STEP)
    grid = np.unique(np.concatenate([grid, [x, x - 1e-9, x + 1e-9]]))
    norm_f = float(np.max(np.abs(f(grid))))
    norm_fp = float(np.max(np.abs(f_prime(grid))))
    # the facts every Kolmogorov bound uses; beyond the grid both norms decay
    if norm_f > 1.0 or norm_fp > 1.0:
        raise CertificateError("indicator solution norms exceed 1")
    return SteinSolution(
        test_fn=h, f=f, f_prime=f_prime,
        norm_f=norm_f, norm_f_prime=norm_fp, norm_f_double_prime=None,
        eh_z=phi_x, fd_step=FD_STEP_CLOSED_FORM,
    )


def _solve_quadrature_value(g: Callable, w: float, tol: float) -> float:
    """One point of the bounded solution, in the scaled tail form.

    For w <= 0:  f(w) =  int_0^inf g(w-s) exp(ws - s^2/2) ds
    for w  > 0:  f(w) = -int_0^inf g(w+s) exp(-ws - s^2/2) ds
    which are the left/right representations of
    e^{w^2/2} int_{-inf}^{w} g(t) e^{-t^2/2} dt without the explosive prefactor.
    """
    if w <= 0:
        integrand = lambda s: g(w - s) * math.exp(w * s - 0.5 * s * s)
        sign = 1.0
    else:
        integrand = lambda s: g(w + s) * math.exp(-w * s - 0.5 * s * s)
        sign = -1.0
    val, err = quad(integrand, 0.0, np.inf, epsabs=tol, epsrel=tol, limit=200)
    if err > 1e-10:
        raise QuadratureError(
            f"solution quadrature at w={w:g}: error estimate {err:.2e} exceeds 1e-10"
        )
    return sign * val


def solve_smooth(
    h: TestFunction,
    cert_step: float = CERT_STEP,
    quad_tol: float = 1e-13,
) -> SteinSolution:
    """Quadrature-backed bounded solution for Lipschitz or bounded test functions.

    Verifies the classical sup-norm facts on the certificate grid:
    Lipschitz h: ||f'|| <= lip_const and ||f''|| <= 2 lip_const;
    bounded  h: ||f'|| <= 2 sup_bound (no second-derivative certificate).
    """
    if h.kind == "indicator":
        raise ValueError("use solve_indicator for indicator test functions")
    if h.kind not in ("lipschitz", "bounded"):
        raise ValueError(f"unknown test-function kind {h.kind!r}")
    eh_z = expect_normal(h.fn)
    g = lambda t: h.fn(t) - eh_z

    def f(w):
        if np.ndim(w) == 0:
            return _solve_quadrature_value(g, float(w), quad_tol)
        w_arr = np.asarray(w, dtype=float)
        return np.array([_solve_quadrature_value(g, float(wi), quad_tol) for wi in w_arr])

    def f_prime(w):
        w_arr = np.asarray(w, dtype=float)
        out = w_arr * f(w_arr) + h.fn(w_arr) - eh_z
        return float(out) if np.ndim(w) == 0 else out

    grid = np.arange(-CERT_RANGE, CERT_RANGE + cert_step / 2, cert_step)
    f_grid = f(grid)
    fp_grid = grid * f_grid + h.fn(grid) - eh_z
    norm_f = float(np.max(np.abs(f_grid)))
    norm_fp = float(np.max(np.abs(fp_grid)))
    fpp_grid = np.diff(fp_grid) / np.diff(grid)
    norm_fpp = float(np.max(np.abs(fpp_grid)))

    slack = 1e-7
    if h.kind == "lipschitz":
        if norm_fp > h.lip_const + slack:
            raise CertificateError(
                f"||f'|| grid max {norm_fp:.6g} exceeds Lipschitz cap {h.lip_const:g}"
            )
        if norm_fpp > 2.0 * h.lip_const + slack:
            raise CertificateError(
                f"||f''|| grid max {norm_fpp:.6g} exceeds cap {2 * h.lip_const:g}"
            )
        norm_fpp_out: float | None = norm_fpp
    else:
        if norm_fp > 2.0 * h.sup_bound + slack:
            raise CertificateError(
                f"||f'|| grid max {norm_fp:.6g} exceeds bounded cap {2 * h.sup_bound:g}"
            )
        # a ramp-type bounded h still has a usable grid second derivative, but
        # no theorem caps it, so it is reported without being enforced
        norm_fpp_out = norm_fpp
    return SteinSolution(
        test_fn=h, f=f, f_prime=f_prime,
        norm_f=norm_f, norm_f_prime=norm_fp, norm_f_double_prime=norm_fpp_out,
        eh_z=eh_z, fd_step=FD_STEP_QUADRATURE,
    )


def solve(h: TestFunction, **kwargs) -> SteinSolution:
    """Dispatch on test-function kind."""
    if h.kind == "indicator":
        return solve_indicator(h.jump)
    return solve_smooth(h, **kwargs)


def _fd_derivative(sol: SteinSolution, w: np.ndarray) -> np.ndarray:
    """Centered-difference derivative of sol.f, one-sided via the stored
    derivative within 2 steps of an indicator jump (where the stencil would
    straddle the kink)."""
    w = np.asarray(w, dtype=float)
    d = sol.fd_step
    fd = (np.asarray(sol.f(w + d)) - np.asarray(sol.f(w - d))) / (2.0 * d)
    jump = sol.test_fn.jump
    if jump is not None:
        near = np.abs(w - jump) <= 2.0 * d
        if np.any(near):
            fd = np.where(near, np.asarray(sol.f_prime(w)), fd)
    return fd


def ode_residual(sol: SteinSolution, lo: float = -CERT_RANGE, hi: float = CERT_RANGE,
                 step: float = 1e-3) -> float:
    """max over the grid of |f'(w) - w f(w) - (h(w) - E h(Z))|.

    The derivative is estimated by centered differences so the check is
    independent of the stored equation-form derivative.  Points within 1e-6
    of an indicator jump are excluded.
    """
    grid = np.arange(lo, hi + step / 2, step)
    jump = sol.test_fn.jump
    if jump is not None:
        grid = grid[np.abs(grid - jump) > 1e-6]
    fd = _fd_derivative(sol, grid)
    res = fd - grid * np.asarray(sol.f(grid)) - (sol.test_fn.fn(grid) - sol.eh_z)
    return float(np.max(np.abs(res)))


def characterization_residual(w, f, f_prime: Callable | None = None) -> float:
    """E[f'(W) - W f(W)]: exact over a FiniteDist, sample mean otherwise.

    ``f`` may be a SteinSolution or a plain callable with ``f_prime`` given.
    Zero for all admissible f characterizes the standard normal, so the size
    of the residual measures departure from normality.
    """
    if isinstance(f, SteinSolution):
        def residual_values(a):
            fv, fpv = f.evaluate(a)
            return fpv - np.asarray(a) * fv
    else:
        if f_prime is None:
            raise ValueError("plain-callable form needs f_prime")

        def residual_values(a):
            return np.asarray(f_prime(a)) - np.asarray(a) * np.asarray(f(a))

    if isinstance(w, FiniteDist):
        return w.expect(residual_values)
    values = np.asarray(getattr(w, "values", w), dtype=float)
    return float(np.mean(residual_values(values)))


def discrepancy_identity_check(w: FiniteDist, h: TestFunction,
                               sol: SteinSolution | None = None) -> tuple[float, float]:
    """Both sides of E h(W) - E h(Z) = E[f'(W) - W f(W)], computed separately.

    The left side is the exact atom expectation minus E h(Z); the right side
    evaluates the solution with a finite-difference derivative, so agreement
    within 1e-7 genuinely certifies the solution rather than restating it.
    """
    if sol is None:
        sol = solve(h)
    lhs = w.expect(h.fn) - sol.eh_z
    fd = _fd_derivative(sol, w.atoms)
    rhs = float(math.fsum((w.masses * (fd - w.atoms * np.asarray(sol.f(w.atoms)))).tolist()))
    return lhs, rhs
