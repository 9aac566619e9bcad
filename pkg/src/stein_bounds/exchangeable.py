"""Exchangeable pairs: the swap-one-summand and transpose-a-permutation
constructions, exact enumeration of their joint laws, and the conditional
moments that feed the exchangeable-pair error bounds.

Two built-in constructions:
  * independent sums: W' = W - X_I + X_I' with a uniform index I and an
    independent copy X', which satisfies E(W'|W) = (1 - 1/n) W;
  * permutation sums over a zero-row/column-sum matrix: W = sum_i c_{i,pi(i)}
    with a uniform random transposition applied to pi, which satisfies
    E(W'|W) = (1 - 2/(n-1)) W.
Both regression coefficients are confirmed by the enumeration oracle rather
than assumed.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .distributions import FiniteDist, IndepSumModel, _merge_atoms, moments, sum_law

__all__ = [
    "CombinatorialModel",
    "PairLaw",
    "PairStats",
    "lambda_indep",
    "lambda_comb",
    "perm_sum_variance",
    "pair_indep",
    "pair_comb",
    "sample_pair_indep",
    "sample_pair_comb",
    "enumerate_pair_indep",
    "enumerate_pair_comb",
    "regression_check",
    "antisymmetry_check",
    "pair_stats",
    "generator_identity_residual",
]

MIN_MC_REPS = 1000


def lambda_indep(n: int) -> float:
    """Regression coefficient for the swap-one-summand pair."""
    return 1.0 / n


def lambda_comb(n: int) -> float:
    """Regression coefficient for the random-transposition pair."""
    return 2.0 / (n - 1)


def perm_sum_variance(c: np.ndarray) -> float:
    """Var of sum_i c_{i,pi(i)} over a uniform permutation, for a matrix with
    zero row and column sums: sum c_ij^2 / (n - 1).  Validated against full
    enumeration in the test suite before being relied on.
    """
    n = c.shape[0]
    return float(np.sum(c * c) / (n - 1))


@dataclass(frozen=True)
class CombinatorialModel:
    """An n x n real matrix with zero row and column sums (within 1e-10).

    ``unit_variance`` instances additionally have Var(W) = 1 within 1e-8 for
    W = sum_i c_{i,pi(i)} under a uniform random permutation; the loader and
    the random generator always produce such instances, while direct
    construction also admits degenerate matrices (e.g. the zero matrix) for
    which no rescaling exists.
    """

    c: np.ndarray
    unit_variance: bool = False

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        object.__setattr__(self, "c", c)
        if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] < 2:
            raise ValueError("need a square matrix with n >= 2")
        scale = max(1.0, float(np.max(np.abs(c))))
        if np.max(np.abs(c.sum(axis=0))) > 1e-10 * scale or np.max(np.abs(c.sum(axis=1))) > 1e-10 * scale:
            raise ValueError("row and column sums must vanish within 1e-10")
        if self.unit_variance and abs(perm_sum_variance(c) - 1.0) > 1e-8:
            raise ValueError("unit-variance model must have Var(W) = 1 within 1e-8")

    @property
    def n(self) -> int:
        return self.c.shape[0]

    def normalized(self) -> "CombinatorialModel":
        """Rescale to Var(W) = 1; rejects degenerate (constant-W) matrices."""
        var = perm_sum_variance(self.c)
        if var <= 0:
            raise ValueError("degenerate matrix: W is almost surely constant")
        return CombinatorialModel(self.c / math.sqrt(var), unit_variance=True)

    @staticmethod
    def from_csv(path) -> tuple["CombinatorialModel", dict]:
        """Load n rows of n comma-separated reals, re-center rows then columns,
        rescale to Var(W) = 1, and report the adjustments applied.
        """
        raw = np.loadtxt(path, delimiter=",", ndmin=2)
        if raw.shape[0] != raw.shape[1]:
            raise ValueError(f"{path}: matrix must be square, got {raw.shape}")
        c = raw - raw.mean(axis=1, keepdims=True)
        c = c - c.mean(axis=0, keepdims=True)
        var = perm_sum_variance(c)
        if var <= 0:
            raise ValueError(f"{path}: matrix is degenerate after centering")
        scale = 1.0 / math.sqrt(var)
        adjustments = {
            "max_row_shift": float(np.max(np.abs(raw.mean(axis=1)))),
            "max_col_shift": float(np.max(np.abs((raw - raw.mean(axis=1, keepdims=True)).mean(axis=0)))),
            "scale": scale,
        }
        return CombinatorialModel(c * scale, unit_variance=True), adjustments


@dataclass(frozen=True)
class PairLaw:
    """Exact joint law of (W, W') on a shared atom grid.

    Stored sparsely: entry k has P(W = atoms[ia[k]], W' = atoms[ib[k]]) = p[k],
    with (ia, ib) pairs unique.
    """

    atoms: np.ndarray
    ia: np.ndarray
    ib: np.ndarray
    p: np.ndarray

    def marginal(self) -> FiniteDist:
        masses = np.bincount(self.ia, weights=self.p, minlength=len(self.atoms))
        keep = masses > 0
        return FiniteDist(self.atoms[keep], masses[keep] / math.fsum(masses.tolist()))

    def symmetry_gap(self) -> float:
        """max |P(W=a, W'=b) - P(W=b, W'=a)|: zero iff the pair is exchangeable."""
        table: dict[tuple[int, int], float] = {}
        for a, b, pr in zip(self.ia.tolist(), self.ib.tolist(), self.p.tolist()):
            table[(a, b)] = table.get((a, b), 0.0) + pr
        gap = 0.0
        for (a, b), pr in table.items():
            gap = max(gap, abs(pr - table.get((b, a), 0.0)))
        return gap

    def expect(self, fn: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> float:
        values = np.asarray(fn(self.atoms[self.ia], self.atoms[self.ib]), dtype=float)
        return float(math.fsum((self.p * values).tolist()))

    def second_moment(self) -> float:
        return self.expect(lambda w, wp: w * w)


def _snap(values: np.ndarray, atoms: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Indices of the nearest atom for each value; errors if any value is not
    genuinely one of the atoms up to float noise."""
    idx = np.clip(np.searchsorted(atoms, values), 0, len(atoms) - 1)
    left = np.clip(idx - 1, 0, len(atoms) - 1)
    pick_left = np.abs(values - atoms[left]) < np.abs(values - atoms[idx])
    idx = np.where(pick_left, left, idx)
    if np.any(np.abs(values - atoms[idx]) > tol * np.maximum(1.0, np.abs(values))):
        raise AssertionError("value does not match any atom of the joint grid")
    return idx


def _accumulate_pairs(atoms: np.ndarray, ia: np.ndarray, ib: np.ndarray,
                      p: np.ndarray) -> PairLaw:
    key = ia.astype(np.int64) * len(atoms) + ib
    order = np.argsort(key, kind="stable")
    key, p = key[order], p[order]
    first = np.ones(len(key), dtype=bool)
    first[1:] = key[1:] != key[:-1]
    group = np.cumsum(first) - 1
    summed = np.bincount(group, weights=p)
    uk = key[first]
    return PairLaw(atoms=atoms, ia=(uk // len(atoms)).astype(int),
                   ib=(uk % len(atoms)).astype(int), p=summed)


def enumerate_pair_indep(m: IndepSumModel) -> PairLaw:
    """Exact joint law of (W, W - X_I + X_I') by conditioning on the index.

    For each i the leave-one-out sum is enumerated once, so the state count
    stays at sum_i |supp(W^(i))| * |supp(X_i)|^2 rather than the full product
    space.
    """
    law = sum_law(m)
    atoms = law.atoms
    all_ia, all_ib, all_p = [], [], []
    for i, comp in enumerate(m.components):
        rest_components = tuple(c for j, c in enumerate(m.components) if j != i)
        if rest_components:
            rest = sum_law(IndepSumModel(components=rest_components))
            r_atoms, r_masses = rest.atoms, rest.masses
        else:
            r_atoms, r_masses = np.array([0.0]), np.array([1.0])
        shape = (len(r_atoms), comp.support_size, comp.support_size)
        w = np.broadcast_to(r_atoms[:, None, None] + comp.atoms[None, :, None], shape).ravel()
        wp = np.broadcast_to(r_atoms[:, None, None] + comp.atoms[None, None, :], shape).ravel()
        prob = (
            r_masses[:, None, None]
            * comp.masses[None, :, None]
            * comp.masses[None, None, :]
        ).ravel() / m.n
        all_ia.append(_snap(w, atoms))
        all_ib.append(_snap(wp, atoms))
        all_p.append(prob)
    return _accumulate_pairs(atoms, np.concatenate(all_ia), np.concatenate(all_ib),
                             np.concatenate(all_p))


def perm_sum_law(cm: CombinatorialModel) -> FiniteDist:
    """Exact law of W = sum_i c_{i,pi(i)} by enumeration over all n! permutations."""
    n = cm.n
    values = np.array([cm.c[np.arange(n), perm].sum()
                       for perm in itertools.permutations(range(n))])
    atoms, masses = _merge_atoms(values, np.full(len(values), 1.0 / len(values)), 1e-12)
    return FiniteDist(atoms, masses / math.fsum(masses.tolist()))


def enumerate_pair_comb(cm: CombinatorialModel) -> PairLaw:
    """Exact joint law of (W, W') over all permutations and transpositions.

    (I, J) is uniform over ordered pairs i != j, but the update is symmetric
    in I and J, so unordered pairs are enumerated with doubled weight.
    """
    n = cm.n
    perms = list(itertools.permutations(range(n)))
    rows = np.arange(n)
    w_values = np.array([cm.c[rows, perm].sum() for perm in perms])
    atoms, _ = _merge_atoms(w_values, np.full(len(w_values), 1.0 / len(w_values)), 1e-12)

    pair_i, pair_j = np.triu_indices(n, k=1)
    n_pairs = len(pair_i)
    weight = 2.0 / (len(perms) * n * (n - 1))

    all_ia, all_ib, all_p = [], [], []
    for w, perm in zip(w_values, perms):
        perm_arr = np.asarray(perm)
        wp = (
            w
            - cm.c[pair_i, perm_arr[pair_i]]
            - cm.c[pair_j, perm_arr[pair_j]]
            + cm.c[pair_i, perm_arr[pair_j]]
            + cm.c[pair_j, perm_arr[pair_i]]
        )
        all_ia.append(np.full(n_pairs, _snap(np.array([w]), atoms)[0]))
        all_ib.append(_snap(wp, atoms))
        all_p.append(np.full(n_pairs, weight))
    return _accumulate_pairs(atoms, np.concatenate(all_ia), np.concatenate(all_ib),
                             np.concatenate(all_p))


def sample_pair_indep(m: IndepSumModel, rng: np.random.Generator,
                      reps: int) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo draws of the swap-one-summand pair."""
    n = m.n
    x = np.empty((reps, n))
    x_new = np.empty((reps, n))
    for i, comp in enumerate(m.components):
        x[:, i] = comp.sample(rng, reps)
    for i, comp in enumerate(m.components):
        x_new[:, i] = comp.sample(rng, reps)
    index = rng.integers(0, n, size=reps)
    w = x.sum(axis=1)
    rows = np.arange(reps)
    return w, w - x[rows, index] + x_new[rows, index]


def sample_pair_comb(cm: CombinatorialModel, rng: np.random.Generator,
                     reps: int) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo draws of the random-transposition pair."""
    n = cm.n
    perms = np.argsort(rng.random((reps, n)), axis=1)
    rows = np.arange(reps)
    w = cm.c[np.arange(n)[None, :], perms].sum(axis=1)
    ordered = rng.integers(0, n * (n - 1), size=reps)
    i = ordered // (n - 1)
    j = ordered % (n - 1)
    j = np.where(j >= i, j + 1, j)
    wp = (
        w
        - cm.c[i, perms[rows, i]]
        - cm.c[j, perms[rows, j]]
        + cm.c[i, perms[rows, j]]
        + cm.c[j, perms[rows, i]]
    )
    return w, wp


def pair_indep(m: IndepSumModel, rng: np.random.Generator) -> tuple[float, float]:
    """One draw of the swap-one-summand exchangeable pair."""
    w, wp = sample_pair_indep(m, rng, 1)
    return float(w[0]), float(wp[0])


def pair_comb(cm: CombinatorialModel, rng: np.random.Generator) -> tuple[float, float]:
    """One draw of the random-transposition exchangeable pair."""
    w, wp = sample_pair_comb(cm, rng, 1)
    return float(w[0]), float(wp[0])


def regression_check(pair: PairLaw, lam: float) -> float:
    """max over atoms w of |E(W'|W=w) - (1-lam) w|.

    This is the gatekeeper for every exchangeable-pair bound: the bounds are
    only valid when the linear regression property holds exactly.
    """
    k = len(pair.atoms)
    mass = np.bincount(pair.ia, weights=pair.p, minlength=k)
    wp_sum = np.bincount(pair.ia, weights=pair.p * pair.atoms[pair.ib], minlength=k)
    live = mass > 0
    cond_mean = wp_sum[live] / mass[live]
    return float(np.max(np.abs(cond_mean - (1.0 - lam) * pair.atoms[live])))


def antisymmetry_check(
    source,
    f: Callable,
    reps: int | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[float, float]:
    """E (W'-W)(f(W') + f(W)), which vanishes for any exchangeable pair.

    Exact (std err 0) when given a PairLaw; a Monte Carlo mean and standard
    error when given a sampler callable (rng, reps) -> (w, w').
    """
    if isinstance(source, PairLaw):
        value = source.expect(lambda w, wp: (wp - w) * (np.asarray(f(wp)) + np.asarray(f(w))))
        return value, 0.0
    if reps is None or rng is None:
        raise ValueError("Monte Carlo mode needs reps and rng")
    if reps < MIN_MC_REPS:
        raise ValueError(f"need at least {MIN_MC_REPS} reps")
    w, wp = source(rng, reps)
    values = (wp - w) * (np.asarray(f(wp)) + np.asarray(f(w)))
    return float(np.mean(values)), float(np.std(values, ddof=1) / math.sqrt(reps))


@dataclass(frozen=True)
class PairStats:
    """Moments of (W' - W) that drive the exchangeable-pair bounds.

    cond_var is Var(E[(W'-W)^2 | W]).  In Monte Carlo mode the conditional
    expectation is formed by equal-mass quantile binning of W into
    ceil(reps^(1/3)) bins (configurable; reported), and std_errs carries the
    standard errors of the estimated fields.
    """

    lam: float
    mean_sq_diff: float
    cond_var: float
    abs_cubed: float
    mode: str
    reps: int | None = None
    seed: int | None = None
    n_bins: int | None = None
    std_errs: dict | None = None


def pair_stats(
    source,
    lam: float,
    mode: str = "exact",
    reps: int | None = None,
    rng: np.random.Generator | None = None,
    seed: int | None = None,
    n_bins: int | None = None,
) -> PairStats:
    """Compute the (W'-W) moments exactly from a PairLaw or by Monte Carlo.

    Validates E(W'-W)^2 = 2 lam E W^2 (within 1e-10 exact, 3 std errors MC),
    which fails loudly when lam does not match the pair.
    """
    if not 0.0 < lam < 1.0:
        raise ValueError("lam must lie in (0, 1)")
    if mode == "exact":
        if not isinstance(source, PairLaw):
            raise ValueError("exact mode needs a PairLaw")
        msd = source.expect(lambda w, wp: (wp - w) ** 2)
        abs_cubed = source.expect(lambda w, wp: np.abs(wp - w) ** 3)
        k = len(source.atoms)
        mass = np.bincount(source.ia, weights=source.p, minlength=k)
        m2_sum = np.bincount(source.ia, weights=source.p * (source.atoms[source.ib] - source.atoms[source.ia]) ** 2,
                             minlength=k)
        live = mass > 0
        cond = m2_sum[live] / mass[live]
        mean_cond = float(np.dot(mass[live], cond))
        cond_var = float(np.dot(mass[live], (cond - mean_cond) ** 2))
        ew2 = source.second_moment()
        if abs(msd - 2.0 * lam * ew2) > 1e-10:
            raise ValueError(
                f"E(W'-W)^2 = {msd:.12g} but 2*lam*E W^2 = {2 * lam * ew2:.12g}; lam mismatch?"
            )
        return PairStats(lam=lam, mean_sq_diff=msd, cond_var=cond_var,
                         abs_cubed=abs_cubed, mode="exact")
    if mode != "monte_carlo":
        raise ValueError("mode must be 'exact' or 'monte_carlo'")
    if reps is None or rng is None:
        raise ValueError("Monte Carlo mode needs reps and rng")
    if reps < MIN_MC_REPS:
        raise ValueError(f"need at least {MIN_MC_REPS} reps")
    w, wp = source(rng, reps)
    d2 = (wp - w) ** 2
    d3 = np.abs(wp - w) ** 3
    msd = float(np.mean(d2))
    abs_cubed = float(np.mean(d3))
    se_msd = float(np.std(d2, ddof=1) / math.sqrt(reps))
    se_abs3 = float(np.std(d3, ddof=1) / math.sqrt(reps))
    bins = n_bins if n_bins is not None else int(math.ceil(reps ** (1.0 / 3.0)))
    order = np.argsort(w, kind="stable")
    bin_idx = np.minimum((np.arange(reps) * bins) // reps, bins - 1)
    bin_means = np.bincount(bin_idx, weights=d2[order], minlength=bins)
    bin_counts = np.bincount(bin_idx, minlength=bins)
    live = bin_counts > 0
    bin_means = bin_means[live] / bin_counts[live]
    weights = bin_counts[live] / reps
    cond_var = float(np.dot(weights, (bin_means - np.dot(weights, bin_means)) ** 2))
    ew2 = float(np.mean(w * w))
    se_ew2 = float(np.std(w * w, ddof=1) / math.sqrt(reps))
    if abs(msd - 2.0 * lam * ew2) > 3.0 * (se_msd + 2.0 * lam * se_ew2):
        raise ValueError("E(W'-W)^2 is not 2*lam*E W^2 within 3 standard errors")
    return PairStats(lam=lam, mean_sq_diff=msd, cond_var=cond_var, abs_cubed=abs_cubed,
                     mode="monte_carlo", reps=reps, seed=seed, n_bins=bins,
                     std_errs={"mean_sq_diff": se_msd, "abs_cubed": se_abs3})


def generator_identity_residual(
    sampler: Callable,
    f_prime: Callable,
    f_double_prime: Callable,
    f_triple_prime: Callable,
    lam: float,
    reps: int,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """Monte Carlo residual of the second-order (generator-form) identity

        E[f''(W) - W f'(W)]
          = E[(1 - (W'-W)^2 / 2 lam) f''(W)]
            - (1/lam) E[(W'-W)^3 U1^2 U2 f'''(W + (W'-W) U1 U2 U3)]

    with U1, U2, U3 independent uniforms.  Returns (mean, std err) of the
    per-draw difference between the two sides; zero within noise whenever the
    pair has equal marginals and the linear regression property.
    """
    if reps < MIN_MC_REPS:
        raise ValueError(f"need at least {MIN_MC_REPS} reps")
    if not 0.0 < lam < 1.0:
        raise ValueError("lam must lie in (0, 1)")
    w, wp = sampler(rng, reps)
    u1 = rng.random(reps)
    u2 = rng.random(reps)
    u3 = rng.random(reps)
    delta = wp - w
    lhs = np.asarray(f_double_prime(w)) - w * np.asarray(f_prime(w))
    rhs = (1.0 - delta ** 2 / (2.0 * lam)) * np.asarray(f_double_prime(w)) - (
        delta ** 3 * u1 ** 2 * u2 * np.asarray(f_triple_prime(w + delta * u1 * u2 * u3))
    ) / lam
    diff = lhs - rhs
    return float(np.mean(diff)), float(np.std(diff, ddof=1) / math.sqrt(reps))
