"""Finitely supported probability laws and exact laws of independent sums.

Everything in this module is exact up to floating-point rounding: moments are
compensated sums over atoms, and the law of a sum of independent components is
computed by iterated convolution with deterministic atom merging.  This is the
enumeration oracle the rest of the package checks its bounds against.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "FiniteDist",
    "MomentSummary",
    "IndepSumModel",
    "StateCapError",
    "make_finite",
    "moments",
    "sum_law",
    "standardize",
    "iid_model",
    "rademacher",
]

# Absolute tolerance below which two atoms are considered the same point.
DEFAULT_MERGE_TOL = 1e-12

# Largest number of (accumulated atoms) x (next support) pairs a single
# convolution step may enumerate before merging.
DEFAULT_STATE_CAP = 10_000_000


class StateCapError(RuntimeError):
    """A convolution step would enumerate more states than the configured cap."""


def _merge_atoms(atoms: np.ndarray, masses: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Sort atoms and merge clusters closer than ``tol``, mass-weighting positions."""
    order = np.argsort(atoms, kind="stable")
    atoms = atoms[order]
    masses = masses[order]
    if len(atoms) == 1:
        return atoms, masses
    # cluster boundaries wherever the gap to the previous atom exceeds tol
    new_cluster = np.empty(len(atoms), dtype=bool)
    new_cluster[0] = True
    new_cluster[1:] = np.diff(atoms) > tol
    cluster_id = np.cumsum(new_cluster) - 1
    n_clusters = cluster_id[-1] + 1
    merged_mass = np.bincount(cluster_id, weights=masses, minlength=n_clusters)
    weighted_pos = np.bincount(cluster_id, weights=masses * atoms, minlength=n_clusters)
    keep = merged_mass > 0
    # for zero-mass clusters fall back to the plain mean of positions
    pos = np.where(keep, weighted_pos / np.where(keep, merged_mass, 1.0), 0.0)
    if not np.all(keep):
        counts = np.bincount(cluster_id, minlength=n_clusters)
        plain = np.bincount(cluster_id, weights=atoms, minlength=n_clusters) / counts
        pos = np.where(keep, pos, plain)
    return pos, merged_mass


@dataclass(frozen=True, eq=False)
class FiniteDist:
    """A finitely supported law: strictly increasing atoms and masses summing to 1.

    Instances are immutable; construct through :func:`make_finite`, which
    merges duplicates and normalizes total mass.
    """

    atoms: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        masses = np.asarray(self.masses, dtype=float)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "masses", masses)
        if atoms.ndim != 1 or atoms.shape != masses.shape or len(atoms) == 0:
            raise ValueError("atoms and masses must be equal-length non-empty 1-D arrays")
        if not np.all(np.isfinite(atoms)):
            raise ValueError("atoms must be finite")
        if not np.all(np.diff(atoms) > 0):
            raise ValueError("atoms must be strictly increasing (merge duplicates first)")
        if np.any(masses < 0) or np.any(masses > 1 + 1e-12):
            raise ValueError("masses must lie in [0, 1]")
        if abs(math.fsum(masses.tolist()) - 1.0) > 1e-12:
            raise ValueError("masses must sum to 1 within 1e-12")

    @property
    def support_size(self) -> int:
        return len(self.atoms)

    def expect(self, fn) -> float:
        """Exact expectation of ``fn`` over the atoms (fn must accept arrays)."""
        values = np.asarray(fn(self.atoms), dtype=float)
        return float(math.fsum((self.masses * values).tolist()))

    def cdf(self, x) -> np.ndarray | float:
        """P(W <= x), exact step function."""
        cum = np.concatenate([[0.0], np.cumsum(self.masses)])
        idx = np.searchsorted(self.atoms, np.asarray(x, dtype=float), side="right")
        out = cum[idx]
        return float(out) if np.ndim(x) == 0 else out

    def prob_interval(self, a: float, b: float) -> float:
        """Exact P(a <= W <= b) for a closed interval."""
        lo = np.searchsorted(self.atoms, a, side="left")
        hi = np.searchsorted(self.atoms, b, side="right")
        return float(math.fsum(self.masses[lo:hi].tolist()))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Inverse-cdf draws; deterministic for a given generator state."""
        cum = np.cumsum(self.masses)
        cum[-1] = 1.0
        u = rng.random(size)
        return self.atoms[np.searchsorted(cum, u, side="right").clip(0, len(self.atoms) - 1)]

    def scaled(self, factor: float) -> "FiniteDist":
        """Law of factor * W (factor != 0)."""
        if factor == 0:
            raise ValueError("scale factor must be nonzero")
        atoms = self.atoms * factor
        masses = self.masses
        if factor < 0:
            atoms = atoms[::-1]
            masses = masses[::-1]
        return FiniteDist(atoms.copy(), masses.copy())

    def to_csv(self, path) -> None:
        """Write `atom,mass` rows with 17-significant-digit decimals."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["atom", "mass"])
            for a, m in zip(self.atoms, self.masses):
                writer.writerow([f"{a:.17g}", f"{m:.17g}"])

    @staticmethod
    def from_csv(path) -> "FiniteDist":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [c.strip() for c in header[:2]] != ["atom", "mass"]:
                raise ValueError(f"{path}: expected header 'atom,mass'")
            rows = [(float(r[0]), float(r[1])) for r in reader if r]
        if not rows:
            raise ValueError(f"{path}: no atoms")
        atoms, masses = zip(*rows)
        return make_finite(list(atoms), list(masses))


@dataclass(frozen=True)
class MomentSummary:
    """Mean, variance and raw absolute third moment of a law."""

    mean: float
    variance: float
    abs_third: float


@dataclass(frozen=True)
class IndepSumModel:
    """Independent centered summands X_1..X_n with W = sum X_i.

    Every component must have mean 0 (within 1e-12).  When ``normalized`` the
    component variances sum to 1 within 1e-10, i.e. Var(W) = 1.
    """

    components: tuple[FiniteDist, ...]
    normalized: bool = False

    def __post_init__(self):
        components = tuple(self.components)
        object.__setattr__(self, "components", components)
        if not components:
            raise ValueError("model needs at least one component")
        for k, comp in enumerate(components):
            if abs(moments(comp).mean) > 1e-12:
                raise ValueError(f"component {k} has nonzero mean")
        if self.normalized and abs(self.total_variance() - 1.0) > 1e-10:
            raise ValueError("normalized model must have total variance 1 within 1e-10")

    @property
    def n(self) -> int:
        return len(self.components)

    def total_variance(self) -> float:
        return float(math.fsum(moments(c).variance for c in self.components))

    def sum_abs_third(self) -> float:
        """sum_i E|X_i|^3, the driver of all third-moment bounds."""
        return float(math.fsum(moments(c).abs_third for c in self.components))

    def is_iid(self, tol: float = 0.0) -> bool:
        first = self.components[0]
        for comp in self.components[1:]:
            if comp.support_size != first.support_size:
                return False
            if np.any(np.abs(comp.atoms - first.atoms) > tol):
                return False
            if np.any(np.abs(comp.masses - first.masses) > tol):
                return False
        return True


def make_finite(atoms, masses, merge_tol: float = DEFAULT_MERGE_TOL) -> FiniteDist:
    """Build a law from atom/mass lists: merge, sort, normalize total mass to 1.

    Raises ValueError on empty support, negative masses, or zero total mass.
    """
    atoms = np.asarray(atoms, dtype=float)
    masses = np.asarray(masses, dtype=float)
    if atoms.ndim != 1 or atoms.shape != masses.shape:
        raise ValueError("atoms and masses must be 1-D arrays of equal length")
    if len(atoms) == 0:
        raise ValueError("empty support")
    if np.any(masses < 0):
        raise ValueError("negative mass")
    total = math.fsum(masses.tolist())
    if total <= 0:
        raise ValueError("total mass is zero")
    atoms, masses = _merge_atoms(atoms, masses / total, merge_tol)
    keep = masses > 0
    if not np.any(keep):
        raise ValueError("total mass is zero")
    atoms, masses = atoms[keep], masses[keep]
    total = math.fsum(masses.tolist())
    return FiniteDist(atoms, masses / total)


def moments(d: FiniteDist) -> MomentSummary:
    """Exact mean, variance and E|X|^3 by compensated summation over atoms."""
    a = d.atoms.tolist()
    p = d.masses.tolist()
    mean = math.fsum(pi * ai for pi, ai in zip(p, a))
    variance = math.fsum(pi * (ai - mean) ** 2 for pi, ai in zip(p, a))
    abs_third = math.fsum(pi * abs(ai) ** 3 for pi, ai in zip(p, a))
    return MomentSummary(mean=mean, variance=variance, abs_third=abs_third)


def _convolve(x: FiniteDist, y: FiniteDist, merge_tol: float, cap: int) -> FiniteDist:
    states = x.support_size * y.support_size
    if states > cap:
        raise StateCapError(
            f"convolution step needs {states} states, cap is {cap}; "
            "raise the cap or switch to Monte Carlo"
        )
    atoms = (x.atoms[:, None] + y.atoms[None, :]).ravel()
    masses = (x.masses[:, None] * y.masses[None, :]).ravel()
    merged_atoms, merged_masses = _merge_atoms(atoms, masses, merge_tol)
    return FiniteDist(merged_atoms, merged_masses)


def sum_law(
    m: IndepSumModel,
    merge_tol: float = DEFAULT_MERGE_TOL,
    state_cap: int = DEFAULT_STATE_CAP,
) -> FiniteDist:
    """Exact law of W = sum X_i by iterated convolution (deterministic left fold).

    The cap applies per convolution step to the pre-merge state count
    len(accumulated) * len(next); merged intermediate laws keep enumeration
    feasible far beyond what the raw product of support sizes suggests.
    """
    acc = m.components[0]
    for comp in m.components[1:]:
        acc = _convolve(acc, comp, merge_tol, state_cap)
    return acc


def standardize(m: IndepSumModel) -> IndepSumModel:
    """Rescale all atoms by 1/sqrt(total variance) so that Var(W) = 1."""
    total = m.total_variance()
    if total <= 0:
        raise ValueError("cannot standardize a model with zero total variance")
    scale = 1.0 / math.sqrt(total)
    return IndepSumModel(
        components=tuple(c.scaled(scale) for c in m.components),
        normalized=True,
    )


def rademacher(a: float = 1.0) -> FiniteDist:
    """The two-point symmetric law on {-a, +a}."""
    if a <= 0:
        raise ValueError("scale must be positive")
    return FiniteDist(np.array([-a, a]), np.array([0.5, 0.5]))


def iid_model(component: FiniteDist, n: int, normalized: bool = False) -> IndepSumModel:
    """Model with n independent copies of one centered component."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return IndepSumModel(components=(component,) * n, normalized=normalized)
