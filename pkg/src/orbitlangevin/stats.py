"""Two-sample equivalence tests and stationary-density checks.

Energy distance is the default statistic: parameter-free and valid in every
dimension used here.  Equality of laws can only be supported by failing to
reject, so every equivalence check is meant to be paired with a negative
control that must reject at the same sample size.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps
from scipy.integrate import cumulative_trapezoid, simpson
from scipy.spatial.distance import cdist

from .actions import GroupAction, haar_matrices
from .errors import QuadratureFailure


@dataclass
class EquivalenceReport:
    """Outcome of one two-sample check.

    role is "equivalence" (pass when p > level) or "negative_control"
    (pass when p < level).  null_std is the standard deviation of the
    permutation null, used by the step-size robustness checks.
    """

    statistic_name: str
    statistic_value: float
    p_value: float
    n_a: int
    n_b: int
    n_permutations: int
    seed: int
    level: float
    role: str = "equivalence"
    verdict: bool = False
    null_std: float = float("nan")
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "statistic_name": self.statistic_name,
            "statistic_value": float(self.statistic_value),
            "p_value": float(self.p_value),
            "n_a": int(self.n_a),
            "n_b": int(self.n_b),
            "n_permutations": int(self.n_permutations),
            "seed": int(self.seed),
            "level": float(self.level),
            "role": self.role,
            "verdict": bool(self.verdict),
        }
        if np.isfinite(self.null_std):
            out["null_std"] = float(self.null_std)
        out.update({k: v for k, v in self.extra.items()})
        return out


@dataclass
class StationaryCheck:
    """Kolmogorov-Smirnov comparison of an invariant statistic against a reference."""

    invariant_statistic: str
    bin_edges: np.ndarray
    bin_counts: np.ndarray
    reference_grid: np.ndarray
    reference_density: np.ndarray
    distance: float
    tolerance: float
    n_samples: int
    verdict: bool

    def to_dict(self) -> dict:
        step = max(1, self.reference_grid.size // 200)
        return {
            "invariant_statistic": self.invariant_statistic,
            "bin_edges": [float(v) for v in self.bin_edges],
            "bin_counts": [int(v) for v in self.bin_counts],
            "reference_grid": [float(v) for v in self.reference_grid[::step]],
            "reference_density": [float(v) for v in self.reference_density[::step]],
            "distance": float(self.distance),
            "tolerance": float(self.tolerance),
            "n_samples": int(self.n_samples),
            "verdict": bool(self.verdict),
        }


# -- energy distance -----------------------------------------------------------

def energy_distance(A: np.ndarray, B: np.ndarray) -> float:
    """2 E||a-b|| - E||a-a'|| - E||b-b'|| with all-pairs (V-statistic) means."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise ValueError("samples must share dimension")
    cross = cdist(A, B).mean()
    within_a = cdist(A, A).mean()
    within_b = cdist(B, B).mean()
    return float(2.0 * cross - (within_a + within_b))


def _energy_from_indicator(D: np.ndarray, S: np.ndarray, n_small: int, n_large: int):
    """Energy distances for each 0/1 indicator column of S over the pooled matrix D."""
    ds = D @ S
    w_s = np.einsum("np,np->p", S, ds)
    row = D.sum(axis=1)
    total = row.sum()
    w_l = total - 2.0 * (row @ S) + w_s
    cross = total - (w_s + w_l)
    return cross / (n_small * n_large) - (w_s / n_small**2 + w_l / n_large**2)


def permutation_test(A: np.ndarray, B: np.ndarray, n_perm: int = 500, seed=0,
                     level: float = 0.01, role: str = "equivalence") -> EquivalenceReport:
    """Permutation test of equality in law with the energy-distance statistic.

    The pooled rows are put in a canonical (lexicographic) order and the
    smaller group size is always the one drawn, so the p-value is exactly
    invariant under swapping A and B.  p = (1 + #{perm >= observed}) / (n_perm + 1).
    """
    if n_perm < 200:
        raise ValueError("need at least 200 permutations")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise ValueError("samples must share dimension")
    n_a, n_b = A.shape[0], B.shape[0]
    pool = np.vstack([A, B])
    order = np.lexsort(pool.T[::-1])
    pool = pool[order]
    labels = np.concatenate([np.ones(n_a), np.zeros(n_b)])[order]
    n_small = min(n_a, n_b)
    n_large = max(n_a, n_b)
    small_is_a = n_a <= n_b
    s_obs = labels if small_is_a else 1.0 - labels
    D = cdist(pool, pool)
    seed_int = _seed_to_int(seed)
    rng = np.random.default_rng(seed_int)
    N = n_a + n_b
    S = np.zeros((N, n_perm + 1))
    S[:, 0] = s_obs
    for p in range(1, n_perm + 1):
        S[rng.permutation(N)[:n_small], p] = 1.0
    values = _energy_from_indicator(D, S, n_small, n_large)
    observed = float(values[0])
    perms = values[1:]
    p_value = float((1 + np.sum(perms >= observed)) / (n_perm + 1))
    verdict = p_value > level if role == "equivalence" else p_value < level
    return EquivalenceReport(statistic_name="energy_distance", statistic_value=observed,
                             p_value=p_value, n_a=n_a, n_b=n_b, n_permutations=n_perm,
                             seed=seed_int, level=level, role=role, verdict=verdict,
                             null_std=float(np.std(perms)))


def ks_two_sample(a: np.ndarray, b: np.ndarray, level: float = 0.01,
                  role: str = "equivalence") -> EquivalenceReport:
    """Two-sample Kolmogorov-Smirnov check for 1D marginals."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    res = sps.ks_2samp(a, b, method="auto")
    p_value = float(res.pvalue)
    verdict = p_value > level if role == "equivalence" else p_value < level
    return EquivalenceReport(statistic_name="ks_1d", statistic_value=float(res.statistic),
                             p_value=p_value, n_a=a.size, n_b=b.size, n_permutations=0,
                             seed=0, level=level, role=role, verdict=verdict)


def invariance_test(samples: np.ndarray, action: GroupAction, n_group: int = 3,
                    seed=0, level: float = 0.01, n_perm: int = 500) -> EquivalenceReport:
    """Compare {x} against {g.x} for Haar draws g; Bonferroni over the draws.

    The comparison uses disjoint halves of the sample (first half vs the
    moved second half): moving the same points gives two exactly isometric
    clouds, which violates the exchangeability the permutation null needs.
    Reports the smallest p over the drawn group elements at the adjusted
    level; verdict passes when even the smallest p clears it.
    """
    if n_group < 1:
        raise ValueError("need at least one group draw")
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    n = samples.shape[0]
    half = n // 2 if n >= 2 else 0
    seed_int = _seed_to_int(seed)
    rng = np.random.default_rng(seed_int)
    gs = haar_matrices(action, rng, n_group)
    adj = level / n_group
    worst = None
    for i in range(n_group):
        if half:
            a, b = samples[:half], action.apply_batch(gs[i], samples[half:])
        else:
            a, b = samples, action.apply_batch(gs[i], samples)
        rep = permutation_test(a, b, n_perm=n_perm,
                               seed=np.random.SeedSequence(entropy=seed_int, spawn_key=(i,)),
                               level=adj, role="equivalence")
        if worst is None or rep.p_value < worst.p_value:
            worst = rep
    worst.extra["n_group"] = n_group
    worst.extra["bonferroni_level"] = adj
    return worst


def _seed_to_int(seed) -> int:
    if isinstance(seed, np.random.SeedSequence):
        return int(seed.generate_state(1, np.uint64)[0])
    return int(seed)


# -- stationary references -------------------------------------------------------

@dataclass
class StationaryReference:
    """Quadrature-normalized radial reference density with its CDF."""

    grid: np.ndarray
    density: np.ndarray
    cdf_values: np.ndarray

    def cdf(self, r: np.ndarray) -> np.ndarray:
        return np.interp(np.asarray(r, dtype=float), self.grid, self.cdf_values,
                         left=0.0, right=1.0)

    def inverse_cdf(self, u: np.ndarray) -> np.ndarray:
        return np.interp(np.asarray(u, dtype=float), self.cdf_values, self.grid)

    def mass_check(self) -> float:
        return float(simpson(self.density, x=self.grid))


def _normalize_reference(grid: np.ndarray, raw: np.ndarray) -> StationaryReference:
    if not np.all(np.isfinite(raw)) or np.any(raw < 0.0):
        raise QuadratureFailure("reference density is not finite and nonnegative")
    total = float(np.trapezoid(raw, grid))
    if not np.isfinite(total) or total <= 0.0:
        raise QuadratureFailure("reference density does not integrate to a positive mass")
    density = raw / total
    # second normalization pass keeps the Simpson re-integration within 1e-6
    density = density / float(simpson(density, x=grid))
    cdf = cumulative_trapezoid(density, grid, initial=0.0)
    cdf = np.clip(cdf / cdf[-1], 0.0, 1.0)
    return StationaryReference(grid=grid, density=density, cdf_values=cdf)


def stationary_reference(profile, f_radial, d: int, grid: np.ndarray) -> StationaryReference:
    """Radial stationary reference r^{d-1} exp(-I(v(r))) exp(-f(r)).

    profile maps the log orbit volume v to the tangential noise level; the
    exponent I(v) = int_0^v (1 - profile(s)^2) ds is evaluated by cumulative
    quadrature on a dense grid.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 64 or np.any(grid <= 0.0):
        raise ValueError("grid must be a dense positive radial grid")
    v = (d - 1) * np.log(grid)
    lo = min(float(v.min()), 0.0) - 1e-9
    hi = max(float(v.max()), 0.0) + 1e-9
    s_dense = np.linspace(lo, hi, 20001)
    integrand = 1.0 - np.asarray(profile(s_dense), dtype=float) ** 2
    cum = cumulative_trapezoid(integrand, s_dense, initial=0.0)
    at_zero = np.interp(0.0, s_dense, cum)
    exponent = np.interp(v, s_dense, cum) - at_zero
    raw = grid ** (d - 1) * np.exp(-exponent - np.asarray(f_radial(grid), dtype=float))
    return _normalize_reference(grid, raw)


def plateau_reference(epsilon: float, f_radial, d: int, r_min: float, r_max: float,
                      n_grid: int = 4001) -> StationaryReference:
    """Closed-form plateau reference r^{(d-1) eps^2} exp(-f) truncated to [r_min, r_max]."""
    grid = np.linspace(r_min, r_max, n_grid)
    raw = grid ** ((d - 1) * epsilon**2) * np.exp(-np.asarray(f_radial(grid), dtype=float))
    return _normalize_reference(grid, raw)


def ks_critical(n: int, level: float) -> float:
    """Asymptotic one-sample Kolmogorov-Smirnov critical value."""
    return float(np.sqrt(-0.5 * np.log(level / 2.0)) / np.sqrt(n))


def stationary_check(samples: np.ndarray, reference: StationaryReference,
                     level: float = 0.01, statistic_name: str = "radius",
                     n_bins: int = 50) -> StationaryCheck:
    """One-sample KS distance of the samples against the reference distribution."""
    samples = np.sort(np.asarray(samples, dtype=float).ravel())
    n = samples.size
    cdf = reference.cdf(samples)
    upper = np.arange(1, n + 1) / n
    lower = np.arange(0, n) / n
    distance = float(np.max(np.maximum(np.abs(upper - cdf), np.abs(cdf - lower))))
    tol = ks_critical(n, level)
    counts, edges = np.histogram(samples, bins=n_bins,
                                 range=(float(reference.grid[0]), float(reference.grid[-1])))
    return StationaryCheck(invariant_statistic=statistic_name, bin_edges=edges,
                           bin_counts=counts, reference_grid=reference.grid,
                           reference_density=reference.density, distance=distance,
                           tolerance=tol, n_samples=n, verdict=(distance <= tol))


def wrapped_normal_cdf(x: np.ndarray, sigma: float, n_terms: int = 7) -> np.ndarray:
    """CDF on [-pi, pi) of a centered normal angle reduced modulo 2 pi."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for k in range(-n_terms, n_terms + 1):
        out = out + sps.norm.cdf((x + 2.0 * np.pi * k) / sigma) \
            - sps.norm.cdf((-np.pi + 2.0 * np.pi * k) / sigma)
    return np.clip(out, 0.0, 1.0)


def ks_against_cdf(samples: np.ndarray, cdf, level: float = 0.01,
                   role: str = "equivalence") -> EquivalenceReport:
    """One-sample KS test against an explicit CDF callable."""
    samples = np.asarray(samples, dtype=float).ravel()
    res = sps.kstest(samples, cdf)
    p_value = float(res.pvalue)
    verdict = p_value > level if role == "equivalence" else p_value < level
    return EquivalenceReport(statistic_name="ks_1d", statistic_value=float(res.statistic),
                             p_value=p_value, n_a=samples.size, n_b=0, n_permutations=0,
                             seed=0, level=level, role=role, verdict=verdict)
