"""Product-of-exponentials model of the h-index distribution.

If publication rate and career length are independent exponential variables
with means lambda1 and lambda2, their product h has density

    P_m(h) = (2 / m) K0(2 sqrt(h / m)),    m = lambda1 * lambda2,

with mean m, standard deviation sqrt(3) m and survival function
z K1(z), z = 2 sqrt(h / m). Only the product m is identifiable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

EULER_GAMMA = 0.5772156649015329
_SERIES_MAX = 2.0
_EPS = 1e-16


class ModelError(ValueError):
    pass


# -- modified Bessel functions of the second kind ----------------------------------


def _as_positive(x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=np.float64)
    if np.any(~(arr > 0)):
        raise ModelError("modified Bessel K needs x > 0")
    return np.atleast_1d(arr), arr.ndim == 0


def _series(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """K0 and K1 from their ascending series (accurate for x <= 2)."""
    y = 0.25 * x * x
    log_half = np.log(0.5 * x)
    term0 = np.ones_like(x)  # y^k / (k!)^2
    term1 = np.ones_like(x)  # y^k / (k! (k+1)!)
    i0 = term0.copy()
    i1 = term1.copy()
    harmonic = 0.0  # H_k
    s0 = np.zeros_like(x)
    # psi(k+1) + psi(k+2) = 2 H_k + 1/(k+1) - 2 gamma
    s1 = (1.0 - 2.0 * EULER_GAMMA) * term1
    for k in range(1, 60):
        term0 = term0 * y / (k * k)
        term1 = term1 * y / (k * (k + 1))
        harmonic += 1.0 / k
        i0 = i0 + term0
        i1 = i1 + term1
        s0 = s0 + harmonic * term0
        s1 = s1 + (2.0 * harmonic + 1.0 / (k + 1) - 2.0 * EULER_GAMMA) * term1
        if np.all(term0 < _EPS * i0):
            break
    k0 = -(log_half + EULER_GAMMA) * i0 + s0
    i1 = 0.5 * x * i1
    k1 = 1.0 / x + i1 * log_half - 0.25 * x * s1
    return k0, k1


def _continued_fraction(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """K0 and K1 from Steed's continued fraction for K1/K0 (fast for x >= 2)."""
    b = 2.0 * (1.0 + x)
    d = 1.0 / b
    delh = d.copy()
    h = d.copy()
    q1 = np.zeros_like(x)
    q2 = np.ones_like(x)
    a1 = 0.25
    q = np.full_like(x, a1)
    c = np.full_like(x, a1)
    a = -a1
    s = 1.0 + q * delh
    for i in range(1, 1000):
        a -= 2 * i
        c = -a * c / (i + 1.0)
        qnew = (q1 - b * q2) / a
        q1, q2 = q2, qnew
        q = q + c * qnew
        b = b + 2.0
        d = 1.0 / (b + a * d)
        delh = (b * d - 1.0) * delh
        h = h + delh
        dels = q * delh
        s = s + dels
        if np.all(np.abs(dels) < _EPS * np.abs(s)):
            break
    h = a1 * h
    k0 = np.sqrt(math.pi / (2.0 * x)) * np.exp(-x) / s
    k1 = k0 * (x + 0.5 - h) / x
    return k0, k1


def _bessel_k(x) -> tuple[np.ndarray, np.ndarray, bool]:
    arr, scalar = _as_positive(x)
    k0 = np.empty_like(arr)
    k1 = np.empty_like(arr)
    small = arr <= _SERIES_MAX
    if small.any():
        k0[small], k1[small] = _series(arr[small])
    if (~small).any():
        k0[~small], k1[~small] = _continued_fraction(arr[~small])
    return k0, k1, scalar


def bessel_k0(x):
    """K0(x) for x > 0 (scalar or array); relative error below 1e-10 on [1e-6, 700]."""
    k0, _, scalar = _bessel_k(x)
    return float(k0[0]) if scalar else k0


def bessel_k1(x):
    """K1(x) for x > 0 (scalar or array); relative error below 1e-10 on [1e-6, 700]."""
    _, k1, scalar = _bessel_k(x)
    return float(k1[0]) if scalar else k1


# -- the model ----------------------------------------------------------------------


@dataclass(frozen=True)
class HModel:
    m: float

    def __post_init__(self):
        if not (math.isfinite(self.m) and self.m > 0):
            raise ModelError(f"m must be positive and finite, got {self.m}")

    @property
    def mean(self) -> float:
        return self.m

    @property
    def std(self) -> float:
        return math.sqrt(3.0) * self.m

    def pdf(self, h):
        return pm_pdf(h, self)

    def ccdf(self, h):
        return pm_ccdf(h, self)


def _m_of(model: HModel | float) -> float:
    return model.m if isinstance(model, HModel) else HModel(float(model)).m


def pm_pdf(h, model: HModel | float):
    m = _m_of(model)
    arr = np.asarray(h, dtype=np.float64)
    if np.any(~(arr > 0)):
        raise ModelError("density needs h > 0")
    out = (2.0 / m) * bessel_k0(2.0 * np.sqrt(arr / m))
    return float(out) if arr.ndim == 0 else out


def pm_ccdf(h, model: HModel | float):
    """P(H >= h) = z K1(z) with z = 2 sqrt(h/m); equals 1 at h = 0."""
    m = _m_of(model)
    arr = np.atleast_1d(np.asarray(h, dtype=np.float64))
    if np.any(~(arr >= 0)):
        raise ModelError("survival function needs h >= 0")
    out = np.ones_like(arr)
    pos = arr > 0
    if pos.any():
        z = 2.0 * np.sqrt(arr[pos] / m)
        out[pos] = z * bessel_k1(z)
    return float(out[0]) if np.ndim(h) == 0 else out


def sample_h(m: float, n: int, rng: np.random.Generator, discrete: bool = True) -> np.ndarray:
    """Draws ``m * E1 * E2`` with E1, E2 unit exponentials; floored to integers when ``discrete``.

    Flooring keeps the bin masses exact: P(floor(H) in [a, b)) = ccdf(a) - ccdf(b).
    """
    HModel(m)
    x = m * rng.standard_exponential(n) * rng.standard_exponential(n)
    return np.floor(x).astype(np.int64) if discrete else x


# -- binning and fitting ------------------------------------------------------------


@dataclass(frozen=True)
class BinnedDistribution:
    edges: tuple[float, ...]
    """Ascending bin edges; bin k is [edges[k], edges[k+1])."""
    masses: tuple[float, ...]
    total: int

    def __post_init__(self):
        if len(self.edges) != len(self.masses) + 1:
            raise ModelError("need one more edge than masses")
        if any(b <= a for a, b in zip(self.edges, self.edges[1:])):
            raise ModelError("edges must be strictly increasing")
        if any(w < 0 for w in self.masses) or math.fsum(self.masses) > 1 + 1e-12:
            raise ModelError("masses must be non-negative and sum to at most 1")

    def bins(self) -> list[tuple[float, float, float]]:
        return [(a, b, w) for a, b, w in zip(self.edges, self.edges[1:], self.masses)]


def log_edges(lo: int, hi: int, linear_upto: int = 10, bins_per_decade: int = 5) -> list[int]:
    """Integer edges covering [lo, hi]: unit steps up to ``linear_upto``, rounded log steps above.

    The edges are a window of one global edge sequence, so bin boundaries do
    not depend on the sample's range.
    """
    edges = list(range(0, linear_upto + 2))
    j = 0
    while edges[-1] <= hi:
        j += 1
        e = round(10 ** (j / bins_per_decade))
        if e > edges[-1]:
            edges.append(e)
    start = max(k for k, e in enumerate(edges) if e <= lo)
    stop = min(k for k, e in enumerate(edges) if e > hi)
    return edges[start:stop + 1]


def log_bin(values: Sequence[int], linear_upto: int = 10, bins_per_decade: int = 5) -> BinnedDistribution:
    """Histogram with unit bins up to ``linear_upto`` and ``bins_per_decade`` log bins above."""
    arr = np.asarray(values)
    if arr.size == 0:
        raise ModelError("cannot bin an empty sample")
    if np.any(arr < 0) or np.any(arr != np.floor(arr)):
        raise ModelError("values must be non-negative integers")
    arr = arr.astype(np.int64)
    if linear_upto < 0 or bins_per_decade < 1:
        raise ModelError("linear_upto must be >= 0 and bins_per_decade >= 1")
    edges = log_edges(int(arr.min()), int(arr.max()), linear_upto, bins_per_decade)
    counts = np.bincount(np.searchsorted(edges, arr, side="right") - 1, minlength=len(edges) - 1)
    masses = tuple(float(c) / arr.size for c in counts)
    return BinnedDistribution(tuple(float(e) for e in edges), masses, int(arr.size))


def model_bin_masses(edges: Sequence[float], model: HModel | float, support_min: float = 0.0) -> np.ndarray:
    """Mass of each bin under the model, renormalized to h >= support_min."""
    c = pm_ccdf(np.asarray(edges, dtype=np.float64), model)
    norm = pm_ccdf(support_min, model) if support_min > 0 else 1.0
    return (c[:-1] - c[1:]) / norm


@dataclass
class FitReport:
    model: HModel
    residual: float
    bins_used: int
    support_min: float
    weighting: str = "counts"

    def to_json(self) -> dict:
        return {"m": self.model.m, "mean": self.model.mean, "std": self.model.std,
                "residual": self.residual, "bins_used": self.bins_used, "support_min": self.support_min,
                "weighting": self.weighting}


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-10) -> float:
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def fit_m(
    binned: BinnedDistribution,
    support_min: float = 2,
    m_range: tuple[float, float] = (1e-3, 1e3),
    weighting: str = "counts",
) -> FitReport:
    """Least-squares fit of log bin masses over non-empty bins inside the support.

    Empirical and model masses are both renormalized to h >= support_min.
    ``weighting="counts"`` weights each squared log residual by the bin's
    count (the inverse variance of a log count), so sparse tail bins do not
    dominate; ``"uniform"`` weights all bins equally. The search runs on
    log m: a coarse grid picks the bracket, golden-section refines it.
    """
    if weighting not in ("counts", "uniform"):
        raise ModelError(f"unknown weighting {weighting!r}")
    inside = [(a, b, w) for a, b, w in binned.bins() if a >= support_min]
    used = [(a, b, w) for a, b, w in inside if w > 0]
    if len(used) < 3:
        raise ModelError("fit needs at least three non-empty bins inside the support")
    total = math.fsum(w for _, _, w in inside)
    lo_edges = np.array([a for a, _, _ in used])
    hi_edges = np.array([b for _, b, _ in used])
    log_emp = np.log(np.array([w / total for _, _, w in used]))
    weights = np.array([w for _, _, w in used]) if weighting == "counts" else np.ones(len(used))
    weights = weights / weights.sum()

    def loss(log_m: float) -> float:
        m = math.exp(log_m)
        norm = pm_ccdf(support_min, m) if support_min > 0 else 1.0
        mass = (pm_ccdf(lo_edges, m) - pm_ccdf(hi_edges, m)) / norm
        if np.any(mass <= 0):
            return math.inf
        return math.fsum((weights * (np.log(mass) - log_emp) ** 2).tolist())

    a, b = math.log(m_range[0]), math.log(m_range[1])
    grid = np.linspace(a, b, 121)
    values = [loss(g) for g in grid]
    k = int(np.argmin(values))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    log_m = golden_section(loss, lo, hi)
    return FitReport(HModel(math.exp(log_m)), loss(log_m), len(used), support_min, weighting)


# -- Pareto comparison --------------------------------------------------------------


def pareto_ccdf(h, hmin: float = 1.0):
    """Survival function ``(hmin / h)^2`` of a Pareto tail with density ~ h^-3."""
    if not hmin >= 1:
        raise ModelError("hmin must be at least 1")
    arr = np.asarray(h, dtype=np.float64)
    if np.any(~(arr >= hmin)):
        raise ModelError("h must be at least hmin")
    out = (hmin / arr) ** 2
    return float(out) if arr.ndim == 0 else out


def crossover(
    ccdf_a: Callable[[float], float],
    ccdf_b: Callable[[float], float],
    bracket: tuple[float, float],
    tol: float = 1e-6,
    grid: int = 1000,
) -> float:
    """The single h in ``bracket`` where the two curves cross, by bisection.

    The bracket is first scanned on a log grid; no sign change or more than
    one sign change raises.
    """
    lo, hi = bracket
    if not 0 < lo < hi:
        raise ModelError("bracket must satisfy 0 < lo < hi")
    diff = lambda h: float(ccdf_a(h)) - float(ccdf_b(h))
    hs = np.geomspace(lo, hi, grid)
    signs = np.sign([diff(h) for h in hs])
    nonzero = signs[signs != 0]
    changes = int(np.count_nonzero(nonzero[1:] != nonzero[:-1]))
    if changes == 0:
        raise ModelError("curves do not cross inside the bracket")
    if changes > 1:
        raise ModelError(f"curves cross {changes} times inside the bracket")
    a, b = lo, hi
    fa = diff(a)
    if fa == 0:
        return a
    while b - a > tol:
        mid = 0.5 * (a + b)
        fm = diff(mid)
        if fm == 0:
            return mid
        if (fm > 0) == (fa > 0):
            a, fa = mid, fm
        else:
            b = mid
    return 0.5 * (a + b)


def support_ccdf(model: HModel | float, support_min: float) -> Callable[[float], float]:
    """Model survival function conditioned on h >= support_min."""
    norm = pm_ccdf(support_min, model)
    return lambda h: pm_ccdf(h, model) / norm


# -- report ----------------------------------------------------------------------------


def write_distribution_report(binned: BinnedDistribution, fit: FitReport, path: str | Path) -> None:
    """Tab-separated bins with empirical and fitted model mass (both over the fit support)."""
    inside = [(a, b, w) for a, b, w in binned.bins() if a >= fit.support_min]
    total = math.fsum(w for _, _, w in inside) or 1.0
    model = model_bin_masses([a for a, _, _ in inside] + [inside[-1][1]], fit.model, fit.support_min) if inside else []
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("lo\thi\tempirical_mass\tmodel_mass\n")
        for (a, b, w), mm in zip(inside, model):
            fh.write(f"{a:g}\t{b:g}\t{w / total:.12g}\t{float(mm):.12g}\n")
