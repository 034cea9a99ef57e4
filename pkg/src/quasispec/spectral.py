"""Spectrum approximations: Floquet bands of periodic approximants, zero set
of the Lyapunov exponent, trace-map oracle, Weyl m-functions and the
absolutely-continuous-spectrum diagnostic."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import TruncationError, WindowError
from .lyapunov import lyapunov_curve, uniformity_scan
from .measures import WindowMeasure
from .propagator import Propagator, _Batch
from .subshift import Substitution, SubshiftWord, periodic_approximant
from .suspension import SuspensionModel, build_omega

BAND_TOL = 1e-10


@dataclass
class BandSet:
    """Sorted, disjoint closed intervals ``[lo, hi]``."""

    bands: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        b = np.asarray(self.bands, dtype=float).reshape(-1, 2)
        if len(b):
            if np.any(b[:, 1] < b[:, 0]):
                raise ValueError("band with hi < lo")
            if np.any(b[1:, 0] <= b[:-1, 1]):
                raise ValueError("bands must be sorted and disjoint")
        self.bands = b

    def __len__(self):
        return len(self.bands)

    def __iter__(self):
        return iter(map(tuple, self.bands))

    @property
    def measure(self) -> float:
        return float(np.sum(self.bands[:, 1] - self.bands[:, 0]))

    def contains(self, E) -> np.ndarray:
        E = np.asarray(E, dtype=float)
        if not len(self.bands):
            return np.zeros(E.shape, dtype=bool)
        i = np.searchsorted(self.bands[:, 0], E, side="right") - 1
        ok = i >= 0
        ic = np.clip(i, 0, None)
        return ok & (E <= self.bands[ic, 1])

    def intersection_measure(self, other: "BandSet") -> float:
        total = 0.0
        j = 0
        o = other.bands
        for lo, hi in self.bands:
            while j < len(o) and o[j, 1] < lo:
                j += 1
            k = j
            while k < len(o) and o[k, 0] <= hi:
                total += max(0.0, min(hi, o[k, 1]) - max(lo, o[k, 0]))
                k += 1
        return total

    def symmetric_difference_measure(self, other: "BandSet") -> float:
        return self.measure + other.measure - 2 * self.intersection_measure(other)

    def dilate(self, r: float) -> "BandSet":
        """Closed r-neighbourhood, merged."""
        return merge_intervals([(lo - r, hi + r) for lo, hi in self.bands], self.provenance)

    def within(self, other: "BandSet", r: float) -> bool:
        """Every band of ``self`` lies inside the r-neighbourhood of ``other``."""
        grown = other.dilate(r)
        return all(grown.contains(lo) and grown.contains(hi) and
                   _same_band(grown, lo, hi) for lo, hi in self.bands)

    def to_csv_rows(self, level=None) -> list[list]:
        return [[level, lo, hi] for lo, hi in self.bands]


def _same_band(bs: BandSet, lo: float, hi: float) -> bool:
    i = np.searchsorted(bs.bands[:, 0], lo, side="right") - 1
    return i >= 0 and bs.bands[i, 1] >= hi


def merge_intervals(intervals, provenance: str = "") -> BandSet:
    iv = sorted((float(a), float(b)) for a, b in intervals)
    out: list[list[float]] = []
    for lo, hi in iv:
        if out and lo <= out[-1][1]:
            out[-1][1] = max(out[-1][1], hi)
        else:
            out.append([lo, hi])
    return BandSet(np.array(out).reshape(-1, 2), provenance)


def hausdorff_agree(a: BandSet, b: BandSet, r: float) -> bool:
    return a.within(b, r) and b.within(a, r)


# --- periodic approximants ------------------------------------------------------------

def period_traces(model: SuspensionModel, word: SubshiftWord | str, energies) -> np.ndarray:
    """Trace of the transfer matrix over one period of ``word``.

    The period matrix is the product of the full-piece matrices; atoms on a
    piece boundary belong to the period exactly once up to cyclic order,
    which leaves the trace unchanged.
    """
    symbols = str(word)
    energies = np.atleast_1d(np.asarray(energies, dtype=float))
    omega = build_omega(model, symbols)
    prop = Propagator(omega, energies)
    out = _Batch.identity(energies)
    for c in symbols:
        out.lmul(prop._full_piece(model.piece(c)))
        out.renorm()
    with np.errstate(over="ignore", invalid="ignore"):  # escaped energies overflow to inf
        return (out.a + out.d) * np.exp(out.lg)


def _bisect(f, lo: np.ndarray, hi: np.ndarray, inside_lo: np.ndarray, iters: int) -> np.ndarray:
    """Vectorised bisection for the boundary of ``f(E) <= 0`` between lo and hi."""
    lo, hi = lo.copy(), hi.copy()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        inside = f(mid) <= 0
        move_lo = inside == inside_lo
        lo = np.where(move_lo, mid, lo)
        hi = np.where(move_lo, hi, mid)
    # the edge is the last point known to be inside
    return np.where(inside_lo, lo, hi)


def floquet_bands(model: SuspensionModel, word: SubshiftWord | str, E_range: tuple[float, float],
                  resolution: float = 1e-2, edge_tol: float = 1e-12,
                  max_refinements: int = 6) -> BandSet:
    """Closure of ``{E : |tr T_E(period)| <= 2}`` inside ``E_range``.

    The discriminant is sampled on a grid (doubled until the number of bands
    is stable); a sign change of the discriminant between two outside samples
    reveals a band narrower than the grid. Edges are then bisected.
    """
    if isinstance(word, SubshiftWord) and not word.periodic:
        raise ValueError("floquet_bands needs a word tagged periodic")
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    e0, e1 = map(float, E_range)
    disc = lambda E: period_traces(model, word, E)
    excess = lambda E: np.abs(disc(E)) - 2.0 - BAND_TOL

    n = max(2, int(math.ceil((e1 - e0) / resolution)) + 1)
    prev_count = None
    for _ in range(max_refinements):
        grid, inside = _sample_bands(disc, e0, e1, n)
        count = _count_runs(inside)
        if count == prev_count:
            break
        prev_count = count
        n = 2 * n - 1
    if not inside.any():
        return BandSet(np.empty((0, 2)), "floquet")
    # run boundaries
    d = np.diff(inside.astype(int))
    starts = list(np.flatnonzero(d == 1) + 1)
    ends = list(np.flatnonzero(d == -1))
    if inside[0]:
        starts = [0] + starts
    if inside[-1]:
        ends = ends + [len(grid) - 1]
    starts, ends = np.array(starts), np.array(ends)
    iters = int(math.ceil(math.log2(max((e1 - e0) / n, 1e-300) / edge_tol))) + 2
    iters = max(iters, 1)
    lo_edges = grid[starts].astype(float)
    need = starts > 0
    if need.any():
        s = starts[need]
        lo_edges[need] = _bisect(excess, grid[s - 1], grid[s], np.zeros(need.sum(), bool), iters)
    hi_edges = grid[ends].astype(float)
    need = ends < len(grid) - 1
    if need.any():
        e = ends[need]
        hi_edges[need] = _bisect(excess, grid[e], grid[e + 1], np.ones(need.sum(), bool), iters)
    return merge_intervals(zip(lo_edges, hi_edges), "floquet")


def _sample_bands(disc, e0: float, e1: float, n: int):
    grid = np.linspace(e0, e1, n)
    D = disc(grid)
    inside = np.abs(D) <= 2.0 + BAND_TOL
    # D crosses from > 2 to < -2 (or back) between two samples: a band hides there
    sgn = np.sign(D)
    hidden = np.flatnonzero(~inside[:-1] & ~inside[1:] & (sgn[:-1] != sgn[1:]))
    if len(hidden):
        lo, hi = grid[hidden], grid[hidden + 1]
        s_lo = sgn[hidden]
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            dm = disc(mid)
            if np.all(np.abs(dm) <= 2.0 + BAND_TOL):
                break
            same = np.sign(dm) == s_lo
            done = np.abs(dm) <= 2.0 + BAND_TOL
            lo = np.where(same & ~done, mid, lo)
            hi = np.where(~same & ~done, mid, hi)
        mid = 0.5 * (lo + hi)
        grid = np.sort(np.concatenate((grid, mid)))
        D = disc(grid)
        inside = np.abs(D) <= 2.0 + BAND_TOL
    # between samples the discriminant may turn back: an extremum beside an
    # inside sample can poke past +-2 (hidden gap), one beside an outside
    # sample can dip into [-2, 2] (hidden band)
    # traces of escaped energies overflow to inf; clipping keeps their sign
    slope = np.sign(np.diff(np.clip(D, -1e300, 1e300)))
    turn = np.flatnonzero(slope[:-1] * slope[1:] < 0) + 1
    if len(turn):
        lo, hi = grid[turn - 1], grid[turn + 1]
        is_max = slope[turn - 1] > 0
        orient = np.where(is_max, 1.0, -1.0)
        g = (math.sqrt(5) - 1) / 2
        for _ in range(60):
            x1 = hi - g * (hi - lo)
            x2 = lo + g * (hi - lo)
            left_better = orient * disc(x1) > orient * disc(x2)
            hi = np.where(left_better, x2, hi)
            lo = np.where(left_better, lo, x1)
        peak = 0.5 * (lo + hi)
        flips = (np.abs(disc(peak)) <= 2.0 + BAND_TOL) != inside[turn]
        if flips.any():
            grid = np.sort(np.concatenate((grid, peak[flips])))
            D = disc(grid)
            inside = np.abs(D) <= 2.0 + BAND_TOL
    return grid, inside


def _count_runs(inside: np.ndarray) -> int:
    return int(np.sum(np.diff(np.concatenate(([0], inside.astype(int)))) == 1))


# --- gamma zero set -------------------------------------------------------------------

@dataclass
class GammaScan:
    energies: np.ndarray
    gamma: np.ndarray
    tol: float
    bands: BandSet
    isolated: np.ndarray
    uniformity: dict = field(default_factory=dict)

    @property
    def marked(self) -> np.ndarray:
        return self.gamma <= self.tol

    def spectrum_candidates(self) -> BandSet:
        """``{gamma <= tol}`` joined with grid points whose uniformity verdict is suspect."""
        extra = [(E, E) for E, v in self.uniformity.items() if v == "non-uniform-suspect"]
        return merge_intervals(list(self.bands) + extra, "gamma-scan")

    @property
    def step(self) -> float:
        return float(np.max(np.diff(self.energies))) if len(self.energies) > 1 else 0.0


def marked_intervals(energies: np.ndarray, marked: np.ndarray) -> list[tuple[float, float]]:
    out = []
    i, n = 0, len(energies)
    while i < n:
        if marked[i]:
            j = i
            while j + 1 < n and marked[j + 1]:
                j += 1
            out.append((energies[i], energies[j]))
            i = j + 1
        else:
            i += 1
    return out


def gamma_zero_scan(omega: WindowMeasure, energies, t_max: float, tol: float,
                    hull_samples=None, start: float = 0.0, refine: int = 0) -> GammaScan:
    """Mark grid energies with ``gamma_hat <= tol`` and merge neighbours
    into bands. With ``hull_samples``, each marked energy also gets a
    uniformity verdict. ``refine`` halves the grid step that many times
    next to every marked/unmarked transition."""
    energies = np.asarray(energies, dtype=float)
    if np.any(np.diff(energies) <= 0):
        raise ValueError("energy grid must be strictly increasing")
    gamma = lyapunov_curve(omega, energies, t_max, start)
    for _ in range(refine):
        marked = gamma <= tol
        edge = np.flatnonzero(marked[:-1] != marked[1:])
        if not len(edge):
            break
        mids = 0.5 * (energies[edge] + energies[edge + 1])
        energies = np.concatenate((energies, mids))
        gamma = np.concatenate((gamma, lyapunov_curve(omega, mids, t_max, start)))
        order = np.argsort(energies)
        energies, gamma = energies[order], gamma[order]
    marked = gamma <= tol
    bands = merge_intervals(marked_intervals(energies, marked), "gamma-scan")
    left = np.concatenate(([False], marked[:-1]))
    right = np.concatenate((marked[1:], [False]))
    isolated = marked & ~left & ~right
    verdicts = {}
    if hull_samples is not None and marked.any():
        ts = [t for t in (t_max / 100, t_max / 10, t_max) if t >= 1]
        for rep in uniformity_scan(hull_samples, energies[marked], ts):
            verdicts[rep.E] = rep.verdict
    return GammaScan(energies, gamma, tol, bands, isolated, verdicts)


# --- approximant cascade --------------------------------------------------------------

@dataclass
class CascadeLevel:
    level: int
    bands: BandSet
    measure: float
    nesting: float | None = None


def approximant_cascade(model: SuspensionModel, substitution: Substitution, seed: str,
                        levels: Sequence[int], E_range: tuple[float, float],
                        resolution: float = 1e-2) -> list[CascadeLevel]:
    """Floquet bands of ``substitution^n(seed)`` for increasing n, with the
    fraction of each level's band measure lying in the previous level."""
    levels = list(levels)
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("levels must be increasing")
    out: list[CascadeLevel] = []
    for n in levels:
        word = periodic_approximant(substitution, seed, n)
        bs = floquet_bands(model, word, E_range, resolution)
        nest = None
        if out and bs.measure > 0:
            nest = bs.intersection_measure(out[-1].bands) / bs.measure
        out.append(CascadeLevel(n, bs, bs.measure, nest))
    return out


def box_dimension(bs: BandSet, epsilons: Sequence[float]) -> float:
    """Slope of ``log N(eps)`` against ``log(1/eps)``, N counting grid boxes
    of size eps that meet the band set."""
    counts = []
    for eps in epsilons:
        boxes = set()
        for lo, hi in bs.bands:
            boxes.update(range(int(math.floor(lo / eps)), int(math.floor(hi / eps)) + 1))
        counts.append(len(boxes))
    slope, _ = np.polyfit(np.log(1.0 / np.asarray(epsilons)), np.log(counts), 1)
    return float(slope)


# --- trace map ------------------------------------------------------------------------

@dataclass
class TraceMapResult:
    E: float
    levels: np.ndarray
    recursion: np.ndarray
    direct: np.ndarray

    @property
    def invariant(self) -> np.ndarray:
        """Fricke-Vogt invariant evaluated on consecutive recursion triples."""
        x = self.recursion
        with np.errstate(over="ignore", invalid="ignore"):
            return x[2:] ** 2 + x[1:-1] ** 2 + x[:-2] ** 2 - 2 * x[2:] * x[1:-1] * x[:-2] - 1

    def invariant_drift(self) -> float:
        """Largest change of the invariant relative to the size of its terms.

        Outside the spectrum the half-traces grow super-exponentially, so the
        invariant is a difference of huge terms; it is conserved only up to
        rounding of those terms. Triples that overflow are skipped.
        """
        x = self.recursion
        with np.errstate(over="ignore", invalid="ignore"):
            a, b, c = x[2:], x[1:-1], x[:-2]
            scale = np.maximum.reduce([np.ones_like(a), a * a, b * b, c * c, np.abs(2 * a * b * c)])
            inv = self.invariant
        ok = np.isfinite(scale) & np.isfinite(inv)
        if not ok.any():
            return float("nan")
        ref = inv[ok][0]
        return float(np.max(np.abs(inv[ok] - ref) / scale[ok]))

    def escape_level(self) -> int | None:
        """First level from which the half-traces provably diverge."""
        x = self.recursion
        for i in range(1, len(x) - 1):
            if abs(x[i]) > 1 and abs(x[i + 1]) > 1 and abs(x[i] * x[i + 1]) > abs(x[i - 1]):
                return int(self.levels[i + 1])
        return None


def _check_fibonacci(model: SuspensionModel):
    if set(model.lengths) != {"a", "b"}:
        raise ValueError("trace map needs a two-letter model over {a, b} (a -> ab, b -> a)")


def trace_map_fibonacci(model: SuspensionModel, E: float, levels: int) -> TraceMapResult:
    """Half-traces ``x_n = tr T_E(w_n) / 2`` for ``w_n = F^n(a)``, n = -1..levels.

    ``recursion`` uses ``x_{n+1} = 2 x_n x_{n-1} - x_{n-2}`` from the three
    seed traces; ``direct`` multiplies the piece matrices along ``w_n``.
    """
    _check_fibonacci(model)
    fib = Substitution.fibonacci()
    words = ["b", "a"]
    for _ in range(levels):
        words.append(fib.apply(words[-1]))
    direct = np.array([0.5 * period_traces(model, w, [E])[0] for w in words])
    rec = np.empty(len(words))
    rec[:3] = direct[:3]
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(3, len(words)):
            rec[i] = 2 * rec[i - 1] * rec[i - 2] - rec[i - 3]
    return TraceMapResult(float(E), np.arange(-1, levels + 1), rec, direct)


# --- m-functions ----------------------------------------------------------------------

@dataclass
class MFunctionValue:
    z: complex
    m_plus: complex
    m_minus: complex
    radius_plus: float
    radius_minus: float

    @property
    def herglotz(self) -> bool:
        return self.m_plus.imag > 0 and self.m_minus.imag > 0


def weyl_disk(omega: WindowMeasure, z: complex, T: float) -> tuple[complex, float]:
    """Centre and radius of the Weyl disk for the right half-line at ``T``.

    The disk is the image of the upper half plane of boundary values
    ``u'(T)/u(T)`` under the inverse transfer matrix.
    """
    if not z.imag > 0:
        raise ValueError("m-functions need Im z > 0")
    t = Propagator(omega, np.array([complex(z)])).transfer(0.0, T)
    e = t.entries[0]
    a, b, c, d = e[0, 0], e[0, 1], e[1, 0], e[1, 1]
    den = np.conj(b) * d - b * np.conj(d)
    center = (a * np.conj(d) - c * np.conj(b)) / den
    # det of the true matrix is 1: radius = exp(-2 log_scale) / |den|
    log_r = -2.0 * float(t.log_scale[0]) - math.log(abs(den))
    return complex(center), math.exp(log_r)


def m_function(omega: WindowMeasure, z: complex, T: float, max_radius: float = 1e-3) -> MFunctionValue:
    """``m_+`` from the Weyl disk on ``[0, T]`` and ``m_-`` from the
    reflected measure."""
    omega.require(-T, T)
    mp, rp = weyl_disk(omega, z, T)
    mm, rm = weyl_disk(omega.reflect(), z, T)
    if max(rp, rm) > max_radius:
        raise TruncationError(f"Weyl disk radius {max(rp, rm):.3g} above {max_radius:.3g} at T={T}")
    return MFunctionValue(complex(z), mp, mm, rp, rm)


# --- absolutely continuous spectrum ---------------------------------------------------

AC_TOLS = (1e-1, 3e-2, 1e-2, 3e-3)


@dataclass
class ACReport:
    interval: tuple[float, float]
    tols: list[float]
    t_max: list[float]
    measures: list[float]

    @property
    def verdict(self) -> str:
        m = np.array(self.measures)
        shrinking = np.all(np.diff(m) < 0) and m[-1] <= 0.5 * m[0]
        return "ac-spectrum-excluded-consistent" if shrinking else "ac-spectrum-present-consistent"


def ac_diagnostic(omega: WindowMeasure, interval: tuple[float, float], n_grid: int,
                  tols: Sequence[float] = AC_TOLS, t_scale: float = 10.0,
                  t_cap: float | None = None) -> ACReport:
    """Lebesgue measure of ``{gamma_hat <= tol}`` as tol shrinks, with
    ``t_max = t_scale / tol``."""
    e0, e1 = interval
    grid = np.linspace(e0, e1, n_grid)
    measures, tmaxes = [], []
    for tol in tols:
        t_max = t_scale / tol if t_cap is None else min(t_scale / tol, t_cap)
        if not omega.covers(0.0, t_max):
            raise WindowError(f"window {omega.window} does not reach t_max={t_max}")
        g = lyapunov_curve(omega, grid, t_max)
        measures.append(float(np.mean(g <= tol) * (e1 - e0)))
        tmaxes.append(t_max)
    return ACReport((e0, e1), list(tols), tmaxes, measures)
