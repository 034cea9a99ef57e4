"""Finite pieces and windowed local measures.

A :class:`PieceMeasure` is a finite signed measure on ``[0, length]`` made of
point masses and density segments. A :class:`WindowMeasure` lays pieces end to
end and exposes the result on a finite window of the real line, together with
the translation and reflection maps of the hull dynamics.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

from .errors import WindowError

ABUT_TOL = 1e-12


@dataclass(frozen=True)
class DensitySegment:
    """Density on ``[lo, hi]``: either a constant ``value`` or uniformly
    spaced ``samples`` interpolated linearly."""

    lo: float
    hi: float
    value: float = 0.0
    samples: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError(f"empty density segment [{self.lo}, {self.hi}]")
        if self.samples is not None:
            if len(self.samples) < 2:
                raise ValueError("a sampled profile needs at least two samples")
            object.__setattr__(self, "samples", tuple(float(v) for v in self.samples))

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @property
    def is_constant(self) -> bool:
        return self.samples is None

    def values_at(self, x):
        """Density at absolute positions ``x`` (clipped to the segment)."""
        if self.samples is None:
            return np.full_like(np.asarray(x, dtype=float), self.value)
        grid = np.linspace(self.lo, self.hi, len(self.samples))
        return np.interp(x, grid, self.samples)

    def abs_integral(self, lo: float, hi: float) -> float:
        """Integral of ``|density|`` over ``[lo, hi] ∩ [self.lo, self.hi]``."""
        lo, hi = max(lo, self.lo), min(hi, self.hi)
        if hi <= lo:
            return 0.0
        if self.samples is None:
            return abs(self.value) * (hi - lo)
        grid = np.linspace(self.lo, self.hi, len(self.samples))
        inner = grid[(grid > lo) & (grid < hi)]
        xs = np.concatenate(([lo], inner, [hi]))
        ys = np.interp(xs, grid, self.samples)
        total = 0.0
        for x0, x1, y0, y1 in zip(xs[:-1], xs[1:], ys[:-1], ys[1:]):
            if y0 * y1 >= 0:
                total += 0.5 * (abs(y0) + abs(y1)) * (x1 - x0)
            else:
                # linear piece crosses zero: two triangles
                total += 0.5 * (y0 * y0 + y1 * y1) / (abs(y0) + abs(y1)) * (x1 - x0)
        return total

    def shifted(self, offset: float) -> "DensitySegment":
        return DensitySegment(self.lo + offset, self.hi + offset, self.value, self.samples)

    def mirrored(self, length: float) -> "DensitySegment":
        """Image under ``x -> length - x``."""
        samples = None if self.samples is None else tuple(reversed(self.samples))
        return DensitySegment(length - self.hi, length - self.lo, self.value, samples)


@dataclass(frozen=True)
class PieceMeasure:
    """A piece: finite measure supported on ``[0, length]``."""

    length: float
    atoms: tuple[tuple[float, float], ...] = ()
    densities: tuple[DensitySegment, ...] = ()
    name: str = ""

    def __post_init__(self):
        if not (self.length > 0 and math.isfinite(self.length)):
            raise ValueError(f"piece length must be positive and finite, got {self.length}")
        atoms = tuple((float(p), float(m)) for p, m in self.atoms)
        positions = [p for p, _ in atoms]
        if any(p < 0 or p > self.length for p in positions):
            raise ValueError("atom outside [0, length]")
        if any(b <= a for a, b in zip(positions, positions[1:])):
            raise ValueError("atom positions must be strictly increasing")
        if not all(math.isfinite(m) for _, m in atoms):
            raise ValueError("atom masses must be finite")
        segs = tuple(sorted(self.densities, key=lambda s: s.lo))
        for s in segs:
            if s.lo < -ABUT_TOL or s.hi > self.length + ABUT_TOL:
                raise ValueError(f"density segment [{s.lo}, {s.hi}] outside [0, {self.length}]")
        for s0, s1 in zip(segs, segs[1:]):
            if s1.lo < s0.hi - ABUT_TOL:
                raise ValueError("density segments overlap")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "densities", segs)

    @classmethod
    def constant(cls, length: float, value: float, name: str = "") -> "PieceMeasure":
        return cls(length, (), (DensitySegment(0.0, length, value),), name)

    @classmethod
    def delta(cls, length: float, position: float, mass: float, name: str = "") -> "PieceMeasure":
        return cls(length, ((position, mass),), (), name)

    @property
    def has_atoms(self) -> bool:
        return any(m != 0 for _, m in self.atoms)

    def total_variation(self) -> float:
        return sum(abs(m) for _, m in self.atoms) + sum(
            s.abs_integral(s.lo, s.hi) for s in self.densities
        )

    def lebesgue_multiple(self) -> float | None:
        """Return ``c`` when the piece equals ``c * 1_[0,length] * dx``, else None."""
        if self.has_atoms:
            return None
        nonzero = [s for s in self.densities if not (s.is_constant and s.value == 0.0)]
        if not nonzero:
            return 0.0
        values = set()
        covered = []
        for s in self.densities:
            if not s.is_constant:
                if len(set(s.samples)) != 1:
                    return None
                values.add(s.samples[0])
            else:
                values.add(s.value)
            covered.append((s.lo, s.hi))
        if len(values) != 1:
            return None
        # constant non-zero value must cover the whole interval without gaps
        edge = 0.0
        for lo, hi in covered:
            if lo > edge + ABUT_TOL:
                return None
            edge = max(edge, hi)
        if edge < self.length - ABUT_TOL:
            return None
        return values.pop()

    def same_measure(self, other: "PieceMeasure") -> bool:
        if abs(self.length - other.length) > ABUT_TOL:
            return False
        a, b = self.lebesgue_multiple(), other.lebesgue_multiple()
        if a is not None or b is not None:
            return a == b
        strip = lambda p: (
            tuple((x, m) for x, m in p.atoms if m != 0),
            tuple(s for s in p.densities if not (s.is_constant and s.value == 0.0)),
        )
        return strip(self) == strip(other)

    def mirrored(self) -> "PieceMeasure":
        atoms = tuple((self.length - p, m) for p, m in reversed(self.atoms))
        segs = tuple(s.mirrored(self.length) for s in self.densities)
        return PieceMeasure(self.length, atoms, segs, self.name)


def concatenate(pieces: Sequence[PieceMeasure]) -> PieceMeasure:
    """Glue pieces end to end; each is shifted by the total length before it.

    Atoms meeting at a common boundary are merged by adding their masses.
    """
    if not pieces:
        raise ValueError("cannot concatenate an empty list of pieces")
    if len(pieces) == 1:
        return pieces[0]
    offsets = _offsets([p.length for p in pieces])
    atoms: dict[float, float] = {}
    segs = []
    for off, p in zip(offsets, pieces):
        for pos, m in p.atoms:
            x = off + pos
            atoms[x] = atoms.get(x, 0.0) + m
        segs.extend(s.shifted(off) for s in p.densities)
    total = offsets[-1] + pieces[-1].length
    return PieceMeasure(total, tuple(sorted(atoms.items())), tuple(segs))


def _offsets(lengths: Sequence[float]) -> list[float]:
    """Cumulative start offsets, summed without rounding drift."""
    out = [0.0]
    partial: list[float] = []
    for ell in lengths[:-1]:
        partial.append(ell)
        out.append(math.fsum(partial))
    return out


class _Placed:
    __slots__ = ("offset", "piece")

    def __init__(self, offset: float, piece: PieceMeasure):
        self.offset = offset
        self.piece = piece


@dataclass(frozen=True)
class WindowMeasure:
    """A local measure known on a finite window.

    The pieces are laid out in a fixed base frame; physical position ``x``
    relates to base position ``y`` through ``x = orientation * y - shift``.
    ``shift`` is kept as an exact rational so that translations compose
    exactly.
    """

    offsets: tuple[float, ...]
    pieces: tuple[PieceMeasure, ...]
    unif_norm_bound: float = math.inf
    shift: Fraction = Fraction(0)
    orientation: int = 1
    _mirrors: dict = field(default_factory=dict, compare=False, repr=False, hash=False)
    _cache: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    def __post_init__(self):
        if len(self.offsets) != len(self.pieces) or not self.pieces:
            raise ValueError("a window needs at least one piece and one offset per piece")
        for (o0, p0), o1 in zip(zip(self.offsets, self.pieces), self.offsets[1:]):
            if abs(o0 + p0.length - o1) > ABUT_TOL * max(1.0, abs(o1)):
                raise ValueError(f"pieces do not abut at {o1}")
        if self.orientation not in (1, -1):
            raise ValueError("orientation must be +1 or -1")
        object.__setattr__(self, "shift", Fraction(self.shift))

    @classmethod
    def from_pieces(cls, pieces: Sequence[PieceMeasure], start: float = 0.0,
                    unif_norm_bound: float | None = None) -> "WindowMeasure":
        offsets = [start + o for o in _offsets([p.length for p in pieces])]
        m = cls(tuple(offsets), tuple(pieces))
        bound = m.unif_norm() if unif_norm_bound is None else unif_norm_bound
        return cls(tuple(offsets), tuple(pieces), bound)

    # --- geometry -----------------------------------------------------------------

    def _to_phys(self, y):
        return self.orientation * y - float(self.shift)

    @property
    def base_window(self) -> tuple[float, float]:
        return self.offsets[0], self.offsets[-1] + self.pieces[-1].length

    @property
    def window(self) -> tuple[float, float]:
        lo, hi = self.base_window
        a, b = self._to_phys(lo), self._to_phys(hi)
        return (a, b) if a <= b else (b, a)

    def covers(self, a: float, b: float) -> bool:
        lo, hi = self.window
        tol = ABUT_TOL * max(1.0, abs(lo), abs(hi))
        return min(a, b) >= lo - tol and max(a, b) <= hi + tol

    def require(self, a: float, b: float) -> None:
        if not self.covers(a, b):
            raise WindowError(f"interval [{min(a, b)}, {max(a, b)}] exceeds window {self.window}")

    def placed(self) -> Iterator[tuple[float, PieceMeasure]]:
        """Pieces in increasing physical order as ``(physical_start, piece)``.

        Pieces of a reflected measure come out mirrored.
        """
        if self.orientation == 1:
            for off, p in zip(self.offsets, self.pieces):
                yield self._to_phys(off), p
        else:
            for off, p in zip(reversed(self.offsets), reversed(self.pieces)):
                yield self._to_phys(off + p.length), self._mirror(p)

    def _mirror(self, p: PieceMeasure) -> PieceMeasure:
        hit = self._mirrors.get(id(p))
        if hit is None:
            hit = self._mirrors[id(p)] = (p, p.mirrored())
        return hit[1]

    def starts(self) -> np.ndarray:
        """Physical start positions of pieces in increasing order, plus the right edge."""
        key = ("starts",)
        hit = self._cache.get(key)
        if hit is None:
            starts = [x for x, _ in self.placed()]
            starts.append(self.window[1])
            hit = self._cache[key] = np.array(starts)
        return hit

    def ordered_pieces(self) -> list[PieceMeasure]:
        key = ("ordered",)
        hit = self._cache.get(key)
        if hit is None:
            hit = self._cache[key] = [p for _, p in self.placed()]
        return hit

    # --- content ------------------------------------------------------------------

    def atoms(self) -> list[tuple[float, float]]:
        """All atoms ``(position, mass)`` in physical coordinates, sorted."""
        out = []
        for x0, p in self.placed():
            out.extend((x0 + pos, m) for pos, m in p.atoms)
        return out

    def density_segments(self) -> list[DensitySegment]:
        out = []
        for x0, p in self.placed():
            out.extend(s.shifted(x0) for s in p.densities)
        return out

    @property
    def has_atoms(self) -> bool:
        return any(p.has_atoms for p in self.pieces)

    def total_variation(self, a: float, b: float) -> float:
        """``|mu|([a, b])``: absolute atom masses in the closed interval plus
        the integral of the absolute density."""
        if b < a:
            raise ValueError("interval must satisfy a <= b")
        self.require(a, b)
        total = sum(abs(m) for x, m in self.atoms() if a <= x <= b)
        total += sum(s.abs_integral(a, b) for s in self.density_segments())
        return total

    def unif_norm(self) -> float:
        """``sup_t |mu|((t, t+1])`` over unit intervals inside the window.

        The map ``t -> |mu|((t, t+1])`` is linear between the breakpoints
        ``{q, q-1}`` of the data, so checking consecutive breakpoints is exact.
        """
        lo, hi = self.window
        if hi - lo <= 1.0:
            return self.total_variation(lo, hi)
        atoms = self.atoms()
        apos = np.array([x for x, _ in atoms])
        amass = np.cumsum([0.0] + [abs(m) for _, m in atoms])
        knots, cum = self._abs_density_cdf()
        cand = np.concatenate((knots, knots - 1.0, apos, apos - 1.0))
        cand = np.unique(cand[(cand >= lo) & (cand <= hi - 1.0)])
        cont = np.interp(cand + 1.0, knots, cum) - np.interp(cand, knots, cum)
        if len(apos):
            # atoms in (t, t+1]
            inside = np.searchsorted(apos, cand + 1.0, side="right")
            left = np.searchsorted(apos, cand, side="right")
            atom_part = amass[inside] - amass[left]
        else:
            atom_part = np.zeros_like(cand)
        best = cont + atom_part
        # limit from the right end of each linear stretch
        best[:-1] = np.maximum(best[:-1], cont[1:] + atom_part[:-1])
        return float(best.max())

    def _abs_density_cdf(self) -> tuple[np.ndarray, np.ndarray]:
        """Knots and values of ``x -> integral of |density| from the left edge``."""
        lo, hi = self.window
        xs, fs = [lo], [0.0]
        acc = 0.0
        for s in self.density_segments():
            xs.append(s.lo)
            fs.append(acc)
            inner = [] if s.samples is None else list(np.linspace(s.lo, s.hi, len(s.samples))[1:-1])
            prev = s.lo
            for x in inner + [s.hi]:
                acc += s.abs_integral(prev, x)
                xs.append(x)
                fs.append(acc)
                prev = x
        xs.append(hi)
        fs.append(acc)
        return np.clip(np.array(xs), lo, hi), np.array(fs)

    # --- hull dynamics ------------------------------------------------------------

    def translate(self, t) -> "WindowMeasure":
        """``alpha_t``: the measure ``mu(. + t)``; the window moves to ``[a-t, b-t]``."""
        return WindowMeasure(self.offsets, self.pieces, self.unif_norm_bound,
                             self.shift + Fraction(t), self.orientation, self._mirrors)

    def reflect(self) -> "WindowMeasure":
        """The measure ``mu(-(.))``."""
        return WindowMeasure(self.offsets, self.pieces, self.unif_norm_bound,
                             -self.shift, -self.orientation, self._mirrors)

    def replace_pieces(self, pieces: Sequence[PieceMeasure]) -> "WindowMeasure":
        return WindowMeasure(self.offsets, tuple(pieces), self.unif_norm_bound,
                             self.shift, self.orientation)


def total_variation(m: WindowMeasure, a: float, b: float) -> float:
    return m.total_variation(a, b)


def translate(m: WindowMeasure, t) -> WindowMeasure:
    return m.translate(t)


def reflect(m: WindowMeasure) -> WindowMeasure:
    return m.reflect()


@dataclass(frozen=True)
class DecompositionAlphabet:
    """Named pieces together with flags marking Lebesgue multiples."""

    pieces: dict[str, PieceMeasure]
    lebesgue_multiple_flags: dict[str, bool] = field(default_factory=dict)

    def __post_init__(self):
        if not self.pieces:
            raise ValueError("alphabet needs at least one piece")
        computed = {k: p.lebesgue_multiple() is not None for k, p in self.pieces.items()}
        flags = dict(self.lebesgue_multiple_flags) or computed
        if flags != computed:
            bad = sorted(k for k in computed if flags.get(k) != computed[k])
            raise ValueError(f"Lebesgue-multiple flags disagree with piece content for {bad}")
        object.__setattr__(self, "lebesgue_multiple_flags", flags)

    @property
    def atomless(self) -> bool:
        return not any(p.has_atoms for p in self.pieces.values())


@dataclass(frozen=True)
class SfdpVerdict:
    satisfied: bool
    witness: tuple[str, str] | None = None

    def __bool__(self):
        return self.satisfied


def check_sfdp(alphabet: DecompositionAlphabet) -> SfdpVerdict:
    """Sufficient test for the simple finite decomposition property.

    Satisfied when at most one piece is a multiple of Lebesgue measure;
    otherwise the first two such pieces are returned as witness.
    """
    flagged = sorted(k for k, v in alphabet.lebesgue_multiple_flags.items() if v)
    if len(flagged) <= 1:
        return SfdpVerdict(True)
    return SfdpVerdict(False, (flagged[0], flagged[1]))
