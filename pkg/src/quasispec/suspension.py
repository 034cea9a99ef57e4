"""Suspension of a symbolic word: the measure obtained by laying the piece of
each symbol at its boundary time, and translates of it as hull samples."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping

from .errors import WindowError
from .measures import ABUT_TOL, DecompositionAlphabet, PieceMeasure, WindowMeasure
from .subshift import SubshiftWord, is_aperiodicity_consistent


@dataclass(frozen=True)
class SuspensionModel:
    alphabet: DecompositionAlphabet
    lengths: Mapping[str, float]

    def __post_init__(self):
        pieces = self.alphabet.pieces
        if set(pieces) != set(self.lengths):
            raise ValueError("every symbol needs exactly one piece and one length")
        for a, ell in self.lengths.items():
            if not ell > 0:
                raise ValueError(f"length of {a!r} must be positive")
            if abs(pieces[a].length - ell) > ABUT_TOL * max(1.0, ell):
                raise ValueError(f"piece for {a!r} is not supported on [0, {ell}]")

    @classmethod
    def from_pieces(cls, pieces: Mapping[str, PieceMeasure]) -> "SuspensionModel":
        return cls(DecompositionAlphabet(dict(pieces)), {a: p.length for a, p in pieces.items()})

    @property
    def atomless(self) -> bool:
        return self.alphabet.atomless

    @property
    def max_length(self) -> float:
        return max(self.lengths.values())

    @property
    def min_length(self) -> float:
        return min(self.lengths.values())

    def piece(self, symbol: str) -> PieceMeasure:
        try:
            return self.alphabet.pieces[symbol]
        except KeyError:
            raise ValueError(f"symbol {symbol!r} has no piece") from None

    def unif_bound(self) -> float:
        """Conservative bound for the uniform norm of any suspension."""
        worst = max(p.total_variation() for p in self.alphabet.pieces.values())
        return worst * (1.0 + 1.0 / self.min_length)

    def pieces_differ(self) -> bool:
        ps = list(self.alphabet.pieces.values())
        return any(not ps[0].same_measure(p) for p in ps[1:])


def _cumulative(lengths: list[float]) -> list[float]:
    out, acc = [0.0], []
    for ell in lengths:
        acc.append(ell)
        out.append(math.fsum(acc))
    return out


def boundary_times(model: SuspensionModel, w: SubshiftWord | str) -> list[float]:
    """``s_n = l_{x(0)} + ... + l_{x(n-1)}`` for n = 0..len(right half)."""
    right = w.right if isinstance(w, SubshiftWord) else w
    if not right:
        raise ValueError("word has no symbols at or right of the origin")
    try:
        return _cumulative([model.lengths[c] for c in right])
    except KeyError as exc:
        raise ValueError(f"symbol {exc.args[0]!r} has no assigned length") from None


def build_omega(model: SuspensionModel, w: SubshiftWord | str) -> WindowMeasure:
    """The suspension measure on ``[s_{-m}, s_k]`` for a word with m symbols
    left of the origin and k at or right of it."""
    if isinstance(w, str):
        w = SubshiftWord(w)
    right_times = boundary_times(model, w)
    left = w.left
    left_times = _cumulative([model.lengths[c] for c in reversed(left)])
    # physical starts: x(-j) begins at -(l_{x(-1)} + ... + l_{x(-j)})
    offsets = [-t for t in reversed(left_times[1:])] + right_times[:-1]
    pieces = [model.piece(c) for c in w.symbols]
    bound = model.unif_bound()
    omega = WindowMeasure(tuple(offsets), tuple(pieces), bound)
    if omega.unif_norm() > bound * (1 + 1e-12):
        raise AssertionError("uniform norm exceeds the model bound")
    return omega


@dataclass(frozen=True)
class HullSample:
    word: SubshiftWord
    shift_t: Fraction
    measure: WindowMeasure

    @property
    def label(self) -> str:
        return f"S^{self.word.origin_index}x,t={float(self.shift_t):.6g}"


def hull_sample(model: SuspensionModel, w: SubshiftWord, t,
                need: tuple[float, float] | None = None,
                omega: WindowMeasure | None = None) -> HullSample:
    """``alpha_t(omega_x)``; ``need`` is the interval the caller will propagate over."""
    base = build_omega(model, w) if omega is None else omega
    m = base.translate(t)
    if need is not None and not m.covers(*need):
        raise WindowError(f"hull sample window {m.window} does not cover {need}")
    return HullSample(w, Fraction(t), m)


def hull_grid(model: SuspensionModel, w: SubshiftWord, t_steps: int = 8,
              word_shifts: Iterable[int] = range(4),
              need: tuple[float, float] | None = None) -> list[HullSample]:
    """Deterministic hull samples ``alpha_{k*dt}(omega_{S^j x})`` with
    ``dt = max_a l_a / t_steps``.

    ``omega_{S^j x}`` is realised as ``alpha_{s_j}(omega_x)`` on the same window.
    """
    omega = build_omega(model, w)
    times = boundary_times(model, w)
    dt = Fraction(model.max_length) / t_steps
    samples = []
    for j in word_shifts:
        if j >= len(times):
            raise WindowError(f"word shift {j} exceeds the word")
        base_shift = Fraction(times[j])
        for k in range(t_steps):
            samples.append(hull_sample(model, w.shifted(j), k * dt, need,
                                       omega.translate(base_shift)))
    return samples


def check_aperiodicity(model: SuspensionModel, w: SubshiftWord | str,
                       ns: Iterable[int] = range(1, 21)) -> dict:
    """Operational aperiodicity check of the suspension hull."""
    symbolic = is_aperiodicity_consistent(w, ns)
    distinct = model.pieces_differ()
    return {
        "symbolic_aperiodic": symbolic,
        "pieces_differ": distinct,
        "aperiodic": bool(symbolic and distinct),
    }


def restriction_matches(omega: WindowMeasure, start: float, piece: PieceMeasure) -> bool:
    """Whether ``omega`` restricted to ``[start, start + length]`` is the translate of ``piece``."""
    end = start + piece.length
    tol = 1e-12 * max(1.0, abs(end))
    atoms = [(x - start, m) for x, m in omega.atoms() if start - tol <= x <= end + tol]
    want = [(p, m) for p, m in piece.atoms]
    if len(atoms) != len(want):
        return False
    if any(abs(a[0] - b[0]) > tol or a[1] != b[1] for a, b in zip(atoms, want)):
        return False
    segs = [s for s in omega.density_segments() if s.hi > start + tol and s.lo < end - tol]
    if len(segs) != len(piece.densities):
        return False
    for s, t in zip(segs, piece.densities):
        if abs(s.lo - start - t.lo) > tol or abs(s.hi - start - t.hi) > tol:
            return False
        if s.value != t.value or s.samples != t.samples:
            return False
    return True

