"""Substitution subshifts: word generation, factor statistics and
Boshernitzan's minimal-frequency profile."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientWindowError

log = logging.getLogger(__name__)

B_THRESHOLD = 0.05


@dataclass(frozen=True)
class Substitution:
    """A substitution on single-character symbols, e.g. ``{"a": "ab", "b": "a"}``."""

    rules: dict[str, str]

    def __post_init__(self):
        if not self.rules:
            raise ValueError("substitution needs at least one rule")
        for a, img in self.rules.items():
            if len(a) != 1:
                raise ValueError(f"symbols are single characters, got {a!r}")
            if not img:
                raise ValueError(f"rule for {a!r} has an empty image")
            missing = set(img) - set(self.rules)
            if missing:
                raise ValueError(f"rule {a} -> {img} uses undefined symbols {sorted(missing)}")

    @classmethod
    def fibonacci(cls) -> "Substitution":
        return cls({"a": "ab", "b": "a"})

    @classmethod
    def thue_morse(cls) -> "Substitution":
        return cls({"a": "ab", "b": "ba"})

    @property
    def alphabet(self) -> tuple[str, ...]:
        return tuple(sorted(self.rules))

    def matrix(self) -> np.ndarray:
        """``M[i, j]`` = number of occurrences of symbol i in the image of symbol j."""
        alpha = self.alphabet
        idx = {a: i for i, a in enumerate(alpha)}
        m = np.zeros((len(alpha), len(alpha)), dtype=np.int64)
        for j, a in enumerate(alpha):
            for c in self.rules[a]:
                m[idx[c], j] += 1
        return m

    def is_primitive(self) -> bool:
        m = (self.matrix() > 0).astype(np.int64)
        k = len(m)
        p = np.eye(k, dtype=np.int64)
        # Wielandt: a primitive matrix has a positive power at most (k-1)^2 + 1
        for _ in range((k - 1) ** 2 + 1):
            p = np.minimum(p @ m, 1)
            if p.min() > 0:
                return True
        return False

    def apply(self, word: str) -> str:
        return word.translate(str.maketrans(self.rules))


@dataclass(frozen=True)
class SubshiftWord:
    """A finite window ``x(-origin_index) ... x(len - origin_index - 1)`` of a
    sequence over the alphabet."""

    symbols: str
    origin_index: int = 0
    periodic: bool = False
    provenance: str = ""

    def __post_init__(self):
        if not self.symbols:
            raise ValueError("empty word")
        if not 0 <= self.origin_index < len(self.symbols):
            raise ValueError("origin outside the word")

    def __len__(self):
        return len(self.symbols)

    def __str__(self):
        return self.symbols

    @property
    def right(self) -> str:
        """``x(0) x(1) ...``"""
        return self.symbols[self.origin_index:]

    @property
    def left(self) -> str:
        """``... x(-2) x(-1)``"""
        return self.symbols[:self.origin_index]

    def shifted(self, k: int) -> "SubshiftWord":
        """The word of ``S^k x`` (origin moved k places to the right)."""
        return SubshiftWord(self.symbols, self.origin_index + k, self.periodic, self.provenance)

    def as_array(self) -> tuple[np.ndarray, tuple[str, ...]]:
        alpha = tuple(sorted(set(self.symbols)))
        codes = np.frombuffer(self.symbols.encode("utf-32-le"), dtype=np.uint32)
        lut = {ord(a): i for i, a in enumerate(alpha)}
        arr = np.empty(len(codes), dtype=np.int64)
        for code, i in lut.items():
            arr[codes == code] = i
        return arr, alpha


def two_sided(word: SubshiftWord | str, left: int | None = None,
              extension: str | None = None) -> SubshiftWord:
    """Attach a left half to a one-sided word.

    By default the left half mirrors the right one, ``x(-k) = x(k-1)``;
    pass ``extension`` (read left to right, ending at ``x(-1)``) to override.
    """
    right = word.right if isinstance(word, SubshiftWord) else word
    if extension is None:
        left = len(right) if left is None else left
        if left > len(right):
            raise InsufficientWindowError("mirror extension longer than the word")
        extension = right[:left][::-1]
        how = "mirror"
    else:
        how = "user"
    return SubshiftWord(extension + right, len(extension), False, f"two-sided:{how}")


def iterate_substitution(s: Substitution, seed: str, n: int) -> SubshiftWord:
    """``s^n(seed)``."""
    if seed not in s.rules:
        raise ValueError(f"unknown seed symbol {seed!r}")
    if n < 0:
        raise ValueError("iteration count must be non-negative")
    w = seed
    for _ in range(n):
        w = s.apply(w)
    return SubshiftWord(w, 0, False, f"substitution^{n}({seed})")


def substitution_prefix(s: Substitution, seed: str, length: int) -> SubshiftWord:
    """Iterate until the word has at least ``length`` symbols and cut there.

    Requires the image of ``seed`` to start with ``seed`` so iterates are
    nested prefixes.
    """
    if not s.rules[seed].startswith(seed):
        raise ValueError(f"substitution does not fix the first letter of {seed!r}")
    w, n = seed, 0
    while len(w) < length:
        nxt = s.apply(w)
        if len(nxt) == len(w):
            raise ValueError("substitution does not grow; cannot reach the requested length")
        w, n = nxt, n + 1
    return SubshiftWord(w[:length], 0, False, f"prefix of substitution^{n}({seed})")


def periodic_approximant(s: Substitution, seed: str, n: int) -> SubshiftWord:
    """One period ``s^n(seed)`` of the periodic approximant."""
    w = iterate_substitution(s, seed, n)
    return SubshiftWord(w.symbols, 0, True, f"period of substitution^{n}({seed})")


def factor_complexity(w: SubshiftWord | str, n: int) -> int:
    """Number of distinct length-``n`` blocks in the word."""
    symbols = str(w)
    if n < 1:
        raise ValueError("n must be positive")
    if n > len(symbols):
        raise InsufficientWindowError(f"n={n} exceeds word length {len(symbols)}")
    return len({symbols[i:i + n] for i in range(len(symbols) - n + 1)})


def is_aperiodicity_consistent(w: SubshiftWord | str, ns) -> bool:
    """Morse-Hedlund test: complexity at least n + 1 for every tested n."""
    return all(factor_complexity(w, n) >= n + 1 for n in ns)


def minimal_period(w: SubshiftWord | str) -> int:
    """Smallest p with ``w[i] == w[i + p]`` for all valid i."""
    s = str(w)
    fail = [0] * len(s)
    k = 0
    for i in range(1, len(s)):
        while k and s[i] != s[k]:
            k = fail[k - 1]
        if s[i] == s[k]:
            k += 1
        fail[i] = k
    return len(s) - fail[-1]


@dataclass(frozen=True)
class CylinderStats:
    n: int
    counts: dict[str, int]
    total: int

    def __post_init__(self):
        if sum(self.counts.values()) != self.total:
            raise ValueError("counts do not add up to the number of windows")

    def frequencies(self) -> dict[str, float]:
        return {k: v / self.total for k, v in self.counts.items()}

    @property
    def eta(self) -> float:
        """Smallest empirical cylinder frequency."""
        return min(self.counts.values()) / self.total


def _check_length(length: int, n: int) -> None:
    if n < 1:
        raise ValueError("n must be positive")
    if n > length:
        raise InsufficientWindowError(f"n={n} exceeds word length {length}")
    if length < 10 * n:
        log.warning("word of length %d is short for cylinder statistics at n=%d", length, n)


def cylinder_frequencies(w: SubshiftWord | str, n: int) -> CylinderStats:
    """Sliding-window counts of all length-``n`` factors."""
    symbols = str(w)
    _check_length(len(symbols), n)
    if n == 1:
        counts: dict[str, int] = {}
        for c in set(symbols):
            counts[c] = symbols.count(c)
    else:
        ids, uniq_first, cnt = _window_ids(symbols, n)
        counts = {symbols[i:i + n]: int(c) for i, c in zip(uniq_first, cnt)}
    return CylinderStats(n, counts, len(symbols) - n + 1)


def _window_ids(symbols: str, n: int):
    arr, alpha = SubshiftWord(symbols).as_array()
    for ids, first, cnt, m in _iter_window_ids(arr, len(alpha)):
        if m == n:
            return ids, first, cnt
    raise AssertionError("unreachable")


def _iter_window_ids(arr: np.ndarray, k: int, n_max: int | None = None):
    """Yield exact dense ids of all length-m windows for m = 1, 2, ...

    Each step refines the previous ids by the next symbol, so ids are exact
    (no hashing).
    """
    n_max = len(arr) if n_max is None else n_max
    _, first, inv, cnt = np.unique(arr, return_index=True, return_inverse=True, return_counts=True)
    ids = inv.ravel()
    yield ids, first, cnt, 1
    for m in range(2, n_max + 1):
        key = ids[:-1] * k + arr[m - 1:]
        _, first, inv, cnt = np.unique(key, return_index=True, return_inverse=True,
                                       return_counts=True)
        ids = inv.ravel()
        yield ids, first, cnt, m


@dataclass(frozen=True)
class BoshernitzanProfile:
    """Empirical ``n * eta(n)`` for n = 1..n_max."""

    ns: np.ndarray
    eta: np.ndarray
    threshold: float = B_THRESHOLD
    word_length: int = 0
    notes: list[str] = field(default_factory=list)

    @property
    def values(self) -> np.ndarray:
        return self.ns * self.eta

    def pairs(self) -> list[tuple[int, float]]:
        return [(int(n), float(v)) for n, v in zip(self.ns, self.values)]

    @property
    def b_consistent(self) -> bool:
        return bool(self.values[-1] >= self.threshold)

    @property
    def verdict(self) -> str:
        return "B-consistent" if self.b_consistent else "B-inconsistent"


def boshernitzan_profile(w: SubshiftWord | str, n_max: int,
                         threshold: float = B_THRESHOLD) -> BoshernitzanProfile:
    """Minimal cylinder frequencies ``eta(n)`` for n up to ``n_max``.

    The verdict compares ``n_max * eta(n_max)`` with ``threshold``.
    """
    symbols = str(w)
    if n_max < 1:
        raise ValueError("n_max must be positive")
    if n_max > len(symbols) // 10:
        raise InsufficientWindowError(
            f"n_max={n_max} needs a word of at least {10 * n_max} symbols, got {len(symbols)}")
    arr, alpha = SubshiftWord(symbols).as_array()
    eta = np.empty(n_max)
    for _, _, cnt, m in _iter_window_ids(arr, len(alpha), n_max):
        eta[m - 1] = cnt.min() / (len(arr) - m + 1)
    notes = []
    # boundary windows may lift eta(n+1) above eta(n) by at most one count
    slack = 1.0 / (len(arr) - n_max)
    if np.any(np.diff(eta) > slack):
        notes.append("eta(n) increased beyond boundary slack")
    return BoshernitzanProfile(np.arange(1, n_max + 1), eta, threshold, len(arr), notes)


def letter_frequencies(w: SubshiftWord | str) -> dict[str, float]:
    return cylinder_frequencies(w, 1).frequencies()
