"""Transfer matrices of ``-u'' + mu u = z u`` through a windowed measure.

Solutions are tracked as ``(u(t), u'(t+))``. Between singular points the
equation is solved in closed form (constant density) or by RK4 (sampled
profiles); an atom of mass ``m`` at ``t`` adds ``m u(t)`` to the derivative.
Every routine is vectorised over an array of energies.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NumericError, WindowError
from .measures import DensitySegment, PieceMeasure, WindowMeasure

RENORM_AT = 1e100
# max growth exponent allowed in one closed-form step before splitting
CHUNK_GROWTH = 20.0
# profile steps per local wavelength sqrt|V - z|, on top of the per-unit rate
PROFILE_STEPS_PER_WAVE = 32.0
SNAP = 1e-12


@dataclass(frozen=True)
class SolutionState:
    u: complex
    du: complex
    t: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.u) and np.isfinite(self.du)):
            raise NumericError("non-finite solution state")


def step_atom(s: SolutionState, mass: float) -> SolutionState:
    """Jump condition across a point mass: ``u'(t+) = u'(t-) + mass * u(t)``."""
    return SolutionState(s.u, s.du + mass * s.u, s.t)


def step_interval(s: SolutionState, z, density: float | DensitySegment, length: float,
                  steps_per_unit: float = 32.0) -> SolutionState:
    """Propagate a state across ``length`` of constant potential ``density``
    (a number) or of a sampled :class:`DensitySegment` starting at its ``lo``."""
    if not length > 0:
        raise ValueError("length must be positive")
    if not (np.isfinite(s.u) and np.isfinite(s.du) and np.isfinite(z)):
        raise NumericError("non-finite input to step_interval")
    zz = np.asarray([z])
    if isinstance(density, DensitySegment) and not density.is_constant:
        batch = _profile_batch(zz, density, density.lo, density.lo + length, steps_per_unit)
    else:
        v = density.value if isinstance(density, DensitySegment) else float(density)
        batch = _const_batch(zz, v, length)
    u, du = batch.apply(s.u, s.du)
    return SolutionState(_scalar(u[0]), _scalar(du[0]), s.t + length)


def _scalar(x):
    x = complex(x)
    return x.real if x.imag == 0 else x


@dataclass(frozen=True)
class TransferMatrix:
    """``exp(log_scale) * entries``. ``entries`` may carry leading batch axes
    (one per energy), in which case ``log_scale`` has the same batch shape."""

    entries: np.ndarray
    log_scale: np.ndarray | float = 0.0

    @property
    def matrix(self) -> np.ndarray:
        return self.entries * np.exp(np.asarray(self.log_scale))[..., None, None]

    @property
    def shape(self):
        return self.entries.shape[:-2]

    def __getitem__(self, i) -> "TransferMatrix":
        return TransferMatrix(self.entries[i], np.asarray(self.log_scale)[i])

    def __len__(self):
        return self.entries.shape[0]

    def det(self) -> np.ndarray:
        e = self.entries
        raw = e[..., 0, 0] * e[..., 1, 1] - e[..., 0, 1] * e[..., 1, 0]
        return raw * np.exp(2 * np.asarray(self.log_scale))

    def det_error(self) -> np.ndarray:
        """``|det - 1|`` measured against ``||T||_F^2``, the scale at which
        the determinant of a product is representable (1 for bounded T)."""
        e = self.entries
        raw = e[..., 0, 0] * e[..., 1, 1] - e[..., 0, 1] * e[..., 1, 0]
        fro2 = np.sum(np.abs(e) ** 2, axis=(-2, -1))
        ls = np.asarray(self.log_scale)
        target = np.exp(-2 * ls)
        return np.abs(raw - target) / np.maximum(target, fro2)

    def trace(self) -> np.ndarray:
        e = self.entries
        return (e[..., 0, 0] + e[..., 1, 1]) * np.exp(np.asarray(self.log_scale))

    def log_norm(self) -> np.ndarray:
        """Natural log of the spectral norm."""
        return _log_sigma_max(self.entries) + np.asarray(self.log_scale)

    def inverse(self) -> "TransferMatrix":
        e = self.entries
        adj = np.empty_like(e)
        adj[..., 0, 0] = e[..., 1, 1]
        adj[..., 1, 1] = e[..., 0, 0]
        adj[..., 0, 1] = -e[..., 0, 1]
        adj[..., 1, 0] = -e[..., 1, 0]
        # det(true) = 1, so the inverse is the adjugate at the same scale
        return TransferMatrix(adj, self.log_scale)

    def __matmul__(self, other: "TransferMatrix") -> "TransferMatrix":
        prod = self.entries @ other.entries
        ls = np.asarray(self.log_scale) + np.asarray(other.log_scale)
        mx = np.max(np.abs(prod), axis=(-2, -1))
        mx = np.where(mx > 0, mx, 1.0)
        return TransferMatrix(prod / mx[..., None, None], ls + np.log(mx))

    def residual(self, other: "TransferMatrix") -> np.ndarray:
        """``||self - other||_2 / ||self||_2`` evaluated without overflow."""
        ls_a = np.asarray(self.log_scale)
        ls_b = np.asarray(other.log_scale)
        ref = np.maximum(ls_a, ls_b)
        diff = (self.entries * np.exp(ls_a - ref)[..., None, None]
                - other.entries * np.exp(ls_b - ref)[..., None, None])
        num = np.exp(_log_sigma_max(diff))
        den = np.exp(_log_sigma_max(self.entries) + ls_a - ref)
        return num / den

    def csv_row(self, t: float) -> list[float]:
        e = self.entries
        if e.ndim != 2:
            raise ValueError("csv rows are written for a single matrix")
        vals = [e[0, 0], e[0, 1], e[1, 0], e[1, 1]]
        return [t] + [complex(v).real if complex(v).imag == 0 else v for v in vals] + [
            float(self.log_scale)]


def _log_sigma_max(e: np.ndarray) -> np.ndarray:
    # scale to unit max entry first so the squares below cannot overflow
    mx = np.max(np.abs(e), axis=(-2, -1))
    mx = np.where(mx > 0, mx, 1.0)
    e = e / mx[..., None, None]
    a, b, c, d = e[..., 0, 0], e[..., 0, 1], e[..., 1, 0], e[..., 1, 1]
    fro2 = np.abs(a) ** 2 + np.abs(b) ** 2 + np.abs(c) ** 2 + np.abs(d) ** 2
    det = np.abs(a * d - b * c)
    disc = np.sqrt(np.maximum((fro2 - 2 * det) * (fro2 + 2 * det), 0.0))
    smax2 = 0.5 * (fro2 + disc)
    with np.errstate(divide="ignore"):
        return 0.5 * np.log(smax2) + np.log(mx)


class _Batch:
    """Running product ``exp(lg) * [[a, b], [c, d]]`` for an array of energies."""

    __slots__ = ("a", "b", "c", "d", "lg")

    def __init__(self, a, b, c, d, lg=None):
        self.a, self.b, self.c, self.d = a, b, c, d
        self.lg = np.zeros(np.shape(a)) if lg is None else lg

    @classmethod
    def identity(cls, z: np.ndarray) -> "_Batch":
        dtype = complex if np.iscomplexobj(z) else float
        one = np.ones(z.shape, dtype=dtype)
        zero = np.zeros(z.shape, dtype=dtype)
        return cls(one, zero, zero.copy(), one.copy())

    def copy(self) -> "_Batch":
        return _Batch(self.a.copy(), self.b.copy(), self.c.copy(), self.d.copy(), self.lg.copy())

    def lmul(self, m: "_Batch") -> "_Batch":
        """``m @ self`` in place; returns self."""
        a, b, c, d = self.a, self.b, self.c, self.d
        self.a, self.b = m.a * a + m.b * c, m.a * b + m.b * d
        self.c, self.d = m.c * a + m.d * c, m.c * b + m.d * d
        self.lg = self.lg + m.lg
        return self

    def atom(self, mass: float) -> "_Batch":
        self.c = self.c + mass * self.a
        self.d = self.d + mass * self.b
        return self

    def renorm(self, force: bool = False) -> "_Batch":
        mx = np.maximum(np.maximum(np.abs(self.a), np.abs(self.b)),
                        np.maximum(np.abs(self.c), np.abs(self.d)))
        big = mx > RENORM_AT
        if force or big.any():
            if not np.all(np.isfinite(mx)):
                raise NumericError("non-finite transfer matrix entries")
            scale = np.where(big | force, mx, 1.0)
            scale = np.where(scale > 0, scale, 1.0)
            self.a, self.b, self.c, self.d = (self.a / scale, self.b / scale,
                                              self.c / scale, self.d / scale)
            self.lg = self.lg + np.log(scale)
        return self

    def power(self, n: int) -> "_Batch":
        result = None
        base = self.copy()
        while n:
            if n & 1:
                result = base.copy() if result is None else result.lmul(base).renorm()
            n >>= 1
            if n:
                base = base.copy().lmul(base).renorm()
        return result

    def apply(self, u, du):
        s = np.exp(self.lg)
        return s * (self.a * u + self.b * du), s * (self.c * u + self.d * du)

    def to_transfer(self) -> TransferMatrix:
        e = np.stack([np.stack([self.a, self.b], -1), np.stack([self.c, self.d], -1)], -2)
        return TransferMatrix(e, self.lg.copy())


def _cos_sinc(x: np.ndarray, ell: float):
    """``cos(sqrt(x) ell)`` and ``sin(sqrt(x) ell) / sqrt(x)``; both are even
    in ``sqrt(x)`` so the branch of the root is irrelevant."""
    y = x * (ell * ell)
    small = np.abs(y) < 1e-4
    if np.iscomplexobj(x):
        k = np.sqrt(np.where(small, 1.0, x))
        c = np.cos(k * ell)
        s = np.sin(k * ell) / k
    else:
        k = np.sqrt(np.where(small, 1.0, np.abs(x)))
        pos = x >= 0
        c = np.where(pos, np.cos(k * ell), np.cosh(k * ell))
        s = np.where(pos, np.sin(k * ell), np.sinh(k * ell)) / k
    if small.any():
        c_ser = 1 - y / 2 + y * y / 24 - y ** 3 / 720 + y ** 4 / 40320
        s_ser = ell * (1 - y / 6 + y * y / 120 - y ** 3 / 5040 + y ** 4 / 362880)
        c = np.where(small, c_ser, c)
        s = np.where(small, s_ser, s)
    return c, s


def _const_batch(z: np.ndarray, v: float, ell: float) -> _Batch:
    """Exact transfer across ``ell`` of constant potential ``v``."""
    x = z - v
    growth = float(np.max(np.abs(np.sqrt(x.astype(complex)).imag))) * ell
    n = max(1, math.ceil(growth / CHUNK_GROWTH))
    h = ell / n
    c, s = _cos_sinc(x, h)
    step = _Batch(c, s, -x * s, c.copy())
    return step if n == 1 else step.power(n)


def _profile_batch(z: np.ndarray, seg: DensitySegment, x0: float, x1: float,
                   steps_per_unit: float = 32.0) -> _Batch:
    """Fourth-order Magnus transfer across ``[x0, x1]`` of a sampled density profile.

    Each step is the exponential of a traceless matrix, so the determinant
    stays 1 to rounding, and a constant stretch is propagated exactly.
    Integration restarts at every sample knot so each run sees a linear
    potential.
    """
    grid = np.linspace(seg.lo, seg.hi, len(seg.samples))
    vals = np.asarray(seg.samples)
    vmax = float(np.max(np.abs(z[:, None] - vals[None, :])))
    rate = max(steps_per_unit, PROFILE_STEPS_PER_WAVE * math.sqrt(vmax))
    knots = np.concatenate(([x0], grid[(grid > x0) & (grid < x1)], [x1]))
    gauss = (0.5 - math.sqrt(3) / 6, 0.5 + math.sqrt(3) / 6)
    out = _Batch.identity(z)
    count = 0
    for lo, hi in zip(knots[:-1], knots[1:]):
        n = max(1, math.ceil((hi - lo) * rate))
        h = (hi - lo) / n
        for i in range(n):
            t = lo + i * h
            w1 = np.interp(t + gauss[0] * h, grid, vals) - z
            w2 = np.interp(t + gauss[1] * h, grid, vals) - z
            # Omega = h/2 (A1 + A2) + sqrt(3) h^2 / 12 [A2, A1],  A = [[0, 1], [w, 0]]
            q = math.sqrt(3) * h * h / 12 * (w1 - w2)
            wbar = 0.5 * (w1 + w2)
            # Omega^2 = delta I, so exp(Omega) = cosh(sqrt delta) + sinhc(sqrt delta) Omega
            c, sc = _cos_sinc(-(q * q + h * h * wbar), 1.0)
            out.lmul(_Batch(c + sc * q, sc * h, sc * h * wbar, c - sc * q))
            count += 1
            if count % 64 == 0:
                out.renorm()
    return out


def _piece_plan(piece: PieceMeasure, lo: float, hi: float, include_lo: bool) -> list:
    """Elementary steps across ``(lo, hi]`` of a piece (``[lo, hi]`` when
    ``include_lo``), in local coordinates."""
    events = []
    for p, m in piece.atoms:
        if (lo < p or (include_lo and p == lo)) and p <= hi and m != 0:
            events.append((p, 0, m))
    cuts = {lo, hi}
    for s in piece.densities:
        for x in (s.lo, s.hi):
            if lo < x < hi:
                cuts.add(x)
    for p, _, _ in events:
        cuts.add(p)
    cuts = sorted(cuts)
    atoms_at = {}
    for p, _, m in events:
        atoms_at[p] = atoms_at.get(p, 0.0) + m
    plan = []
    if lo in atoms_at:
        plan.append(("atom", atoms_at[lo]))
    for x0, x1 in zip(cuts[:-1], cuts[1:]):
        if x1 <= x0:
            continue
        mid = 0.5 * (x0 + x1)
        seg = next((s for s in piece.densities if s.lo <= mid <= s.hi), None)
        if seg is None:
            plan.append(("const", 0.0, x1 - x0))
        elif seg.is_constant:
            plan.append(("const", seg.value, x1 - x0))
        else:
            plan.append(("profile", seg, x0, x1))
        if x1 in atoms_at:
            plan.append(("atom", atoms_at[x1]))
    return _merge_const(plan)


def _merge_const(plan: list) -> list:
    out = []
    for op in plan:
        if out and op[0] == "const" and out[-1][0] == "const" and out[-1][1] == op[1]:
            out[-1] = ("const", op[1], out[-1][2] + op[2])
        else:
            out.append(op)
    return out


def _run_plan(plan: list, z: np.ndarray, into: _Batch | None = None,
              steps_per_unit: float = 32.0) -> _Batch:
    out = _Batch.identity(z) if into is None else into
    for op in plan:
        if op[0] == "atom":
            out.atom(op[1])
        elif op[0] == "const":
            out.lmul(_const_batch(z, op[1], op[2]))
        else:
            out.lmul(_profile_batch(z, op[1], op[2], op[3], steps_per_unit))
        out.renorm()
    return out


class Propagator:
    """Transfer matrices of one measure for a fixed array of energies.

    Full-piece matrices are cached by piece identity, so a long suspension
    over a small alphabet costs one 2x2 product per piece.
    """

    def __init__(self, m: WindowMeasure, z, steps_per_unit: float = 32.0):
        self.m = m
        z = np.atleast_1d(np.asarray(z))
        if not np.all(np.isfinite(z)):
            raise NumericError("non-finite energy")
        self.z = z
        self.steps_per_unit = steps_per_unit
        self._full: dict[int, _Batch] = {}
        self._starts = m.starts()
        self._pieces = m.ordered_pieces()

    def _full_piece(self, p: PieceMeasure) -> _Batch:
        hit = self._full.get(id(p))
        if hit is None:
            hit = _run_plan(_piece_plan(p, 0.0, p.length, True), self.z,
                            steps_per_unit=self.steps_per_unit)
            self._full[id(p)] = hit
        return hit

    def _advance(self, out: _Batch, a: float, b: float) -> _Batch:
        """Multiply ``out`` by the transfer across ``(a, b]``, ``a < b``."""
        starts = self._starts
        tol_a = SNAP * max(1.0, abs(a))
        tol_b = SNAP * max(1.0, abs(b))
        i = int(np.searchsorted(starts, a + tol_a, side="right")) - 1
        i = max(i, 0)
        n = len(self._pieces)
        while i < n:
            x0 = starts[i]
            p = self._pieces[i]
            after_a = x0 > a + tol_a
            if x0 >= b - tol_b:
                # a piece starting exactly at b still contributes its atoms at b
                if after_a and x0 <= b + tol_b:
                    for pos, mass in p.atoms:
                        if pos == 0.0 and mass != 0:
                            out.atom(mass)
                break
            x1 = starts[i + 1]
            lo = 0.0 if after_a or abs(x0 - a) <= tol_a else a - x0
            full_right = x1 <= b + tol_b
            hi = p.length if full_right else b - x0
            if after_a and full_right:
                out.lmul(self._full_piece(p))
            else:
                _run_plan(_piece_plan(p, lo, hi, after_a), self.z, out, self.steps_per_unit)
            out.renorm()
            i += 1
        return out

    def transfer(self, a: float, b: float,
                 checkpoints: Sequence[float] = ()) -> TransferMatrix | list[TransferMatrix]:
        """Transfer across ``(a, b]``; with ``checkpoints`` (strictly between a and b,
        sorted) also return the matrices at each of them, ending with ``b``."""
        self.m.require(a, b)
        if b < a:
            if checkpoints:
                raise ValueError("checkpoints need a forward interval")
            return self.transfer(b, a).inverse()
        out = _Batch.identity(self.z)
        if not checkpoints:
            if b > a:
                self._advance(out, a, b)
            return out.to_transfer()
        results = []
        prev = a
        for c in list(checkpoints) + [b]:
            if c < prev:
                raise ValueError("checkpoints must be sorted and inside (a, b]")
            if c > prev:
                self._advance(out, prev, c)
            results.append(out.to_transfer())
            prev = c
        return results


def transfer_matrix(m: WindowMeasure, z, a: float, b: float) -> TransferMatrix:
    """``T_z`` across ``(a, b]`` of ``m``. Scalar ``z`` gives a single 2x2
    matrix, an array of energies a batch."""
    scalar = np.ndim(z) == 0
    t = Propagator(m, z).transfer(a, b)
    return t[0] if scalar else t


def discrete_cocycle(model, word, E, n: int, omega: WindowMeasure | None = None) -> TransferMatrix:
    """``T_E(s_n, omega_x)``: transfer across the first ``n`` symbols right of the origin."""
    from .suspension import boundary_times, build_omega

    times = boundary_times(model, word)
    if not 0 <= n < len(times):
        raise WindowError(f"n={n} exceeds the word")
    omega = build_omega(model, word) if omega is None else omega
    return transfer_matrix(omega, E, 0.0, times[n])


def solution_samples(m: WindowMeasure, z: float | complex, init: tuple, a: float, b: float,
                     per_unit: int = 16) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Values ``t, u(t), u'(t+)`` on a uniform grid over ``[a, b]`` for the
    solution with data ``init`` at ``a``."""
    n = max(1, int(math.ceil((b - a) * per_unit)))
    ts = np.linspace(a, b, n + 1)
    mats = Propagator(m, z).transfer(a, b, list(ts[1:-1])) if n > 1 else [
        Propagator(m, z).transfer(a, b)]
    u = [complex(init[0])]
    du = [complex(init[1])]
    for t in mats:
        mm = t[0].matrix
        u.append(mm[0, 0] * init[0] + mm[0, 1] * init[1])
        du.append(mm[1, 0] * init[0] + mm[1, 1] * init[1])
    return ts, np.array(u), np.array(du)


def derivative_bound_constants(m: WindowMeasure, z: float, init: tuple, a: float, b: float,
                               per_unit: int = 64) -> np.ndarray:
    """``max|u'| / max|u|`` on each unit interval of ``[a, b]``."""
    ts, u, du = solution_samples(m, z, init, a, b, per_unit)
    out = []
    k = a
    while k + 1 <= b + 1e-12:
        sel = (ts >= k - 1e-12) & (ts <= k + 1 + 1e-12)
        out.append(np.max(np.abs(du[sel])) / np.max(np.abs(u[sel])))
        k += 1
    return np.array(out)
