"""Config-driven experiment runner.

Config is a sectioned key-value file::

    [meta]
    schema = 1

    [model]
    rule a = ab          ; one line per symbol (substitution model)
    rule b = a
    seed = a
    length = 20000       ; symbols right of the origin
    left = 512           ; mirrored symbols left of the origin
    # period = ab        ; alternative to rules: a periodic model

    [piece a]
    length = 1.0
    atoms =              ; one "pos mass" per line
        0.5 1.0
    densities =          ; one "lo hi value" per line
        0 1 0.0
    profiles =           ; one "lo hi v0 v1 ..." per line (linear interpolation)

    [scan]
    e_min = 0
    e_max = 20
    ...

    [output]
    directory = out
    formats = csv json gp

Unknown sections or keys are rejected.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from configparser import ConfigParser, Error as ParserError
from dataclasses import dataclass
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (ConfigError, InsufficientWindowError, NumericError,
                     TruncationError, WindowError)
from .lyapunov import dyadic_schedule, growth_slopes, uniformity_scan
from .measures import DensitySegment, PieceMeasure, check_sfdp
from .spectral import (approximant_cascade, box_dimension, floquet_bands,
                       gamma_zero_scan, m_function)
from .subshift import (Substitution, SubshiftWord, boshernitzan_profile,
                       substitution_prefix, two_sided)
from .suspension import (SuspensionModel, boundary_times, build_omega,
                         check_aperiodicity, hull_grid)

log = logging.getLogger("quasispec")

SCHEMA = 1
CHUNK = 256        # energies per task; fixed so results do not depend on --threads

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_WINDOW = 0, 2, 3, 4

SCAN_DEFAULTS = {
    "e_min": None,            # default min(0, -2 * uniform-norm bound)
    "e_max": "20",
    "grid": "2001",
    "refine": "0",
    "t_max": "1e4",
    "tol": "1e-2",
    "resolution": "1e-2",
    "levels": "6 12",
    "uniformity_energies": "",
    "uniformity_times": "1e2 1e3 1e4",
    "hull_t_steps": "8",
    "hull_word_shifts": "4",
    "hull_random": "0",
    "mfunction_z": "1+1j 0.5+0.5j",
    "truncation": "50",
    "max_radius": "1e-3",
    "n_max": "64",
    "boshernitzan_length": "1000000",
    "threshold": "0.05",
}
MODEL_KEYS = {"seed", "length", "left", "period"}
PIECE_KEYS = {"length", "atoms", "densities", "profiles"}
OUTPUT_KEYS = {"directory", "formats"}


@dataclass
class ExperimentConfig:
    model: SuspensionModel
    substitution: Substitution | None
    seed_symbol: str
    period: str | None
    length: int
    left: int
    scan: dict
    out_dir: Path
    formats: set[str]
    digest: str

    def word(self, length: int | None = None) -> SubshiftWord:
        n = self.length if length is None else length
        if self.period is not None:
            reps = -(-n // len(self.period))
            return SubshiftWord((self.period * reps)[:n], 0, False, f"period {self.period}")
        return substitution_prefix(self.substitution, self.seed_symbol, n)

    def two_sided_word(self) -> SubshiftWord:
        return two_sided(self.word(), left=self.left)

    @property
    def energy_range(self) -> tuple[float, float]:
        e_min = self.scan["e_min"]
        if e_min is None:
            e_min = min(0.0, -2.0 * self.model.unif_bound())
        return float(e_min), float(self.scan["e_max"])


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(",", " ").split()]


def _lines(text: str) -> list[list[float]]:
    return [_floats(line) for line in text.strip().splitlines() if line.strip()]


def _parse_piece(name: str, sec) -> PieceMeasure:
    unknown = set(sec) - PIECE_KEYS
    if unknown:
        raise ConfigError(f"unknown keys in [piece {name}]: {sorted(unknown)}")
    if "length" not in sec:
        raise ConfigError(f"[piece {name}] needs a length")
    length = float(sec["length"])
    atoms = []
    for row in _lines(sec.get("atoms", "")):
        if len(row) != 2:
            raise ConfigError(f"[piece {name}] atom lines are 'pos mass'")
        atoms.append((row[0], row[1]))
    segs = []
    for row in _lines(sec.get("densities", "")):
        if len(row) != 3:
            raise ConfigError(f"[piece {name}] density lines are 'lo hi value'")
        segs.append(DensitySegment(row[0], row[1], row[2]))
    for row in _lines(sec.get("profiles", "")):
        if len(row) < 4:
            raise ConfigError(f"[piece {name}] profile lines are 'lo hi v0 v1 ...'")
        segs.append(DensitySegment(row[0], row[1], 0.0, tuple(row[2:])))
    return PieceMeasure(length, tuple(sorted(atoms)), tuple(segs), name)


def load_config(path: str | Path, out_override: str | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    cp = ConfigParser(inline_comment_prefixes=(";",), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(raw.decode("utf-8"), source=str(path))
    except (ParserError, UnicodeDecodeError) as exc:
        raise ConfigError(str(exc)) from None
    try:
        return _build_config(cp, raw, out_override)
    except ConfigError:
        raise
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from None


def _build_config(cp: ConfigParser, raw: bytes, out_override: str | None) -> ExperimentConfig:
    for sec in cp.sections():
        if sec not in ("meta", "model", "scan", "output") and not sec.startswith("piece "):
            raise ConfigError(f"unknown section [{sec}]")
    if not cp.has_section("meta") or cp["meta"].get("schema") != str(SCHEMA):
        raise ConfigError(f"[meta] schema = {SCHEMA} is required")
    if set(cp["meta"]) - {"schema"}:
        raise ConfigError(f"unknown keys in [meta]: {sorted(set(cp['meta']) - {'schema'})}")
    if not cp.has_section("model"):
        raise ConfigError("missing [model] section")
    msec = cp["model"]
    rules, other = {}, {}
    for k, v in msec.items():
        if k.startswith("rule "):
            rules[k[5:].strip()] = v.strip()
        elif k in MODEL_KEYS:
            other[k] = v.strip()
        else:
            raise ConfigError(f"unknown key in [model]: {k!r}")
    period = other.get("period")
    if bool(rules) == bool(period):
        raise ConfigError("[model] needs either rule lines or a period, not both")
    substitution = Substitution(rules) if rules else None
    seed = other.get("seed", "")
    if substitution is not None and seed not in rules:
        raise ConfigError(f"[model] seed {seed!r} is not a symbol with a rule")
    symbols = set(rules) if rules else set(period)
    pieces = {sec[6:].strip(): _parse_piece(sec[6:].strip(), cp[sec])
              for sec in cp.sections() if sec.startswith("piece ")}
    if set(pieces) != symbols:
        raise ConfigError(f"pieces {sorted(pieces)} do not match symbols {sorted(symbols)}")
    model = SuspensionModel.from_pieces(pieces)
    length = int(other.get("length", "20000"))
    left = int(other.get("left", "512"))
    if length < 1 or left < 0:
        raise ConfigError("[model] length must be positive and left non-negative")

    scan = dict(SCAN_DEFAULTS)
    if cp.has_section("scan"):
        unknown = set(cp["scan"]) - set(SCAN_DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown keys in [scan]: {sorted(unknown)}")
        scan.update(cp["scan"])
    parsed = _parse_scan(scan)

    out = {"directory": "out", "formats": "csv json gp"}
    if cp.has_section("output"):
        unknown = set(cp["output"]) - OUTPUT_KEYS
        if unknown:
            raise ConfigError(f"unknown keys in [output]: {sorted(unknown)}")
        out.update(cp["output"])
    formats = set(out["formats"].split())
    if not formats <= {"csv", "json", "gp"}:
        raise ConfigError(f"unknown output formats {sorted(formats - {'csv', 'json', 'gp'})}")
    out_dir = Path(out_override or out["directory"])
    return ExperimentConfig(model, substitution, seed, period, length, left, parsed,
                            out_dir, formats, hashlib.sha256(raw).hexdigest())


def _parse_scan(s: dict) -> dict:
    p = {
        "e_min": None if s["e_min"] in (None, "") else float(s["e_min"]),
        "e_max": float(s["e_max"]),
        "grid": int(s["grid"]),
        "refine": int(s["refine"]),
        "t_max": float(s["t_max"]),
        "tol": float(s["tol"]),
        "resolution": float(s["resolution"]),
        "levels": [int(v) for v in s["levels"].split()],
        "uniformity_energies": _floats(s["uniformity_energies"]),
        "uniformity_times": _floats(s["uniformity_times"]),
        "hull_t_steps": int(s["hull_t_steps"]),
        "hull_word_shifts": int(s["hull_word_shifts"]),
        "hull_random": int(s["hull_random"]),
        "mfunction_z": [complex(v) for v in s["mfunction_z"].replace(",", " ").split()],
        "truncation": float(s["truncation"]),
        "max_radius": float(s["max_radius"]),
        "n_max": int(s["n_max"]),
        "boshernitzan_length": int(s["boshernitzan_length"]),
        "threshold": float(s["threshold"]),
    }
    if not p["t_max"] > 0:
        raise ConfigError("t_max must be positive")
    if p["grid"] < 2:
        raise ConfigError("grid needs at least two points")
    if p["e_min"] is not None and not p["e_max"] > p["e_min"]:
        raise ConfigError("energy range is empty")
    if len(p["levels"]) == 2 and p["levels"][1] > p["levels"][0]:
        p["levels"] = list(range(p["levels"][0], p["levels"][1] + 1))
    if any(z.imag <= 0 for z in p["mfunction_z"]):
        raise ConfigError("m-function points need Im z > 0")
    return p


# --- output -------------------------------------------------------------------------

class Run:
    """Output directory, manifest and a seeded generator for one subcommand."""

    def __init__(self, cfg: ExperimentConfig, command: str, seed: int, threads: int):
        self.cfg, self.command, self.seed, self.threads = cfg, command, seed, max(1, threads)
        self.rng = np.random.default_rng(seed)
        self.started = datetime.now(timezone.utc).isoformat()
        self.files: dict[str, str] = {}
        ident = {
            "config_sha256": cfg.digest,
            "seed": seed,
            "versions": self.versions(),
        }
        # deterministic part only, so reruns tag their files identically
        self.manifest_hash = hashlib.sha256(
            json.dumps(ident, sort_keys=True).encode()).hexdigest()
        self.ident = ident
        cfg.out_dir.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def versions() -> dict:
        return {"quasispec": __version__, "numpy": np.__version__,
                "python": platform.python_version()}

    def _write(self, name: str, text: str):
        data = text.encode()
        (self.cfg.out_dir / name).write_bytes(data)
        self.files[name] = hashlib.sha256(data).hexdigest()

    def csv(self, name: str, header: list[str], rows):
        if "csv" not in self.cfg.formats:
            return
        buf = io.StringIO()
        buf.write(f"# manifest {self.manifest_hash}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
        self._write(name, buf.getvalue())

    def json(self, name: str, obj):
        if "json" not in self.cfg.formats:
            return
        obj = dict(obj, manifest_hash=self.manifest_hash)
        self._write(name, json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")

    def gp(self, name: str, blocks: list[list[tuple[float, float]]]):
        """Two-column data, blank line between blocks."""
        if "gp" not in self.cfg.formats:
            return
        lines = [f"# manifest {self.manifest_hash}"]
        for i, block in enumerate(blocks):
            if i:
                lines.append("")
            lines.extend(f"{_fmt(x)} {_fmt(y)}" for x, y in block)
        self._write(name, "\n".join(lines) + "\n")

    def finish(self, status: int):
        manifest = dict(self.ident, manifest_hash=self.manifest_hash, command=self.command,
                        threads=self.threads, status=status, files=self.files,
                        timestamps={"start": self.started,
                                    "end": datetime.now(timezone.utc).isoformat()})
        path = self.cfg.out_dir / f"manifest-{self.command}.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    def map_energies(self, fn, energies: np.ndarray) -> np.ndarray:
        """Apply a vectorised ``fn`` over fixed-size energy chunks, in order."""
        chunks = [energies[i:i + CHUNK] for i in range(0, len(energies), CHUNK)]
        if self.threads == 1 or len(chunks) == 1:
            parts = [fn(c) for c in chunks]
        else:
            with ThreadPoolExecutor(self.threads) as pool:
                parts = list(pool.map(fn, chunks))
        return np.concatenate(parts, axis=-1)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


# --- subcommands --------------------------------------------------------------------

def cmd_validate(run: Run) -> dict:
    cfg = run.cfg
    warnings = []
    sfdp = check_sfdp(cfg.model.alphabet)
    if not sfdp:
        warnings.append(f"sfdp sufficient condition fails: pieces {sfdp.witness} are both "
                        "multiples of Lebesgue measure")
    if not cfg.model.atomless:
        warnings.append("atomless=false: some piece carries point masses")
    word = cfg.word(min(cfg.length, 100000))
    aper = check_aperiodicity(cfg.model, word, range(1, min(21, len(word) // 10 + 1)))
    if not aper["aperiodic"]:
        warnings.append("aperiodicity check fails")
    omega = build_omega(cfg.model, two_sided(cfg.word(min(cfg.length, 4096)),
                                             left=min(cfg.left, 4096)))
    for w in warnings:
        log.warning(w)
    report = {
        "atomless": cfg.model.atomless,
        "sfdp_sufficient": bool(sfdp),
        "sfdp_witness": sfdp.witness,
        "aperiodicity": aper,
        "substitution_primitive": cfg.substitution.is_primitive() if cfg.substitution else None,
        "unif_norm": omega.unif_norm(),
        "unif_bound": cfg.model.unif_bound(),
        "warnings": warnings,
    }
    run.json("validate.json", report)
    return report


def _grid(cfg: ExperimentConfig) -> np.ndarray:
    e0, e1 = cfg.energy_range
    return np.linspace(e0, e1, cfg.scan["grid"])


def cmd_lyapunov_scan(run: Run) -> dict:
    cfg = run.cfg
    omega = build_omega(cfg.model, cfg.two_sided_word())
    t_max = cfg.scan["t_max"]
    omega.require(0.0, t_max)
    grid = _grid(cfg)
    times = dyadic_schedule(t_max)
    slopes = run.map_energies(lambda E: growth_slopes(omega, E, times), grid)
    gamma = np.maximum(slopes[-1], 0.0)
    run.csv("lyapunov.csv", ["E", "t", "sample", "slope"],
            ((E, t, 0, slopes[i, j]) for j, E in enumerate(grid) for i, t in enumerate(times)))
    run.gp("lyapunov.gp", [list(zip(grid, gamma))])
    report = {"t_max": t_max, "energies": len(grid), "gamma_max": float(gamma.max()),
              "gamma_min": float(gamma.min())}
    run.json("lyapunov.json", report)
    return report


def cmd_spectrum(run: Run) -> dict:
    cfg = run.cfg
    e_range = cfg.energy_range
    res = cfg.scan["resolution"]
    rows, blocks, levels = [], [], []
    if cfg.period is not None:
        bs = floquet_bands(cfg.model, SubshiftWord(cfg.period, 0, True), e_range, res)
        cascade = [(0, bs, bs.measure, None)]
    else:
        cascade = [(c.level, c.bands, c.measure, c.nesting) for c in
                   approximant_cascade(cfg.model, cfg.substitution, cfg.seed_symbol,
                                       cfg.scan["levels"], e_range, res)]
    for level, bs, measure, nesting in cascade:
        rows.extend(bs.to_csv_rows(level))
        blocks.extend([[(lo, level), (hi, level)] for lo, hi in bs])
        levels.append({"level": level, "bands": len(bs), "measure": measure,
                       "nesting": nesting})
    run.csv("bands.csv", ["level", "E_lo", "E_hi"], rows)
    run.gp("cascade.gp", blocks)

    omega = build_omega(cfg.model, cfg.two_sided_word())
    t_max, tol = cfg.scan["t_max"], cfg.scan["tol"]
    omega.require(0.0, t_max)
    scan = gamma_zero_scan(omega, _grid(cfg), t_max, tol, refine=cfg.scan["refine"])
    run.csv("gamma_scan.csv", ["E", "gamma_hat", "marked", "isolated"],
            zip(scan.energies, scan.gamma, scan.marked.astype(int), scan.isolated.astype(int)))
    run.csv("gamma_bands.csv", ["level", "E_lo", "E_hi"], scan.bands.to_csv_rows("gamma-scan"))
    run.gp("gamma.gp", [list(zip(scan.energies, scan.gamma))])
    last = cascade[-1][1]
    eps = [res * 2 ** k for k in range(6)]
    report = {
        "energy_range": e_range,
        "cascade": levels,
        "box_dimension": box_dimension(last, eps) if len(last) else None,
        "gamma_scan": {"t_max": t_max, "tol": tol, "bands": len(scan.bands),
                       "measure": scan.bands.measure,
                       "isolated_points": int(scan.isolated.sum())},
    }
    run.json("spectrum.json", report)
    return report


def _hull_samples(run: Run, need: tuple[float, float]):
    cfg = run.cfg
    w = cfg.two_sided_word()
    samples = hull_grid(cfg.model, w, cfg.scan["hull_t_steps"],
                        range(cfg.scan["hull_word_shifts"]), need)
    if cfg.scan["hull_random"]:
        base = build_omega(cfg.model, w)
        span = boundary_times(cfg.model, w)[min(64, len(w.right) - 1)]
        for t in run.rng.uniform(0.0, span, cfg.scan["hull_random"]):
            m = base.translate(Fraction(float(t)))
            m.require(*need)
            samples.append(m)
    return samples


def cmd_uniformity(run: Run) -> dict:
    cfg = run.cfg
    times = sorted(cfg.scan["uniformity_times"])
    energies = cfg.scan["uniformity_energies"]
    if not energies:
        e0, e1 = cfg.energy_range
        energies = list(np.linspace(e0, e1, 12)[1:-1])
    energies = np.array(energies, dtype=float)
    samples = _hull_samples(run, (0.0, times[-1] + 2 * cfg.model.max_length))
    reports = uniformity_scan(samples, energies, times, span=cfg.model.max_length)
    rows = []
    for r in reports:
        for i, t in enumerate(times):
            for k, lab in enumerate(r.labels):
                rows.append((r.E, t, lab, r.deviations[i, k]))
    run.csv("uniformity.csv", ["E", "t", "sample", "deviation"], rows)
    out = {"samples": len(samples), "times": times, "energies": [
        {"E": r.E, "gamma_hat": r.gamma_hat, "sup_by_time": r.sup_by_time,
         "strictly_decreasing": r.strictly_decreasing, "verdict": r.verdict}
        for r in reports]}
    run.json("uniformity.json", out)
    return out


def cmd_mfunction(run: Run) -> dict:
    cfg = run.cfg
    T = cfg.scan["truncation"]
    omega = build_omega(cfg.model, cfg.two_sided_word())
    omega.require(-T, T)
    vals = [m_function(omega, z, T, cfg.scan["max_radius"]) for z in cfg.scan["mfunction_z"]]
    run.csv("mfunction.csv", ["re_z", "im_z", "re_m_plus", "im_m_plus", "re_m_minus",
                              "im_m_minus", "radius_plus", "radius_minus"],
            ((v.z.real, v.z.imag, v.m_plus.real, v.m_plus.imag, v.m_minus.real,
              v.m_minus.imag, v.radius_plus, v.radius_minus) for v in vals))
    out = {"truncation": T, "herglotz": all(v.herglotz for v in vals), "points": len(vals)}
    run.json("mfunction.json", out)
    return out


def cmd_boshernitzan(run: Run) -> dict:
    cfg = run.cfg
    w = cfg.word(cfg.scan["boshernitzan_length"])
    prof = boshernitzan_profile(w, cfg.scan["n_max"], cfg.scan["threshold"])
    run.csv("boshernitzan.csv", ["n", "eta", "n_eta"],
            zip(prof.ns, prof.eta, prof.values))
    run.gp("boshernitzan.gp", [list(zip(prof.ns, prof.values))])
    out = {"word_length": prof.word_length, "n_max": int(prof.ns[-1]),
           "min_n_eta": float(prof.values.min()), "final_n_eta": float(prof.values[-1]),
           "verdict": prof.verdict, "notes": prof.notes}
    run.json("boshernitzan.json", out)
    return out


def cmd_report(run: Run) -> dict:
    out = {}
    for name, fn in (("validate", cmd_validate), ("lyapunov_scan", cmd_lyapunov_scan),
                     ("spectrum", cmd_spectrum), ("uniformity", cmd_uniformity),
                     ("mfunction", cmd_mfunction), ("boshernitzan", cmd_boshernitzan)):
        out[name] = fn(run)
    run.json("report.json", out)
    return out


COMMANDS = {
    "validate": cmd_validate,
    "lyapunov-scan": cmd_lyapunov_scan,
    "spectrum": cmd_spectrum,
    "uniformity": cmd_uniformity,
    "mfunction": cmd_mfunction,
    "boshernitzan": cmd_boshernitzan,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="quasispec", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="experiment config file")
    p.add_argument("--out", help="output directory (overrides [output] directory)")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=0, help="seed for randomized sampling (u64)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if not 0 <= args.seed < 2 ** 64:
        log.error("seed must fit in an unsigned 64-bit integer")
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config, args.out)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    run = Run(cfg, args.command, args.seed, args.threads)
    status = EXIT_OK
    try:
        COMMANDS[args.command](run)
    except (WindowError, InsufficientWindowError) as exc:
        log.error("window coverage: %s", exc)
        status = EXIT_WINDOW
    except (NumericError, TruncationError, FloatingPointError) as exc:
        log.error("numeric failure: %s", exc)
        status = EXIT_NUMERIC
    except ConfigError as exc:
        log.error("config error: %s", exc)
        status = EXIT_CONFIG
    run.finish(status)
    return status


if __name__ == "__main__":
    sys.exit(main())
