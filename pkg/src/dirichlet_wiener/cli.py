"""Command-line front end.

Every subcommand reads an optional flat TOML config, applies flag overrides,
runs one experiment and prints a JSON report.  Reports embed the resolved
config, its sha256, the seed and the package version, and are byte-identical
for identical inputs whatever ``--threads`` is.

Exit status: 0 on success, 2 on a configuration error, 3 on a numerical
failure (overflow, divergent series, unresolved index, missing certificate).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .basis import (
    PathSample,
    haar_cells,
    rank_mk,
    schauder_eval,
    synthesize_path,
    synthesize_values,
    wiener_coefficients_batch,
)
from .cylindrical import CylindricalFunction, carre_du_champ, dirichlet_energy
from .errors import (
    CertificateUnavailable,
    ClassError,
    DivergentSeriesError,
    ResolutionError,
    SimulationOverflowError,
)
from .generator import DRIFT_SIGNS, GeneratorConfig, apply_generator, symmetry_oracle
from .simulate import SimConfig, estimate_evaluation_moments, estimate_local_moments, run_ensemble
from .spectral import EigenvalueSequence, closability_report, eigen_sum_brute_force, eigen_sum_closed_form
from .weight import make_weight

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

COMMANDS = ("basis", "lemma", "closability", "energy", "generator", "simulate", "moments")

# key -> (kind, default); kinds: int, float, str, ints, floats
SCHEMA = {
    "d": ("int", 1),
    "lambda": ("str", "power:0.5"),
    "weight": ("str", "zero"),
    "freq": ("float", 1.0),
    "c": ("float", 1.0),
    "kappa": ("float", 1.0),
    "radius": ("float", 1.0),
    "level": ("int", 6),
    "max_level": ("int", 6),
    "depth": ("int", 32),
    "truncation": ("int", 4),
    "samples": ("int", 10_000),
    "seed": ("int", 0),
    "dt": ("float", 1e-4),
    "horizon": ("float", 1e-2),
    "drift_sign": ("str", "oracle"),
    "F": ("str", "x1(1)"),
    "G": ("str", "x1(1)"),
    "start": ("floats", []),
    "indices": ("ints", []),
    "t_ladder": ("floats", []),
    "eval_v": ("int", 1),
    "eval_s": ("str", ""),
    "n_se": ("float", 3.0),
}

# flag dest -> config key
FLAG_KEYS = {
    "lam": "lambda",
    "weight": "weight",
    "max_level": "max_level",
    "level": "level",
    "samples": "samples",
    "truncation": "truncation",
    "d": "d",
    "dt": "dt",
    "horizon": "horizon",
    "drift_sign": "drift_sign",
    "F": "F",
    "G": "G",
}


class ConfigError(ValueError):
    pass


def _coerce(key: str, value):
    kind = SCHEMA[key][0]
    bad = ConfigError(f"config key {key!r} expects {kind}, got {value!r}")
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise bad
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise bad
        return float(value)
    if kind == "str":
        if not isinstance(value, str):
            raise bad
        return value
    if not isinstance(value, list):
        raise bad
    item = "int" if kind == "ints" else "float"
    out = []
    for v in value:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or (item == "int" and not isinstance(v, int)):
            raise bad
        out.append(v if item == "int" else float(v))
    return out


def _parse_literal(key: str, text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        if SCHEMA[key][0] == "str":
            return text
        raise ConfigError(f"cannot parse value {text!r} for {key!r}") from None


def resolve_config(args: argparse.Namespace, environ=None) -> dict:
    """Defaults, then the config file, then ``SEED``, then flags."""
    environ = os.environ if environ is None else environ
    cfg = {k: v for k, (_, v) in SCHEMA.items()}
    if args.config:
        try:
            with open(args.config, "rb") as fh:
                data = tomllib.load(fh)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        unknown = sorted(set(data) - set(SCHEMA))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        for k, v in data.items():
            cfg[k] = _coerce(k, v)
    if "SEED" in environ:
        try:
            cfg["seed"] = int(environ["SEED"])
        except ValueError:
            raise ConfigError(f"SEED must be an integer, got {environ['SEED']!r}") from None
    for item in args.set or []:
        key, sep, text = item.partition("=")
        key = key.strip()
        if not sep or key not in SCHEMA:
            raise ConfigError(f"--set expects KEY=VALUE with a known key, got {item!r}")
        cfg[key] = _coerce(key, _parse_literal(key, text.strip()))
    for dest, key in FLAG_KEYS.items():
        value = getattr(args, dest, None)
        if value is not None:
            cfg[key] = _coerce(key, value)
    if args.seed is not None:
        cfg["seed"] = args.seed
    _validate(cfg)
    return cfg


def _validate(cfg: dict):
    if cfg["d"] < 1:
        raise ConfigError("d must be positive")
    for key in ("level", "max_level", "truncation", "samples", "depth"):
        if cfg[key] < 1:
            raise ConfigError(f"{key} must be positive")
    if cfg["samples"] < 2:
        raise ConfigError("samples must be at least 2")
    if cfg["drift_sign"] not in DRIFT_SIGNS:
        raise ConfigError(f"drift_sign must be one of {sorted(DRIFT_SIGNS)}")
    if len(cfg["start"]) > cfg["d"] << cfg["level"]:
        raise ConfigError("start has more coordinates than the grid resolves")


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def dump_report(report: dict) -> str:
    return json.dumps(_clean(report), indent=2, sort_keys=True) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


# ---- experiment builders -------------------------------------------------


def _lam(cfg):
    try:
        return EigenvalueSequence.parse(cfg["lambda"], d=cfg["d"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _weight(cfg):
    try:
        return make_weight(cfg["weight"], cfg["d"], freq=cfg["freq"], c=cfg["c"], kappa=cfg["kappa"], radius=cfg["radius"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _function(cfg, key):
    try:
        return CylindricalFunction.parse(cfg[key], cfg["d"])
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def _start(cfg) -> PathSample:
    coeffs = np.zeros(cfg["d"] << cfg["level"])
    coeffs[: len(cfg["start"])] = cfg["start"]
    return synthesize_path(coeffs, cfg["level"], cfg["d"])


def _generator(cfg) -> GeneratorConfig:
    return GeneratorConfig(_lam(cfg), _weight(cfg), cfg["drift_sign"])


def _sim(cfg, threads) -> SimConfig:
    try:
        return SimConfig(
            _generator(cfg), _start(cfg), cfg["truncation"], dt=cfg["dt"], horizon=cfg["horizon"],
            samples=cfg["samples"], seed=cfg["seed"], threads=threads,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# ---- subcommands: each returns (result dict, {csv name: text}) -----------


def cmd_basis(cfg, threads):
    L, d = cfg["max_level"], cfg["d"]
    H = haar_cells(L)
    gram = H @ H.T / (1 << L)
    ortho = float(np.max(np.abs(gram - np.eye(len(gram)))))
    rng = np.random.Generator(np.random.Philox(cfg["seed"]))
    coeffs = rng.standard_normal((16, d << L))
    back = wiener_coefficients_batch(synthesize_values(coeffs, L, d), d << L, L)
    roundtrip = float(np.max(np.abs(back - coeffs)))
    result = {
        "orthonormality_error": ortho,
        "roundtrip_error": roundtrip,
        "passed": ortho <= 1e-12 and roundtrip <= 1e-12,
    }
    rows = []
    for r in range(1, (1 << L) + 1):
        mk = rank_mk(r)
        rows.append([r, -1 if mk is None else mk[0], -1 if mk is None else mk[1]])
    grid = np.linspace(0.0, 1.0, (1 << min(L, 6)) + 1)
    table = [[float(t)] + [float(schauder_eval(i, t, d)[(i - 1) % d]) for i in range(1, min(d << L, 16) + 1)] for t in grid]
    header = ["t"] + [f"S{i}" for i in range(1, min(d << L, 16) + 1)]
    return result, {"ranks.csv": _csv(["r", "m", "k"], rows), "schauder.csv": _csv(header, table)}


def cmd_lemma(cfg, threads):
    lam, d, L = _lam(cfg), cfg["d"], cfg["max_level"]
    rows = []
    for level in range(0, L + 1):
        for num in range(1, 1 << level):
            if level and num % 2 == 0:
                continue
            s = f"{num}/{1 << level}"
            rows += _lemma_rows(s, lam, d)
    rows += _lemma_rows("1", lam, d)
    worst = max(r[4] for r in rows)
    result = {"n_identities": len(rows), "max_abs_error": worst, "tolerance": 1e-10, "passed": worst <= 1e-10}
    return result, {"lemma.csv": _csv(["s", "j", "closed_form", "brute_force", "abs_error"], rows)}


def _lemma_rows(s, lam, d):
    out = []
    for j in range(1, d + 1):
        a = eigen_sum_closed_form(s, j, lam, d)
        b = eigen_sum_brute_force(s, j, lam, d)
        out.append([s, j, a, b, abs(a - b)])
    return out


def cmd_closability(cfg, threads):
    rep = closability_report(_lam(cfg), cfg["d"], depth=max(cfg["depth"], 8))
    rows = []
    for name, cond in (("first", rep.first), ("second", rep.second)):
        for j, sums in cond.partial_sums.items():
            rows += [[name, j, p, v] for p, v in enumerate(sums, start=1)]
    result = rep.to_dict()
    result["verdict"] = rep.verdict
    return result, {"partial_sums.csv": _csv(["series", "j", "p", "partial_sum"], rows)}


def cmd_energy(cfg, threads):
    F, G = _function(cfg, "F"), _function(cfg, "G")
    lam, w = _lam(cfg), _weight(cfg)
    est = dirichlet_energy(
        F, G, lam, w, level=cfg["level"], samples=cfg["samples"], seed=cfg["seed"], threads=threads,
    )
    result = {"energy": est.to_dict(), "carre_du_champ_at_start": carre_du_champ(F, _start(cfg), lam)}
    return result, {}


def cmd_generator(cfg, threads):
    F, G = _function(cfg, "F"), _function(cfg, "G")
    gen = _generator(cfg)
    tau = _start(cfg)
    rep = symmetry_oracle(
        F, G, gen, level=cfg["level"], samples=cfg["samples"], seed=cfg["seed"], threads=threads, n_se=cfg["n_se"],
    )
    result = {
        "generator_at_start": {s: apply_generator(F, tau, gen.with_sign(s)) for s in DRIFT_SIGNS},
        "symmetry": rep.to_dict(),
        "default_sign_passes": gen.drift_sign in rep.passing,
    }
    return result, {}


def cmd_simulate(cfg, threads):
    sim = _sim(cfg, threads)
    steps = round(sim.horizon / sim.dt)
    states = run_ensemble(sim, [0, steps])
    final = states[steps]
    rows = []
    for i in range(sim.truncation):
        x = final[:, i]
        rows.append([i + 1, float(np.mean(x)), float(np.std(x, ddof=1) / np.sqrt(x.size)), float(np.var(x, ddof=1))])
    result = {
        "steps": steps,
        "t": steps * sim.dt,
        "coordinates": [dict(zip(("index", "mean", "se", "variance"), r)) for r in rows],
    }
    return result, {"coordinates.csv": _csv(["index", "mean", "se", "variance"], rows)}


def cmd_moments(cfg, threads):
    sim = _sim(cfg, threads)
    ladder = cfg["t_ladder"] or [4 * sim.dt, 16 * sim.dt, 64 * sim.dt]
    indices = cfg["indices"] or list(range(1, min(3, sim.truncation) + 1))
    rep = estimate_local_moments(sim, indices, ladder, n_se=cfg["n_se"])
    evaluation = None
    if cfg["eval_s"]:
        evaluation = estimate_evaluation_moments(sim, cfg["eval_v"], cfg["eval_s"], ladder, n_se=cfg["n_se"])
    result = {"local": rep.to_dict(), "passed": rep.all_passed}
    files = {"first_moment.csv": rep.to_csv("first"), "second_moment.csv": rep.to_csv("second")}
    if evaluation is not None:
        result["evaluation"] = evaluation.to_dict()
        result["passed"] = rep.all_passed and evaluation.all_passed
        files["evaluation_moment.csv"] = evaluation.to_csv("first")
    return result, files


HANDLERS = {
    "basis": cmd_basis,
    "lemma": cmd_lemma,
    "closability": cmd_closability,
    "energy": cmd_energy,
    "generator": cmd_generator,
    "simulate": cmd_simulate,
    "moments": cmd_moments,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dirichlet-wiener", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s v{__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name, help=HANDLERS[name].__name__.removeprefix("cmd_"))
        s.add_argument("--config", help="flat TOML config file")
        s.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
        s.add_argument("--lambda", dest="lam", help="eigenvalue rule, e.g. power:0.5")
        s.add_argument("--weight", help="weight model: zero, trig or bump")
        s.add_argument("--seed", type=int, help="overrides the SEED environment variable")
        s.add_argument("--threads", type=int, default=1, help="worker cap; never changes results")
        s.add_argument("--out", help="directory for the JSON report and CSV tables")
        s.add_argument("--max-level", dest="max_level", type=int)
        s.add_argument("--level", type=int)
        s.add_argument("--samples", type=int)
        s.add_argument("--truncation", type=int)
        s.add_argument("-d", "--dim", dest="d", type=int)
        s.add_argument("--dt", type=float)
        s.add_argument("--horizon", type=float)
        s.add_argument("--drift-sign", dest="drift_sign", choices=sorted(DRIFT_SIGNS))
        s.add_argument("--F", dest="F")
        s.add_argument("--G", dest="G")
    return p


def run(argv=None, environ=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args, environ)
        result, tables = HANDLERS[args.command](cfg, max(1, args.threads))
    except (SimulationOverflowError, DivergentSeriesError, ResolutionError, CertificateUnavailable, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ClassError, ValueError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    report = {
        "command": args.command,
        "config": cfg,
        "config_hash": config_hash(cfg),
        "seed": cfg["seed"],
        "version": f"v{__version__}",
        "result": result,
    }
    text = dump_report(report)
    stdout.write(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{args.command}.json").write_text(text)
        for name, body in tables.items():
            (out / name).write_text(body)
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
