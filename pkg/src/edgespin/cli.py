"""Batch experiment runner.

Each command reads a JSON config, validates it against a schema, computes
its results in memory and only then writes them, each file via a temporary
name followed by an atomic rename. A ``manifest.json`` lists every result
file with its sha256 digest.

Exit codes: 0 success, 2 invalid config, 3 numerical failure,
4 inconclusive gap.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import platform
import sys
import tempfile
import time
from fractions import Fraction

import jsonschema
import numpy as np
import scipy.sparse.linalg as spla

from . import __version__
from .exact_diag import (
    DimensionError,
    HamiltonianSpec,
    InconclusiveGapError,
    build_hamiltonian,
    ground_rep_decomposition,
    ground_space,
    spectrum_csv_rows,
    total_spin,
)
from .excess_spin import convergence_scan, edge_representation, edge_rep_csv, scan_csv, theta_consistency_defect
from .fcs import TripleError, build_aklt_triple, build_spin_triple, string_order
from .group_rep import RepresentationError
from .loop_mc import (
    crossing_parity_report,
    estimate_correlation,
    excess_spin_stats,
    run_chains,
    LoopSamples,
)
from .spectral_flow import (
    FilterFunction,
    GapClosedError,
    HamiltonianPath,
    SymmetryError,
    characters,
    cocycle_defect,
    covariance_check,
    edge_rep_equivalence,
    flow_integrate,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_GAP = 0, 2, 3, 4
THREADS_ENV = "EDGESPIN_THREADS"
U64_MAX = 2**64 - 1


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# schemas

_spin = {"anyOf": [{"type": "string", "pattern": r"^\d+(/2)?$"}, {"type": "number", "minimum": 0}]}

_triple = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["aklt", "spin"]},
        "S": _spin,
        "j_aux": _spin,
    },
    "required": ["kind"],
    "additionalProperties": False,
    "if": {"properties": {"kind": {"const": "spin"}}},
    "then": {"required": ["S", "j_aux"]},
}

_grid = {
    "anyOf": [
        {"type": "array", "items": {"type": "number"}, "minItems": 1},
        {
            "type": "object",
            "properties": {"start": {"type": "number"}, "stop": {"type": "number"}, "num": {"type": "integer", "minimum": 1}},
            "required": ["start", "stop", "num"],
            "additionalProperties": False,
        },
    ]
}

_hamiltonian = {
    "type": "object",
    "properties": {
        "S": _spin,
        "length": {"type": "integer", "minimum": 2},
        "boundary": {"enum": ["open", "periodic"]},
        "model": {"enum": ["AF_H", "AKLT", "poly", "custom"]},
        "J": {"type": "array", "items": {"type": "number"}},
        "poly": {"type": "array", "items": {"type": "number"}},
        "bond_pattern": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "edge_spin": _spin,
        "bond_term": {"type": "array"},
    },
    "required": ["S", "length"],
    "additionalProperties": False,
}

_seed = {"type": "integer", "minimum": 0, "maximum": U64_MAX}

SCHEMAS = {
    "edge-rep": {
        "type": "object",
        "properties": {
            "model": _triple,
            "g_grid": _grid,
            "g_gen": {"type": "number", "exclusiveMinimum": 0},
            "fit_g": {"type": ["number", "null"]},
            "fit_L": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2},
            "consistency_samples": {"type": "integer", "minimum": 0},
            "seed": _seed,
        },
        "required": ["model"],
        "additionalProperties": False,
    },
    "excess-scan": {
        "type": "object",
        "properties": {
            "model": _triple,
            "g": {"type": "array", "items": {"type": "number"}, "minItems": 1},
            "L": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2},
            "axis": {"enum": ["x", "y", "z"]},
        },
        "required": ["model", "g", "L"],
        "additionalProperties": False,
    },
    "string-order": {
        "type": "object",
        "properties": {
            "model": _triple,
            "x": {"type": "integer", "minimum": 0},
            "separations": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        },
        "required": ["model", "separations"],
        "additionalProperties": False,
    },
    "loop-mc": {
        "type": "object",
        "properties": {
            "n_sites": {"type": "integer", "minimum": 2},
            "S": _spin,
            "beta": {"type": "number", "exclusiveMinimum": 0},
            "periodic": {"type": "boolean"},
            "n_steps": {"type": "integer", "minimum": 1},
            "burn_in": {"type": "integer", "minimum": 0},
            "every": {"type": "integer", "minimum": 1},
            "chains": {"type": "integer", "minimum": 1},
            "epsilons": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
            "seed": _seed,
        },
        "required": ["n_sites", "S", "beta", "n_steps"],
        "additionalProperties": False,
    },
    "ed": {
        "type": "object",
        "properties": {
            "hamiltonian": _hamiltonian,
            "n_eigs": {"type": "integer", "minimum": 1},
            "tol": {"type": "number", "exclusiveMinimum": 0},
            "band": {"type": ["number", "null"], "minimum": 0},
            "decompose": {"type": "boolean"},
        },
        "required": ["hamiltonian"],
        "additionalProperties": False,
    },
    "flow": {
        "type": "object",
        "properties": {
            "start": _hamiltonian,
            "end": _hamiltonian,
            "n_steps": {"type": "integer", "minimum": 1},
            "gamma": {"type": "number", "exclusiveMinimum": 0},
            "band": {"type": "number", "minimum": 0},
            "covariance_g": {"type": "array", "items": {"type": "number"}},
            "character_g": _grid,
            "cocycle": {"type": "boolean"},
        },
        "required": ["start", "end"],
        "additionalProperties": False,
    },
}


def load_config(command: str, path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    try:
        jsonschema.validate(cfg, SCHEMAS[command])
    except jsonschema.ValidationError as err:
        raise ConfigError(f"config violates the {command} schema: {err.message}") from err
    return cfg


# ---------------------------------------------------------------------------
# helpers


def _grid_values(spec) -> np.ndarray:
    if isinstance(spec, dict):
        return np.linspace(spec["start"], spec["stop"], spec["num"])
    return np.asarray(spec, dtype=float)


def _triple_from(cfg: dict):
    if cfg["kind"] == "aklt":
        return build_aklt_triple()
    return build_spin_triple(Fraction(str(cfg["S"])), Fraction(str(cfg["j_aux"])))


def _hamiltonian_from(doc: dict) -> HamiltonianSpec:
    doc = dict(doc)
    for key in ("S", "edge_spin"):
        if key in doc:
            doc[key] = str(doc[key])
    return HamiltonianSpec.from_json(doc)


def _csv_text(rows, fields) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow(row)
    return buf.getvalue()


def _json_text(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, Fraction):
        return str(x)
    raise TypeError(f"cannot serialize {type(x).__name__}")


def resolve_threads(flag: int | None) -> int:
    if flag is not None:
        return max(1, flag)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError as err:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from err
    return 1


def write_atomic(path: str, text: str):
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


# ---------------------------------------------------------------------------
# commands; each returns (files, seeds) with files a dict name -> text


def cmd_edge_rep(cfg, seed, threads):
    triple = _triple_from(cfg["model"])
    g_grid = _grid_values(cfg.get("g_grid", {"start": -np.pi / 2, "stop": np.pi / 2, "num": 21}))
    fit_g = cfg.get("fit_g", 1.0)
    fit_L = tuple(cfg.get("fit_L", (4, 8, 16, 32)))
    rep = edge_representation(triple, g_grid, g_gen=cfg.get("g_gen", 0.5), fit_g=fit_g, fit_L=fit_L)
    doc = rep.to_json()
    n = cfg.get("consistency_samples", 50)
    if n:
        doc["theta_consistency_defect"] = theta_consistency_defect(triple, n, seed)
    doc["triple"] = triple.to_json()
    return {"edge_rep.json": _json_text(doc), "edge_rep.csv": edge_rep_csv(rep)}, {"consistency": seed}


def cmd_excess_scan(cfg, seed, threads):
    triple = _triple_from(cfg["model"])
    axis = cfg.get("axis", "z")
    results = [convergence_scan(triple, g, cfg["L"], axis=axis, threads=threads) for g in cfg["g"]]
    doc = {"scans": [r.to_json() for r in results], "all_ok": all(r.ok for r in results)}
    return {"scan.json": _json_text(doc), "scan.csv": scan_csv(results)}, {}


def cmd_string_order(cfg, seed, threads):
    triple = _triple_from(cfg["model"])
    x = cfg.get("x", 0)
    rows = [{"separation": r, "value": repr(string_order(triple, x, x + r))} for r in cfg["separations"]]
    last = cfg["separations"][-1]
    doc = {"x": x, "separations": cfg["separations"], "values": [float(r["value"]) for r in rows], "last_separation": last}
    return {"string_order.json": _json_text(doc), "string_order.csv": _csv_text(rows, ["separation", "value"])}, {}


def cmd_loop_mc(cfg, seed, threads):
    S = Fraction(str(cfg["S"]))
    n = cfg["n_sites"]
    n_chains = cfg.get("chains", 1)
    seeds = [seed + i for i in range(n_chains)]
    if seeds[-1] > U64_MAX:
        raise ConfigError("seed range exceeds 64 bits")
    chains = run_chains(
        n, S, cfg["beta"], cfg["n_steps"], seeds,
        burn_in=cfg.get("burn_in", 1000), every=cfg.get("every", 1),
        periodic=cfg.get("periodic", False), threads=threads,
    )
    samples = LoopSamples.concat(chains)
    rows = []
    for y in range(1, n):
        est = estimate_correlation(samples, 0, y)
        rows.append({"x": 0, "y": y, "mean": repr(est.mean), "error": repr(est.error), "n": est.n})
    doc = {
        "n_records": int(samples.labels.shape[0]),
        "crossing_parity": crossing_parity_report(samples),
        "correlations": rows,
    }
    if cfg.get("epsilons"):
        doc["excess"] = excess_spin_stats(samples, cfg["epsilons"]).to_json()
    files = {"loop_mc.json": _json_text(doc), "correlations.csv": _csv_text(rows, ["x", "y", "mean", "error", "n"])}
    return files, {"chains": seeds}


def cmd_ed(cfg, seed, threads):
    spec = _hamiltonian_from(cfg["hamiltonian"])
    H = build_hamiltonian(spec)
    data = ground_space(H, tol=cfg.get("tol", 1e-8), n_eigs=cfg.get("n_eigs", 12), band=cfg.get("band"))
    if data.inconclusive:
        raise InconclusiveGapError(
            f"ground cluster of size {data.degeneracy} is not separated from the next level by more than {10 * data.tol:g}"
        )
    doc = {
        "hamiltonian": spec.to_json(),
        "ground_energy": data.ground_energy,
        "degeneracy": data.degeneracy,
        "split": data.split,
        "gap": data.gap,
    }
    if cfg.get("decompose", True):
        content = ground_rep_decomposition(H, total_spin(spec), data)
        doc["content"] = content.to_json()
        doc["content_str"] = str(content)
    rows = list(spectrum_csv_rows(data))
    return {"ed.json": _json_text(doc), "spectrum.csv": _csv_text(rows, ["index", "energy", "in_ground_cluster"])}, {}


def cmd_flow(cfg, seed, threads):
    a, b = _hamiltonian_from(cfg["start"]), _hamiltonian_from(cfg["end"])
    filt = FilterFunction(cfg.get("gamma", 0.3))
    band = cfg.get("band", 0.05)
    n_steps = cfg.get("n_steps", 100)
    path = HamiltonianPath.linear(a, b)
    g_chr = _grid_values(cfg.get("character_g", {"start": -np.pi, "stop": np.pi, "num": 13}))
    try:
        res = flow_integrate(path, n_steps, filt, band)
    except GapClosedError as err:
        verdict = edge_rep_equivalence(a, b, path, filt, n_steps, band, g_chr)
        doc = {"start": a.to_json(), "end": b.to_json(), "verdict": verdict.to_json(), "gap_closed_at": err.s}
        return {"flow.json": _json_text(doc)}, {}
    verdict = edge_rep_equivalence(a, b, path, filt, n_steps, band, g_chr, result=res)
    doc = {"start": a.to_json(), "end": b.to_json(), "flow": res.to_json(), "verdict": verdict.to_json()}
    cov_g = cfg.get("covariance_g", [0.7, np.pi / 2, 2.0])
    if cov_g:
        doc["covariance"] = covariance_check(res, cov_g).to_json()
    if cfg.get("cocycle", True):
        doc["cocycle_defect"] = cocycle_defect(path, n_steps, filt, band, forward=res)
    doc["characters"] = {
        "g": g_chr.tolist(),
        "transported": [[z.real, z.imag] for z in characters(res.transported, a.site_dims(), g_chr)],
    }
    return {"flow.json": _json_text(doc), "flow.csv": res.csv()}, {}


COMMANDS = {
    "edge-rep": cmd_edge_rep,
    "excess-scan": cmd_excess_scan,
    "string-order": cmd_string_order,
    "loop-mc": cmd_loop_mc,
    "ed": cmd_ed,
    "flow": cmd_flow,
}

NUMERIC_ERRORS = (
    TripleError,
    RepresentationError,
    SymmetryError,
    GapClosedError,
    np.linalg.LinAlgError,
    spla.ArpackError,
    spla.ArpackNoConvergence,
    FloatingPointError,
)


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="edgespin", description="Edge-spin experiments on spin chains.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name, help=COMMANDS[name].__name__.replace("cmd_", "").replace("_", " "))
        s.add_argument("--config", required=True, help="JSON config file")
        s.add_argument("--out", required=True, help="output directory")
        s.add_argument("--seed", type=int, default=None, help="u64 seed (overrides the config)")
        s.add_argument("--threads", type=int, default=None, help=f"worker threads (default ${THREADS_ENV} or 1)")
    return p


def run(command: str, config_path: str, out_dir: str, seed: int | None = None, threads: int | None = None) -> int:
    """Run one command; returns the process exit code."""
    t0 = time.perf_counter()
    try:
        cfg = load_config(command, config_path)
        if seed is None:
            seed = int(cfg.get("seed", 0))
        if not 0 <= seed <= U64_MAX:
            raise ConfigError(f"seed {seed} is not a u64")
        threads = resolve_threads(threads)
        files, seeds = COMMANDS[command](cfg, seed, threads)
    except (ConfigError, DimensionError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except InconclusiveGapError as err:
        print(f"inconclusive gap: {err}", file=sys.stderr)
        return EXIT_GAP
    except NUMERIC_ERRORS as err:
        print(f"numerical failure: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as err:
        # raised by constructors on semantically invalid configs
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    os.makedirs(out_dir, exist_ok=True)
    digests = {}
    for name, text in files.items():
        write_atomic(os.path.join(out_dir, name), text)
        digests[name] = sha256_text(text)
    manifest = {
        "command": command,
        "config": cfg,
        "seed": seed,
        "seeds": seeds,
        "threads": threads,
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "wall_clock_s": time.perf_counter() - t0,
        "outputs": digests,
    }
    write_atomic(os.path.join(out_dir, "manifest.json"), _json_text(manifest))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run(args.command, args.config, args.out, args.seed, args.threads)


if __name__ == "__main__":
    sys.exit(main())
