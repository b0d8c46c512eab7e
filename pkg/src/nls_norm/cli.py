"""Batch front end: TOML config in, JSON/CSV documents out.

Subcommands: check (assumption report), solve (one ground state), sweep
(energy map), gn (Gagliardo-Nirenberg constants), oracle (shooting
profile).  Parsing is strict: unknown keys are fatal, with the offending
key path in the diagnostic.  Exit codes: 0 ok, 1 config error, 2
inadmissible, 3 non-converged, 4 partial sweep failure.
"""

import argparse
import hashlib
import json
import math
import sys

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from . import nonlinearity as nl
from .energymap import InsufficientSpanError, asymptotics, check_monotone, sweep
from .oracle import gn_constant, shoot
from .radial import RadialGrid, kinetic, mass, write_field
from .solver import ProblemInstance, SolverOptions, solve, verify

__all__ = ["main", "ConfigError", "load_config", "build_spec", "spec_digest"]

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INADMISSIBLE = 2
EXIT_NONCONVERGED = 3
EXIT_PARTIAL = 4


class ConfigError(ValueError):
    """Invalid configuration; the message carries the key path."""


# -- schema ------------------------------------------------------------------

_NL_KEYS = {
    "powers": {"kind", "terms"},
    "E1": {"kind", "base"},
    "E2": {"kind", "intervals", "levels", "M", "p", "a_limit"},
    "E3": {"kind", "b", "base"},
    "E4": {"kind", "mu", "base"},
}

_SCHEMA = {
    "problem": {"N", "rho"},
    "grid": {"R", "n"},
    "nonlinearity": None,  # validated recursively
    "solver": {
        "max_iters", "step", "tol_grad", "tol_identity",
        "precondition_shift", "seed_amplitude_scan", "auto_domain",
        "domain_scale",
    },
    "sweep": {"rho_list", "rho_min", "rho_max", "points", "parallelism",
              "warm_start", "auto_grid"},
    "gn": {"p", "p_list", "R", "n"},
    "oracle": {"lam"},
    "output": {"format", "path", "emit_profile", "profile_format"},
}


def _check_keys(block, allowed, path):
    for key in block:
        if key not in allowed:
            raise ConfigError("unknown key '%s.%s'" % (path, key))


def _require(block, key, path, types):
    if key not in block:
        raise ConfigError("missing required key '%s.%s'" % (path, key))
    value = block[key]
    if not isinstance(value, types):
        raise ConfigError("'%s.%s' has the wrong type" % (path, key))
    return value


def _validate_nl(block, path):
    if not isinstance(block, dict):
        raise ConfigError("'%s' must be a table" % path)
    kind = _require(block, "kind", path, str)
    if kind not in _NL_KEYS:
        raise ConfigError("'%s.kind' must be one of %s"
                          % (path, sorted(_NL_KEYS)))
    _check_keys(block, _NL_KEYS[kind], path)
    if kind == "powers":
        terms = _require(block, "terms", path, list)
        for t in terms:
            if (not isinstance(t, list) or len(t) != 2
                    or not all(isinstance(x, (int, float)) for x in t)):
                raise ConfigError("'%s.terms' entries must be [coefficient, exponent]" % path)
    if kind in ("E1", "E3", "E4"):
        _validate_nl(_require(block, "base", path, dict), path + ".base")


def load_config(path):
    """Parse and strictly validate a TOML run configuration."""
    with open(path, "rb") as fh:
        try:
            cfg = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError("TOML parse error: %s" % exc) from exc
    _check_keys(cfg, set(_SCHEMA), "")
    for name, allowed in _SCHEMA.items():
        if name not in cfg:
            continue
        if not isinstance(cfg[name], dict):
            raise ConfigError("'%s' must be a table" % name)
        if name == "nonlinearity":
            _validate_nl(cfg[name], "nonlinearity")
        else:
            _check_keys(cfg[name], allowed, name)
    if "problem" not in cfg:
        raise ConfigError("missing required table 'problem'")
    _require(cfg["problem"], "N", "problem", int)
    if cfg["problem"]["N"] < 3:
        raise ConfigError("'problem.N' must be >= 3")
    if "nonlinearity" not in cfg:
        raise ConfigError("missing required table 'nonlinearity'")
    return cfg


def build_spec(block, N):
    """Construct the nonlinearity from its validated config block."""
    kind = block["kind"]
    if kind == "powers":
        return nl.powers([(float(c), float(p)) for c, p in block["terms"]])
    if kind in ("E1", "E3", "E4"):
        base = build_spec(block["base"], N)
        extra = {k: v for k, v in block.items() if k not in ("kind", "base")}
        return nl.build_example(kind, base=base, N=N, **extra)
    extra = {k: v for k, v in block.items() if k != "kind"}
    return nl.build_example(kind, N=N, **extra)


def spec_digest(spec):
    """Stable hash of the nonlinearity: sha256 of its canonical descriptor."""
    blob = json.dumps(spec.descriptor, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


# -- shared plumbing ---------------------------------------------------------


def _grid_from(cfg, N):
    g = cfg.get("grid", {})
    return RadialGrid(N, float(g.get("R", 30.0)), int(g.get("n", 4000)))


def _solver_options(cfg):
    block = dict(cfg.get("solver", {}))
    if "seed_amplitude_scan" in block:
        block["seed_amplitude_scan"] = tuple(
            float(a) for a in block["seed_amplitude_scan"])
    try:
        return SolverOptions(**block)
    except TypeError as exc:
        raise ConfigError("invalid solver options: %s" % exc) from exc


def _rho_from(cfg):
    if "rho" not in cfg["problem"]:
        raise ConfigError("missing required key 'problem.rho'")
    rho = float(cfg["problem"]["rho"])
    if rho <= 0:
        raise ConfigError("'problem.rho' must be positive")
    return rho


def _out_path(cfg, args):
    if args.out:
        return args.out
    return cfg.get("output", {}).get("path")


def _emit(text, path):
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _emit_json(doc, path):
    _emit(json.dumps(doc, indent=2, allow_nan=True) + "\n", path)


def _csv_cell(value):
    if isinstance(value, float):
        return "%.17g" % value
    text = str(value)
    if any(ch in text for ch in ',"\n'):
        text = '"' + text.replace('"', '""') + '"'
    return text


def _state_doc(state, N, rho, digest):
    return {
        "N": N,
        "rho": rho,
        "spec_digest": digest,
        "lambda": state.lam,
        "energy": state.energy,
        "rho_attained": state.rho_attained,
        "residuals": state.residuals.to_dict(),
        "iterations": state.iterations,
        "converged": state.converged,
        "grad_norm": state.grad_norm,
        "on_sphere": state.on_sphere,
        "branch_note": state.branch_note,
    }


def _profile_path(out_path):
    return (out_path or "ground_state") + ".profile"


# -- subcommands -------------------------------------------------------------


def cmd_check(cfg, args):
    N = cfg["problem"]["N"]
    rho = _rho_from(cfg)
    spec = build_spec(cfg["nonlinearity"], N)
    report = nl.check_assumptions(spec, N, rho)
    doc = report.to_dict()
    doc["N"] = N
    doc["spec_digest"] = spec_digest(spec)
    _emit_json(doc, _out_path(cfg, args))
    ok = report.required_pass() and report.rho_admissible
    return EXIT_OK if ok else EXIT_INADMISSIBLE


def cmd_solve(cfg, args):
    N = cfg["problem"]["N"]
    rho = _rho_from(cfg)
    spec = build_spec(cfg["nonlinearity"], N)
    report = nl.check_assumptions(spec, N, rho)
    if not (report.required_pass() and report.rho_admissible):
        _emit_json({"error": "inadmissible", "branch": report.branch,
                    "rho_star": report.rho_star,
                    "spec_digest": spec_digest(spec)}, _out_path(cfg, args))
        return EXIT_INADMISSIBLE
    grid = _grid_from(cfg, N)
    instance = ProblemInstance(N=N, rho=rho, spec=spec, grid=grid)
    state = solve(instance, _solver_options(cfg), branch_note=report.branch)
    check = verify(state, spec)
    doc = _state_doc(state, N, rho, spec_digest(spec))
    doc["verify"] = {"original": check.original.to_dict(),
                     "refined": check.refined.to_dict()}
    out = _out_path(cfg, args)
    output = cfg.get("output", {})
    if output.get("emit_profile", False):
        fmt = output.get("profile_format", "binary")
        profile_path = _profile_path(out)
        write_field(state.u, profile_path, fmt=fmt)
        doc["profile_path"] = profile_path
    _emit_json(doc, out)
    return EXIT_OK if state.converged else EXIT_NONCONVERGED


def _sweep_rhos(cfg):
    block = cfg.get("sweep", {})
    if "rho_list" in block:
        rhos = [float(r) for r in block["rho_list"]]
    elif all(k in block for k in ("rho_min", "rho_max", "points")):
        rhos = list(np.geomspace(float(block["rho_min"]),
                                 float(block["rho_max"]),
                                 int(block["points"])))
    else:
        raise ConfigError("'sweep' needs rho_list or rho_min/rho_max/points")
    if any(r <= 0 for r in rhos):
        raise ConfigError("'sweep' masses must be positive")
    return rhos


def cmd_sweep(cfg, args):
    N = cfg["problem"]["N"]
    spec = build_spec(cfg["nonlinearity"], N)
    rhos = _sweep_rhos(cfg)
    block = cfg.get("sweep", {})
    report = nl.check_assumptions(spec, N, min(rhos))
    if not report.required_pass():
        _emit_json({"error": "inadmissible", "branch": report.branch,
                    "spec_digest": spec_digest(spec)}, _out_path(cfg, args))
        return EXIT_INADMISSIBLE
    grid = _grid_from(cfg, N)
    template = ProblemInstance(N=N, rho=rhos[0], spec=spec, grid=grid)
    points = sweep(
        template, rhos,
        parallelism=int(block.get("parallelism", 1)),
        warm_start=bool(block.get("warm_start", True)),
        opts=_solver_options(cfg),
        auto_grid=bool(block.get("auto_grid", False)),
        rho_star=report.rho_star,
    )
    summary = {"check_monotone": check_monotone(points)}
    for mode in ("rho_to_zero", "rho_to_infinity"):
        try:
            summary[mode] = asymptotics(points, mode)
        except InsufficientSpanError as exc:
            summary[mode] = {"verdict": "insufficient-span", "detail": str(exc)}
    summary["spec_digest"] = spec_digest(spec)

    out = _out_path(cfg, args)
    fmt = cfg.get("output", {}).get("format", "json")
    if fmt == "csv":
        lines = ["rho,c,lambda,converged,grad_norm"]
        for p in points:
            lines.append(",".join(_csv_cell(v) for v in
                                  (p.rho, p.c, p.lam, p.converged, p.grad_norm)))
        lines.append("# summary " + json.dumps(summary, allow_nan=True))
        _emit("\n".join(lines) + "\n", out)
    else:
        doc = {"points": [{"rho": p.rho, "c": p.c, "lambda": p.lam,
                           "converged": p.converged, "grad_norm": p.grad_norm,
                           "note": p.note} for p in points],
               "summary": summary}
        _emit_json(doc, out)

    n_conv = sum(p.converged for p in points)
    if n_conv == len(points):
        return EXIT_OK
    if n_conv == 0:
        if all(p.note == "inadmissible" for p in points):
            return EXIT_INADMISSIBLE
        return EXIT_NONCONVERGED
    return EXIT_PARTIAL


def cmd_gn(cfg, args):
    N = cfg["problem"]["N"]
    block = cfg.get("gn", {})
    if "p_list" in block:
        ps = [float(p) for p in block["p_list"]]
    elif "p" in block:
        ps = [float(block["p"])]
    else:
        raise ConfigError("'gn' needs p or p_list")
    kw = {}
    if "R" in block:
        kw["R"] = float(block["R"])
    if "n" in block:
        kw["n"] = int(block["n"])
    rows = []
    for p in ps:
        delta = N * (0.5 - 1.0 / p)
        rows.append({"N": N, "p": p, "delta": delta,
                     "C": gn_constant(N, p, **kw)})
    out = _out_path(cfg, args)
    fmt = cfg.get("output", {}).get("format", "json")
    if fmt == "csv":
        lines = ["N,p,delta,C"]
        for row in rows:
            lines.append(",".join(_csv_cell(row[k]) for k in ("N", "p", "delta", "C")))
        _emit("\n".join(lines) + "\n", out)
    else:
        _emit_json(rows, out)
    return EXIT_OK


def cmd_oracle(cfg, args):
    N = cfg["problem"]["N"]
    spec = build_spec(cfg["nonlinearity"], N)
    lam = float(cfg.get("oracle", {}).get("lam", 1.0))
    grid = _grid_from(cfg, N)
    res = shoot(spec, N, lam, grid)
    out = _out_path(cfg, args)
    doc = {
        "N": N,
        "lambda": res.lam,
        "u0": res.u0,
        "crossings": res.crossings,
        "decay_ok": res.decay_ok,
        "ode_residual": res.ode_residual,
        "mass": mass(res.profile),
        "kinetic": kinetic(res.profile),
        "spec_digest": spec_digest(spec),
    }
    output = cfg.get("output", {})
    if output.get("emit_profile", False):
        fmt = output.get("profile_format", "binary")
        profile_path = _profile_path(out)
        write_field(res.profile, profile_path, fmt=fmt)
        doc["profile_path"] = profile_path
    _emit_json(doc, out)
    return EXIT_OK


def _dry_run(cfg, command, args):
    N = cfg["problem"]["N"]
    spec = build_spec(cfg["nonlinearity"], N)
    grid = _grid_from(cfg, N)
    plan = {
        "command": command,
        "N": N,
        "rho": cfg["problem"].get("rho"),
        "grid": {"R": grid.R, "n": grid.n},
        "spec_digest": spec_digest(spec),
        "output": cfg.get("output", {}),
    }
    if command == "sweep":
        plan["rho_list"] = _sweep_rhos(cfg)
    _emit_json(plan, _out_path(cfg, args))
    return EXIT_OK


_COMMANDS = {
    "check": cmd_check,
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "gn": cmd_gn,
    "oracle": cmd_oracle,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="nls-norm",
        description="Normalized ground states on the Pohozaev-Nehari manifold.",
    )
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="TOML configuration file")
    parser.add_argument("--out", default=None, help="output path (overrides config)")
    parser.add_argument("--dry-run", action="store_true",
                        help="validate the config and print the plan")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.dry_run:
            return _dry_run(cfg, args.command, args)
        return _COMMANDS[args.command](cfg, args)
    except (ConfigError, OSError, ValueError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
