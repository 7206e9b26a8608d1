"""Command-line front end: theta, profile, eig2d, sweep, verify, localize.

Configuration comes from an optional JSON file plus command-line overrides
(flags win).  Unknown config keys are rejected with their JSON pointer.
Every output embeds the package version, a sha256 hash of the resolved
config, and the wall-clock time; the numerical payload is deterministic for
a fixed config and version.  Exit codes: 0 ok, 1 computation failed, 2 bad
input.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time

import numpy as np

from . import __version__
from . import magnetic_eigensolver_2d as m2
from . import semiclassical_harness as sh
from . import theta_profile as tp
from .boundary_geometry import curve_from_descriptor
from .errors import ConfigurationError, DomainError
from .mesh2d import boundary_layer_mesh


class CliError(Exception):
    """Bad input; maps to exit code 2."""


def _config_hash(config: dict) -> str:
    # output destinations do not identify the computation
    core = {k: v for k, v in config.items() if k not in ("out", "out_prefix")}
    blob = json.dumps(core, sort_keys=True, default=float).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _meta(config: dict, t_start: float) -> dict:
    return {
        "version": __version__,
        "config_hash": _config_hash(config),
        "wall_time_s": round(time.time() - t_start, 3),
    }


CURVE_KEYS = {
    "circle": {"type", "radius", "center"},
    "ellipse": {"type", "a", "b"},
    "spline": {"type", "points"},
}
GAMMA_KEYS = {
    "constant": {"type", "value"},
    "cosine": {"type", "offset", "amplitude", "winding", "phase"},
}
TARGET_KEYS = {
    "boundary": {"kind"},
    "points": {"kind", "s", "s_fraction"},
    "arc": {"kind", "s"},
}


def _check_descriptor(desc, table, what, path):
    if not isinstance(desc, dict):
        raise CliError(f"{path}: {what} descriptor must be an object")
    kind = desc.get("type") or desc.get("kind")
    if kind not in table:
        raise CliError(f"{path}/type: unknown {what} type {kind!r}")
    for key in desc:
        if key not in table[kind]:
            raise CliError(f"{path}/{key}: unknown key for {what} type {kind!r}")


def _check_keys(config: dict, allowed: dict, path: str = "") -> None:
    for key, value in config.items():
        if key not in allowed:
            raise CliError(f"{path}/{key}: unknown config key")
        spec = allowed[key]
        if spec == "curve":
            _check_descriptor(value, CURVE_KEYS, "curve", f"{path}/{key}")
        elif spec == "gamma":
            _check_descriptor(value, GAMMA_KEYS, "gamma", f"{path}/{key}")
        elif spec == "target":
            _check_descriptor(value, TARGET_KEYS, "target", f"{path}/{key}")
        elif isinstance(spec, dict):
            if not isinstance(value, dict):
                raise CliError(f"{path}/{key}: expected an object")
            _check_keys(value, spec, f"{path}/{key}")


def _load_config(args) -> dict:
    config = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                config = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config: {exc}") from exc
        if not isinstance(config, dict):
            raise CliError("/: config root must be an object")
    return config


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _parse_gamma_spec(spec: str):
    if ":" in spec:
        lo, hi, step = (float(x) for x in spec.split(":"))
        n = int(round((hi - lo) / step)) + 1
        return [lo + i * step for i in range(n)]
    return [float(spec)]


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

THETA_SCHEMA = {"gamma": None, "out": None, "format": None}


def cmd_theta(args) -> int:
    t0 = time.time()
    config = _load_config(args)
    if args.gamma is not None:
        config["gamma"] = args.gamma
    if args.out:
        config["out"] = args.out
    _check_keys(config, THETA_SCHEMA)
    if "gamma" not in config:
        raise CliError("/gamma: required")
    gammas = _parse_gamma_spec(str(config["gamma"]))
    if any(abs(g) > 8.0 for g in gammas):
        raise CliError("/gamma: outside the supported box [-8, 8]")
    if args.dry_run:
        print(json.dumps({"valid": True, "config_hash": _config_hash(config)}))
        return 0

    records = [tp.theta(g) for g in gammas]
    if len(records) == 1:
        text = tp.record_to_json(records[0], meta=_meta(config, t0))
    else:
        residuals = [
            r.xi_star ** 2 - r.theta - r.gamma ** 2 for r in records
        ]
        text = tp.records_to_csv(records, {"xi_identity_residual": residuals})
        text += f"# {json.dumps(_meta(config, t0), sort_keys=True)}\n"
    _write(config.get("out"), text)
    return 0


PROFILE_SCHEMA = {"alpha": None, "eta": None, "beta": None, "h": None, "gamma": None, "out": None}


def cmd_profile(args) -> int:
    t0 = time.time()
    config = _load_config(args)
    for name in ("alpha", "eta", "beta", "h", "gamma", "out"):
        v = getattr(args, name, None)
        if v is not None:
            config[name] = v
    _check_keys(config, PROFILE_SCHEMA)
    gamma = float(config.get("gamma", config.get("eta", 0.0)))
    if args.dry_run:
        print(json.dumps({"valid": True, "config_hash": _config_hash(config)}))
        return 0
    payload = {"moments": {str(k): v for k, v in tp.moments(gamma).items()}}
    if "h" in config:
        coeffs = tp.perturbation_coefficients(
            float(config.get("alpha", 0.5)),
            float(config.get("eta", gamma)),
            float(config.get("beta", 1.0)),
            float(config["h"]),
        )
        payload["coefficients"] = {
            "d0": coeffs.d0, "d1": coeffs.d1, "d2": coeffs.d2, "d3": coeffs.d3,
            "eta_eff": coeffs.eta_eff,
        }
    payload["meta"] = _meta(config, t0)
    _write(config.get("out"), json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return 0


EIG2D_SCHEMA = {
    "curve": "curve",
    "gamma": "gamma",
    "h": None,
    "alpha": None,
    "refine": None,
    "out_prefix": None,
    "gauge_checks": None,
    "seed": None,
}


def cmd_eig2d(args) -> int:
    t0 = time.time()
    config = _load_config(args)
    if args.h is not None:
        config["h"] = args.h
    if args.alpha is not None:
        config["alpha"] = args.alpha
    if args.out_prefix:
        config["out_prefix"] = args.out_prefix
    if args.seed is not None:
        config["seed"] = args.seed
    config.setdefault("curve", {"type": "circle", "radius": 1.0, "center": [0.0, 0.0]})
    config.setdefault("gamma", {"type": "constant", "value": 0.0})
    _check_keys(config, EIG2D_SCHEMA)
    for req in ("h", "alpha"):
        if req not in config:
            raise CliError(f"/{req}: required")
    if args.dry_run:
        print(json.dumps({"valid": True, "config_hash": _config_hash(config)}))
        return 0

    curve = curve_from_descriptor(config["curve"])
    gamma_fn, _ = sh.gamma_from_descriptor(config["gamma"], curve)
    mesh = boundary_layer_mesh(curve, float(config["h"]), refine=float(config.get("refine", 1.0)))
    problem = m2.MagneticProblem2D(curve, float(config["h"]), float(config["alpha"]), gamma_fn)
    state = m2.ground_state(problem, mesh)

    extra = {}
    n_checks = int(config.get("gauge_checks", 0) or (5 if args.gauge_check else 0))
    if n_checks:
        rng = np.random.default_rng(int(config.get("seed", 0)))
        worst = 0.0
        for _ in range(n_checks):
            cfs = rng.standard_normal(9)

            def phi(x, cfs=cfs):
                X, Y = x[..., 0], x[..., 1]
                return (
                    cfs[0] * X + cfs[1] * Y + cfs[2] * X * X + cfs[3] * X * Y
                    + cfs[4] * Y * Y + cfs[5] * X ** 3 + cfs[6] * X * X * Y
                    + cfs[7] * X * Y * Y + cfs[8] * Y ** 3
                )

            alt = m2.ground_state(m2.gauge_transform(problem, phi), mesh)
            worst = max(worst, abs(alt.mu1 - state.mu1) / abs(state.mu1))
        extra["gauge_max_rel_deviation"] = worst
        print(f"gauge check: max relative mu1 deviation {worst:.3e}")

    prefix = config.get("out_prefix")
    summary = m2.summary_json(problem, state, meta=_meta(config, t0), **extra)
    if prefix:
        _write(f"{prefix}_solution.csv", m2.solution_to_csv(mesh, state))
        mesh.save(f"{prefix}_mesh.npz")
        _write(f"{prefix}_summary.json", summary)
    else:
        sys.stdout.write(summary)
    return 0


SWEEP_SCHEMA = {
    "template": {
        "curve": "curve",
        "gamma": "gamma",
        "alpha": None,
        "refine": None,
        "trial_variant": None,
        "trial_s0": None,
        "localization": None,
    },
    "h_list": None,
    "jobs": None,
    "out": None,
    "models": None,
}


def cmd_sweep(args) -> int:
    config = _load_config(args)
    if args.jobs is not None:
        config["jobs"] = args.jobs
    if args.out:
        config["out"] = args.out
    _check_keys(config, SWEEP_SCHEMA)
    if "template" not in config or "h_list" not in config:
        raise CliError("/template and /h_list: required")
    if args.dry_run:
        print(json.dumps({"valid": True, "config_hash": _config_hash(config)}))
        return 0
    t0 = time.time()
    report = sh.sweep(config["template"], config["h_list"], jobs=int(config.get("jobs", 1)))
    for model in config.get("models", ()):
        sh.fit_expansion(report, model)
    text = report.to_json()
    meta = json.dumps(_meta(config, t0), sort_keys=True)
    out = config.get("out")
    _write(out, text)
    if out and out != "-":
        _write(out.replace(".json", "") + "_cases.csv", report.case_csv())
    sys.stderr.write(f"# {meta}\n")
    return 0 if all(c.error is None for c in report.cases) else 1


def cmd_verify(args) -> int:
    t0 = time.time()
    config = _load_config(args)
    if args.plan:
        config["plan"] = args.plan
    if args.jobs is not None:
        config["jobs"] = args.jobs
    _check_keys(config, {"plan": None, "jobs": None, "out": None})
    name = config.get("plan")
    if name not in sh.CHECK_PLANS:
        known = ", ".join(sorted(sh.CHECK_PLANS))
        raise CliError(f"/plan: unknown plan {name!r}; known plans: {known}")
    if args.dry_run:
        print(json.dumps({"valid": True, "config_hash": _config_hash(config)}))
        return 0
    report = sh.run_check_plan(name, jobs=int(config.get("jobs", 1)))
    payload = {
        "plan": name,
        "description": sh.CHECK_PLANS[name]["description"],
        "verdicts": report.verdicts,
        "meta": _meta(config, t0),
    }
    _write(config.get("out") or args.out, json.dumps(payload, sort_keys=True, indent=2, default=float) + "\n")
    return 0 if all(v["pass"] for v in report.verdicts.values()) else 1


LOCALIZE_SCHEMA = {
    "curve": "curve",
    "gamma": "gamma",
    "h": None,
    "alpha": None,
    "target": "target",
    "radius": None,
    "out": None,
}


def cmd_localize(args) -> int:
    t0 = time.time()
    config = _load_config(args)
    if args.h is not None:
        config["h"] = args.h
    if args.alpha is not None:
        config["alpha"] = args.alpha
    _check_keys(config, LOCALIZE_SCHEMA)
    for req in ("curve", "gamma", "h", "alpha", "target", "radius"):
        if req not in config:
            raise CliError(f"/{req}: required")
    if args.dry_run:
        print(json.dumps({"valid": True, "config_hash": _config_hash(config)}))
        return 0
    curve = curve_from_descriptor(config["curve"])
    gamma_fn, _ = sh.gamma_from_descriptor(config["gamma"], curve)
    h = float(config["h"])
    mesh = boundary_layer_mesh(curve, h)
    problem = m2.MagneticProblem2D(curve, h, float(config["alpha"]), gamma_fn)
    state = m2.ground_state(problem, mesh)
    metrics = m2.localization_profile(
        state, mesh, curve, h, config["target"], float(config["radius"])
    )
    payload = {"mu1": state.mu1, "metrics": metrics, "meta": _meta(config, t0)}
    _write(config.get("out"), json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="degennes", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--dry-run", action="store_true", help="validate config only")
        sp.add_argument("--out", help="output path (default stdout)")

    sp = sub.add_parser("theta", help="spectral function values on a gamma grid")
    common(sp)
    sp.add_argument("--gamma", help="value or lo:hi:step range")
    sp.set_defaults(func=cmd_theta)

    sp = sub.add_parser("profile", help="moments and perturbation coefficients")
    common(sp)
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--eta", type=float)
    sp.add_argument("--beta", type=float)
    sp.add_argument("--h", type=float)
    sp.set_defaults(func=cmd_profile)

    sp = sub.add_parser("eig2d", help="2D magnetic ground state")
    common(sp)
    sp.add_argument("--h", type=float)
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--out-prefix", dest="out_prefix")
    sp.add_argument("--gauge-check", action="store_true")
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_eig2d)

    sp = sub.add_parser("sweep", help="h-sweep with optional fits")
    common(sp)
    sp.add_argument("--jobs", type=int)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("verify", help="run a named check plan")
    common(sp)
    sp.add_argument("--plan")
    sp.add_argument("--jobs", type=int)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("localize", help="localization metrics for one state")
    common(sp)
    sp.add_argument("--h", type=float)
    sp.add_argument("--alpha", type=float)
    sp.set_defaults(func=cmd_localize)
    return p


def _merge_negative_values(argv):
    """Let `--gamma -2:2:0.5` parse despite the leading dash."""
    out = []
    skip = False
    for i, tok in enumerate(argv):
        if skip:
            skip = False
            continue
        if tok in ("--gamma",) and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            nxt = argv[i + 1]
            if nxt[1:2].isdigit() or nxt[1:2] == ".":
                out.append(f"{tok}={nxt}")
                skip = True
                continue
        out.append(tok)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    args = parser.parse_args(_merge_negative_values(list(argv)))
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DomainError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # computation failure
        print(f"computation failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
