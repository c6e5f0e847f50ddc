"""Command-line front end.

Exit codes: 0 pass, 1 analytic check failed, 2 configuration error, 3 numerical error.
"""

import argparse
import json
import logging
import os
import sys

import jsonschema
import numpy as np

from . import closed_loop, controller, heat_bench, regulator
from .errors import ConfigError, DimensionError, NumericalError
from .exosystem import Exosystem
from .io import dumps, parse_matrix, parse_vector, write_csv, write_json
from .modal_plant import ModalPlant

log = logging.getLogger("roreg")

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

PRESETS = ("heat-constant", "heat-constant-k0", "heat-constant-deficient")

_matrix = {"type": "array", "items": {"type": "array"}}
_vector = {"type": "array"}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "preset": {"enum": list(PRESETS)},
        "N": {"type": "integer", "minimum": 2},
        "plant": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "heat": {"type": "object", "additionalProperties": False, "properties": {"N": {"type": "integer", "minimum": 1}}},
                "inline": {"type": "object"},
                "file": {"type": "string"},
            },
            "minProperties": 1,
            "maxProperties": 1,
        },
        "exosystem": {
            "type": "object",
            "additionalProperties": False,
            "required": ["blocks"],
            "properties": {
                "blocks": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["k", "omega"],
                        "properties": {"k": {"type": "integer"}, "omega": {"type": "number"}, "n": {"type": "integer", "minimum": 1}},
                    },
                },
                "alpha": {"type": "number", "minimum": 0},
            },
        },
        "controller": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "G1": _matrix,
                "G2": _matrix,
                "K": _matrix,
                "structure": {"type": "string"},
                "builder": {"enum": ["p-copy"]},
                "p": {"type": "integer", "minimum": 1},
                "G2_scale": {"type": "number"},
            },
        },
        "E": _matrix,
        "F": _matrix,
        "xe0": _vector,
        "v0": _vector,
        "t_span": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "tol": {"type": "number", "exclusiveMinimum": 0},
        "scan": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "delta": {"type": "number", "exclusiveMinimum": 0},
                "radius": {"type": "number", "exclusiveMinimum": 0},
                "grid_density": {"type": "integer", "minimum": 2},
            },
        },
        "perturbations": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"count": {"type": "integer", "minimum": 0}, "scale": {"type": "number", "minimum": 0}},
        },
        "periodic": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"K_exo": {"type": "integer", "minimum": 0}},
        },
    },
}


class Problem:
    """Resolved configuration: plant, exosystem, controller, E, F and run options."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.plant = self.exo = self.ctrl = self.E = self.F = None
        preset = cfg.get("preset")
        self.N = int(cfg.get("N", 31))
        if preset:
            self._preset(preset)
        if "plant" in cfg:
            self.plant = _load_plant(cfg["plant"])
        if "exosystem" in cfg:
            self.exo = Exosystem.from_json(cfg["exosystem"])
        if "controller" in cfg:
            self.ctrl = self._load_controller(cfg["controller"])
        if "E" in cfg:
            self.E = parse_matrix(cfg["E"])
        if "F" in cfg:
            self.F = parse_matrix(cfg["F"])
        if self.exo is not None and self.plant is not None:
            w = self.exo.dim
            if self.E is None:
                self.E = np.zeros((self.plant.N, w), dtype=complex)
            if self.F is None:
                self.F = np.zeros((self.plant.n_outputs, w), dtype=complex)
        self.tol = float(cfg.get("tol", 1e-8))

    def _preset(self, name):
        plant, exo, E, F, ctrl, _ = heat_bench.constant_reference_setup(self.N)
        if name == "heat-constant-k0":
            ctrl = controller.Controller(ctrl.G1, ctrl.G2, np.zeros_like(ctrl.K), "p-copy, K=0")
        elif name == "heat-constant-deficient":
            ctrl = controller.Controller(np.zeros((1, 1)), 0.2 * np.ones((1, 2)), ctrl.K[:, :1], "one copy removed")
        self.plant, self.exo, self.E, self.F, self.ctrl = plant, exo, E, F, ctrl
        self.is_heat = True

    def _load_controller(self, spec):
        if spec.get("builder") == "p-copy":
            if self.exo is None:
                raise ConfigError("controller builder needs an exosystem")
            p = int(spec.get("p", self.plant.n_outputs if self.plant is not None else 1))
            K = parse_matrix(spec["K"]) if "K" in spec else None
            G2 = parse_matrix(spec["G2"]) if "G2" in spec else None
            m = self.plant.n_inputs if self.plant is not None else None
            return controller.build_p_copy_controller(self.exo, p, K=K, G2=G2, G2_scale=spec.get("G2_scale", 1.0), m=m)
        missing = [k for k in ("G1", "G2", "K") if k not in spec]
        if missing:
            raise ConfigError(f"controller is missing {missing}")
        return controller.Controller.from_json(spec)

    def require(self, *names):
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise ConfigError(f"configuration does not define {', '.join(missing)}")


def _load_plant(spec):
    if "heat" in spec:
        return heat_bench.build_heat_plant(int(spec["heat"].get("N", 31)))
    if "file" in spec:
        try:
            with open(spec["file"], encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read plant file: {exc}") from exc
        return ModalPlant.from_json(data)
    return ModalPlant.from_json(spec["inline"])


def load_config(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid config: {exc.message}") from exc
    return cfg


# -- subcommands --------------------------------------------------------------


def cmd_check_im(prob, args):
    prob.require("plant", "exo", "ctrl")
    rep = controller.internal_model_report(prob.ctrl, prob.plant, prob.exo, args.tol or 1e-8)
    out = rep.to_json()
    v = rep.verdicts()
    ok = rep.agree() and all(v.values())
    return (EXIT_PASS if ok else EXIT_FAIL), out


def cmd_solve(prob, args):
    prob.require("plant", "exo", "ctrl")
    cl = closed_loop.assemble(prob.plant, prob.ctrl, prob.E, prob.F)
    sol = regulator.solve_sylvester(cl, prob.exo)
    tol = args.tol or prob.tol
    _, ok = regulator.regulation_constraint(sol, cl, tol)
    out = {"spectral_abscissa": cl.spectral_abscissa, "regulator_equations_solved": ok, "tol": tol, "sylvester": sol.to_json()}
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_json(os.path.join(args.out, "report.json"), out)
        write_csv(os.path.join(args.out, "sigma.csv"), ["flat_index", "state_index", "re", "im"], sol.csv_rows())
    return (EXIT_PASS if ok else EXIT_FAIL), out


def cmd_simulate(prob, args):
    prob.require("plant", "exo", "ctrl")
    cfg = prob.cfg
    cl = closed_loop.assemble(prob.plant, prob.ctrl, prob.E, prob.F)
    if "xe0" in cfg:
        xe0 = parse_vector(cfg["xe0"])
    elif getattr(prob, "is_heat", False):
        xe0 = np.concatenate([heat_bench.initial_coefficients(prob.plant.N), np.zeros(prob.ctrl.dim)])
    else:
        xe0 = np.zeros(cl.dim)
    v0 = parse_vector(cfg["v0"]) if "v0" in cfg else np.ones(prob.exo.dim)
    if xe0.shape[0] != cl.dim or v0.shape[0] != prob.exo.dim:
        raise ConfigError(f"xe0 must have length {cl.dim} and v0 length {prob.exo.dim}")
    t0, t1 = cfg.get("t_span", [0.0, 30.0])
    if t0 != 0 or t1 < t0:
        raise ConfigError("t_span must be [0, T] with T >= 0")
    dt = float(cfg.get("dt", 0.1))
    n = int(round(t1 / dt)) + 1 if t1 > 0 else 1
    times = np.linspace(0.0, t1, n)
    traj = closed_loop.simulate_ode(cl, prob.exo, xe0, v0, times)
    sol = regulator.solve_sylvester(cl, prob.exo)
    ref = closed_loop.simulate_closed_form(cl, prob.exo, sol, xe0, v0, times)
    scale = max(np.max(np.linalg.norm(ref.states, axis=1)), 1e-300)
    dev = float(np.max(np.linalg.norm(traj.states - ref.states, axis=1)) / scale)
    en = np.linalg.norm(traj.errors, axis=1)
    out = {
        "n_times": int(times.size),
        "two_path_deviation": dev,
        "propagator": ref.info["propagator"],
        "refinement_levels": traj.info["levels"],
        "e_initial": float(en[0]),
        "e_final": float(en[-1]),
        "y_final": traj.outputs[-1],
    }
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        header, rows = traj.csv()
        write_csv(os.path.join(args.out, "trajectory.csv"), header, rows)
        write_json(os.path.join(args.out, "report.json"), out)
    return (EXIT_PASS if dev <= 1e-6 else EXIT_FAIL), out


def cmd_scan(prob, args):
    prob.require("plant", "ctrl")
    sc = prob.cfg.get("scan", {})
    res = closed_loop.sector_scan(prob.plant, prob.ctrl, sc.get("delta", 0.025), sc.get("radius", 4.0),
                                  sc.get("grid_density", 512), threads=args.threads)
    out = res.to_json()
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_json(os.path.join(args.out, "scan.json"), out)
    return (EXIT_PASS if res.verdict else EXIT_FAIL), out


def cmd_robust(prob, args):
    prob.require("plant", "exo", "ctrl")
    pc = prob.cfg.get("perturbations", {})
    count, scale = int(pc.get("count", 20)), float(pc.get("scale", 1.0))
    rng = np.random.default_rng(args.seed)
    tol = args.tol or prob.tol
    pert = regulator.random_perturbations(rng, prob.plant.N, prob.plant.n_outputs, prob.exo.dim, count, scale)
    cases = []
    for E, F in pert:
        rep = regulator.robustness_report(prob.ctrl, prob.plant, E, F, prob.exo, tol)
        fixed = []
        for b in prob.exo.blocks:
            _, res = regulator.per_frequency_fixed_point(prob.ctrl, prob.plant, E, F, prob.exo, b.k, tol)
            fixed.append(res)
        cases.append({"robust": rep.robust, "max_lhs_residual": max(e.lhs_residual for e in rep.entries),
                      "max_fixed_point_residual": max(fixed)})
    ok = all(c["robust"] for c in cases)
    out = {"seed": args.seed, "count": count, "scale": scale, "tol": tol, "all_solvable": ok, "cases": cases}
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_json(os.path.join(args.out, "robust.json"), out)
    return (EXIT_PASS if ok else EXIT_FAIL), out


def cmd_heat_bench(prob, args):
    cfg = prob.cfg
    hc = heat_bench.HeatConfig(N=prob.N, threads=args.threads)
    sc = cfg.get("scan", {})
    hc.delta = sc.get("delta", hc.delta)
    hc.radius = sc.get("radius", hc.radius)
    hc.grid_density = sc.get("grid_density", hc.grid_density)
    outdir = args.out or "out"
    report, scan, per = heat_bench.run_all(outdir, hc, cfg.get("periodic", {}).get("K_exo", 5))
    ok = report["decayed"] and report["setpoint_reached"] and scan.verdict
    return (EXIT_PASS if ok else EXIT_FAIL), {"constant": report, "periodic_g_conditions": per["g_conditions"], "output_dir": outdir}


COMMANDS = {
    "check-im": cmd_check_im,
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "scan": cmd_scan,
    "robust": cmd_robust,
    "heat-bench": cmd_heat_bench,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="roreg", description="Robust output regulation checks for modal plant models.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--tol", type=float, default=None)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        prob = Problem(cfg)
        code, report = COMMANDS[args.command](prob, args)
    except (ConfigError, DimensionError, KeyError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, np.linalg.LinAlgError) as exc:
        k = getattr(exc, "k", None)
        sys.stdout.write(dumps({"error": type(exc).__name__, "message": str(exc), "k": k}))
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    sys.stdout.write(dumps(report))
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
