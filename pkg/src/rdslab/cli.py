"""Command-line front end: config validation, experiment dispatch, atomic outputs and run manifests."""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
import time
from importlib import resources

import jsonschema
import numpy as np

from . import __version__
from .dynamics import Constants, RandomSystem, load_system, shear_pair, single_map

EXIT_OK, EXIT_NEGATIVE, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

COMMANDS = ("certify-uef", "certify-uep", "moments", "angle-stats", "push-curve", "nct-et", "seminorm",
            "ac-diagnostic", "good-conv", "pipeline", "ly-trace", "cesaro", "equidistribute", "orbit", "tails")
NEEDS_CONSTANTS = {"nct-et", "good-conv", "pipeline", "ly-trace"}


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# config handling


def load_schema() -> dict:
    return json.loads(resources.files("rdslab").joinpath("schemas/config.schema.json").read_text())


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg: dict, dotted: str, value) -> None:
    """Set cfg[a][b][c] = value for dotted = "a.b.c", creating objects as needed."""
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {dotted}: {k} is not an object")
    node[keys[-1]] = value


def validate(cfg: dict) -> None:
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        msgs = []
        for e in errors:
            path = "/".join(str(p) for p in e.absolute_path) or "<root>"
            msgs.append(f"{path}: {e.message}")
        raise ConfigError("; ".join(msgs))


def config_hash(cfg: dict) -> str:
    """SHA-256 of the canonical JSON form (sorted keys), so key order does not matter."""
    text = json.dumps(cfg, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def build_system(spec: dict, base_dir: str = ".") -> RandomSystem:
    if "builtin" in spec:
        if spec["builtin"] == "shear_pair":
            return shear_pair(spec.get("eps", 0.0), spec.get("p", 0.5))
        return single_map([[2, 1], [1, 1]], name="cat")
    if "file" in spec:
        path = spec["file"] if os.path.isabs(spec["file"]) else os.path.join(base_dir, spec["file"])
        return load_system(path)
    return RandomSystem.from_dict(spec)


def build_constants(cfg: dict, system: RandomSystem) -> Constants:
    given = dict(cfg.get("constants", {}))
    if {"delta", "chi", "chi_bar"} & set(given) or "C0p" not in given and not system.diffeos:
        return Constants.from_dict(given)
    from .dynamics import c2_bound

    C0p = given.pop("C0p", None)
    if C0p is None:
        C0p = math.log(max(c2_bound(f) for f in system.diffeos))
        C0p = max(C0p, 2.0 + 1e-6)
    base = {k: given.pop(k) for k in ("C1", "N", "beta1", "C0", "c", "p0") if k in given}
    return Constants.derive(C0p, base.pop("C1", 0.29), base.pop("N", 4), **base, **given)


# ---------------------------------------------------------------------------
# output


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def atomic_write(path: str, data: bytes) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_bytes(header, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue().encode("utf-8")


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.bool_, bool)):
        return bool(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (float, np.floating)):
        f = float(o)
        return f if math.isfinite(f) else str(f)
    return o


class Outputs:
    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        self.files = {}

    def write(self, name: str, data: bytes) -> None:
        atomic_write(os.path.join(self.out_dir, name), data)
        self.files[name] = _sha256(data)

    def csv(self, name, header, rows) -> None:
        self.write(name, csv_bytes(header, rows))

    def json(self, name, obj) -> None:
        self.write(name, (json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n").encode("utf-8"))


# ---------------------------------------------------------------------------
# commands; each returns (summary dict, passed flag or None)


def _curve(p, default_angle=math.pi / 4):
    from .curves import make_curve

    spec = dict(p.get("curve", {"spec": "segment", "length": 0.05}))
    kind, length = spec.pop("spec"), spec.pop("length")
    start = tuple(spec.pop("start", (0.2, 0.3)))
    if kind == "segment":
        spec.setdefault("angle", default_angle)
    return make_curve(kind, length, start=start, **spec)


def _measure(p, base_dir):
    from . import seminorm as sm

    spec = p.get("measure", {"kind": "lebesgue", "count": 256})
    kind = spec["kind"]
    if kind == "dirac":
        return sm.dirac(spec.get("point", (0.3, 0.7)))
    if kind == "lebesgue":
        return sm.lebesgue_grid_cloud(spec.get("count", 256))
    if kind == "circle":
        return sm.horizontal_circle_cloud(spec.get("y", 0.5), spec.get("count", 20000))
    path = spec["path"] if os.path.isabs(spec["path"]) else os.path.join(base_dir, spec["path"])
    return sm.GridDensity.read(path).to_cloud()


def _certify(system, k, p, seed, out, past):
    from .cocycle import certify_uef, certify_uep

    f = certify_uep if past else certify_uef
    kw = dict(x_grid=p.get("x_grid", 48), v_grid=p.get("v_grid", 64), mode=p.get("mode", "auto"),
              samples=p.get("samples", 2048), seed=seed)
    r = f(system, p.get("N", 1), **kw)
    out.csv("certificate.csv", ["x", "y", "theta", "integral"], r.rows())
    s = {"bound": r.bound, "witness_x": r.witness_x, "witness_v": r.witness_v, "N": r.N, "mode": r.mode,
         "ci": r.ci, "passed": r.passed}
    return s, r.passed


def cmd_certify_uef(system, k, p, seed, out, base):
    return _certify(system, k, p, seed, out, False)


def cmd_certify_uep(system, k, p, seed, out, base):
    return _certify(system, k, p, seed, out, True)


def cmd_moments(system, k, p, seed, out, base):
    from .cocycle import moment_decay

    r = moment_decay(system, p.get("delta", k.delta), p.get("n", 30), p.get("x", (0.1, 0.2)), p.get("v", (1.0, 0.0)),
                     past=p.get("past", False), samples=p.get("samples", 4096), seed=seed)
    out.csv("moments.csv", ["n", "moment"], zip(r.n, r.s))
    rows = r.markov_check(k.C0, k.chi_bar, k.chi)
    out.csv("markov.csv", ["n", "tail", "markov_bound", "exponent_bound", "ok"], rows)
    passed = r.ci[0] > 0 and all(row[4] for row in rows)
    return {"chi_hat": r.chi_hat, "ci": r.ci, "delta": r.delta, "past": r.past}, passed


def cmd_angle_stats(system, k, p, seed, out, base):
    from .cocycle import angle_tail

    r = angle_tail(system, p.get("n", 25), p.get("x", (0.1, 0.2)), p.get("v", (1.0, -1.0)),
                   mode=p.get("mode", "stable"), samples=p.get("samples", 100000), seed=seed)
    out.csv("angle_tail.csv", ["eta", "probability"], zip(r.eta, r.P))
    return {"beta1": r.beta1, "C3": r.C3, "ci": r.ci, "reliable": r.reliable, "mode": r.mode}, r.ci[0] > 0


def _word(system, p, seed):
    from .dynamics import generator, sample_word

    if "word" in p:
        return tuple(p["word"])
    return tuple(sample_word(system.measure, p.get("n", 5), generator(seed)))


def cmd_push_curve(system, k, p, seed, out, base):
    from .curves import push_word

    curve = _curve(p)
    word = _word(system, p, seed)
    img = push_word(system.diffeos, word, curve)
    out.csv("curve.csv", ["s", "x", "y", "tx", "ty", "kappa"], img.dump_rows().tolist())
    return {"word": word, "length": img.length, "nodes": img.n_nodes, "max_curvature": img.max_abs_curvature()}, None


def cmd_nct_et(system, k, p, seed, out, base):
    from .curves import curvature_growth_check, et, nct, tangent_traces

    curve = _curve(p)
    word = _word(system, p, seed)
    p0 = p.get("p0", k.p0)
    eta = p.get("eta", k.eta)
    tr = tangent_traces(system.diffeos, word, curve)
    ok_n, counts_n, viol_n = nct(system.diffeos, word, curve, p0, eta, k.C0, k.eps0, traces=tr)
    ok_e, counts_e, viol_e = et(system.diffeos, word, curve, p0, k.c, eta, traces=tr)
    out.csv("slots.csv", ["block", "nct_violation", "et_violation"],
            [(i + 1, bool(a), bool(b)) for i, (a, b) in enumerate(zip(viol_n, viol_e))])
    growth = curvature_growth_check(system.diffeos, word, curve, p0, k.c, eta, k.C0p, k.C0, k.eps0)
    return {"word": word, "nct": ok_n, "et": ok_e, "curvature_growth": growth}, bool(ok_n and ok_e)


def cmd_seminorm(system, k, p, seed, out, base):
    from .seminorm import rho_norm

    nu = _measure(p, base)
    rhos = p.get("rhos", [p.get("rho", 0.05)])
    rows = [(r, rho_norm(nu, r), p.get("measure", {}).get("kind", "lebesgue")) for r in rhos]
    out.csv("norms.csv", ["rho", "norm", "measure_id"], rows)
    return {"norms": [r[1] for r in rows], "mass": nu.mass}, None


def cmd_ac_diagnostic(system, k, p, seed, out, base):
    from .seminorm import ac_diagnostic

    nu = _measure(p, base)
    r = ac_diagnostic([nu], rho0=p.get("rho", 0.1), levels=p.get("levels", 3))
    out.csv("norms.csv", ["rho", "norm", "measure_id"], r.rows())
    return {"verdict": r.verdict, "exponent": r.exponent, "skipped": r.skipped}, r.verdict == "bounded"


def _admissible_seed(p):
    from .admissible import CurveMeasureAtom, make_admissible

    return make_admissible([CurveMeasureAtom(_curve(p))])


def cmd_good_conv(system, k, p, seed, out, base):
    from .admissible import good_convolution

    nu = _admissible_seed(p)
    r = good_convolution(system, nu, p.get("n", k.p0), p.get("eta", k.eta), p.get("a"), k,
                         samples=p.get("samples", 512), seed=seed, keep_bad=False)
    out.csv("good_conv.csv", ["part", "mass"], [("good", r.good_mass), ("bad", r.bad_mass)])
    return {"good_mass": r.good_mass, "bad_mass": r.bad_mass, "exact": r.exact}, None


def cmd_pipeline(system, k, p, seed, out, base, override=False):
    from .admissible import filtered_pipeline

    nu = _admissible_seed(p)
    r = filtered_pipeline(system, nu, p.get("d", 0), p.get("p0", k.p0), p.get("m", 4), p.get("eta", k.eta), k,
                          cut_base=p.get("cut_base", 0.01), budget=p.get("budget", 48), seed=seed,
                          override=override)
    out.csv("ledger.csv", ["stage", "sigma_class", "retained_mass", "discarded_mass", "K", "L", "atom_count"],
            [(x.stage, x.sigma_class, x.retained_mass, x.discarded_mass, x.K, x.L, x.atom_count) for x in r.ledger])
    passed = r.retained_mass >= (1 - k.c) * r.total_mass
    return {"total": r.total_mass, "retained": r.retained_mass, "discarded": r.discarded_mass,
            "balanced": r.balanced(), "unresolvable_stages": r.unresolvable, "notes": r.warnings}, passed


def cmd_ly_trace(system, k, p, seed, out, base, override=False):
    from .lab import ly_trace

    nu = _admissible_seed(p)
    r = ly_trace(system, nu, p.get("p0", k.p0), p.get("m", 2), p.get("eta", k.eta), k, rho=p.get("rho", 0.1),
                 levels=p.get("levels", 3), budget=p.get("budget", 48), seed=seed, override=override)
    out.csv("trace.csv", ["m", "log_rho_theory", "rho_used", "filtered_norm", "unfiltered_norm", "retained_mass",
                          "truncated"],
            [(x.m, x.rho_theory_log, x.rho_used, x.filtered_norm, x.unfiltered_norm, x.retained_mass, x.truncated)
             for x in r.rows])
    return {"filtered_verdict": r.filtered_verdict, "filtered_exponent": r.filtered_exponent,
            "unfiltered_verdict": r.unfiltered_verdict, "unfiltered_exponent": r.unfiltered_exponent,
            "notes": r.notes}, r.filtered_verdict == "bounded"


def cmd_cesaro(system, k, p, seed, out, base):
    from .lab import cesaro, stationary_residual
    from .seminorm import GridDensity

    src = p.get("x")
    nu = src if src is not None else _measure(p, base)
    clouds = cesaro(system, nu, p.get("n", 10), paths=p.get("paths", 16), seed=seed)
    grid = p.get("grid", 64)
    g = GridDensity.from_cloud(clouds[-1], grid)
    out.write("cesaro.rdsgrid", g.to_bytes())
    res = stationary_residual(system, g, grid)
    return {"mass": clouds[-1].mass, "stationary_residual": res}, None


def cmd_equidistribute(system, k, p, seed, out, base):
    from .lab import equidistribution

    r = equidistribution(system, p.get("x", (0.1234, 0.5678)), p.get("n", 200), grid=p.get("grid", 64),
                         paths=p.get("paths", 4096), seed=seed)
    out.csv("equidistribution.csv", ["n", "distance", "ci_low", "ci_high"], r.rows())
    return {"floor": r.floor, "converged": r.converged, "final": r.distance[-1]}, r.converged


def cmd_orbit(system, k, p, seed, out, base):
    from .lab import orbit_classify

    r = orbit_classify(system.diffeos, p.get("x", (0.0, 0.0)), p.get("depth", 20), p.get("eps", 0.05))
    out.csv("orbit.csv", ["x", "y"], r.points.tolist())
    return {"verdict": r.verdict, "size": r.size, "depth": r.depth_reached, "collisions": r.collisions,
            "coverage": r.coverage}, None


def cmd_tails(system, k, p, seed, out, base):
    from .admissible import binom_tail_bounds

    ns = range(p.get("n_min", 5), p.get("n", 60) + 1)
    etas = p.get("etas", [0.05, 0.1, 0.2, 0.3])
    rows = []
    ok = True
    for n in ns:
        for eta in etas:
            r = binom_tail_bounds(n, eta, a=p.get("a", 0.5))
            rows.append((n, eta, r["lhs1"], r["rhs1"], r["pass1"], r["lhs2"], r["rhs2"], r["pass2"]))
            ok &= r["pass1"] and r["pass2"]
    out.csv("tails.csv", ["n", "eta", "lhs1", "rhs1", "pass1", "lhs2", "rhs2", "pass2"], rows)
    return {"all_pass": ok}, ok


HANDLERS = {name: globals()["cmd_" + name.replace("-", "_")] for name in COMMANDS}


# ---------------------------------------------------------------------------
# entry point


def _build_parser():
    ap = argparse.ArgumentParser(prog="rdslab", description="Random dynamics on the 2-torus: experiments.")
    ap.add_argument("--version", action="version", version=f"rdslab {__version__}")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="JSON configuration file")
    ap.add_argument("--set", action="append", default=[], metavar="PATH=VALUE",
                    help="dotted-path override, e.g. params.N=20 or seed=7")
    ap.add_argument("--override", action="store_true", help="run even if constant relations are violated")
    ap.add_argument("--output-dir", help="replaces output_dir from the config")
    return ap


def _split_extra(extra):
    """Turn trailing ``--key value`` pairs into params overrides."""
    out = []
    it = iter(extra)
    for tok in it:
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
        else:
            try:
                val = next(it)
            except StopIteration:
                raise ConfigError(f"missing value for {tok}") from None
        out.append(("params." + key, _parse_value(val)))
    return out


def run(argv=None) -> int:
    ap = _build_parser()
    args, extra = ap.parse_known_args(argv)
    started = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    try:
        with open(args.config, encoding="utf-8") as fh:
            try:
                cfg = json.load(fh)
            except json.JSONDecodeError as e:
                raise ConfigError(f"{args.config}: line {e.lineno} column {e.colno}: {e.msg}") from None
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"--set expects PATH=VALUE, got {item!r}")
            path, val = item.split("=", 1)
            apply_override(cfg, path, _parse_value(val))
        for path, val in _split_extra(extra):
            apply_override(cfg, path, val)
        if args.output_dir:
            cfg["output_dir"] = args.output_dir
        validate(cfg)
        base = os.path.dirname(os.path.abspath(args.config))
        system = build_system(cfg["system"], base)
        constants = build_constants(cfg, system)
        if args.command in NEEDS_CONSTANTS:
            bad = constants.check()
            if bad and not args.override:
                raise ConfigError("constant relations violated: " + "; ".join(bad) + " (use --override)")
    except OSError as e:
        print(f"rdslab: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, KeyError, TypeError, ValueError) as e:
        print(f"rdslab: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = cfg["output_dir"] if os.path.isabs(cfg["output_dir"]) else os.path.join(base, cfg["output_dir"])
    out = Outputs(out_dir)
    seed = int(cfg.get("seed", 0))
    handler = HANDLERS[args.command]
    try:
        with np.errstate(invalid="ignore", divide="ignore"):
            if args.command in ("pipeline", "ly-trace"):
                summary, passed = handler(system, constants, cfg.get("params", {}), seed, out, base,
                                          override=args.override)
            else:
                summary, passed = handler(system, constants, cfg.get("params", {}), seed, out, base)
    except (ArithmeticError, FloatingPointError, np.linalg.LinAlgError) as e:
        print(f"rdslab: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OverflowError) as e:
        print(f"rdslab: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    summary = {"command": args.command, "config": cfg, "constants": constants.to_dict(), "result": summary,
               "passed": passed}
    out.json("summary.json", summary)
    manifest = {
        "tool": "rdslab",
        "version": __version__,
        "config_hash": config_hash(cfg),
        "seed": seed,
        "started": started,
        "finished": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "outputs": [{"file": name, "sha256": digest} for name, digest in sorted(out.files.items())],
    }
    atomic_write(os.path.join(out_dir, "manifest.json"), (json.dumps(manifest, indent=2) + "\n").encode("utf-8"))
    print(json.dumps(_jsonable({"command": args.command, "passed": passed, "output_dir": out_dir})))
    return EXIT_NEGATIVE if passed is False else EXIT_OK


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
