"""Command-line front end.

Exit codes: 0 success, 1 a hypothesis fails, 2 a numerical run did not
converge (results are still written), 3 bad input (I/O, schema, arguments).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .aconvex import check_condition_1, check_condition_C, classify_beta, find_beta, validate
from .cylinders import condition_B_probe, max_cylinder_mass, parabolic_scaling
from .map_model import MapError, load_map
from .thermo import pressure_curve, spectrum
from .transfer import collocation_spectrum, invariant_density, lasota_yorke_probe

log = logging.getLogger("thermoform")

EXIT_OK, EXIT_HYPOTHESIS, EXIT_NONCONVERGED, EXIT_INPUT = 0, 1, 2, 3
SCHEMA = 1


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    map_source: str
    s: list = field(default_factory=lambda: [1.0])
    cells: int = 4096
    tol: float = 1e-10
    max_iter: int = 200_000
    depth: int = 8
    n_max: int | None = None
    output: str = "json"
    path: str | None = None
    seed: int = 0

    def check(self):
        c = self.cells
        if not (16 <= c <= 65536 and c & (c - 1) == 0):
            raise ConfigError("cells must be a power of two between 16 and 65536")
        if any(not (v > 0) for v in self.s):
            raise ConfigError("s must be positive")
        if not (0 < self.tol <= 1e-2):
            raise ConfigError("tol must lie in (0, 1e-2]")
        if self.max_iter < 1 or self.depth < 1 or (self.n_max is not None and self.n_max < 1):
            raise ConfigError("iteration counts and depth must be positive")
        return self


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _document(cfg: RunConfig, T, body: dict) -> str:
    doc = {"schema": SCHEMA, "version": __version__, "config": asdict(cfg),
           "map": {"name": T.name, "hash": T.content_hash()}}
    doc.update(body)
    return json.dumps(_clean(doc), sort_keys=True, indent=2) + "\n"


def _csv(header, rows, comments=()) -> str:
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _emit(cfg: RunConfig, text: str):
    if cfg.path:
        with open(cfg.path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _hypotheses(T, s_values):
    c1 = check_condition_1(T)
    cc = [check_condition_C(T, s) for s in s_values]
    return c1.passed and all(c.passed for c in cc), c1, cc


# ---------------------------------------------------------------------------
# subcommands; each returns (exit code, body dict, optional csv text)

def _validate(cfg, T, args):
    rep = validate(T, cfg.s)
    return (EXIT_OK if rep.passed else EXIT_HYPOTHESIS), {"validation": rep.to_dict()}, None


def _spectrum(cfg, T, args):
    ok, c1, cc = _hypotheses(T, cfg.s)
    if not ok:
        bad = [asdict(c) for c in cc if not c.passed]
        log.error("hypotheses fail for %s at s=%s", T.name, cfg.s)
        return EXIT_HYPOTHESIS, {"error": "hypotheses fail", "cond1": asdict(c1), "condC": bad}, None
    res = spectrum(T, cfg.s[0], cfg.cells, cfg.tol, cfg.max_iter)
    body = {"spectrum": res.to_dict()}
    ly = lasota_yorke_probe(T, cfg.s[0], 20, seed=cfg.seed)
    body["lasota_yorke"] = {"alpha": ly.alpha, "b_hat": ly.b_hat, "passed": ly.passed,
                            "samples": 20, "seed": cfg.seed}
    x = (np.arange(cfg.cells) + 0.5) / cfg.cells
    text = _csv(["x", "density", "weight"], zip(x, res.density.values, res.ms_weights))
    return (EXIT_OK if res.converged else EXIT_NONCONVERGED), body, text


def _density(cfg, T, args):
    ok, c1, cc = _hypotheses(T, cfg.s)
    if not ok:
        return EXIT_HYPOTHESIS, {"error": "hypotheses fail", "cond1": asdict(c1)}, None
    spec = collocation_spectrum(T, cfg.s[0], cfg.cells, cfg.tol, cfg.max_iter)
    g = invariant_density(T, cfg.s[0], cfg.cells, cfg.tol, spec.gamma, cfg.max_iter, spec.ms_weights)
    body = {"density": {"gamma": spec.gamma, **g.meta, "values": g.values}}
    x = np.arange(cfg.cells + 1) / cfg.cells
    text = _csv(["x", "density"], zip(x, g.values))
    conv = g.meta["converged"] and spec.converged
    return (EXIT_OK if conv else EXIT_NONCONVERGED), body, text


def _cylinders_body(cfg, T):
    s = cfg.s[0]
    beta, n_star, _ = find_beta(T)
    probe = condition_B_probe(T, s, None, cfg.depth, cfg.n_max, beta=beta)
    spec = collocation_spectrum(T, s, probe.n_grid)
    rows = []
    for r, (count, M) in enumerate(zip(probe.counts, probe.M), start=1):
        mass = max_cylinder_mass(T, r, spec.ms_weights, probe.n_grid, beta)
        rows.append({"r": r, "count": count, "M": M, "max_cyl_mass": mass})
    body = {"condition_B": {"rows": rows, "decreasing": probe.decreasing, "n_max": probe.n_max,
                            "n_grid": probe.n_grid, "gamma": probe.gamma}}
    if classify_beta(T, beta, n_star).beta_type == "indifferent":
        sc = parabolic_scaling(T, 30)
        body["scaling"] = {"w": sc.w, "D": sc.D, "theta_hat": sc.theta_hat,
                           "polynomial": sc.polynomial}
    return body


def _cylinders(cfg, T, args):
    body = _cylinders_body(cfg, T)
    rows = [(d["r"], d["count"], d["M"], d["max_cyl_mass"]) for d in body["condition_B"]["rows"]]
    text = _csv(["r", "count", "M_hat", "max_cyl_mass"], rows)
    if "scaling" in body:
        sc = body["scaling"]
        text += "\n" + _csv(["r", "w_r", "D_r"],
                            [(i + 1, w, d) for i, (w, d) in enumerate(zip(sc["w"], sc["D"]))],
                            comments=[f"theta_hat={sc['theta_hat']!r}"])
    return EXIT_OK, body, text


def _pressure_body(cfg, T):
    curve = pressure_curve(T, cfg.s, cfg.cells, cfg.tol, cfg.max_iter)
    rows = [dict(zip(("s", "P", "lambda", "h", "converged"), r)) for r in curve.rows()]
    return curve, {"pressure": {"rows": rows, "verdicts": curve.verdicts}}


def _pressure(cfg, T, args):
    curve, body = _pressure_body(cfg, T)
    text = _csv(["s", "P", "lambda", "h", "converged"], curve.rows())
    verdict = json.dumps(_clean(curve.verdicts), sort_keys=True)
    if args.verdict:
        with open(args.verdict, "w", encoding="utf-8") as fh:
            fh.write(verdict + "\n")
    elif cfg.output == "csv":
        sys.stderr.write(verdict + "\n")
    code = EXIT_OK if bool(np.all(curve.converged)) else EXIT_NONCONVERGED
    return code, body, text


def _report(cfg, T, args):
    rep = validate(T, cfg.s)
    body = {"validation": rep.to_dict()}
    if not rep.passed:
        return EXIT_HYPOTHESIS, body, None
    res = spectrum(T, cfg.s[0], cfg.cells, cfg.tol, cfg.max_iter)
    body["spectrum"] = res.to_dict()
    body.update(_cylinders_body(cfg, T))
    grid = np.linspace(args.s_min, args.s_max, args.s_steps) if args.s_steps else np.array(cfg.s)
    pcfg = RunConfig(**{**asdict(cfg), "s": [float(v) for v in grid]})
    curve, pbody = _pressure_body(pcfg, T)
    body.update(pbody)
    conv = res.converged and bool(np.all(curve.converged))
    return (EXIT_OK if conv else EXIT_NONCONVERGED), body, None


COMMANDS = {
    "validate": _validate, "spectrum": _spectrum, "density": _density,
    "cylinders": _cylinders, "pressure": _pressure, "report": _report,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_INPUT)


def _floats(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number list: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="thermoform", description="Transfer-operator diagnostics for interval maps.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        q = sub.add_parser(name)
        q.add_argument("--map", required=True, help="built-in name or JSON map file")
        q.add_argument("--s", type=_floats, default=[1.0], help="exponent(s), comma separated")
        q.add_argument("--cells", type=int, default=4096)
        q.add_argument("--tol", type=float, default=1e-10)
        q.add_argument("--max-iter", type=int, default=200_000)
        q.add_argument("--depth", type=int, default=8)
        q.add_argument("--n-max", type=int, default=None)
        q.add_argument("--seed", type=int, default=0)
        q.add_argument("--format", choices=("json", "csv"),
                       default="csv" if name == "pressure" else "json")
        q.add_argument("--output", default=None, help="output path (default: stdout)")
        q.add_argument("--s-min", type=float, default=None)
        q.add_argument("--s-max", type=float, default=None)
        q.add_argument("--s-steps", type=int, default=None)
        q.add_argument("--verdict", default=None, help="pressure: write the verdict JSON here")
        q.add_argument("-v", "--verbose", action="store_true")
    return p


def _config(args) -> RunConfig:
    s = args.s
    if args.command == "pressure":
        if None in (args.s_min, args.s_max, args.s_steps):
            raise ConfigError("pressure needs --s-min, --s-max and --s-steps")
        if args.s_steps < 1 or args.s_max < args.s_min:
            raise ConfigError("need s-steps >= 1 and s-max >= s-min")
        s = [float(v) for v in np.linspace(args.s_min, args.s_max, args.s_steps)]
    return RunConfig(args.command, args.map, s, args.cells, args.tol, args.max_iter, args.depth,
                     args.n_max, args.format, args.output, args.seed).check()


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = _config(args)
        T = load_map(cfg.map_source)
    except (ConfigError, MapError, OSError) as err:
        log.error("%s", err)
        return EXIT_INPUT
    try:
        code, body, text = COMMANDS[cfg.command](cfg, T, args)
        out = text if (cfg.output == "csv" and text is not None) else _document(cfg, T, body)
        _emit(cfg, out)
    except OSError as err:
        log.error("%s", err)
        return EXIT_INPUT
    return code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
