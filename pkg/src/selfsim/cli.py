"""Command line front end: ``selfsim <command> ...``.

Every command can also be driven by a JSON config
``{"operation": ..., "system": ..., "params": {...}, "seed": 0, "output": "dir"}``
through ``selfsim report --config file.json``.  Rationals are written as
``"p/q"`` strings.  Exit codes: 0 success, 1 failed checks, 2 invalid input,
3 budget exceeded, 4 IO failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__, codings, expansions, geometry, spectrum, suite, universal
from .ifs import IfsSystem, bernoulli, cantor, parse_number, sierpinski, similarity_sum, unit_interval

EXIT_OK, EXIT_FAILED, EXIT_INVALID, EXIT_BUDGET, EXIT_IO = 0, 1, 2, 3, 4

DEFAULTS = {
    "tol": codings.DEFAULT_TOLERANCE,
    "depth": 30,
    "res": 1e-3,
    "cell_budget": geometry.DEFAULT_CELL_BUDGET,
    "node_cap": codings.DEFAULT_NODE_CAP,
    "seed": 0,
}

OPERATIONS = ("render", "measure", "overlap", "codings", "univoque", "forbidden", "universal",
              "pedicini", "expand", "spectrum", "suite")


class ConfigError(ValueError):
    pass


def load_system(ref) -> IfsSystem:
    """A system from a dict, a JSON file path or a preset name.

    Presets: ``unit``, ``cantor``, ``bernoulli:LAM``, ``sierpinski:LAM`` and
    ``alphabet:A1,A2,...@LAM``.
    """
    if isinstance(ref, IfsSystem):
        return ref
    if isinstance(ref, dict):
        return IfsSystem.from_dict(ref)
    if not isinstance(ref, str) or not ref:
        raise ConfigError("system must be a preset name, a JSON path or an inline object")
    name, _, arg = ref.partition(":")
    if name == "unit" and not arg:
        return unit_interval()
    if name == "cantor" and not arg:
        return cantor()
    if name == "bernoulli" and arg:
        return bernoulli(parse_number(arg))
    if name == "sierpinski" and arg:
        return sierpinski(float(Fraction(arg)))
    if name == "alphabet" and "@" in arg:
        digits, lam = arg.split("@")
        return expansions.ifs_of_alphabet(expansions.Alphabet.parse(digits), lam)
    path = Path(ref)
    if not path.exists():
        raise ConfigError(f"unknown system preset or missing file: {ref}")
    return IfsSystem.load(path)


@dataclass
class ExperimentConfig:
    operation: str
    system: object = None
    params: dict = field(default_factory=dict)
    seed: int = 0
    output: str | None = None

    def __post_init__(self):
        if self.operation not in OPERATIONS:
            raise ConfigError(f"unknown operation {self.operation!r}")
        if not isinstance(self.params, dict):
            raise ConfigError("params must be an object")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        unknown = set(data) - {"operation", "system", "params", "seed", "output"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "operation" not in data:
            raise ConfigError("config needs an operation")
        return cls(data["operation"], data.get("system"), dict(data.get("params", {})),
                   data.get("seed", 0), data.get("output"))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise OSError(f"cannot read config {path}: {exc}") from exc
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc

    def to_dict(self) -> dict:
        system = self.system.to_dict() if isinstance(self.system, IfsSystem) else self.system
        return {"operation": self.operation, "system": system, "params": self.params, "seed": self.seed}

    @property
    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def param(self, key: str, default=None):
        return self.params.get(key, DEFAULTS.get(key, default))


@dataclass
class ReportBundle:
    config: ExperimentConfig
    tables: dict = field(default_factory=dict)     # name -> CSV text
    rasters: dict = field(default_factory=dict)    # name -> PGM text
    lines: list = field(default_factory=list)
    status: int = EXIT_OK

    def header(self) -> list:
        used = {k: self.config.param(k) for k in DEFAULTS}
        used["seed"] = self.config.seed
        return [f"selfsim {__version__}", f"operation: {self.config.operation}",
                f"config hash: {self.config.digest}",
                "settings: " + ", ".join(f"{k}={v}" for k, v in used.items())]

    @property
    def summary(self) -> str:
        files = sorted(self.tables) + sorted(self.rasters)
        body = self.header() + [""] + self.lines
        if files:
            body += ["", "files: " + ", ".join(files)]
        return "\n".join(body) + "\n"

    def write(self, directory) -> list:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for name, text in list(self.tables.items()) + list(self.rasters.items()):
            (out / name).write_text(text, newline="")
            written.append(out / name)
        (out / "summary.txt").write_text(self.summary)
        return written + [out / "summary.txt"]


def _points(text) -> np.ndarray:
    if isinstance(text, (int, float)):
        return np.array([float(text)])
    return np.array([float(parse_number(v)) for v in str(text).replace(",", " ").split()])


def _word(text) -> tuple:
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    return tuple(int(v) for v in str(text).replace(",", " ").split())


def _preflight(s: IfsSystem, b: ReportBundle):
    _, flag = similarity_sum(s)
    if flag == "<1":
        b.lines.append("WARNING: similarity sum below 1, the attractor has Lebesgue measure zero")


def run(config: ExperimentConfig) -> ReportBundle:
    """Dispatch one operation and collect its report."""
    b = ReportBundle(config)
    op, p = config.operation, config.param
    needs_system = op not in ("pedicini", "expand", "spectrum", "suite")
    s = load_system(config.system) if needs_system or config.system else None
    if s is not None:
        _preflight(s, b)
    if op == "render":
        ras = geometry.rasterize(s, p("res"), budget=p("cell_budget"))
        b.lines.append(f"covered boxes: {int(ras.mask.sum())} of size {ras.cell_size!r}")
        b.tables["raster.csv"] = ras.to_csv()
        if s.dimension == 2:
            b.rasters["raster.pgm"] = ras.to_pgm()
    elif op == "measure":
        est = geometry.measure_estimate(s, p("res"), budget=p("cell_budget"))
        b.lines.append(f"measure upper {est.upper!r}, heuristic lower {est.heuristic_lower!r}")
        b.tables["measure.csv"] = geometry.MEASURE_CSV_HEADER + "\n" + est.csv_row() + "\n"
    elif op == "overlap":
        k, l = int(p("k", 1)), int(p("l", 2))
        est = geometry.overlap_measure(s, k, l, p("res"), budget=p("cell_budget"))
        ie = geometry.inclusion_exclusion_residual(s, p("res"), budget=p("cell_budget"))
        b.lines.append(f"overlap f{k} & f{l}: upper {est.upper!r}, heuristic lower {est.heuristic_lower!r}")
        b.lines.append(f"inclusion-exclusion residual {ie.residual!r}, full identity residual {ie.full_residual!r}")
        b.tables["overlap.csv"] = geometry.MEASURE_CSV_HEADER + "\n" + est.csv_row() + "\n"
    elif op == "codings":
        depth, tol = int(p("depth")), float(p("tol"))
        samples = p("samples")
        if samples:
            r = codings.sample_experiment(s, int(samples), depth, config.seed, tol, cap=int(p("node_cap")))
            for verdict, frac in r.fractions.items():
                b.lines.append(f"{verdict}: {frac:.4f}")
            b.lines.append(f"witnesses confirmed: {r.witnesses_confirmed}")
            b.tables["samples.csv"] = r.to_csv()
        else:
            tree = codings.enumerate_prefixes(s, _points(p("point", "0")), depth, tol, int(p("node_cap")))
            cls = codings.classify(tree)
            b.lines.append(f"verdict: {cls.verdict.value} (b(N) = {cls.count}, depth {cls.depth})")
            if cls.exponent is not None:
                b.lines.append(f"growth exponent: {cls.exponent:.6f}")
            b.tables["counts.csv"] = "k,b\n" + "".join(f"{k},{v}\n" for k, v in enumerate(tree.counts, 1))
    elif op in ("univoque", "forbidden"):
        depth, res, tol = int(p("depth")), float(p("res")), float(p("tol"))
        if op == "univoque":
            ap = codings.univoque_cover(s, depth, res, tol, config.seed, int(p("node_cap")))
        else:
            ap = codings.forbidden_block_cover(s, _word(p("block", "1")), depth, res, tol, config.seed,
                                               int(p("node_cap")))
        b.lines.append(f"retained boxes: {ap.retained} of {ap.probes}, measure proxy {ap.measure!r}")
        b.tables[f"{op}.csv"] = ap.to_csv()
        if s.dimension == 2:
            b.rasters[f"{op}.pgm"] = ap.raster.to_pgm()
    elif op == "universal":
        L = int(p("blocks_upto_length", 3))
        K = universal.BlockEnumeration(s.n).count_upto(L)
        r = universal.build_universal_prefix(s, _points(p("point", "0")), K, float(p("tol")),
                                             int(p("budget_depth", universal.DEFAULT_BLOCK_DEPTH)),
                                             int(p("node_cap")))
        b.lines.append(r.summary())
        b.lines.append("prefix: " + " ".join(map(str, r.prefix)))
        b.tables["certificate.csv"] = r.to_csv()
        if not r.success:
            b.status = EXIT_FAILED
    elif op == "pedicini":
        A = expansions.Alphabet.parse(str(p("alphabet", "0,1")))
        ok, margin = expansions.pedicini_check(A, p("lambda", "1/2"))
        b.lines.append(f"alphabet {A}, lambda {p('lambda', '1/2')}: {'holds' if ok else 'fails'}, margin {margin}")
        if margin == 0:
            b.lines.append("boundary case: equality")
        b.lines.append(f"threshold lambda: {expansions.pedicini_threshold(A)}")
    elif op == "expand":
        A = expansions.Alphabet.parse(str(p("alphabet", "0,1")))
        mode = p("mode", "greedy")
        fn = {"greedy": expansions.greedy_expansion, "lazy": expansions.lazy_expansion}.get(mode)
        if fn is None:
            raise ConfigError(f"unknown expansion mode {mode!r}")
        d = fn(A, p("lambda", "7/10"), p("x", "1"), int(p("n", 40)))
        value, bound = expansions.evaluate(d)
        b.lines.append(f"{mode} digits: " + " ".join(str(a) for a in d.digits))
        b.lines.append(f"value {float(value)!r} with tail bound {float(bound)!r}")
        b.tables["digits.csv"] = d.to_csv()
    elif op == "spectrum":
        t = spectrum.enumerate_spectrum(str(p("lambda_inv", "phi")), int(p("degree", 14)))
        st = spectrum.gap_stats(t, float(p("window", 0.5)))
        b.lines.append(json.dumps(st.as_dict(), sort_keys=True))
        b.tables["spectrum.csv"] = t.to_csv()
    elif op == "suite":
        results = suite.run_suite(str(p("name", "paper-desk-checks")), config.seed, p("only"))
        for r in results:
            b.lines.append(f"criterion {r.number:2d} {r.status}  {r.title} ({r.seconds:.1f} s)  {r.detail_text()}")
        b.tables["checks.csv"] = suite.results_csv(results)
        if not all(r.passed for r in results):
            b.status = EXIT_FAILED
    return b


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="selfsim", description="Experiments on self-similar sets and their codings.")
    ap.add_argument("--version", action="version", version=f"selfsim {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def command(name, help_text, system=True):
        c = sub.add_parser(name, help=help_text)
        if system:
            c.add_argument("--system", required=True,
                           help="JSON file or preset: unit, cantor, bernoulli:LAM, sierpinski:LAM, alphabet:A@LAM")
        c.add_argument("--out", help="directory for the report bundle")
        c.add_argument("--seed", type=int, default=DEFAULTS["seed"])
        return c

    c = command("render", "rasterize the attractor")
    c.add_argument("--res", type=float)
    c = command("measure", "upper and heuristic lower Lebesgue measure")
    c.add_argument("--res", type=float)
    c = command("overlap", "measure of f_k(attractor) & f_l(attractor)")
    c.add_argument("--k", type=int, default=1)
    c.add_argument("--l", type=int, default=2)
    c.add_argument("--res", type=float)
    c = command("codings", "coding tree of one point, or a sample experiment")
    c.add_argument("--point")
    c.add_argument("--samples", type=int)
    c.add_argument("--depth", type=int)
    c.add_argument("--tol", type=float)
    c = command("univoque", "boxes whose probe has a unique coding to depth N")
    c.add_argument("--depth", type=int)
    c.add_argument("--res", type=float)
    c.add_argument("--tol", type=float)
    c = command("forbidden", "boxes whose probe avoids a block to depth N")
    c.add_argument("--block", required=True)
    c.add_argument("--depth", type=int)
    c.add_argument("--res", type=float)
    c.add_argument("--tol", type=float)
    c = command("universal", "prefix containing all blocks up to a length")
    c.add_argument("--point", required=True)
    c.add_argument("--blocks-upto-length", type=int, default=3)
    c.add_argument("--budget-depth", type=int, default=universal.DEFAULT_BLOCK_DEPTH)
    c.add_argument("--tol", type=float)
    c = command("pedicini", "gap condition for an alphabet", system=False)
    c.add_argument("--alphabet", default="0,1")
    c.add_argument("--lambda", dest="lambda_", default="1/2")
    c = command("expand", "greedy or lazy expansion", system=False)
    c.add_argument("--alphabet", default="0,1")
    c.add_argument("--lambda", dest="lambda_", default="7/10")
    c.add_argument("--mode", choices=("greedy", "lazy"), default="greedy")
    c.add_argument("--x", required=True)
    c.add_argument("--n", type=int, default=40)
    c = command("spectrum", "gaps of the finite spectrum", system=False)
    c.add_argument("--lambda-inv", default="phi")
    c.add_argument("--degree", type=int, default=14)
    c.add_argument("--window", type=float, default=0.5)
    c = command("suite", "run a named check battery", system=False)
    c.add_argument("name")
    c.add_argument("--only", help="comma separated criterion numbers")
    c = sub.add_parser("report", help="run a JSON experiment config")
    c.add_argument("--config", required=True)
    c.add_argument("--out", help="overrides the config's output directory")
    return ap


def _config_from_args(args) -> ExperimentConfig:
    if args.command == "report":
        cfg = ExperimentConfig.load(args.config)
        if args.out:
            cfg.output = args.out
        return cfg
    skip = {"command", "out", "seed", "system"}
    params = {}
    for key, value in vars(args).items():
        if key in skip or value is None:
            continue
        params[key.rstrip("_")] = value
    if args.command == "suite":
        if args.only:
            params["only"] = [int(v) for v in args.only.split(",")]
        else:
            params.pop("only", None)
    return ExperimentConfig(args.command, getattr(args, "system", None), params, args.seed, args.out)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
        bundle = run(cfg)
    except (geometry.BudgetExceeded, spectrum.DegreeCapExceeded) as exc:
        print(f"selfsim: budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (ConfigError, ValueError, TypeError, KeyError) as exc:
        print(f"selfsim: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"selfsim: io failure: {exc}", file=sys.stderr)
        return EXIT_IO
    sys.stdout.write(bundle.summary)
    if cfg.output:
        try:
            bundle.write(cfg.output)
        except OSError as exc:
            print(f"selfsim: io failure: {exc}", file=sys.stderr)
            return EXIT_IO
    return bundle.status


if __name__ == "__main__":
    sys.exit(main())
