"""Command-line driver.

Every subcommand writes ``report.json`` and ``report.txt`` (plus CSV tables
for the sweeps) into ``--out``.  Exit status is 0 when every asserted check
passes, 2 when a check fails and 1 on bad input.
"""
import argparse
from dataclasses import asdict, dataclass, field
import datetime
import json
import os
import sys

import jsonschema
import numpy as np

from . import coeffs as C
from . import flow as F
from . import toyfock as TF
from . import wongzakai as WZ
from ._linalg import TOL_ALGEBRA, dagger, opnorm
from .errors import (NotConverging, ParseError, QStochError, SchemaError,
                     UnitarityViolated)
from .formats import (coefficients_to_json, decode_matrix, encode_matrix,
                      load_coefficients, parse_kappa, write_csv, write_json)

TASKS = ("convert", "check", "hp", "add", "flow", "simulate", "wz")
EXPERIMENTS = ("ed-vs-sd", "diffusion")
SWEEP_HEADER = ["dt", "abs_error_ito", "abs_error_ed_target", "abs_error_sd_target"]
WZ_HEADER = ["lambda", "mean_err", "max_err", "n_seeds"]

_number_list = {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1}
_matrix = {"type": "array", "items": {"type": "array", "items": {
    "type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}}}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["task"],
    "properties": {
        "task": {"enum": list(TASKS)},
        "inputs": {"type": "array", "items": {"type": "string"}},
        "kappa": {"oneOf": [
            {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
            {"type": "string"}, {"type": "number"}]},
        "tol": {"type": "number", "exclusiveMinimum": 0},
        "dt_list": _number_list,
        "lambda_list": _number_list,
        "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
        "seed": {"type": "integer", "minimum": 0},
        "n_seeds": {"type": "integer", "minimum": 1},
        "T": {"type": "number", "exclusiveMinimum": 0},
        "out": {"type": "string"},
        "experiment": {"enum": list(EXPERIMENTS)},
        "V": _matrix,
        "H": _matrix,
        "ratio": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
    },
}

DEFAULT_DT_LIST = [1e-2, 5e-3, 2.5e-3, 1.25e-3]
DEFAULT_LAMBDA_LIST = [0.1, 0.05, 0.025, 0.0125]


@dataclass
class RunConfig:
    task: str
    inputs: list = field(default_factory=list)
    kappa: C.GaugeParameter = field(default_factory=C.GaugeParameter)
    tol: float = TOL_ALGEBRA
    dt_list: list = None
    lambda_list: list = None
    seeds: list = None
    seed: int = 0
    n_seeds: int = 32
    T: float = 1.0
    out: str = "qstoch-out"
    experiment: str = None
    V: list = None
    H: list = None
    ratio: float = None

    def echo(self):
        d = asdict(self)
        d["kappa"] = [self.kappa.kappa.real, self.kappa.kappa.imag]
        return d


def _config_from_doc(doc, source="config"):
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.path))
    if errors:
        msgs = [f"{source}: {'/'.join(map(str, e.path)) or '<root>'}: {e.message}" for e in errors]
        raise SchemaError("; ".join(msgs), msgs)
    doc = dict(doc)
    if "kappa" in doc:
        doc["kappa"] = parse_kappa(doc["kappa"])
    for key in ("V", "H"):
        if key in doc:
            decode_matrix(doc[key], key)
    return RunConfig(**doc)


def validate_config(path):
    """Parse and schema-check a JSON run configuration.

    Referenced coefficient files are loaded too, so mismatched blocks are
    reported here, before any computation.
    """
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        line = text.splitlines()[exc.lineno - 1] if text.splitlines() else ""
        raise ParseError(f"{path}: line {exc.lineno}: {exc.msg}: {line.strip()!r}") from exc
    cfg = _config_from_doc(doc, source=str(path))
    base = os.path.dirname(os.path.abspath(path))
    cfg.inputs = [p if os.path.isabs(p) else os.path.join(base, p) for p in cfg.inputs]
    for p in cfg.inputs:
        load_coefficients(p)
    return cfg


class Report:
    """Accumulates asserted checks and free-form data for one run."""

    def __init__(self, task, tol):
        self.task = task
        self.tol = tol
        self.checks = []
        self.data = {}
        self.notes = []

    def check(self, name, residual, tol=None, passed=None):
        tol = self.tol if tol is None else tol
        residual = float(residual)
        ok = residual <= tol if passed is None else bool(passed)
        self.checks.append({"name": name, "residual": residual, "tol": tol, "passed": ok})
        return ok

    def check_report(self, prefix, rep):
        for key, value in rep.residual_norms.items():
            self.check(f"{prefix}[{key}]", value, rep.tol)

    @property
    def passed(self):
        return all(c["passed"] for c in self.checks)

    def to_json(self, config):
        return {"task": self.task, "passed": self.passed, "checks": self.checks,
                "data": self.data, "notes": self.notes, "config": config.echo()}

    def to_text(self):
        lines = [f"qstoch {self.task}: {'PASS' if self.passed else 'FAIL'}"]
        for c in self.checks:
            lines.append(f"  {'PASS' if c['passed'] else 'FAIL'}  {c['name']}  "
                         f"residual={c['residual']:.3e}  tol={c['tol']:.1e}")
        for n in self.notes:
            lines.append(f"  note: {n}")
        return "\n".join(lines) + "\n"


def _single_input(cfg):
    if len(cfg.inputs) != 1:
        raise SchemaError(f"task {cfg.task!r} needs exactly one input file, got {len(cfg.inputs)}")
    return load_coefficients(cfg.inputs[0])


def _kappa_for(cfg, file_kappa, explicit):
    return cfg.kappa if explicit else file_kappa


def _resolvent_duality(G, E, kappa):
    n, d = G.channels, G.d
    k = kappa.kappa
    prod = (np.eye(n * d) - 1j * k * G.channel_matrix()) @ (np.eye(n * d) + 1j * k * E.channel_matrix())
    return opnorm(prod - np.eye(n * d))


def run_convert(cfg, report, explicit_kappa):
    x, file_kappa = _single_input(cfg)
    kappa = _kappa_for(cfg, file_kappa, explicit_kappa)
    if x.kind == "strat":
        E = x
        G = C.strat_to_ito(E, kappa)
        out, back = G, C.ito_to_strat(G, kappa)
        report.check("roundtrip ||ito_to_strat(strat_to_ito(E)) - E||", (back - E).norm())
        closed = C.closed_form_hp_from_strat(E, kappa)
        if C.check_strat_selfadjoint(E).passed:
            hp = C.hp_from_ito(G)
            report.data["closed_form_H_deviation"] = opnorm(closed.H - hp.H)
            report.data["closed_form_W_deviation"] = opnorm(closed.W - hp.W)
    else:
        G = x
        E = C.ito_to_strat(G, kappa)
        out, back = E, C.strat_to_ito(E, kappa)
        report.check("roundtrip ||strat_to_ito(ito_to_strat(G)) - G||", (back - G).norm())
    report.check("resolvent duality (I - i k G11)(I + i k E11) = I", _resolvent_duality(G, E, kappa))
    report.notes.append("G00 correction uses -i kappa E0.(I + i kappa E11)^-1 E.0 (compact form)")
    path = os.path.join(cfg.out, "converted.json")
    report.data["output"] = "converted.json"
    report.data["kappa"] = [kappa.kappa.real, kappa.kappa.imag]
    return {path: coefficients_to_json(out, kappa.kappa)}


def run_check(cfg, report, explicit_kappa):
    x, file_kappa = _single_input(cfg)
    if x.kind == "strat":
        report.check_report("strat self-adjoint", C.check_strat_selfadjoint(x, cfg.tol))
    else:
        report.check_report("ito unitarity", C.check_ito_unitarity(x, cfg.tol))
    return {}


def _as_ito(x, kappa):
    return C.strat_to_ito(x, kappa) if x.kind == "strat" else x


def run_hp(cfg, report, explicit_kappa):
    x, file_kappa = _single_input(cfg)
    kappa = _kappa_for(cfg, file_kappa, explicit_kappa)
    G = _as_ito(x, kappa)
    rep = C.check_ito_unitarity(G, cfg.tol)
    report.check_report("ito unitarity", rep)
    if not rep.passed:
        return {}
    hp = C.hp_from_ito(G, cfg.tol)
    for k, v in hp.residuals.items():
        report.check(k, v)
    report.check("ito_from_hp(hp_from_ito(G)) = G", (C.ito_from_hp(hp, cfg.tol) - G).norm())
    if x.kind == "strat":
        w = C.cayley_from_e11(x.channel_matrix(), kappa)
        report.check("W = (I - i k* E11)(I + i k E11)^-1", opnorm(w - hp.W))
        closed = C.closed_form_hp_from_strat(x, kappa)
        report.data["closed_form_H_deviation"] = opnorm(closed.H - hp.H)
        report.notes.append("H is the self-adjoint part of G00; closed_form_H_deviation compares "
                            "with E00 + Im(kappa) E0.(I + i kappa E11)^-1 E.0")
    doc = {"W": encode_matrix(hp.W), "K": encode_matrix(hp.K), "H": encode_matrix(hp.H)}
    report.data["output"] = "hp.json"
    return {os.path.join(cfg.out, "hp.json"): doc}


def run_add(cfg, report, explicit_kappa):
    if len(cfg.inputs) < 1:
        raise SchemaError("task 'add' needs at least one input file")
    loaded = [load_coefficients(p) for p in cfg.inputs]
    kappa = cfg.kappa if explicit_kappa else loaded[0][1]
    summands = []
    for (x, _), p in zip(loaded, cfg.inputs):
        if x.kind != "strat":
            raise SchemaError(f"{p}: 'add' sums Stratonovich (E..) files")
        summands.append(x)
    E, G = C.add_generators(summands, kappa)
    if all(C.check_strat_selfadjoint(s).passed for s in summands):
        report.check_report("sum self-adjoint", C.check_strat_selfadjoint(E, cfg.tol))
        report.check_report("sum unitarity", C.check_ito_unitarity(G, cfg.tol))
        if all(opnorm(s.channel_matrix()) == 0 for s in summands):
            table = C.additive_h_comparison(summands, kappa)
            report.check("K_total = sum K_n", table["K_difference"])
            report.data["H_general_vs_additive_formula"] = table["H_difference"]
            report.data["cross_terms"] = table["cross_terms"]
            report.notes.append("H of the sum follows the general conversion rule; the additive "
                                "formula is reported, not asserted")
    files = {os.path.join(cfg.out, "sum_strat.json"): coefficients_to_json(E, kappa.kappa),
             os.path.join(cfg.out, "sum_ito.json"): coefficients_to_json(G, kappa.kappa)}
    report.data["outputs"] = ["sum_strat.json", "sum_ito.json"]
    return files


def run_flow(cfg, report, explicit_kappa):
    x, file_kappa = _single_input(cfg)
    kappa = _kappa_for(cfg, file_kappa, explicit_kappa)
    G = _as_ito(x, kappa)
    rep = C.check_ito_unitarity(G, cfg.tol)
    report.check_report("ito unitarity", rep)
    if not rep.passed:
        return {}
    table = F.flow_report(G, cfg.tol, rng=cfg.seed)
    for k, v in table["residuals"].items():
        report.check(f"flow {k}", v)
    hp = C.hp_from_ito(G, cfg.tol)
    report.check("Lindblad form of L00", F.lindblad_residual(F.eh_generator(G, cfg.tol), hp))
    report.data["block_norms"] = table["block_norms"]
    return {}


def _builtin_experiment(name, T):
    if name == "ed-vs-sd":
        E = C.CoefficientBlock.from_blocks(1, 1, kind="strat", b11=np.pi / 2)
        return E, TF.TestFunctionPair.constant(1.0, 1.0, T), np.ones(1), np.ones(1)
    sm = TF.SIGMA_MINUS
    E = C.CoefficientBlock.from_blocks(2, 1, kind="strat", b00=np.diag([1.0, -1.0]),
                                       b10=sm, b01=dagger(sm))
    tf = TF.TestFunctionPair([0.5, -0.3], [0.3 + 0.2j, 0.6], T)
    return E, tf, np.array([0.0, 1.0]), np.array([1.0, 1.0]) / np.sqrt(2)


def _worst_ratio(errors, halvings=3, floor=1e-12):
    """Largest ``error(dt/2) / error(dt)`` over the final halvings; 0 when all errors vanish."""
    errors = [float(e) for e in errors]
    if max(errors) <= floor:
        return 0.0
    tail = errors[-(halvings + 1):]
    if len(tail) < halvings + 1:
        return float("inf")
    return max(b / a if a > 0 else float("inf") for a, b in zip(tail, tail[1:]))


def _ratio_check(report, name, errors, ratio, converging, floor=1e-12):
    # strict inequality in the convergence test, so the reported flag comes from it
    report.check(name, _worst_ratio(errors, floor=floor), tol=ratio, passed=converging)


def run_simulate(cfg, report, explicit_kappa):
    dts = cfg.dt_list or DEFAULT_DT_LIST
    ratio = cfg.ratio or 0.75
    if cfg.experiment:
        E, tf, u, v = _builtin_experiment(cfg.experiment, cfg.T)
        kappa = cfg.kappa
    else:
        x, file_kappa = _single_input(cfg)
        kappa = _kappa_for(cfg, file_kappa, explicit_kappa)
        if x.channels != 1:
            raise SchemaError("simulate supports a single noise channel")
        tf = TF.TestFunctionPair.constant(1.0, 1.0, cfg.T)
        u = v = np.ones(x.d) / np.sqrt(x.d)
        if x.kind == "ito":
            res = TF.simulate_from_ito(x, tf, u, v, dts, kappa)
            rows = [{"dt": dt, "abs_error_ito": e, "abs_error_ed_target": float("nan"),
                     "abs_error_sd_target": float("nan")}
                    for dt, e in zip(res["dts"], res["abs_errors"])]
            errs = res["abs_errors"]
            worst = _worst_ratio(errs)
            _ratio_check(report, "ito_euler error ratio per halving", errs, ratio, worst < ratio)
            report.data["oracle"] = res["oracle"]
            return {os.path.join(cfg.out, "sweep.csv"): (SWEEP_HEADER, rows)}
        E = x
    table = TF.convergence_sweep(E, tf, u, v, dts, kappa=kappa, ratio=ratio, check=False)
    s = table.summary()
    _ratio_check(report, "ito_euler error ratio per halving", table.abs_error_ito, ratio,
                 s["ito_converging"])
    _ratio_check(report, "slot_exp error ratio per halving (ED target)", table.abs_error_ed,
                 ratio, s["slot_converging_to_ed"])
    finest = min(table.abs_error_ito[-1], table.abs_error_ed[-1])
    if cfg.experiment == "ed-vs-sd":
        report.check("slot_exp limit separated from SD target (> 10x extrapolated error)",
                     10 * s["extrapolated_error_ed"], tol=s["extrapolated_gap_sd"])
    elif opnorm(E.channel_matrix()) == 0:
        report.check("ED and SD targets coincide", s["target_gap_ed_sd"])
        report.check("extrapolated limits agree (<= 3x finest scheme error)",
                     abs(s["extrapolated_ito"] - s["extrapolated_slot"]), tol=3 * finest)
    report.data["summary"] = s
    report.data["oracles"] = {"ito": table.oracle_ito, "ed": table.oracle_ed, "sd": table.oracle_sd}
    return {os.path.join(cfg.out, "sweep.csv"): (SWEEP_HEADER, table.rows())}


def run_wz(cfg, report, explicit_kappa):
    lambdas = cfg.lambda_list or DEFAULT_LAMBDA_LIST
    V = decode_matrix(cfg.V, "V") if cfg.V else np.array([[0, 1], [1, 0]], dtype=complex)
    H = decode_matrix(cfg.H, "H") if cfg.H else np.diag([1.0, -1.0]).astype(complex)
    if V.shape != H.shape:
        raise SchemaError(f"V {V.shape} and H {H.shape} differ in shape")
    seeds = cfg.seeds or list(range(cfg.seed, cfg.seed + cfg.n_seeds))
    table = WZ.wz_convergence(V, H, lambdas, seeds, T=cfg.T, ratio=cfg.ratio or 0.85, check=False)
    _ratio_check(report, "mean error ratio per lambda halving", table.mean_err, table.ratio,
                 table.converging(), floor=1e-8)
    report.data["mean_err"] = table.mean_err.tolist()
    n_path = WZ.path_grid_size(cfg.T, min(lambdas))
    report.data["sidecar"] = "wz.json"
    sidecar = {"V": encode_matrix(V), "H": encode_matrix(H), "T": cfg.T,
               "dt_path": cfg.T / n_path, "dt_ode": cfg.T / n_path, "seeds": seeds,
               "lambdas": lambdas}
    return {os.path.join(cfg.out, "wz.csv"): (WZ_HEADER, table.rows()),
            os.path.join(cfg.out, "wz.json"): sidecar}


RUNNERS = {"convert": run_convert, "check": run_check, "hp": run_hp, "add": run_add,
           "flow": run_flow, "simulate": run_simulate, "wz": run_wz}


def run(cfg, explicit_kappa=True):
    """Execute a validated config; returns ``(exit_status, report)``."""
    report = Report(cfg.task, cfg.tol)
    try:
        artifacts = RUNNERS[cfg.task](cfg, report, explicit_kappa)
    except UnitarityViolated as exc:
        report.check(str(exc), float("inf"), passed=False)
        artifacts = {}
    except NotConverging as exc:
        report.check(str(exc), float("inf"), passed=False)
        artifacts = {}
    os.makedirs(cfg.out, exist_ok=True)
    for path, payload in artifacts.items():
        if path.endswith(".csv"):
            write_csv(path, *payload)
        else:
            write_json(path, payload)
    if cfg.task == "simulate":
        write_json(os.path.join(cfg.out, "sweep.json"), cfg.echo())
    write_json(os.path.join(cfg.out, "report.json"), report.to_json(cfg))
    with open(os.path.join(cfg.out, "report.txt"), "w") as fh:
        fh.write(report.to_text())
    write_json(os.path.join(cfg.out, "run_info.json"),
               {"generated_at": datetime.datetime.now(datetime.timezone.utc).isoformat()})
    return (0 if report.passed else 2), report


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from exc


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("inputs", nargs="*", help="coefficient JSON file(s)")
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--kappa", help="gauge as 're,im' (Re must be 0.5)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--dt-list", type=_float_list)
    common.add_argument("--lambda-list", type=_float_list)
    common.add_argument("--tol", type=float)
    common.add_argument("--T", type=float, dest="T")
    common.add_argument("--n-seeds", type=int)
    common.add_argument("--experiment", choices=EXPERIMENTS)

    parser = argparse.ArgumentParser(prog="qstoch", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="task", required=True)
    for task in TASKS:
        sub.add_parser(task, parents=[common])
    return parser


def config_from_args(args):
    explicit_kappa = args.kappa is not None
    if args.config:
        cfg = validate_config(args.config)
        if cfg.task != args.task:
            raise SchemaError(f"config task {cfg.task!r} does not match subcommand {args.task!r}")
        with open(args.config) as fh:
            explicit_kappa = explicit_kappa or "kappa" in json.load(fh)
    else:
        cfg = RunConfig(task=args.task)
    if args.inputs:
        cfg.inputs = list(args.inputs)
        for p in cfg.inputs:
            load_coefficients(p)
    if args.kappa is not None:
        cfg.kappa = parse_kappa(args.kappa)
    for name in ("out", "seed", "dt_list", "lambda_list", "tol", "T", "n_seeds", "experiment"):
        value = getattr(args, name)
        if value is not None:
            setattr(cfg, name, value)
    return cfg, explicit_kappa


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg, explicit_kappa = config_from_args(args)
        status, report = run(cfg, explicit_kappa)
    except (ParseError, SchemaError, ValueError, OSError, QStochError) as exc:
        print(f"qstoch: error: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(report.to_text())
    return status


if __name__ == "__main__":
    sys.exit(main())
