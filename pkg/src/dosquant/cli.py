"""Command-line entry point.

Subcommands:

    derive        print the full derived-constant report as JSON
    simulate      run one scenario, optionally writing trace CSV + audit JSON
    validate-dos  check an attack CSV against a budget
    sweep         run a range of rates over the same scenario, print a table

Exit codes are a stable contract: 0 ok, 1 validation failure, 2 infeasible
budget (sigma <= 0), 3 codec overflow, 4 plant divergence, 5 I/O error.

Scenario files are flat ``key = value`` text with ``#`` comments. Keys match
the simulation configuration fields; ``plant`` selects a catalog system.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, fields

from . import bounds as bounds_mod
from . import catalog
from . import dos as dos_mod
from . import sim as sim_mod
from .dynamics import DivergenceError

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_INFEASIBLE = 2
EXIT_OVERFLOW = 3
EXIT_DIVERGENCE = 4
EXIT_IO = 5


@dataclass
class Scenario:
    plant: str
    kappa: float
    eta: float
    T: float
    tau_d: float
    delta: float
    R: int
    X: float
    x0: tuple[float, ...]
    horizon: float
    h: float = 0.0               # 0 means delta/100
    delta_margin: float = 1e-4
    rho: float = 0.0             # 0 means 0.999*(l + delta_margin)
    seed: int = 0
    attack_style: str = "random"
    attack_csv: str = ""

    def step(self) -> float:
        return self.h if self.h > 0 else self.delta / 100.0

    def budget(self) -> dos_mod.DoSBudget:
        return dos_mod.DoSBudget(self.kappa, self.eta, self.T, self.tau_d)

    def dump(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "x0":
                v = ",".join(repr(c) for c in v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


PAPER_EXAMPLE = Scenario(
    plant="paper-example",
    kappa=0.3, eta=1.3, T=2.222, tau_d=0.714,
    delta=0.1, R=2, X=0.65, x0=(0.5,), horizon=20.0, h=0.001,
    delta_margin=1e-4, seed=1, attack_style="random",
)

_BUILTIN = {"paper-example": PAPER_EXAMPLE}

_FIELD_TYPES = {f.name: f.type for f in fields(Scenario)}
_REQUIRED = {"plant", "kappa", "eta", "T", "tau_d", "delta", "R", "X", "x0", "horizon"}


def parse_scenario_text(text: str, source: str = "<scenario>") -> Scenario:
    """Parse the flat key=value format; failures carry the line number."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _FIELD_TYPES:
            raise ValueError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            if key == "x0":
                values[key] = tuple(float(c) for c in val.split(","))
            elif key in ("plant", "attack_style", "attack_csv"):
                values[key] = val
            elif key in ("R", "seed"):
                values[key] = int(val)
            else:
                fv = float(val)
                if not math.isfinite(fv):
                    raise ValueError(f"non-finite value {val!r}")
                values[key] = fv
        except ValueError as exc:
            raise ValueError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    missing = _REQUIRED - values.keys()
    if missing:
        raise ValueError(f"{source}: missing required keys: {', '.join(sorted(missing))}")
    return Scenario(**values)


def load_scenario(name_or_path: str) -> Scenario:
    if name_or_path in _BUILTIN:
        return _BUILTIN[name_or_path]
    try:
        with open(name_or_path) as fh:
            text = fh.read()
    except OSError as exc:
        raise OSError(f"cannot read scenario {name_or_path!r}: {exc}") from exc
    return parse_scenario_text(text, source=name_or_path)


def _build(scn: Scenario):
    model, cert = catalog.get_system(scn.plant)
    budget = scn.budget()
    if scn.attack_csv:
        attack = dos_mod.DoSSequence.from_csv(scn.attack_csv, horizon=scn.horizon)
    else:
        attack = sim_mod.AttackSpec(style=scn.attack_style, seed=scn.seed)
    config = sim_mod.SimConfig(model, cert, budget, attack, scn.delta, scn.R,
                               scn.X, scn.x0, scn.horizon, scn.step())
    return model, cert, budget, config


def _derive_params(scn: Scenario):
    model, cert = catalog.get_system(scn.plant)
    kwargs = dict(delta_margin=scn.delta_margin, R=scn.R, phi_step=scn.step())
    if scn.rho > 0:
        kwargs["rho"] = scn.rho
    return bounds_mod.derive(model, cert, scn.budget(), scn.delta, scn.X, **kwargs)


def cmd_derive(args) -> int:
    scn = load_scenario(args.scenario)
    if args.dump_scenario:
        sys.stdout.write(scn.dump())
        return EXIT_OK
    try:
        params = _derive_params(scn)
    except dos_mod.FeasibilityError as exc:
        print(f"infeasible DoS budget: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    print(json.dumps(params.to_dict(), indent=2))
    return EXIT_OK


def cmd_simulate(args) -> int:
    scn = load_scenario(args.scenario)
    try:
        params = _derive_params(scn)
    except dos_mod.FeasibilityError as exc:
        print(f"infeasible DoS budget: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    _, _, _, config = _build(scn)
    trace = sim_mod.run(config, params=params)
    summary = {
        "status": trace.status,
        "final_x_inf": trace.final_state_inf() if len(trace.x) else None,
        "successes": len(trace.successes),
        "z0": trace.z0,
        "theta": trace.theta,
        "attack_valid": trace.attack_valid,
    }
    report = None
    if trace.status == "ok":
        report = sim_mod.audit(trace, params)
        summary["audit_passed"] = report.passed_count()
        summary["audit_total"] = len(report.clauses)
    else:
        summary["fault_time"] = trace.fault_time
        summary["fault_detail"] = trace.fault_detail
    try:
        if args.trace:
            sim_mod.trace_to_csv(trace, args.trace)
        if args.audit and report is not None:
            sim_mod.audit_to_json(report, args.audit)
    except OSError as exc:
        print(f"cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    print(json.dumps(summary, indent=2))
    if trace.status == "overflow":
        return EXIT_OVERFLOW
    if trace.status == "divergence":
        return EXIT_DIVERGENCE
    return EXIT_OK


def cmd_validate_dos(args) -> int:
    budget = dos_mod.DoSBudget(args.kappa, args.eta, args.T, args.tau_d)
    try:
        seq = dos_mod.DoSSequence.from_csv(args.attack)
    except OSError as exc:
        print(f"cannot read attack file: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"malformed attack file: {exc}", file=sys.stderr)
        return EXIT_INVALID
    report = dos_mod.validate(seq, budget)
    print(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK if report.valid else EXIT_INVALID


def cmd_sweep(args) -> int:
    scn = load_scenario(args.scenario)
    if args.r_max < args.r_min or args.r_min < 1:
        print("invalid rate range", file=sys.stderr)
        return EXIT_INVALID
    try:
        params = _derive_params(scn)
    except dos_mod.FeasibilityError as exc:
        print(f"infeasible DoS budget: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    _, _, _, config = _build(scn)
    result = sim_mod.sweep_R(config, range(args.r_min, args.r_max + 1), params=params)
    lines = ["R,stabilized,final_x_inf,status,audit_passed,audit_total"]
    for row in result.rows:
        lines.append(f"{row.R},{int(row.stabilized)},{row.final_x_inf!r},"
                     f"{row.status},{row.audit_passed},{row.audit_total}")
    lines.append(f"R_thm,{result.R_thm},,,,")
    out = "\n".join(lines) + "\n"
    if args.out:
        try:
            with open(args.out, "w") as fh:
                fh.write(out)
        except OSError as exc:
            print(f"cannot write output: {exc}", file=sys.stderr)
            return EXIT_IO
    else:
        sys.stdout.write(out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="dosquant",
        description="Quantized state-feedback control under denial-of-service: "
                    "bound derivation and closed-loop simulation.")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("derive", help="print the derived-constant report as JSON")
    d.add_argument("--scenario", required=True,
                   help="scenario file path or a built-in name "
                        f"({', '.join(sorted(_BUILTIN))})")
    d.add_argument("--dump-scenario", action="store_true",
                   help="print the parsed scenario in canonical form and exit")
    d.set_defaults(func=cmd_derive)

    s = sub.add_parser("simulate", help="run one closed-loop scenario")
    s.add_argument("--scenario", required=True)
    s.add_argument("--trace", default="", help="write the per-step trace CSV here")
    s.add_argument("--audit", default="", help="write the audit report JSON here")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("validate-dos", help="check an attack CSV against a budget")
    v.add_argument("attack", help="CSV with header h,tau")
    v.add_argument("--kappa", type=float, required=True)
    v.add_argument("--eta", type=float, required=True)
    v.add_argument("--T", type=float, required=True)
    v.add_argument("--tau-d", type=float, required=True, dest="tau_d")
    v.set_defaults(func=cmd_validate_dos)

    w = sub.add_parser("sweep", help="sweep quantization rates over one scenario")
    w.add_argument("--scenario", required=True)
    w.add_argument("--r-min", type=int, default=1)
    w.add_argument("--r-max", type=int, required=True)
    w.add_argument("--out", default="", help="write the table CSV here instead of stdout")
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def console_main() -> None:
    sys.exit(main())
