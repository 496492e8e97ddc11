"""Command-line front end.

Exit codes: 0 success, 1 bad input (parse, validation, bit length),
2 scaling or structural infeasibility, 3 best sample infeasible,
4 exact search too large.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from . import __version__
from .analysis import EncodingSpec, dmgf_budget, qmgf_budget, scale_sweep, sweep_csv
from .fixtures import make_fixture
from .formulation import Infeasible, assemble
from .lowering import (
    DEFAULT_SCALE,
    PenaltyPlan,
    ScaleError,
    derive_penalties,
    ising_to_text,
    lower,
    qubo_to_text,
    to_ising,
)
from .network import NetworkModel, ParseError, ValidationError, load_network
from .solvers import (
    AnnealSchedule,
    TooLarge,
    energy_histogram,
    ground_state_probability,
    histogram_csv,
    sample_sa,
    solve_exhaustive,
)
from .verify import LengthMismatch, compute_flows, compute_metrics, decode, verify_feasibility

EXIT_INPUT, EXIT_SCALE, EXIT_INFEASIBLE, EXIT_TOO_LARGE = 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write(out: Path, name: str, text: str, written: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text, encoding="utf-8")
    written[name] = hashlib.sha256(text.encode()).hexdigest()


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------


def parse_penalties(items: list[str] | None) -> dict:
    """``--penalty 5`` sets every weight; ``default=``, ``gate=`` or ``<label>=`` set one."""
    spec: dict = {}
    for item in items or []:
        key, sep, value = item.rpartition("=")
        if not sep:
            key = "all"
        try:
            weight = int(value)
        except ValueError:
            raise UsageError(f"penalty weight must be an integer: {item!r}") from None
        if weight < 1:
            raise UsageError(f"penalty weight must be >= 1: {item!r}")
        spec[key] = weight
    return spec


def _plan(bp, scale: int, spec: dict) -> PenaltyPlan | None:
    if not spec:
        return None
    base = derive_penalties(bp, None, scale) if "all" not in spec else None
    default = spec.get("default", spec.get("all", base.default_weight if base else 1))
    gate = spec.get("gate", spec.get("all", base.gate_weight if base else 1))
    labels = {k: v for k, v in spec.items() if k not in ("all", "default", "gate")}
    return PenaltyPlan(scale, default, gate, labels)


def _instance_config(path: str) -> dict:
    data = Path(path).read_bytes()
    return {"instance": path, "instance_sha256": hashlib.sha256(data).hexdigest()}


def _load(path: str) -> NetworkModel:
    return load_network(Path(path).read_text(encoding="utf-8"))


def _build(net: NetworkModel, cfg: dict):
    bp = assemble(net)
    scaled_plan = None
    if cfg["penalty"]:
        # penalties are chosen on the scaled program; derive on a throwaway lowering
        probe = lower(bp, cfg["scale"])
        scaled_plan = _plan(probe.program, cfg["scale"], cfg["penalty"])
    return lower(bp, cfg["scale"], scaled_plan)


def _manifest(command: str, cfg: dict, written: dict) -> str:
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return _dump({
        "tool": "mgqubo",
        "version": __version__,
        "command": command,
        "config": cfg,
        "config_sha256": hashlib.sha256(canonical.encode()).hexdigest(),
        "seed": cfg.get("seed"),
        "outputs": dict(sorted(written.items())),
    })


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_build(cfg: dict, out: Path) -> int:
    net = _load(cfg["instance"])
    q = _build(net, cfg)
    budget = qmgf_budget(q)
    report = {
        "instance": net.name or Path(cfg["instance"]).stem,
        "dim": q.dim,
        "offset": q.offset,
        "scale_exponent": cfg["scale"],
        "penalties": q.plan.to_dict(),
        "variables": q.registry.names(),
        "constraints": [c.label for c in q.program.constraints],
        "and_gates": [[y, [a, b]] for y, (a, b) in q.program.and_gates],
        "budget": budget.to_dict(),
        "qubits_dmgf": dmgf_budget(net, EncodingSpec()),
    }
    written: dict = {}
    _write(out, "model.qubo", qubo_to_text(q), written)
    _write(out, "model.ising", ising_to_text(to_ising(q)), written)
    _write(out, "build.json", _dump(report), written)
    _write(out, "manifest.json", _manifest("build", cfg, written), written)
    print(f"built {q.dim} variables ({budget.primary_bits} primary, "
          f"{budget.aux_and_bits} and, {budget.slack_bits} slack) into {out}")
    return 0


def _schedule(cfg: dict) -> AnnealSchedule:
    return AnnealSchedule(sweeps=cfg["sweeps"], seed=cfg["seed"])


def cmd_solve(cfg: dict, out: Path) -> int:
    net = _load(cfg["instance"])
    q = _build(net, cfg)
    solver = cfg["solver"]
    ground = None
    if solver in ("exhaustive", "both"):
        exact = solve_exhaustive(q)
        ground = exact.min_energy
        samples = exact
    if solver in ("sa", "both"):
        samples = sample_sa(q, _schedule(cfg), cfg["samples"], workers=cfg["workers"])

    bits, energy, _ = samples.first
    sol = verify_feasibility(compute_flows(decode(bits, q.registry, net), net), net)
    metrics = compute_metrics(sol, net, q.dim, dmgf_budget(net, EncodingSpec()))
    report = {
        "solver": solver,
        "bitstring": bits,
        "energy": energy,
        "solution": sol.to_dict(),
        "metrics": metrics.to_dict(),
    }
    if ground is not None:
        report["ground_energy"] = ground
        if solver == "both":
            report["ground_state_probability"] = ground_state_probability(samples, ground)

    written: dict = {}
    _write(out, "samples.csv", samples.to_csv(), written)
    _write(out, "histogram.csv", histogram_csv(energy_histogram(samples, cfg["bins"])), written)
    _write(out, "solution.json", _dump(report), written)
    _write(out, "manifest.json", _manifest("solve", cfg, written), written)
    status = "feasible" if sol.feasible else "INFEASIBLE"
    print(f"best energy {energy}: {status}, objective {float(sol.objective_value):g}, "
          f"served {float(metrics.load_served_ratio):.4g}%")
    return 0 if sol.feasible else EXIT_INFEASIBLE


def cmd_verify(cfg: dict, bits_text: str) -> int:
    net = _load(cfg["instance"])
    q = _build(net, cfg)
    sol = decode("".join(bits_text.split()), q.registry, net)
    sol = verify_feasibility(compute_flows(sol, net), net)
    for label, amount in sol.violations:
        print(f"violation {label}: {float(amount):g}")
    metrics = compute_metrics(sol, net, q.dim, dmgf_budget(net, EncodingSpec()))
    print(f"feasible: {sol.feasible}")
    print(f"violation_sum: {float(sol.violation_sum):g}")
    print(f"objective: {float(sol.objective_value):g}")
    print(f"load_served_ratio: {float(metrics.load_served_ratio):.6g}")
    return 0 if sol.feasible else EXIT_INFEASIBLE


def _fixture(spec: str) -> tuple[str, NetworkModel]:
    path = Path(spec)
    if path.suffix == ".json" and path.exists():
        net = _load(spec)
        return net.name or path.stem, net
    try:
        return spec, make_fixture(spec)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_sweep(cfg: dict, out: Path) -> int:
    fixtures = [_fixture(s) for s in cfg["fixtures"]]
    rows = scale_sweep(fixtures, _schedule(cfg), cfg["samples"], scale_exponent=cfg["scale"],
                       bins=cfg["bins"], workers=cfg["workers"])
    written: dict = {}
    _write(out, "sweep.csv", sweep_csv(rows), written)
    for row in rows:
        _write(out, f"histogram-{row.fixture.replace('/', '_')}.csv", histogram_csv(row.histogram), written)
    _write(out, "manifest.json", _manifest("sweep", cfg, written), written)
    print(sweep_csv(rows), end="")
    return 0


# --------------------------------------------------------------------------
# argument handling
# --------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mgqubo", description="Microgrid formation as an encoding-free QUBO.")
    p.add_argument("--version", action="version", version=f"mgqubo {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def model_flags(sp):
        sp.add_argument("--scale", type=int, default=DEFAULT_SCALE, help="decimal scale exponent n")
        sp.add_argument("--penalty", action="append", metavar="[LABEL=]M",
                        help="penalty weight; bare M sets all, or default=, gate=, <label>=")

    def sampler_flags(sp):
        sp.add_argument("--samples", type=int, default=300)
        sp.add_argument("--sweeps", type=int, default=1000)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--bins", type=int, default=20, help="energy histogram bins")

    b = sub.add_parser("build", help="write model.qubo, model.ising and build.json")
    b.add_argument("instance")
    model_flags(b)
    b.add_argument("--out", default="out")

    s = sub.add_parser("solve", help="sample or solve exactly and report the best solution")
    s.add_argument("instance")
    model_flags(s)
    s.add_argument("--solver", choices=("exhaustive", "sa", "both"), default="exhaustive")
    sampler_flags(s)
    s.add_argument("--out", default="out")

    v = sub.add_parser("verify", help="check a bitstring against the original constraints")
    v.add_argument("instance")
    v.add_argument("bits", help="file holding the bitstring (- for stdin)")
    model_flags(v)

    w = sub.add_parser("sweep", help="qubit budget and ground-state probability per fixture")
    w.add_argument("fixtures", nargs="+", help="fixture names (line3, star4, ring5-1, ...) or instance files")
    w.add_argument("--scale", type=int, default=DEFAULT_SCALE)
    sampler_flags(w)
    w.add_argument("--out", default="out")

    r = sub.add_parser("replay", help="re-run the configuration recorded in a manifest")
    r.add_argument("manifest")
    r.add_argument("--out", default=None, help="output directory (default: next to the manifest)")
    return p


def _config(args) -> dict:
    cfg: dict = {}
    if args.command in ("build", "solve", "verify"):
        cfg.update(_instance_config(args.instance))
        cfg["scale"] = args.scale
        cfg["penalty"] = parse_penalties(args.penalty)
    if args.command in ("solve", "sweep"):
        if args.samples < 1 or args.sweeps < 1 or args.workers < 1 or args.bins < 1:
            raise UsageError("samples, sweeps, workers and bins must be positive")
        cfg.update(samples=args.samples, sweeps=args.sweeps, seed=args.seed,
                   workers=args.workers, bins=args.bins)
    if args.command == "solve":
        cfg["solver"] = args.solver
        if args.solver != "exhaustive" and args.seed is None:
            raise UsageError("--seed is required for annealing runs")
    if args.command == "sweep":
        if args.seed is None:
            raise UsageError("--seed is required for sweeps")
        cfg["fixtures"] = list(args.fixtures)
        cfg["scale"] = args.scale
    return cfg


def _dispatch(command: str, cfg: dict, out: Path | None, bits_text: str | None = None) -> int:
    if command == "build":
        return cmd_build(cfg, out)
    if command == "solve":
        return cmd_solve(cfg, out)
    if command == "verify":
        return cmd_verify(cfg, bits_text)
    if command == "sweep":
        return cmd_sweep(cfg, out)
    raise UsageError(f"cannot run command {command!r}")


def _replay(manifest_path: str, out: str | None) -> int:
    manifest = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    cfg = manifest["config"]
    if "instance" in cfg:
        current = _instance_config(cfg["instance"])["instance_sha256"]
        if current != cfg["instance_sha256"]:
            raise UsageError(f"instance {cfg['instance']} changed since the manifest was written")
    target = Path(out) if out else Path(manifest_path).parent
    return _dispatch(manifest["command"], cfg, target)


def main(argv: list[str] | None = None) -> int:
    try:
        args = _parser().parse_args(argv)
        if args.command == "replay":
            return _replay(args.manifest, args.out)
        cfg = _config(args)
        bits_text = None
        if args.command == "verify":
            bits_text = sys.stdin.read() if args.bits == "-" else Path(args.bits).read_text()
        out = Path(args.out) if hasattr(args, "out") and args.out else None
        return _dispatch(args.command, cfg, out, bits_text)
    except (UsageError, ParseError, ValidationError, LengthMismatch, FileNotFoundError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ScaleError, Infeasible) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCALE
    except TooLarge as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TOO_LARGE


if __name__ == "__main__":
    sys.exit(main())
