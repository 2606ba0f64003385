"""``monge`` command line: config loading, pipelines and file output.

Every subcommand reads one JSON config (``--config``); flags given on the
command line override the matching config fields.  All inputs are validated
before any output file is written.

Exit codes: 0 ok, 1 config or input error, 2 solver error, 3 partial
failure of an approximation schedule.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .approximation import ApproxConfig, run_schedule
from .errors import ConfigError, DegenerateMeasure, EmptyNet, MongeError, SolverError
from .geometry import ConvexBody, Metric, body_from_dict, check_dim, distance, interpolate, metric_from_dict
from .measures import (
    DENSITIES,
    DOUBLING_HALVINGS,
    DiscreteMeasure,
    check_net_cardinality,
    estimate_doubling,
    grid_discretize,
    greedy_eps_net,
    packing_bound,
    load_measure,
    net_separation,
    sample_uniform,
)
from .selection import check_restricted_monotonicity, select
from .transport import TAU, build_cost, check_cyclical_monotonicity, solve_kantorovich
from .verification import (
    check_interpolant_disjointness,
    convergence_report,
    geodesic_residuals,
    rows_to_csv,
    splitting_index,
    transport_set,
)

log = logging.getLogger("monge")

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_PARTIAL = 0, 1, 2, 3
MEASURE_SOURCES = ("file", "grid", "sample", "atoms")
DEFAULT_OUTPUT = "monge-output"


@dataclass
class RunConfig:
    body: ConvexBody | None
    metric: Metric
    mu1: DiscreteMeasure | None
    mu2: DiscreteMeasure | None
    tau: float = TAU
    eta: float | None = None
    collinearity_tol: float | None = None
    separation_tol: float | None = None
    approx: ApproxConfig | None = None
    output: Path = Path(DEFAULT_OUTPUT)
    seed: int = 0
    notes: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# config


def _measure_from_spec(spec, body, base: Path, seed: int, name: str, notes: list) -> DiscreteMeasure:
    if not isinstance(spec, dict):
        raise ConfigError(f"{name}: expected an object with one of {MEASURE_SOURCES}")
    given = [k for k in MEASURE_SOURCES if k in spec]
    if len(given) != 1:
        raise ConfigError(f"{name}: give exactly one source among {MEASURE_SOURCES}, got {given or 'none'}")
    kind = given[0]
    val = spec[kind]
    if kind == "file":
        path = Path(val)
        if not path.is_absolute():
            path = base / path
        if not path.exists():
            raise ConfigError(f"{name}: file {path} does not exist")
        m, report = load_measure(path)
        if report.merged:
            notes.append(report.describe())
        return m
    if kind == "atoms":
        if isinstance(val, dict):
            pts, w = val.get("points"), val.get("weights")
        else:
            pts, w = val, None
        try:
            P = np.asarray(pts, dtype=float)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"{name}: bad atom coordinates ({e})") from None
        if P.ndim == 1:
            P = P[:, None]
        return DiscreteMeasure(P, w)
    if body is None:
        raise ConfigError(f"{name}: a {kind} source needs a body")
    if kind == "grid":
        if not isinstance(val, dict) or "resolution" not in val:
            raise ConfigError(f"{name}: grid needs a resolution")
        density = val.get("density")
        if density is not None and density not in DENSITIES:
            raise ConfigError(f"{name}: unknown density {density!r}; choose from {sorted(DENSITIES)}")
        return grid_discretize(body, val["resolution"], density)
    if not isinstance(val, dict) or "count" not in val:
        raise ConfigError(f"{name}: sample needs a count")
    return sample_uniform(body, val["count"], val.get("seed", seed))


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def load_config(args: argparse.Namespace, need: tuple[str, ...] = ("mu1", "mu2")) -> RunConfig:
    """Read the config file, apply command-line overrides and build all inputs."""
    path = Path(args.config)
    try:
        raw = json.loads(path.read_text())
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    base = path.parent
    seed = args.seed if args.seed is not None else int(raw.get("seed", 0))
    body = body_from_dict(raw["body"]) if "body" in raw else None
    if "metric" not in raw:
        raise ConfigError(f"{path}: missing 'metric'")
    metric = metric_from_dict(raw["metric"], body)
    notes: list = []
    measures = {}
    for name in ("mu1", "mu2"):
        if name in raw:
            measures[name] = _measure_from_spec(raw[name], body, base, seed, name, notes)
            check_dim(metric, measures[name].dim)
        elif name in need:
            raise ConfigError(f"{path}: missing '{name}'")
    if "mu1" in measures and "mu2" in measures and measures["mu1"].dim != measures["mu2"].dim:
        raise ConfigError("mu1 and mu2 live in different dimensions")

    tol = dict(raw.get("tolerances", {}))
    for key in ("tau", "eta", "collinearity_tol", "separation_tol"):
        v = getattr(args, key, None)
        if v is not None:
            tol[key] = v
    for key, v in tol.items():
        if v is not None and not (isinstance(v, (int, float)) and v >= 0):
            raise ConfigError(f"tolerance {key} must be a nonnegative number")

    approx = None
    if "approx" in raw or getattr(args, "epsilons", None) is not None or "approx" in need:
        a = dict(raw.get("approx", {}))
        if getattr(args, "epsilons", None) is not None:
            a["epsilons"] = _floats(args.epsilons)
        if getattr(args, "net_rule", None) is not None:
            a["net_rule"] = args.net_rule
        if getattr(args, "d", None) is not None:
            a["d"] = args.d
        unknown = set(a) - {"epsilons", "net_rule", "d"}
        if unknown:
            raise ConfigError(f"unknown approx fields {sorted(unknown)}")
        try:
            approx = ApproxConfig(**a, eta=tol.get("eta"))
        except ValueError as e:
            raise ConfigError(f"approx: {e}") from None

    output = args.output if args.output is not None else raw.get("output", DEFAULT_OUTPUT)
    output = Path(output)
    if not output.is_absolute() and args.output is None and "output" in raw:
        output = base / output
    return RunConfig(
        body,
        metric,
        measures.get("mu1"),
        measures.get("mu2"),
        tau=float(tol.get("tau", TAU)),
        eta=tol.get("eta"),
        collinearity_tol=tol.get("collinearity_tol"),
        separation_tol=tol.get("separation_tol"),
        approx=approx,
        output=output,
        seed=seed,
        notes=notes,
    )


# ---------------------------------------------------------------------------
# output


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _write(out: Path, files: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for name, content in files.items():
        if not isinstance(content, str):
            content = json.dumps(_clean(content), indent=1, sort_keys=True) + "\n"
        (out / name).write_text(content)


def _fmt(x: float) -> str:
    return f"{x:.17g}"


# ---------------------------------------------------------------------------
# commands


def cmd_solve(cfg: RunConfig) -> int:
    sol = solve_kantorovich(cfg.mu1, cfg.mu2, build_cost(cfg.mu1, cfg.mu2, cfg.metric, 1.0))
    _write(
        cfg.output,
        {"plan.json": sol.to_dict(), "dual.json": sol.dual.to_dict(), "value": _fmt(sol.value) + "\n"},
    )
    print(f"value {_fmt(sol.value)}")
    return EXIT_OK


def cmd_secondary(cfg: RunConfig) -> int:
    res = select(cfg.mu1, cfg.mu2, cfg.metric, cfg.eta)
    rep = check_restricted_monotonicity(res.plan, cfg.collinearity_tol)
    sel = res.to_dict()
    sel["w1"] = res.w1
    mono = {
        "ok": rep.ok,
        "pairs_checked": rep.pairs_checked,
        "collinear_pairs": rep.collinear_pairs,
        "violations": rep.to_json(),
    }
    _write(cfg.output, {"selection.json": sel, "monotonicity.json": mono})
    print(f"primary_cost {_fmt(res.primary_cost)}")
    print(f"secondary_cost {_fmt(res.secondary_cost)}")
    print(f"restricted_monotonicity_violations {len(rep.violations)}")
    return EXIT_OK


def cmd_approx(cfg: RunConfig) -> int:
    direct = select(cfg.mu1, cfg.mu2, cfg.metric, cfg.eta)
    run = run_schedule(cfg.mu1, cfg.mu2, cfg.metric, cfg.approx, direct)
    if not run.records:
        for eps, msg in run.failures.items():
            log.error("epsilon=%g: %s", eps, msg)
        raise SolverError("every epsilon in the schedule failed")
    summary = convergence_report(run, direct)
    checks = run.checks()
    doc = {
        "d": run.d,
        "direct_w1": run.direct_w1,
        "direct_secondary": direct.secondary_cost,
        "records": summary.rows,
        "checks": checks,
        "failures": {repr(k): v for k, v in run.failures.items()},
        "output_plan": run.output_plan.to_dict(),
    }
    summ = summary.to_dict()
    summ.pop("rows")
    summ["checks"] = checks
    _write(cfg.output, {"run.csv": rows_to_csv(summary.rows), "run.json": doc, "summary.json": summ})
    for n in summary.notices:
        print(f"notice: {n}")
    print(f"{'PASS' if summary.passed else 'FAIL'} primary_gap {_fmt(summary.primary_gap)} "
          f"splitting_index {_fmt(summary.final_splitting)}")
    if run.failures:
        for eps, msg in run.failures.items():
            print(f"epsilon {eps!r} failed: {msg}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    """Run the W1 solve and selection, then every structural checker on them."""
    rho = build_cost(cfg.mu1, cfg.mu2, cfg.metric, 1.0)
    sol = solve_kantorovich(cfg.mu1, cfg.mu2, rho)
    cyc = {k: check_cyclical_monotonicity(sol.plan, rho, k, seed=cfg.seed, tol=cfg.tau) for k in (2, 3)}
    res = select(cfg.mu1, cfg.mu2, cfg.metric, cfg.eta)
    restricted = check_restricted_monotonicity(res.plan, cfg.collinearity_tol)
    sample = transport_set(res.plan, np.linspace(0.0, 1.0, 11))
    resid = float(geodesic_residuals(cfg.metric, sample).max())
    report = {
        "w1": sol.value,
        "dual_gap": sol.dual_gap,
        "cyclical_monotonicity": {str(k): {"ok": r.ok, "checked": r.checked, "exhaustive": r.exhaustive,
                                           "violations": r.to_json()} for k, r in cyc.items()},
        "selection": {"primary_cost": res.primary_cost, "secondary_cost": res.secondary_cost},
        "restricted_monotonicity": {"ok": restricted.ok, "violations": restricted.to_json()},
        "geodesic_max_residual": resid,
        "splitting_index_w1": splitting_index(sol.plan).to_dict(),
        "splitting_index_selected": splitting_index(res.plan).to_dict(),
    }
    ok = all(r.ok for r in cyc.values()) and restricted.ok and resid <= 1e-9
    if cfg.approx is not None:
        run = run_schedule(cfg.mu1, cfg.mu2, cfg.metric, cfg.approx, res)
        if run.records:
            disj = check_interpolant_disjointness(run.output_plan, 0.5, cfg.separation_tol)
            report["interpolant_disjointness"] = disj.to_dict()
            ok = ok and disj.ok
    report["ok"] = ok
    _write(cfg.output, {"verify.json": report})
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_SOLVER


def cmd_geodesic(cfg: RunConfig, x, y, samples: int) -> int:
    dim = cfg.body.dim if cfg.body is not None else len(x)
    if len(x) != dim or len(y) != dim:
        raise ConfigError(f"--x and --y need {dim} coordinates")
    if samples < 2:
        raise ConfigError("--samples must be at least 2")
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    d = distance(cfg.metric, x, y)
    ts = np.linspace(0.0, 1.0, samples)
    sample = transport_set((x[None], y[None]), ts)
    res = geodesic_residuals(cfg.metric, sample)
    pts = interpolate(x, y, ts)
    doc = {
        "distance": d,
        "samples": [{"t": float(t), "point": p, "residual": float(r)} for t, p, r in zip(ts, pts, res)],
        "max_residual": float(res.max()),
    }
    _write(cfg.output, {"geodesic.json": doc})
    print(f"distance {_fmt(d)}")
    print(f"max_residual {_fmt(float(res.max()))}")
    return EXIT_OK


def _pick_measure(cfg: RunConfig, which: str) -> DiscreteMeasure:
    m = cfg.mu1 if which == "mu1" else cfg.mu2
    if m is None:
        raise ConfigError(f"config has no {which}")
    return m


def cmd_net(cfg: RunConfig, epsilon: float, which: str) -> int:
    m = _pick_measure(cfg, which)
    net = greedy_eps_net(m.points, cfg.metric, epsilon)
    if len(net) == 0:
        raise EmptyNet("greedy net came out empty")
    sep = net_separation(net, cfg.metric)
    diam = m.diameter(cfg.metric)
    try:
        est = estimate_doubling(m, cfg.metric, diam)
        bound, bound_ok, C = packing_bound(est.C, diam, epsilon), check_net_cardinality(net, est, diam), est.C
    except DegenerateMeasure:
        bound, bound_ok, C = 1.0, len(net) <= 1, None
    doc = {
        "epsilon": epsilon,
        "indices": net.indices,
        "points": net.points,
        "size": len(net),
        "separation": sep,
        "covering_radius": net.covering_radius,
        "separated": sep > epsilon,
        "covering": net.covering_radius <= epsilon,
        "doubling_constant": C,
        "cardinality_bound": bound,
        "bound_ok": bound_ok,
    }
    _write(cfg.output, {"net.json": doc})
    print(f"net size {len(net)} bound {_fmt(bound)} {'ok' if bound_ok else 'VIOLATED'}")
    return EXIT_OK


def cmd_doubling(cfg: RunConfig, which: str, radius_cap: float | None, halvings: int, max_centers: int | None) -> int:
    m = _pick_measure(cfg, which)
    if halvings < 0:
        raise ConfigError("--halvings must be >= 0")
    cap = radius_cap if radius_cap is not None else m.diameter(cfg.metric)
    centers = None
    if max_centers is not None:
        if max_centers < 1:
            raise ConfigError("--max-centers must be >= 1")
        # evenly spaced atom indices keep the probe set deterministic
        centers = np.arange(0, len(m), max(1, len(m) // max_centers))
    est = estimate_doubling(m, cfg.metric, cap, halvings, centers)
    doc = {"C": est.C, "d": est.d, "radius_cap": est.R, "probes": est.probes, "worst": list(est.worst)}
    _write(cfg.output, {"doubling.json": doc})
    print(f"C {_fmt(est.C)} d {_fmt(est.d)}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="monge", description="Distance-cost optimal transport toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help):
        s = sub.add_parser(name, help=help)
        s.add_argument("--config", required=True, help="JSON run configuration")
        s.add_argument("--output", help="output directory (overrides config)")
        s.add_argument("--seed", type=int)
        s.add_argument("-v", "--verbose", action="store_true")
        return s

    for name, help in [
        ("solve", "exact W1 plan and dual potentials"),
        ("secondary", "secondary selection on the W1-optimal face"),
        ("approx", "epsilon-scheme schedule with convergence report"),
        ("verify", "structural checks on the solved plans"),
    ]:
        s = add(name, help)
        s.add_argument("--tau", type=float)
        s.add_argument("--eta", type=float)
        s.add_argument("--collinearity-tol", dest="collinearity_tol", type=float)
        s.add_argument("--separation-tol", dest="separation_tol", type=float)
        s.add_argument("--epsilons", help="comma-separated decreasing schedule")
        s.add_argument("--net-rule", dest="net_rule")
        s.add_argument("--d", type=float, help="doubling exponent override")
    s = add("geodesic", "distance and sampled segment with additivity residuals")
    s.add_argument("--x", required=True)
    s.add_argument("--y", required=True)
    s.add_argument("--samples", type=int, default=11)
    s = add("net", "greedy epsilon-net and cardinality bound")
    s.add_argument("--epsilon", type=float, required=True)
    s.add_argument("--measure", choices=("mu1", "mu2"), default="mu1")
    s = add("doubling", "empirical doubling constant")
    s.add_argument("--measure", choices=("mu1", "mu2"), default="mu1")
    s.add_argument("--radius-cap", dest="radius_cap", type=float)
    s.add_argument("--halvings", type=int, default=DOUBLING_HALVINGS)
    s.add_argument("--max-centers", dest="max_centers", type=int, help="probe only this many evenly spaced atoms")
    return p


def _threads() -> int:
    env = os.environ.get("MONGE_THREADS")
    if env is None:
        return os.cpu_count() or 1
    try:
        n = int(env)
    except ValueError:
        raise ConfigError(f"MONGE_THREADS must be an integer, got {env!r}") from None
    if n < 1:
        raise ConfigError("MONGE_THREADS must be >= 1")
    return n


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    cmd = args.command
    try:
        need = {
            "solve": ("mu1", "mu2"),
            "secondary": ("mu1", "mu2"),
            "approx": ("mu1", "mu2", "approx"),
            "verify": ("mu1", "mu2"),
        }.get(cmd, ())
        cfg = load_config(args, need)
        for n in cfg.notes:
            print(f"notice: {n}", file=sys.stderr)
        if cmd == "solve":
            return cmd_solve(cfg)
        if cmd == "secondary":
            return cmd_secondary(cfg)
        if cmd == "approx":
            cfg.approx.workers = min(_threads(), len(cfg.approx.epsilons))
            return cmd_approx(cfg)
        if cmd == "verify":
            if cfg.approx is not None:
                cfg.approx.workers = min(_threads(), len(cfg.approx.epsilons))
            return cmd_verify(cfg)
        if cmd == "geodesic":
            return cmd_geodesic(cfg, _floats(args.x), _floats(args.y), args.samples)
        if cmd == "net":
            return cmd_net(cfg, args.epsilon, args.measure)
        return cmd_doubling(cfg, args.measure, args.radius_cap, args.halvings, args.max_centers)
    except (SolverError, EmptyNet) as e:
        print(f"monge {cmd}: solver error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_SOLVER
    except (MongeError, ValueError, KeyError, TypeError, OSError) as e:
        print(f"monge {cmd}: input error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
