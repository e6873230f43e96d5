"""Command-line entry point: configuration, orchestration, persistence.

Subcommands: solve, sample, verify, design-noise, hopf, run, find-attractor,
verify-lyapunov. Runs are driven by one JSON config document (flags only
select the file and override scalar fields); outputs go to a run directory
holding the config echo, per-eps measure documents, metrics.csv, and a
summary document with per-assertion pass/fail. Exit codes: 0 all assertions
pass, 1 an assertion failed, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io as fio
from .analysis import angular_w1_to_uniform, bl_distance, invariance_residual
from .design import design_destabilizing_family, design_stabilizing_family, isolation_from_certificate
from .dynamics import approximate_attractor, verify_lyapunov
from .errors import ConfigError, FplabError
from .fields import isotropic_schedule, sample_vector_field
from .fpe import assemble, solve_family, solve_stationary
from .grid import Grid2D
from .sampler import SamplerConfig, occupation_measure
from .scenarios import (
    ScenarioResult,
    build_schedule,
    dictionary_for,
    make_scenario,
    run_designed_comparison,
    run_gibbs,
    run_hopf_sweep,
    double_well_potential,
)

DEFAULT_WORKERS_ENV = "FPLAB_WORKERS"


@dataclass
class RunConfig:
    scenario: dict
    grid: dict
    schedule: dict
    output_dir: str
    seed: int = 0
    sampler: dict | None = None
    analysis: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        for key in ("scenario", "grid", "schedule", "output_dir"):
            if key not in raw:
                raise ConfigError(key, "missing required field")
        if "name" not in raw["scenario"]:
            raise ConfigError("scenario.name", "missing scenario name")
        eps = raw["schedule"].get("eps")
        if not eps or len(eps) < 1:
            raise ConfigError("schedule.eps", "must be a non-empty list")
        if any(e2 >= e1 for e1, e2 in zip(eps, eps[1:])):
            raise ConfigError("schedule.eps", "labels must be strictly decreasing")
        if any(e <= 0 for e in eps):
            raise ConfigError("schedule.eps", "labels must be positive")
        thr = raw.get("analysis", {}).get("thresholds", {})
        for k, v in thr.items():
            if not (0.0 < float(v) < 1.0):
                raise ConfigError(f"analysis.thresholds.{k}", "must lie in (0, 1)")
        for k in ("x_min", "x_max", "y_min", "y_max", "nx", "ny"):
            if k not in raw["grid"]:
                raise ConfigError(f"grid.{k}", "missing grid field")
        return cls(
            scenario=raw["scenario"],
            grid=raw["grid"],
            schedule=raw["schedule"],
            output_dir=raw["output_dir"],
            seed=int(raw.get("seed", 0)),
            sampler=raw.get("sampler"),
            analysis=raw.get("analysis", {}),
        )

    def to_dict(self) -> dict:
        out = {
            "scenario": self.scenario,
            "grid": self.grid,
            "schedule": self.schedule,
            "output_dir": self.output_dir,
            "seed": self.seed,
            "analysis": self.analysis,
        }
        if self.sampler is not None:
            out["sampler"] = self.sampler
        return out

    def build_grid(self) -> Grid2D:
        g = self.grid
        return Grid2D(
            float(g["x_min"]), float(g["x_max"]), float(g["y_min"]), float(g["y_max"]),
            int(g["nx"]), int(g["ny"]),
        )


def _workers() -> int:
    try:
        return max(1, int(os.environ.get(DEFAULT_WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _write_run_dir(out_dir: Path, cfg: RunConfig, result: ScenarioResult, measures):
    out_dir.mkdir(parents=True, exist_ok=True)
    fio.save_document(cfg.to_dict(), out_dir / "config.json")
    for eps, mu in measures:
        fio.save_document(fio.measure_to_document(mu), out_dir / f"measure_eps{eps!r}.json")
    (out_dir / "metrics.csv").write_text(result.report.to_csv())
    fio.save_document(result.to_document(), out_dir / "summary.json")


def _run_scenario(cfg: RunConfig) -> tuple[ScenarioResult, list]:
    grid = cfg.build_grid()
    name = cfg.scenario["name"]
    shape = cfg.schedule.get("shape", "modulated")
    eps_list = tuple(float(e) for e in cfg.schedule["eps"])
    if name == "hopf":
        sched = build_schedule(grid, eps_list, shape,
                               cfg.schedule.get("invariance_mode", "reflecting"))
        dic = dictionary_for(cfg.analysis.get("dictionary", "hopf-offcycle-v1"), grid)
        result = run_hopf_sweep(
            float(cfg.scenario.get("b", 1.0)), sched, grid, dic,
            thresholds=cfg.analysis.get("thresholds"),
            rho_mesh=int(cfg.analysis.get("rho_mesh", 64)),
        )
        return result, result.measures
    if name == "double-well":
        sched = build_schedule(grid, eps_list, cfg.schedule.get("shape", "iso"),
                               cfg.schedule.get("invariance_mode", "reflecting"))
        result = run_gibbs(double_well_potential, sched, grid)
        return result, result.measures
    if name == "double-well-designed":
        scen = make_scenario("double-well", grid)
        result = run_designed_comparison(
            scen, "attractor", float(cfg.scenario.get("ratio", 10.0)), eps_list, grid
        )
        return result, []
    raise ConfigError("scenario.name", f"no run recipe for scenario {name!r}")


# ---------------------------------------------------------------------------
# subcommand implementations

def _cmd_run(args) -> int:
    try:
        raw = json.loads(Path(args.config).read_text())
        cfg = RunConfig.from_dict(raw)
        if args.out:
            cfg.output_dir = args.out
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: cannot read config: {exc}", file=sys.stderr)
        return 2
    t0 = time.perf_counter()
    result, measures = _run_scenario(cfg)
    out_dir = Path(cfg.output_dir)
    _write_run_dir(out_dir, cfg, result, measures)
    wall = time.perf_counter() - t0
    print(f"run directory: {out_dir}  ({wall:.1f}s)")
    for name, passed, value, threshold in result.assertions:
        print(f"  {'PASS' if passed else 'FAIL'}  {name} (value={value:.6g}, ref={threshold:.6g})")
    for eps, msg in result.errors:
        print(f"  ERROR eps={eps}: {msg}")
    return 0 if result.all_passed else 1


def _cmd_hopf(args) -> int:
    eps = [float(e) for e in args.eps.split(",")]
    b_values = [float(b) for b in str(args.b).split(",")]
    rc = 0
    jobs = []
    for b in b_values:
        raw = {
            "scenario": {"name": "hopf", "b": b},
            "grid": {"x_min": -2.5, "x_max": 2.5, "y_min": -2.5, "y_max": 2.5,
                     "nx": args.grid_n, "ny": args.grid_n},
            "schedule": {"eps": eps, "shape": args.shape},
            "analysis": {"dictionary": "hopf-offcycle-v1"},
            "output_dir": str(Path(args.out) / f"b{b!r}"),
            "seed": args.seed,
        }
        jobs.append(RunConfig.from_dict(raw))
    with ThreadPoolExecutor(max_workers=_workers()) as pool:
        results = list(pool.map(lambda c: (_run_scenario(c), c), jobs))
    for (result, measures), cfg in results:
        _write_run_dir(Path(cfg.output_dir), cfg, result, measures)
        print(f"b={cfg.scenario['b']}: "
              + ", ".join(f"{n}={'PASS' if p else 'FAIL'}" for n, p, _, _ in result.assertions))
        if not result.all_passed:
            rc = 1
    return rc


def _scenario_from_args(args, grid):
    params = {}
    if args.scenario == "hopf":
        params["b"] = args.b
    return make_scenario(args.scenario, grid, **params)


def _cmd_solve(args) -> int:
    grid = Grid2D(args.x_min, args.x_max, args.y_min, args.y_max, args.grid_n, args.grid_n)
    scen = _scenario_from_args(args, grid)
    eps = tuple(float(e) for e in args.eps.split(","))
    sched = build_schedule(grid, eps, args.shape)
    v = scen.vector_field(grid)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports = []
    for eps_k, mu, rep in solve_family(v, sched, grid):
        if mu is None:
            reports.append({"eps": eps_k, "error": repr(rep)})
            continue
        fio.save_document(fio.measure_to_document(mu), out / f"measure_eps{eps_k!r}.json")
        reports.append({
            "eps": eps_k, "residual": rep.residual, "mass_defect": rep.mass_defect,
            "min_weight": rep.min_weight, "clipped_mass": rep.clipped_mass,
            "method": rep.method, "wall_time": rep.wall_time,
        })
    fio.save_document(
        {"format": "fplab/solve-summary@1", "scenario": scen.name,
         "params": scen.params, "schedule": {"eps": list(eps), "shape": args.shape},
         "reports": reports},
        out / "solve_summary.json",
    )
    print(f"solved {sum(1 for r in reports if 'error' not in r)}/{len(reports)} members -> {out}")
    return 0 if all("error" not in r for r in reports) else 1


def _cmd_sample(args) -> int:
    grid = Grid2D(args.x_min, args.x_max, args.y_min, args.y_max, args.grid_n, args.grid_n)
    scen = _scenario_from_args(args, grid)
    eps = tuple(float(e) for e in args.eps.split(","))
    sched = build_schedule(grid, eps, args.shape)
    cfg = SamplerConfig(dt=args.dt, t_total=args.t_total, n_paths=args.n_paths,
                        rng_seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    diags = []
    for eps_k, a in sched:
        a11, a12, a22 = a.a11, a.a12, a.a22
        g = grid

        def a_fn(x, y, a11=a11, a12=a12, a22=a22, g=g):
            i, j = g.cell_index(np.stack([x, y], axis=-1))
            return a11[i, j], a12[i, j], a22[i, j]

        mu, diag = occupation_measure(scen.drift_fn, a_fn, grid, cfg)
        fio.save_document(fio.measure_to_document(mu), out / f"occupation_eps{eps_k!r}.json")
        diags.append({"eps": eps_k, **diag})
    fio.save_document(
        {"format": "fplab/sample-summary@1", "scenario": scen.name, "params": scen.params,
         "sampler": {"dt": cfg.dt, "t_total": cfg.t_total, "t_burn": cfg.t_burn,
                     "n_paths": cfg.n_paths, "rng_seed": cfg.rng_seed},
         "diagnostics": diags},
        out / "sample_summary.json",
    )
    print(f"sampled {len(diags)} members -> {out}")
    return 0


def _cmd_verify(args) -> int:
    run_dir = Path(args.run)
    cfg_doc = json.loads((run_dir / "config.json").read_text())
    cfg = RunConfig.from_dict(cfg_doc)
    grid = cfg.build_grid()
    scen_name = cfg.scenario["name"]
    if scen_name == "hopf":
        scen = make_scenario("hopf", grid, b=float(cfg.scenario.get("b", 1.0)))
    else:
        scen = make_scenario(scen_name, grid)
    v = scen.vector_field(grid)
    dic = dictionary_for(cfg.analysis.get("dictionary", "grid3x3-v1"), grid)
    rows = []
    for eps in cfg.schedule["eps"]:
        path = run_dir / f"measure_eps{float(eps)!r}.json"
        if not path.exists():
            path = run_dir / f"occupation_eps{float(eps)!r}.json"
        if not path.exists():
            print(f"missing measure for eps={eps}", file=sys.stderr)
            return 2
        mu = fio.measure_from_document(fio.load_document(path))
        res = invariance_residual(mu, v, dic)
        rows.append({"eps": float(eps), "residual_max": res.max,
                     "angular_w1": angular_w1_to_uniform(mu)})
    lines = ["eps,residual_max,angular_w1"]
    lines += [f"{r['eps']!r},{r['residual_max']!r},{r['angular_w1']!r}" for r in rows]
    (run_dir / "verify.csv").write_text("\n".join(lines) + "\n")
    fio.save_document({"format": "fplab/verify@1", "rows": rows}, run_dir / "verify.json")
    print(f"verified {len(rows)} measures -> {run_dir / 'verify.json'}")
    return 0


def _cmd_design_noise(args) -> int:
    grid = Grid2D(args.x_min, args.x_max, args.y_min, args.y_max, args.grid_n, args.grid_n)
    eps = tuple(float(e) for e in args.eps.split(","))
    xx, yy = grid.centers()
    if args.scenario == "double-well" and args.target == "attractor":
        scen = make_scenario("double-well", grid)
        u0 = (xx + 1.0) ** 2 + yy**2
        iso = isolation_from_certificate(u0, scen.vector_field(grid), 0.16, 0.09, 0.45)
        fam = design_stabilizing_family(iso, eps, args.ratio)
    elif args.scenario == "hopf" and args.target == "repeller":
        scen = make_scenario("hopf", grid, b=args.b)
        u0 = xx**2 + yy**2
        iso = isolation_from_certificate(u0, scen.vector_field(grid), 0.36, 0.04, 0.64)
        fam = design_destabilizing_family(iso, eps, args.ratio)
    elif args.target == "equilibrium":
        print("equilibrium destabilization holds for any normal family; "
              "use `run`/`solve` with an isotropic schedule and the "
              "verify-repelling harness in the test suite", file=sys.stderr)
        return 2
    else:
        print(f"no design recipe for {args.scenario}/{args.target}", file=sys.stderr)
        return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fio.save_document(
        {"format": "fplab/shaping@1", "grid": grid.metadata(),
         "ratio": fam.ratio, "shaping": fam.shaping.ravel().tolist(),
         "meta": {k: (list(v) if isinstance(v, tuple) else v) for k, v in fam.meta.items()}},
        out / "shaping.json",
    )
    fio.save_document(fio.schedule_to_document(fam.schedule), out / "schedule.json")
    print(f"designed family (ratio={fam.ratio}, ratio_condition={fam.ratio_condition():.3g}) -> {out}")
    return 0


def _cmd_find_attractor(args) -> int:
    grid = Grid2D(args.x_min, args.x_max, args.y_min, args.y_max, args.grid_n, args.grid_n)
    scen = _scenario_from_args(args, grid)
    approx = approximate_attractor(
        scen.drift_fn, grid, ensemble_size=args.ensemble, t_end=args.t_end,
        reverse_time=args.reverse,
        kind="local-repeller" if args.reverse else "global-attractor",
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fio.save_document(
        {"format": "fplab/attractor@1", "grid": grid.metadata(), "kind": approx.kind,
         "mask": approx.mask.ravel().astype(int).tolist(),
         "diagnostics": approx.diagnostics},
        out / "attractor.json",
    )
    print(f"{approx.kind}: {int(approx.mask.sum())} cells flagged -> {out / 'attractor.json'}")
    return 0


def _cmd_verify_lyapunov(args) -> int:
    grid = Grid2D(args.x_min, args.x_max, args.y_min, args.y_max, args.grid_n, args.grid_n)
    scen = _scenario_from_args(args, grid)
    xx, yy = grid.centers()
    u = xx**2 + yy**2
    cert = verify_lyapunov(u, scen.vector_field(grid), args.rho_m, args.gamma, kind=args.kind)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fio.save_document(
        {"format": "fplab/certificate@1", "grid": grid.metadata(),
         "u": cert.u.ravel().tolist(), "rho_m": cert.rho_m, "rho_M": cert.rho_M,
         "gamma": cert.gamma, "kind": cert.kind, "verified_for": cert.verified_for,
         "passed": cert.passed, "worst_margin": cert.worst_margin, "slack": cert.slack,
         "violations": [list(map(int, c)) for c in cert.violations[:100]]},
        out / "certificate.json",
    )
    print(f"certificate {'PASS' if cert.passed else 'FAIL'} "
          f"(worst margin {cert.worst_margin:.4g}, slack {cert.slack:.4g})")
    return 0 if cert.passed else 1


def _add_domain_args(p, default_n=200, box=2.5):
    p.add_argument("--x-min", type=float, default=-box)
    p.add_argument("--x-max", type=float, default=box)
    p.add_argument("--y-min", type=float, default=-box)
    p.add_argument("--y-max", type=float, default=box)
    p.add_argument("--grid-n", type=int, default=default_n)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fplab",
        description="Stationary Fokker-Planck laboratory for vanishing-noise limit measures",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute a config-driven scenario run")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="override output_dir")
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("hopf", help="stochastic Hopf bifurcation sweep")
    p.add_argument("--b", default="1.0", help="bifurcation parameter(s), comma separated")
    p.add_argument("--eps", default="0.2,0.1,0.05,0.02")
    p.add_argument("--grid-n", type=int, default=256)
    p.add_argument("--shape", default="modulated", choices=["iso", "aniso", "modulated"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_hopf)

    p = sub.add_parser("solve", help="solve a schedule and write measures")
    p.add_argument("--scenario", default="hopf", choices=["hopf", "ou2d", "double-well"])
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--eps", default="0.2,0.1,0.05,0.02")
    p.add_argument("--shape", default="iso", choices=["iso", "aniso", "modulated"])
    _add_domain_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_solve)

    p = sub.add_parser("sample", help="Monte-Carlo occupation measures")
    p.add_argument("--scenario", default="hopf", choices=["hopf", "ou2d", "double-well"])
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--eps", default="0.1,0.05")
    p.add_argument("--shape", default="iso", choices=["iso", "aniso", "modulated"])
    p.add_argument("--dt", type=float, default=0.005)
    p.add_argument("--t-total", type=float, default=200.0)
    p.add_argument("--n-paths", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    _add_domain_args(p, default_n=100)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_sample)

    p = sub.add_parser("verify", help="convergence diagnostics on a run directory")
    p.add_argument("--run", required=True)
    p.set_defaults(fn=_cmd_verify)

    p = sub.add_parser("design-noise", help="construct a shaped null family")
    p.add_argument("--target", required=True, choices=["attractor", "repeller", "equilibrium"])
    p.add_argument("--scenario", default="double-well", choices=["double-well", "hopf"])
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--ratio", type=float, default=10.0)
    p.add_argument("--eps", default="0.1,0.05,0.02")
    _add_domain_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_design_noise)

    p = sub.add_parser("find-attractor", help="ensemble attractor approximation")
    p.add_argument("--scenario", default="hopf", choices=["hopf", "ou2d", "double-well"])
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--ensemble", type=int, default=256)
    p.add_argument("--t-end", type=float, default=40.0)
    p.add_argument("--reverse", action="store_true", help="time-reversed (repeller)")
    _add_domain_args(p, default_n=100)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_find_attractor)

    p = sub.add_parser("verify-lyapunov", help="check U = x^2+y^2 against a scenario drift")
    p.add_argument("--scenario", default="hopf", choices=["hopf", "ou2d", "double-well"])
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--rho-m", type=float, default=1.5)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--kind", default="lyapunov",
                   choices=["lyapunov", "anti-lyapunov", "weak", "entire-weak"])
    _add_domain_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_verify_lyapunov)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FplabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
