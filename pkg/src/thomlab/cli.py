"""Command-line driver: declarative scenarios, sweeps and analysis tools.

A scenario is a TOML file with a ``[scenario]`` table (kind, label, seed),
kind-specific input tables (``[potential]``, ``[run]``, ``[pde]``,
``[reduce]``, ``[analyze]``), an ``[analyses]`` table selecting trajectory
diagnostics, and optional ``[[checks]]`` entries.  ``thomlab run`` executes
one scenario, writes CSV/JSON/SVG artifacts into the output directory and
exits 0 exactly when every declared check passes; ``thomlab sweep`` expands
a parameter grid over a base scenario, runs the points concurrently and
aggregates one CSV row per point in grid order (per-point failures are
recorded, never fatal).

Exit codes: 0 pass, 1 check failure, 2 configuration error, 3 numerical
failure.  All artifacts embed the config hash, package version and seed;
floats are written in shortest round-trip form so identical configs produce
identical bytes.
"""

from __future__ import annotations

import argparse
import hashlib
import itertools
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:        # python 3.10
    import tomli as tomllib

from . import __version__, plotting
from .asymptotics import (
    characteristic_exponents,
    classify_decay,
    fit_rate,
    monitor_gstar,
    mz_trichotomy,
    secant_analysis,
    verify_A1_A2,
)
from .errors import ConfigError, ThomlabError
from .flow import (
    ErrorModel,
    IntegrationControls,
    integrate_gradient,
    integrate_heavy_ball,
    read_trajectory_csv,
    write_trajectory_csv,
)
from .pde_spectral import (
    CircleModel,
    SpectralState,
    read_series_csv,
    run_series,
    slow_decay_report,
    write_series_csv,
    write_state_csv,
)
from .potential import (
    Potential,
    bubble_sheet,
    bubble_sheet_symmetric,
    diagonal_powers,
    radial_power,
)
from .reduction import ReducedModel, adams_simon_from_reduction, \
    fit_reduced_polynomial
from .sphere_critical import adams_simon, critical_points

__all__ = ["main"]

_BUILTINS = {
    "bubble_sheet": bubble_sheet,
    "bubble_sheet_symmetric": bubble_sheet_symmetric,
}

_KINDS = ("gradient", "heavyball", "pde", "reduce", "analyze", "sweep")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        # before the int branch: bool is a subclass of int
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def _dump_json(obj, path: Path) -> Path:
    path.write_text(json.dumps(_jsonable(obj), sort_keys=True, indent=2)
                    + "\n")
    return path


def _config_hash(cfg: dict, raw: bytes | None) -> str:
    if raw is None:
        raw = json.dumps(_jsonable(cfg), sort_keys=True).encode()
    return hashlib.sha256(raw).hexdigest()


# ---------------------------------------------------------------------------
# config -> objects


def _build_potential(cfg: dict, base_dir: Path) -> Potential:
    if not isinstance(cfg, dict):
        raise ConfigError("[potential] must be a table")
    sources = [k for k in ("builtin", "file", "terms", "radial", "diagonal")
               if k in cfg]
    if len(sources) != 1:
        raise ConfigError(
            "[potential] needs exactly one of builtin/file/terms/radial/"
            f"diagonal (got {sources or 'none'})")
    src = sources[0]
    try:
        if src == "builtin":
            name = cfg["builtin"]
            if name not in _BUILTINS:
                raise ConfigError(
                    f"unknown builtin potential {name!r}; "
                    f"available: {sorted(_BUILTINS)}")
            g = _BUILTINS[name]()
        elif src == "file":
            path = base_dir / cfg["file"]
            if not path.exists():
                raise ConfigError(f"potential file not found: {path}")
            g = Potential.from_json(path.read_text())
        elif src == "terms":
            g = Potential(
                n=int(cfg["n"]),
                terms=tuple((tuple(int(e) for e in t["exps"]),
                             float(t["coef"])) for t in cfg["terms"]),
                label=cfg.get("label", "config"))
        elif src == "radial":
            r = cfg["radial"]
            g = radial_power(int(r["n"]), int(r["power"]),
                             float(r.get("coef", 1.0)))
        else:
            d = cfg["diagonal"]
            g = diagonal_powers(tuple(int(p) for p in d["powers"]),
                                tuple(float(c) for c in d["coefs"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"[potential] field error: {exc}") from None
    if cfg.get("negate"):
        g = -g
    if "scale" in cfg:
        g = g.scaled(float(cfg["scale"]))
    return g


def _build_controls(cfg: dict) -> IntegrationControls:
    allowed = {"rtol", "atol", "samples_per_decade", "ball_radius",
               "blowup_factor", "t_linear", "method"}
    kwargs = {k: cfg[k] for k in allowed if k in cfg}
    return IntegrationControls(**kwargs)


def _build_error_model(cfg: dict, seed: int) -> ErrorModel:
    allowed = {"rho", "N", "b_N", "theta", "seed", "n_waves"}
    bad = set(cfg) - allowed
    if bad:
        raise ConfigError(f"[error_model] unknown fields: {sorted(bad)}")
    kwargs = dict(cfg)
    kwargs.setdefault("seed", seed)
    try:
        return ErrorModel(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"[error_model] {exc}") from None


def _circle_model(name: str) -> CircleModel:
    table = {"cubic": CircleModel.CUBIC, "linear": CircleModel.LINEAR,
             "cubic_flipped": CircleModel.CUBIC_FLIPPED}
    if name not in table:
        raise ConfigError(f"unknown pde model {name!r}; "
                          f"available: {sorted(table)}")
    return table[name]


# ---------------------------------------------------------------------------
# trajectory analyses


def _run_analyses(traj, analyses: dict, results: dict,
                  potential: Potential | None) -> None:
    for name, kwargs in analyses.items():
        kwargs = dict(kwargs) if isinstance(kwargs, dict) else {}
        if name == "rate":
            fit = fit_rate(traj, **kwargs)
            results["rate"] = fit.to_dict()
        elif name == "classify":
            results["classify"] = classify_decay(traj, **kwargs).to_dict()
        elif name == "secant":
            results["secant"] = secant_analysis(traj, **kwargs).to_dict()
        elif name == "gstar":
            if "ell_star" not in kwargs or "omega_star" not in kwargs:
                raise ConfigError(
                    "[analyses.gstar] needs ell_star and omega_star")
            rep = monitor_gstar(traj, **kwargs)
            results["gstar"] = {
                "alpha0": rep.alpha0,
                "monotone_violations": rep.monotone_violations,
                "h_final": float(rep.h[-1]),
            }
            results["_gstar_report"] = rep
        elif name == "verify":
            results["verify"] = verify_A1_A2(traj, **kwargs).to_dict()
        elif name == "exponents":
            if potential is None:
                raise ConfigError(
                    "[analyses.exponents] needs a potential in the scenario")
            results["exponents"] = characteristic_exponents(
                potential, **kwargs).to_dict()
        else:
            raise ConfigError(f"unknown analysis {name!r}")


# ---------------------------------------------------------------------------
# scenario executors (each returns a results dict)


def _final_summary(traj) -> dict:
    r = traj.norms()
    return {"t": float(traj.t[-1]), "norm": float(r[-1]),
            "y": [float(x) for x in traj.y[-1]]}


def _exec_flow(cfg: dict, out: Path, base_dir: Path, seed: int,
               plots: bool, kind: str) -> dict:
    g = _build_potential(cfg.get("potential", {}), base_dir)
    run = cfg.get("run", {})
    if "y0" not in run:
        raise ConfigError("[run] needs y0")
    y0 = [float(x) for x in run["y0"]]
    ctrl = _build_controls(run)
    t0 = float(run.get("t0", 0.0))
    t_end = float(run.get("t_end", 1e4))
    err = None
    if "error_model" in cfg:
        err = _build_error_model(cfg["error_model"], seed)
    label = cfg.get("scenario", {}).get("label")

    if kind == "gradient":
        traj = integrate_gradient(g, y0, t0=t0, t_end=t_end, ctrl=ctrl,
                                  error_model=err, label=label)
    else:
        m = run.get("m")
        if m is None:
            raise ConfigError("[run] needs m for heavy-ball scenarios")
        v0 = run.get("v0", "quasistatic")
        if v0 == "quasistatic":
            v0 = -g.gradient(np.asarray(y0)) / float(m)
        else:
            v0 = [float(x) for x in v0]
        traj = integrate_heavy_ball(g, float(m), y0, v0, t0=t0, t_end=t_end,
                                    ctrl=ctrl, label=label)

    results: dict = {"final": _final_summary(traj)}
    analyses = cfg.get("analyses", {"rate": {}, "secant": {}})
    _run_analyses(traj, analyses, results, g)
    gstar_rep = results.pop("_gstar_report", None)

    write_trajectory_csv(traj, out / "trajectory.csv")
    if plots:
        rate = results.get("rate", {})
        plotting.save_decay_plot(
            traj.t, traj.norms(), out / "decay.svg",
            ell_star=rate.get("ell_star"), alpha0=rate.get("alpha0"),
            title=f"{kind} norm decay")
        plotting.save_secant_plot(traj.t, traj.y, out / "secant.svg")
        if gstar_rep is not None:
            plotting.save_gstar_plot(gstar_rep.t, gstar_rep.gstar,
                                     gstar_rep.h, out / "gstar.svg",
                                     alpha0=gstar_rep.alpha0)
    return results


def _pde_initial(cfg: dict, K: int) -> SpectralState:
    init = cfg.get("initial")
    if init is None:
        raise ConfigError("[pde] evolve mode needs an [pde.initial] table")
    try:
        cos = {int(k): float(v) for k, v in init.get("cos", {}).items()}
        sin = {int(k): float(v) for k, v in init.get("sin", {}).items()}
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[pde.initial] field error: {exc}") from None
    return SpectralState.from_modes(K, cos=cos, sin=sin)


def _exec_pde(cfg: dict, out: Path, plots: bool) -> dict:
    pde = cfg.get("pde", {})
    model = _circle_model(pde.get("model", "cubic"))
    K = int(pde.get("K", 64))
    dt = float(pde.get("dt", 1e-3))
    t_end = float(pde.get("t_end", 1e4))
    mode = pde.get("mode", "slow")
    results: dict = {}

    if mode == "slow":
        rep = slow_decay_report(
            amplitude=float(pde.get("amplitude", 0.1)),
            theta0=float(pde.get("theta0", 0.0)), K=K, dt=dt, t_end=t_end,
            model=model, refine=bool(pde.get("refine", False)))
        series = rep.series
        results["pde"] = rep.to_dict()
        xp, xz, xm = series.group_amplitudes()
        mz = mz_trichotomy(series.t, xp, xz, xm, b=3.0)
        results["mz"] = mz.to_dict()
        if plots:
            plotting.save_flattening_plot(
                series.t, series.norm, out / "flattening.svg",
                target=rep.limit_estimate)
    elif mode == "evolve":
        state = _pde_initial(pde, K)
        series = run_series(
            state, t_end, dt=dt, model=model,
            samples_per_decade=int(pde.get("samples_per_decade", 16)),
            mask_invariant=bool(pde.get("mask_invariant", True)),
            accelerate=bool(pde.get("accelerate", False)))
        # late-window exponential rate of the norm
        tl = series.t >= series.t[-1] * 0.6
        good = tl & (series.norm > 0)
        slope = float(np.polyfit(series.t[good],
                                 np.log(series.norm[good]), 1)[0])
        results["pde"] = {"final_norm": float(series.norm[-1]),
                          "log_slope": slope,
                          "final_energy": float(series.F[-1])}
    else:
        raise ConfigError(f"unknown pde mode {mode!r} (slow or evolve)")

    write_series_csv(series, out / "series.csv")
    write_state_csv(series.state_at(len(series.t) - 1),
                    out / "state_final.csv")
    if plots:
        xp, xz, xm = series.group_amplitudes()
        plotting.save_group_plot(series.t, xp, xz, xm, out / "groups.svg")
        plotting.save_decay_plot(series.t, series.norm, out / "decay.svg",
                                 title="pde norm decay")
    return results


def _exec_reduce(cfg: dict, out: Path) -> dict:
    red_cfg = cfg.get("reduce", {})
    model = _circle_model(red_cfg.get("model", "cubic"))
    red = ReducedModel(model=model, K=int(red_cfg.get("K", 64)),
                       trust_radius=float(red_cfg.get("trust_radius", 0.3)))
    radii = tuple(float(r) for r in red_cfg.get("radii", (0.02, 0.04, 0.08)))
    n_dirs = int(red_cfg.get("directions", 32))
    fit = fit_reduced_polynomial(red, radii=radii, n_directions=n_dirs)
    verdict = adams_simon_from_reduction(red, fit=fit)
    report = {
        "p": fit.p,
        "coefficients": fit.to_dict()["coefficients"],
        "residual": fit.residual,
        "trust_radius": red.trust_radius,
        "verdict": verdict.verdict,
        "best_value": verdict.best_value,
        "detail": verdict.detail,
    }
    _dump_json(report, out / "reduced_model.json")
    return {"reduce": report}


def _exec_analyze(cfg: dict, out: Path, base_dir: Path) -> dict:
    an = cfg.get("analyze", {})
    if "trajectory" not in an:
        raise ConfigError("[analyze] needs a trajectory CSV path")
    path = base_dir / an["trajectory"]
    if not path.exists():
        raise ConfigError(f"trajectory file not found: {path}")
    traj = read_trajectory_csv(path)
    results: dict = {"final": _final_summary(traj)}
    _run_analyses(traj, cfg.get("analyses", {"rate": {}}), results,
                  traj.potential())
    results.pop("_gstar_report", None)
    return results


# ---------------------------------------------------------------------------
# checks


def _lookup(results: dict, path: str):
    cur = results
    for part in path.split("."):
        if isinstance(cur, dict):
            if part not in cur:
                raise KeyError(path)
            cur = cur[part]
        elif isinstance(cur, (list, tuple)):
            cur = cur[int(part)]
        else:
            raise KeyError(path)
    return cur


def _angle_between(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return math.pi
    return float(np.arccos(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0)))


def _evaluate_checks(checks: list[dict], results: dict) -> list[dict]:
    out = []
    for chk in checks:
        name = chk.get("name", chk.get("path", "unnamed"))
        path = chk.get("path")
        if path is None:
            raise ConfigError(f"check {name!r} needs a path")
        op = chk.get("op", "rel")
        rec = {"name": name, "path": path, "op": op,
               "target": _jsonable(chk.get("target"))}
        try:
            value = _lookup(results, path)
        except (KeyError, IndexError, ValueError):
            rec.update(passed=False, value=None,
                       note="path not found in results")
            out.append(rec)
            continue
        rec["value"] = _jsonable(value)
        target = chk.get("target")
        try:
            if op == "rel":
                rtol = float(chk.get("rtol", 0.01))
                passed = abs(float(value) - float(target)) \
                    <= rtol * abs(float(target))
            elif op == "abs":
                atol = float(chk.get("atol", 1e-8))
                passed = abs(float(value) - float(target)) <= atol
            elif op == "le":
                passed = float(value) <= float(target)
            elif op == "ge":
                passed = float(value) >= float(target)
            elif op == "eq":
                passed = value == target
            elif op == "angle_le":
                atol = float(chk.get("atol", 1e-3))
                angle = _angle_between(value, target)
                rec["angle"] = angle
                passed = angle <= atol
            else:
                raise ConfigError(f"check {name!r}: unknown op {op!r}")
        except (TypeError, ValueError) as exc:
            rec.update(passed=False, note=f"evaluation error: {exc}")
            out.append(rec)
            continue
        rec["passed"] = bool(passed)
        out.append(rec)
    return out


# ---------------------------------------------------------------------------
# scenario driver


def _validate_scenario(cfg: dict) -> str:
    sc = cfg.get("scenario")
    if not isinstance(sc, dict) or "kind" not in sc:
        raise ConfigError("config needs a [scenario] table with a kind")
    kind = sc["kind"]
    if kind not in _KINDS:
        raise ConfigError(f"unknown scenario kind {kind!r}; "
                          f"expected one of {_KINDS}")
    return kind


def execute_scenario(cfg: dict, out: Path, base_dir: Path,
                     raw: bytes | None = None, plots: bool = True,
                     workers: int | None = None) -> tuple[dict, list, bool]:
    """Run one scenario; returns (results, check records, all passed)."""
    kind = _validate_scenario(cfg)
    seed = int(cfg["scenario"].get("seed", 0))
    out.mkdir(parents=True, exist_ok=True)

    if kind == "sweep":
        results = _exec_sweep(cfg, out, base_dir, workers)
    elif kind in ("gradient", "heavyball"):
        results = _exec_flow(cfg, out, base_dir, seed, plots, kind)
    elif kind == "pde":
        results = _exec_pde(cfg, out, plots)
    elif kind == "reduce":
        results = _exec_reduce(cfg, out)
    else:
        results = _exec_analyze(cfg, out, base_dir)

    checks = _evaluate_checks(cfg.get("checks", []), results)
    passed = all(c["passed"] for c in checks)
    payload = {
        "label": cfg["scenario"].get("label"),
        "kind": kind,
        "seed": seed,
        "version": __version__,
        "config_sha256": _config_hash(cfg, raw),
        "results": results,
        "checks": checks,
        "passed": passed,
    }
    _dump_json(payload, out / "results.json")
    return results, checks, passed


# ---------------------------------------------------------------------------
# sweeps


def _set_by_path(cfg: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    cur = cfg
    for p in parts[:-1]:
        cur = cur.setdefault(p, {})
        if not isinstance(cur, dict):
            raise ConfigError(f"sweep axis {dotted!r} walks through "
                              "a non-table value")
    cur[parts[-1]] = value


def _sweep_point(base: dict, overrides: dict, out: Path,
                 index: int) -> dict:
    cfg = json.loads(json.dumps(_jsonable(base)))
    for key, val in overrides.items():
        _set_by_path(cfg, key, val)
    row = {k: v for k, v in overrides.items()}
    try:
        results, checks, passed = execute_scenario(
            cfg, out / f"point_{index:03d}", out, raw=None, plots=False)
        row["status"] = "ok" if passed else "check_failed"
        row["_results"] = results
    except ConfigError:
        raise
    except ThomlabError as exc:
        row["status"] = "error"
        row["error"] = f"{type(exc).__name__}: {exc}"
        row["_results"] = {}
    return row


def _exec_sweep(cfg: dict, out: Path, base_dir: Path,
                workers: int | None) -> dict:
    sw = cfg.get("sweep")
    if not isinstance(sw, dict) or "grid" not in sw:
        raise ConfigError("[sweep] needs a grid table")
    base_kind = sw.get("kind")
    if base_kind is None or base_kind not in _KINDS or base_kind == "sweep":
        raise ConfigError("[sweep] needs a base scenario kind")
    grid: dict = sw["grid"]
    extract: dict = sw.get("extract", {})
    axes = list(grid.keys())
    values = [grid[a] if isinstance(grid[a], list) else [grid[a]]
              for a in axes]

    base = {k: v for k, v in cfg.items() if k not in ("sweep", "checks")}
    base.setdefault("scenario", {})
    base["scenario"] = dict(base["scenario"], kind=base_kind)

    combos = list(itertools.product(*values)) if axes else []
    if workers is None:
        workers = int(os.environ.get("THOMLAB_WORKERS", "0")) or \
            min(4, max(1, len(combos)))
    rows: list[dict] = []
    if combos:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futs = [
                pool.submit(_sweep_point, base,
                            dict(zip(axes, combo)), out, i)
                for i, combo in enumerate(combos)
            ]
            rows = [f.result() for f in futs]

    # extraction columns, in declaration order
    for row in rows:
        res = row.pop("_results", {})
        for col, path in extract.items():
            try:
                row[col] = _lookup(res, path)
            except (KeyError, IndexError, ValueError):
                row[col] = ""

    header = axes + ["status"] + list(extract.keys()) + \
        (["error"] if any("error" in r for r in rows) else [])
    csv_path = out / "sweep.csv"
    with csv_path.open("w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells = []
            for col in header:
                val = row.get(col, "")
                if isinstance(val, (float, np.floating)):
                    cells.append(repr(float(val)))
                else:
                    cells.append(str(val))
            fh.write(",".join(cells) + "\n")
    meta = {"axes": axes, "n_points": len(rows), "workers": workers,
            "version": __version__}
    _dump_json(meta, out / "sweep.meta.json")

    numeric_cols = [c for c in extract
                    if all(isinstance(r.get(c), (int, float, np.floating))
                           for r in rows) and rows]
    if axes and numeric_cols and rows and \
            all(isinstance(r.get(axes[0]), (int, float)) for r in rows):
        plotting.save_sweep_plot(
            [r[axes[0]] for r in rows], [r[numeric_cols[0]] for r in rows],
            out / "sweep.svg", xlabel=axes[0], ylabel=numeric_cols[0])
    return {"rows": rows, "n_points": len(rows)}


# ---------------------------------------------------------------------------
# argument parsing and direct subcommands


def _load_config(path_str: str) -> tuple[dict, bytes, Path]:
    path = Path(path_str)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    raw = path.read_bytes()
    try:
        cfg = tomllib.loads(raw.decode())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML parse error in {path}: {exc}") from None
    return cfg, raw, path.parent


def _out_dir(args, default_stem: str) -> Path:
    if args.out:
        return Path(args.out)
    return Path(f"{default_stem}_out")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip() != ""]
    except ValueError:
        raise ConfigError(f"expected comma-separated floats, got {text!r}") \
            from None


def _print_checks(checks: list[dict]) -> None:
    for c in checks:
        status = "PASS" if c["passed"] else "FAIL"
        extra = f" note={c['note']}" if c.get("note") else ""
        print(f"{status} {c['name']}: value={c.get('value')} "
              f"target={c.get('target')} op={c['op']}{extra}")


def _cmd_run(args) -> int:
    cfg, raw, base_dir = _load_config(args.config)
    out = _out_dir(args, Path(args.config).stem)
    _, checks, passed = execute_scenario(cfg, out, base_dir, raw=raw,
                                         workers=args.workers)
    _print_checks(checks)
    print(f"artifacts in {out}")
    return 0 if passed else 1


def _cmd_sweep(args) -> int:
    cfg, raw, base_dir = _load_config(args.config)
    if _validate_scenario(cfg) != "sweep":
        raise ConfigError("sweep command needs a scenario of kind 'sweep'")
    out = _out_dir(args, Path(args.config).stem)
    _, checks, passed = execute_scenario(cfg, out, base_dir, raw=raw,
                                         workers=args.workers)
    _print_checks(checks)
    print(f"sweep table: {out / 'sweep.csv'}")
    return 0 if passed else 1


def _potential_from_args(args) -> Potential:
    cfg: dict = {}
    if getattr(args, "builtin", None):
        cfg["builtin"] = args.builtin
    if getattr(args, "potential_file", None):
        cfg["file"] = args.potential_file
    if getattr(args, "negate", False):
        cfg["negate"] = True
    return _build_potential(cfg, Path.cwd())


def _cmd_critical_points(args) -> int:
    g = _potential_from_args(args)
    pts = critical_points(g, n_starts=args.n_starts, seed=args.seed)
    rows = [{"direction": list(p.direction), "value": p.value,
             "residual": p.residual, "orbit_id": p.orbit_id} for p in pts]
    verdict = adams_simon(g, points=pts)
    payload = {"potential": g.label, "critical_points": rows,
               "verdict": verdict.verdict, "best_value": verdict.best_value}
    if args.out:
        _dump_json(payload, Path(args.out))
    print(json.dumps(_jsonable(payload), sort_keys=True, indent=2))
    return 0


def _cmd_simulate_gradient(args) -> int:
    g = _potential_from_args(args)
    ctrl = IntegrationControls(
        samples_per_decade=args.samples_per_decade,
        ball_radius=args.ball_radius)
    traj = integrate_gradient(g, _floats(args.y0), t_end=args.t_end,
                              ctrl=ctrl)
    out = _out_dir(args, "gradient")
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(traj, out / "trajectory.csv")
    plotting.save_decay_plot(traj.t, traj.norms(), out / "decay.svg")
    print(f"trajectory in {out}")
    return 0


def _cmd_simulate_heavyball(args) -> int:
    g = _potential_from_args(args)
    ctrl = IntegrationControls(
        samples_per_decade=args.samples_per_decade,
        ball_radius=args.ball_radius)
    y0 = _floats(args.y0)
    if args.v0 == "quasistatic":
        v0 = -g.gradient(np.asarray(y0)) / args.m
    else:
        v0 = _floats(args.v0)
    traj = integrate_heavy_ball(g, args.m, y0, v0, t_end=args.t_end,
                                ctrl=ctrl)
    out = _out_dir(args, "heavyball")
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(traj, out / "trajectory.csv")
    plotting.save_decay_plot(traj.t, traj.norms(), out / "decay.svg")
    print(f"trajectory in {out}")
    return 0


def _cmd_simulate_pde(args) -> int:
    cfg = {
        "scenario": {"kind": "pde", "label": "cli-pde", "seed": 0},
        "pde": {"model": args.model, "mode": "slow",
                "amplitude": args.amplitude, "theta0": args.theta0,
                "K": args.K, "dt": args.dt, "t_end": args.t_end,
                "refine": args.refine},
    }
    out = _out_dir(args, "pde")
    results, _, _ = execute_scenario(cfg, out, Path.cwd())
    print(json.dumps(_jsonable(results["pde"]), sort_keys=True, indent=2))
    print(f"artifacts in {out}")
    return 0


def _cmd_reduce(args) -> int:
    cfg = {
        "scenario": {"kind": "reduce", "label": "cli-reduce", "seed": 0},
        "reduce": {"model": args.model, "K": args.K,
                   "radii": _floats(args.radii),
                   "directions": args.directions},
    }
    out = _out_dir(args, "reduce")
    results, _, _ = execute_scenario(cfg, out, Path.cwd())
    print(json.dumps(_jsonable(results["reduce"]), sort_keys=True, indent=2))
    return 0


def _read_traj(args):
    path = Path(args.trajectory)
    if not path.exists():
        raise ConfigError(f"trajectory file not found: {path}")
    return read_trajectory_csv(path)


def _emit(payload, args) -> None:
    if getattr(args, "out", None):
        _dump_json(payload, Path(args.out))
    print(json.dumps(_jsonable(payload), sort_keys=True, indent=2))


def _cmd_fit_rate(args) -> int:
    fit = fit_rate(_read_traj(args), window_decades=args.window_decades)
    _emit(fit.to_dict(), args)
    return 0


def _cmd_classify(args) -> int:
    _emit(classify_decay(_read_traj(args)).to_dict(), args)
    return 0


def _cmd_secant(args) -> int:
    _emit(secant_analysis(_read_traj(args)).to_dict(), args)
    return 0


def _cmd_verify_a1a2(args) -> int:
    rep = verify_A1_A2(_read_traj(args), rho=args.rho, N=args.N)
    _emit(rep.to_dict(), args)
    return 0


def _cmd_exponents(args) -> int:
    g = _potential_from_args(args)
    rep = characteristic_exponents(g, r=args.r, epsilon=args.epsilon,
                                   n_samples=args.samples, seed=args.seed)
    _emit(rep.to_dict(), args)
    return 0


def _cmd_mz_check(args) -> int:
    path = Path(args.series)
    if not path.exists():
        raise ConfigError(f"series file not found: {path}")
    cols = read_series_csv(path)
    needed = ("t", "Xplus", "Xzero", "Xminus")
    if any(k not in cols for k in needed):
        raise ConfigError(f"series file must have columns {needed}")
    rep = mz_trichotomy(cols["t"], cols["Xplus"], cols["Xzero"],
                        cols["Xminus"], b=args.b)
    _emit(rep.to_dict(), args)
    return 0


def _add_potential_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--builtin", help="built-in potential name")
    p.add_argument("--potential-file", help="potential JSON file")
    p.add_argument("--negate", action="store_true",
                   help="use the negated potential")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="thomlab",
        description="numerical laboratory for decay asymptotics of "
                    "gradient-like flows")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute a scenario config")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--workers", type=int)
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("sweep", help="run a parameter sweep scenario")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--workers", type=int)
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("critical-points",
                       help="critical directions on the unit sphere")
    _add_potential_args(p)
    p.add_argument("--n-starts", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_critical_points)

    p = sub.add_parser("simulate-gradient", help="integrate y' = -grad g")
    _add_potential_args(p)
    p.add_argument("--y0", required=True, help="comma-separated start point")
    p.add_argument("--t-end", type=float, default=1e4)
    p.add_argument("--samples-per-decade", type=int, default=64)
    p.add_argument("--ball-radius", type=float, default=0.5)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_simulate_gradient)

    p = sub.add_parser("simulate-heavyball",
                       help="integrate y'' - m y' - grad f = 0")
    _add_potential_args(p)
    p.add_argument("--y0", required=True)
    p.add_argument("--v0", default="quasistatic",
                   help="comma-separated, or 'quasistatic'")
    p.add_argument("--m", type=float, required=True)
    p.add_argument("--t-end", type=float, default=1e4)
    p.add_argument("--samples-per-decade", type=int, default=64)
    p.add_argument("--ball-radius", type=float, default=0.5)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_simulate_heavyball)

    p = sub.add_parser("simulate-pde",
                       help="slow-decay run of the circle model")
    p.add_argument("--model", default="cubic")
    p.add_argument("--amplitude", type=float, default=0.1)
    p.add_argument("--theta0", type=float, default=0.0)
    p.add_argument("--K", type=int, default=64)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--t-end", type=float, default=1e4)
    p.add_argument("--refine", action="store_true")
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_simulate_pde)

    p = sub.add_parser("reduce", help="kernel reduction of the circle model")
    p.add_argument("--model", default="cubic")
    p.add_argument("--K", type=int, default=64)
    p.add_argument("--radii", default="0.02,0.04,0.08")
    p.add_argument("--directions", type=int, default=32)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_reduce)

    p = sub.add_parser("fit-rate", help="power-law rate fit of a trajectory")
    p.add_argument("--trajectory", required=True)
    p.add_argument("--window-decades", type=float, default=2.0)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_fit_rate)

    p = sub.add_parser("classify", help="decay classification")
    p.add_argument("--trajectory", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_classify)

    p = sub.add_parser("secant", help="secant convergence report")
    p.add_argument("--trajectory", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_secant)

    p = sub.add_parser("exponents",
                       help="empirical characteristic exponents near 0")
    _add_potential_args(p)
    p.add_argument("--r", type=float, default=0.1)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--samples", type=int, default=4000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_exponents)

    p = sub.add_parser("mz-check",
                       help="three-way splitting test on a series CSV")
    p.add_argument("--series", required=True)
    p.add_argument("--b", type=float, required=True)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_mz_check)

    p = sub.add_parser("verify-a1a2",
                       help="a-posteriori envelope / error-bound check")
    p.add_argument("--trajectory", required=True)
    p.add_argument("--rho", type=float, default=0.75)
    p.add_argument("--N", type=int, default=4)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_verify_a1a2)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ThomlabError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
