"""Command-line scenario runner.

    pulsedyn --config scenario.cfg --out results/ [--threads N] [--quiet]

Exit status: 0 when every check passed, 2 when a validation verdict failed,
1 on configuration or runtime errors.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .bifurcation import c_b, critical_points, k_b, regime_points
from .config import ScenarioConfig, load_config
from .errors import ConfigError, FlatPotentialError, PulseDynError
from .geometry import DomainKind, build_domain
from .greens import PotentialField
from .kinetics import MassRelation, ReactionKinetics
from .reduced import PulseState, ReducedConfig, integrate, pulse_equilibria
from .surface_pde import (
    TRAJECTORY_HEADER,
    SurfaceConfig,
    build_kernel,
    initial_state,
    run,
    run_and_compare,
)

log = logging.getLogger("pulsedyn")

EXIT_OK, EXIT_ERROR, EXIT_VERDICT = 0, 1, 2


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    return "nan" if math.isnan(x) else format(x, ".17g")


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class Emitter:
    """Writes artifacts atomically, each with a JSON sidecar manifest."""

    def __init__(self, out: Path, cfg: ScenarioConfig):
        self.out = out
        self.cfg = cfg
        self.start = time.perf_counter()
        self.written: list[Path] = []

    def _manifest(self, path: Path) -> None:
        meta = {
            "file": path.name,
            "command": self.cfg["command"],
            "config": self.cfg.echo(),
            "config_source": self.cfg.source,
            "library_version": __version__,
            "wall_clock_s": round(time.perf_counter() - self.start, 3),
        }
        _atomic_write(path.with_name(path.name + ".manifest.json"), json.dumps(meta, indent=2, sort_keys=True) + "\n")

    def csv(self, name: str, header, rows) -> Path:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])
        path = self.out / name
        _atomic_write(path, buf.getvalue())
        self._manifest(path)
        self.written.append(path)
        return path

    def json(self, name: str, payload) -> Path:
        path = self.out / name
        _atomic_write(path, json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
        self._manifest(path)
        self.written.append(path)
        return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# -- shared setup -------------------------------------------------------
def _kinetics(cfg: ScenarioConfig) -> ReactionKinetics:
    return ReactionKinetics.hill(cfg["kinetics.k0"], cfg["kinetics.gamma0"])


def _relation(cfg: ScenarioConfig, kin: ReactionKinetics, domain) -> MassRelation:
    M, w_star = cfg["mass.M"], cfg["mass.w_star"]
    if (M is None) == (w_star is None):
        raise ConfigError(f"{cfg.source}: give exactly one of mass.M or mass.w_star")
    if M is not None:
        return MassRelation.for_domain(kin, domain, M)
    return MassRelation.with_w_star(kin, domain, w_star)


def _half_width(cfg: ScenarioConfig, domain) -> float:
    w = cfg["potential.w"]
    if w is not None:
        return w
    if cfg["mass.w_star"] is not None:
        return cfg["mass.w_star"]
    if cfg["mass.M"] is not None:
        return _relation(cfg, _kinetics(cfg), domain).w_star
    raise ConfigError(f"{cfg.source}: set potential.w, mass.w_star or mass.M")


def _pool_map(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# -- commands -----------------------------------------------------------
def cmd_potential(cfg: ScenarioConfig, em: Emitter, threads: int = 1) -> int:
    domain = build_domain(cfg.domain_mapping())
    w = _half_width(cfg, domain)
    pf = PotentialField(domain, w)
    n = cfg["potential.grid_n"]
    s = np.arange(n) * (domain.perimeter / n)
    E, E1, E2 = pf(s), pf.derivative(s, 1), pf.derivative(s, 2)
    em.csv("potential.csv", ("s0", "E", "E1", "E2"), zip(s, E, E1, E2))
    payload = {"domain": cfg.domain_mapping(), "w": w, "L": domain.perimeter}
    try:
        cps = critical_points(pf, grid_n=max(n, 256))
        payload.update(flat=False, critical_points=[cp.__dict__ for cp in cps])
        payload["regime"] = regime_points(domain, w).as_dict()
    except FlatPotentialError:
        payload.update(flat=True, critical_points=[])
    em.json("critical_points.json", payload)
    return EXIT_OK


def _branch_point(job):
    mapping, w = job
    domain = build_domain(mapping)
    if w >= 0.5 * domain.perimeter:
        return []
    pf = PotentialField(domain, w)
    try:
        return [(cp.s0, cp.kind) for cp in critical_points(pf, dedupe=True)]
    except FlatPotentialError:
        return [(math.nan, "degenerate")]


def cmd_bifurcate(cfg: ScenarioConfig, em: Emitter, threads: int = 1) -> int:
    base = cfg.domain_mapping()
    kind = base["kind"]
    default_param = {"dumbbell": "k", "perforated_disk": "c", "disk": "none"}[kind]
    param = cfg.get("bifurcate.param", default_param)
    if kind != "disk" and param != default_param:
        raise ConfigError(f"{cfg.source}: key 'bifurcate.param' must be {default_param!r} for {kind}")
    domain = build_domain(base)
    w = _half_width(cfg, domain)
    n = cfg["bifurcate.n"]
    if kind == "disk":
        values = [0.0]
    else:
        lo, hi = cfg.require("bifurcate.min"), cfg.require("bifurcate.max")
        if not lo < hi:
            raise ConfigError(f"{cfg.source}: bifurcate.min must be below bifurcate.max")
        values = np.linspace(lo, hi, n).tolist()
    jobs = [({**base, param: v} if kind != "disk" else base, w) for v in values]
    results = _pool_map(_branch_point, jobs, threads)
    rows = [(v, s0, k) for v, pts in zip(values, results) for s0, k in pts]
    em.csv("branches.csv", ("param", "s0", "kind"), rows)
    summary = {"domain": base, "param": param, "w": w, "values": values}
    try:
        if kind == "dumbbell":
            summary["k_b"] = k_b(w)
        elif kind == "perforated_disk":
            summary["c_b"] = c_b(base["r"], w)
    except PulseDynError as exc:
        summary["threshold_error"] = str(exc)
    em.json("summary.json", summary)
    return EXIT_OK


def cmd_reduced(cfg: ScenarioConfig, em: Emitter, threads: int = 1) -> int:
    domain = build_domain(cfg.domain_mapping())
    kin = _kinetics(cfg)
    rel = _relation(cfg, kin, domain)
    rcfg = ReducedConfig(cfg.eps, cfg["model.D"], kin, rel, domain)
    w0 = cfg.get("reduced.w0", rel.w_star)
    traj = integrate(PulseState(cfg["reduced.s0"], w0), rcfg, cfg["reduced.t_end"], mode=cfg["reduced.mode"])
    em.csv("trajectory.csv", ("t", "s0", "w"), zip(traj.t, traj.s0, traj.w))
    return EXIT_OK


def _surface_config(cfg: ScenarioConfig) -> SurfaceConfig:
    return SurfaceConfig(cfg.eps, cfg["model.D"], cfg["pde.N"], cfg["pde.dt"], cfg["pde.include_ut"])


def cmd_simulate(cfg: ScenarioConfig, em: Emitter, threads: int = 1) -> int:
    domain = build_domain(cfg.domain_mapping())
    kin = _kinetics(cfg)
    rel = _relation(cfg, kin, domain)
    scfg = _surface_config(cfg)
    kernel = build_kernel(domain, scfg.N)
    state = initial_state(kernel, kin, scfg, rel.M, cfg["pde.s0"], rel.w_star)
    result = run(state, kernel, kin, cfg["pde.t_end"], cfg["pde.sample_dt"], PotentialField(domain, rel.w_star))
    em.csv("trajectory.csv", TRAJECTORY_HEADER, result.rows)
    final = result.final
    em.csv("profile.csv", ("s", "u", "v_trace"), zip(kernel.s, final.u, final.v_trace))
    return EXIT_OK


def _validate_case(job):
    mapping, values, s0 = job
    domain = build_domain(mapping)
    kin = ReactionKinetics.hill(values["kinetics.k0"], values["kinetics.gamma0"])
    if values["mass.w_star"] is not None:
        w_star = values["mass.w_star"]
    else:
        w_star = MassRelation.for_domain(kin, domain, values["mass.M"]).w_star
    scfg = SurfaceConfig(math.sqrt(values["model.eps2"]), values["model.D"], values["pde.N"], values["pde.dt"],
                         values["pde.include_ut"])
    rep = run_and_compare(domain, kin, scfg, values["pde.t_end"], s0, w_star, values["pde.sample_dt"])
    rcfg = ReducedConfig(scfg.eps, scfg.D, kin, MassRelation.with_w_star(kin, domain, w_star), domain)
    L = domain.perimeter
    final = float(rep.s0_pde[-1])
    stable = [e.s0 for e in pulse_equilibria(rcfg) if e.tag == "stable"]
    nearest = min(stable, key=lambda x: abs((final - x + 0.5 * L) % L - 0.5 * L)) if stable else math.nan
    rows = list(zip(rep.t, rep.s0_pde, rep.s0_ode, rep.residual))
    summary = {
        "domain": mapping, "s0_init": s0, "w_star": w_star, "window": list(rep.window),
        "fitted_speed": rep.fitted_speed, "predicted_speed": rep.predicted_speed, "speed_ratio": rep.speed_ratio,
        "sign_agreement": rep.sign_agreement, "w_final": rep.w_final, "final_s0": final,
        "nearest_stable_equilibrium": nearest,
    }
    return rows, summary


def cmd_validate(cfg: ScenarioConfig, em: Emitter, threads: int = 1) -> int:
    base = cfg.domain_mapping()
    if cfg["mass.M"] is None and cfg["mass.w_star"] is None:
        raise ConfigError(f"{cfg.source}: give mass.M or mass.w_star")
    sweep_key = {"dumbbell": "k", "perforated_disk": "c", "disk": None}[base["kind"]]
    sweep = cfg["validate.sweep"]
    if sweep and sweep_key is None:
        raise ConfigError(f"{cfg.source}: key 'validate.sweep' is not available for the disk")
    mappings = [{**base, sweep_key: v} for v in sweep] if sweep else [base]
    starts = cfg["validate.s0"] or [cfg["pde.s0"]]
    values = {k: cfg[k] for k in ("kinetics.k0", "kinetics.gamma0", "mass.M", "mass.w_star", "model.eps2",
                                  "model.D", "pde.N", "pde.dt", "pde.include_ut", "pde.t_end", "pde.sample_dt")}
    jobs = [(m, values, s0) for m in mappings for s0 in starts]
    results = _pool_map(_validate_case, jobs, threads)
    factor, width_tol = cfg["validate.speed_factor"], cfg["validate.width_tol"]
    runs = []
    for i, (rows, summary) in enumerate(results):
        em.csv(f"validation_{i}.csv", ("t", "s0_pde", "s0_ode", "residual"), rows)
        ratio = summary["speed_ratio"]
        summary["ratio_ok"] = bool(math.isfinite(ratio) and 1.0 / factor <= ratio <= factor)
        summary["width_ok"] = bool(abs(summary["w_final"] - summary["w_star"]) <= width_tol * summary["w_star"])
        summary["passed"] = bool(summary["ratio_ok"] and summary["width_ok"] and summary["sign_agreement"])
        runs.append(summary)
    finals = [r["nearest_stable_equilibrium"] for r in runs]
    distinct = len({round(x, 6) for x in finals if math.isfinite(x)}) > 1
    verdict = {"runs": runs, "distinct_final_positions": distinct, "passed": all(r["passed"] for r in runs)}
    em.json("verdict.json", verdict)
    return EXIT_OK if verdict["passed"] else EXIT_VERDICT


COMMAND_TABLE = {
    "potential": cmd_potential,
    "bifurcate": cmd_bifurcate,
    "reduced": cmd_reduced,
    "simulate": cmd_simulate,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pulsedyn", description="Geometry-driven pulse dynamics scenarios.")
    p.add_argument("--config", required=True, help="scenario file with dotted keys")
    p.add_argument("--out", default=None, help="output directory (overrides output.dir)")
    p.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
    p.add_argument("--quiet", action="store_true", help="only report errors")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s %(message)s")
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        cfg = load_config(args.config)
        out = Path(args.out if args.out is not None else cfg["output.dir"])
        command = cfg.command
        em = Emitter(out, cfg)
        log.info("running %s -> %s", command, out)
        code = COMMAND_TABLE[command](cfg, em, args.threads)
        for path in em.written:
            log.info("wrote %s", path)
        if code == EXIT_VERDICT:
            log.warning("validation verdict failed; see %s", out / "verdict.json")
        return code
    except (PulseDynError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
