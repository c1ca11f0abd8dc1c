"""Config-driven batch front end.

Subcommands: fixed-point, response, sweep, particles, audit.  Every run
reads a JSON config file, writes plot-ready CSV/JSON into the output
directory and embeds the resolved config in each JSON report.  Exit
codes: 0 success, 1 usage/config error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import bounds, particles, response, system, transfer
from .errors import ConfigError, SctlabError

_POWER_OF_TWO_MSG = "must be a power of two >= 16"


def _is_pow2(n) -> bool:
    return isinstance(n, int) and n >= 16 and (n & (n - 1)) == 0


@dataclass
class ExperimentConfig:
    map_spec: dict
    kernel_spec: dict
    resolution: int = 256
    tolerance: float = 1e-12
    max_iter: int = 500
    cone_a: float | None = None
    t: float = 0.0
    t_grid: list[float] = field(default_factory=list)
    fd_delta: float = 1e-4
    particles_m: int = 1000
    seed: int = 0
    burn_in: int = 200
    horizon: int = 1000
    mode: str = "auto"
    n_bins: int = 1024
    out_dir: str = "out"

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config: top level must be an object")
        known = {
            "map", "kernel", "resolution", "tolerance", "max_iter", "cone_a",
            "t", "t_grid", "fd_delta", "particles", "out_dir",
        }
        for key in raw:
            if key not in known:
                raise ConfigError(f"{key}: unknown config key")
        if "map" not in raw:
            raise ConfigError("map: required")
        if "kernel" not in raw:
            raise ConfigError("kernel: required")

        def num(key, value, lo, hi, integer=False):
            if integer and not isinstance(value, int):
                raise ConfigError(f"{key}: must be an integer")
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ConfigError(f"{key}: must be a number")
            if not lo <= value <= hi:
                raise ConfigError(f"{key}: {value!r} outside [{lo}, {hi}]")
            return int(value) if integer else float(value)

        resolution = raw.get("resolution", 256)
        if not _is_pow2(resolution):
            raise ConfigError(f"resolution: {_POWER_OF_TWO_MSG}")
        cone_a = raw.get("cone_a")
        if cone_a is not None:
            cone_a = num("cone_a", cone_a, 1e-9, 1e6)
        t_grid = raw.get("t_grid", [])
        if not isinstance(t_grid, list):
            raise ConfigError("t_grid: must be a list of numbers")
        t_grid = [num("t_grid", v, -0.5, 0.5) for v in t_grid]
        p = raw.get("particles", {})
        if not isinstance(p, dict):
            raise ConfigError("particles: must be an object")
        mode = p.get("mode", "auto")
        if mode not in ("auto", "exact", "binned"):
            raise ConfigError(f"particles.mode: {mode!r} not one of auto/exact/binned")
        n_bins = p.get("n_bins", 1024)
        if not _is_pow2(n_bins):
            raise ConfigError(f"particles.n_bins: {_POWER_OF_TWO_MSG}")
        out_dir = raw.get("out_dir", "out")
        if not isinstance(out_dir, str):
            raise ConfigError("out_dir: must be a string")
        return cls(
            map_spec=raw["map"],
            kernel_spec=raw["kernel"],
            resolution=resolution,
            tolerance=num("tolerance", raw.get("tolerance", 1e-12), 1e-16, 1e-3),
            max_iter=num("max_iter", raw.get("max_iter", 500), 1, 10**6, integer=True),
            cone_a=cone_a,
            t=num("t", raw.get("t", 0.0), -0.5, 0.5),
            t_grid=t_grid,
            fd_delta=num("fd_delta", raw.get("fd_delta", 1e-4), 1e-10, 1e-2),
            particles_m=num("particles.M", p.get("M", 1000), 1, 10**8, integer=True),
            seed=num("particles.seed", p.get("seed", 0), 0, 2**63 - 1, integer=True),
            burn_in=num("particles.burn_in", p.get("burn_in", 200), 0, 10**6, integer=True),
            horizon=num("particles.horizon", p.get("horizon", 1000), 1, 10**6, integer=True),
            mode=mode,
            n_bins=n_bins,
            out_dir=out_dir,
        )

    def resolved_dict(self) -> dict:
        return {
            "map": self.map_spec,
            "kernel": self.kernel_spec,
            "resolution": self.resolution,
            "tolerance": self.tolerance,
            "max_iter": self.max_iter,
            "cone_a": self.cone_a,
            "t": self.t,
            "t_grid": self.t_grid,
            "fd_delta": self.fd_delta,
            "particles": {
                "M": self.particles_m,
                "seed": self.seed,
                "burn_in": self.burn_in,
                "horizon": self.horizon,
                "mode": self.mode,
                "n_bins": self.n_bins,
            },
            "out_dir": self.out_dir,
        }

    def solver_config(self) -> transfer.SolverConfig:
        return transfer.SolverConfig(
            resolution=self.resolution,
            tol=self.tolerance,
            max_iter=self.max_iter,
            cone_a=self.cone_a,
        )


def _load_config(args) -> ExperimentConfig:
    path = Path(args.config)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config: file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON ({exc})") from None
    cfg = ExperimentConfig.from_dict(raw)
    if args.out is not None:
        cfg.out_dir = args.out
    if args.resolution is not None:
        if not _is_pow2(args.resolution):
            raise ConfigError(f"--resolution: {_POWER_OF_TWO_MSG}")
        cfg.resolution = args.resolution
    if args.t is not None:
        if not -0.5 <= args.t <= 0.5:
            raise ConfigError(f"--t: {args.t!r} outside [-0.5, 0.5]")
        cfg.t = args.t
    return cfg


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _outdir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_fixed_point(cfg: ExperimentConfig) -> int:
    emap = system.make_map(cfg.map_spec)
    kernel = system.make_kernel(cfg.kernel_spec)
    rep = transfer.solve_fixed_density(emap, kernel, cfg.t, cfg.solver_config())
    out = _outdir(cfg)
    payload = rep.to_json_dict()
    payload["config"] = cfg.resolved_dict()
    _write_json(out / "fixed_point.json", payload)
    rep.rho_to_csv(out / "rho.csv")
    return 0


def cmd_response(cfg: ExperimentConfig) -> int:
    emap = system.make_map(cfg.map_spec)
    kernel = system.make_kernel(cfg.kernel_spec)
    rep = response.response_report(
        emap, kernel, cfg.t, cfg.solver_config(), delta=cfg.fd_delta
    )
    out = _outdir(cfg)
    payload = rep.to_json_dict()
    payload["config"] = cfg.resolved_dict()
    _write_json(out / "response.json", payload)
    rep.comparison_to_csv(out / "response.csv")
    return 0


def cmd_sweep(cfg: ExperimentConfig) -> int:
    emap = system.make_map(cfg.map_spec)
    kernel = system.make_kernel(cfg.kernel_spec)
    grid = cfg.t_grid if cfg.t_grid else [cfg.t]
    res = response.response_sweep(
        emap, kernel, grid, cfg.solver_config(), delta=cfg.fd_delta
    )
    out = _outdir(cfg)
    res.to_csv(out / "sweep.csv")
    payload = res.summary_json_dict()
    payload["config"] = cfg.resolved_dict()
    _write_json(out / "sweep_summary.json", payload)
    return 0


def cmd_particles(cfg: ExperimentConfig) -> int:
    emap = system.make_map(cfg.map_spec)
    kernel = system.make_kernel(cfg.kernel_spec)
    rep = particles.consistency_run(
        emap,
        kernel,
        epsilon=cfg.t,
        m=cfg.particles_m,
        seed=cfg.seed,
        burn_in=cfg.burn_in,
        horizon=cfg.horizon,
        mode=cfg.mode,
        n_bins=cfg.n_bins,
        config=cfg.solver_config(),
    )
    out = _outdir(cfg)
    payload = rep.to_json_dict()
    payload["config"] = cfg.resolved_dict()
    _write_json(out / "consistency.json", payload)
    particles.histogram_to_csv(rep.final_positions, out / "histogram.csv")
    if rep.ensemble_size <= 10_000:
        particles.positions_to_csv(
            rep.final_positions, out / "positions.csv", step=cfg.burn_in + cfg.horizon
        )
    return 0


def cmd_audit(cfg: ExperimentConfig) -> int:
    emap = system.make_map(cfg.map_spec)
    kernel = system.make_kernel(cfg.kernel_spec)
    assum = bounds.expansion_condition(emap)
    payload: dict = {
        "assum_value": assum,
        "assum_admissible": bool(assum < 1.0),
        "config": cfg.resolved_dict(),
    }
    try:
        ly = bounds.lasota_yorke_constants(emap, kernel, cfg.t)
        payload["lasota_yorke"] = ly.to_json_dict()
        payload["ly_min_slack"] = bounds.empirical_ly_slack(
            emap, kernel, cfg.t, ly, n_samples=50, rng=cfg.seed,
            resolution=cfg.resolution,
        )
    except SctlabError as exc:
        rep = getattr(exc, "report", None)
        payload["lasota_yorke"] = rep.to_json_dict() if rep is not None else None
        payload["lasota_yorke_error"] = f"{type(exc).__name__}: {exc}"
    audit = bounds.norm_inequality_audit(rng=cfg.seed, resolution=cfg.resolution)
    payload["norm_audit"] = audit.to_json_dict()
    out = _outdir(cfg)
    _write_json(out / "audit.json", payload)
    return 0


_COMMANDS = {
    "fixed-point": cmd_fixed_point,
    "response": cmd_response,
    "sweep": cmd_sweep,
    "particles": cmd_particles,
    "audit": cmd_audit,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sctlab",
        description="Batch experiments on self-consistent transfer operators "
        "of mean-field coupled expanding circle maps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the JSON config")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--resolution", type=int, default=None, help="grid resolution override")
        p.add_argument("--t", type=float, default=None, help="coupling strength override")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except SctlabError as exc:
        out = _outdir(cfg)
        _write_json(
            out / "error.json",
            {
                "error": type(exc).__name__,
                "message": str(exc),
                "residual_history": [
                    float(r) for r in getattr(exc, "residual_history", [])
                ],
                "config": cfg.resolved_dict(),
            },
        )
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
