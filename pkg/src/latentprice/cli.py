"""Command-line front end: ``latentprice {simulate,estimate,filter,verify,surface}``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
Errors are reported on stderr as ``latentprice: error[<category>]: <message>``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .dataio import (
    DataError,
    SessionConfig,
    load_dataset,
    load_result,
    load_ticks,
    read_config,
    resample,
    save_result,
    write_dataset,
    write_surface,
    write_table,
)
from .model import ModelParams
from .pipeline import AxisSpec, estimate_session
from .quadrature import QuadratureError
from .simulate import SimConfig, simulate_path
from .zakai import FilterDiagnosticError, FilterGrid, run_filter

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4

logger = logging.getLogger("latentprice")


class UsageError(Exception):
    pass


class NumericalError(Exception):
    pass


# ---------------------------------------------------------------- parsing

def _theta(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected alpha,beta,sigma2")
    try:
        return tuple(float(p) for p in parts)  # type: ignore[return-value]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _axis(text: str) -> AxisSpec:
    try:
        return AxisSpec.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


# flag name -> (dest, converter); the same names are accepted as config keys
_CONFIG_KEYS = {
    "theta": ("theta", _theta),
    "sigma-bar2": ("sigma_bar2", float),
    "eps": ("eps", float),
    "T": ("T", float),
    "dt-sim": ("dt_sim", float),
    "dt-obs": ("dt_obs", float),
    "seed": ("seed", int),
    "x0": ("x0", str),
    "input": ("input", str),
    "out": ("out", str),
    "surface-out": ("surface_out", str),
    "grid-alpha2": ("grid_alpha2", _axis),
    "grid-sigma2": ("grid_sigma2", _axis),
    "m-blocks": ("m_blocks", int),
    "workers": ("workers", int),
    "n-cells": ("n_cells", int),
    "splitting": ("splitting", str),
    "transport": ("transport", str),
    "window-start": ("window_start", str),
    "window-end": ("window_end", str),
    "session-open": ("session_open", str),
    "step": ("step", float),
}


def _add(p: argparse.ArgumentParser, *names: str, **kw):
    for name in names:
        dest, conv = _CONFIG_KEYS[name]
        p.add_argument(f"--{name}", dest=dest, type=conv, default=None, **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latentprice",
        description="Latent-price microstructure model: simulation, filtering and estimation.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="key=value file; command-line flags take precedence")

    p = sub.add_parser("simulate", parents=[common], help="simulate a quote and order-flow path")
    _add(p, "theta", "sigma-bar2", "eps", "T", "dt-sim", "dt-obs", "seed", "x0", "out")

    p = sub.add_parser("estimate", parents=[common], help="estimate parameters from a dataset")
    _add(p, "input", "out", "surface-out", "grid-alpha2", "grid-sigma2", "m-blocks", "workers", "n-cells",
         "splitting", "transport", "window-start", "window-end", "session-open", "step")
    p.add_argument("--ticks", action="store_true", help="input is a raw tick file to resample")

    p = sub.add_parser("filter", parents=[common], help="filtered micro-drift along a dataset")
    _add(p, "input", "out", "theta", "sigma-bar2", "eps", "n-cells", "splitting", "transport")

    p = sub.add_parser("verify", parents=[common], help="run the oracle battery")
    _add(p, "seed")
    p.add_argument("--full", action="store_true", help="acceptance-size experiments (slow)")

    p = sub.add_parser("surface", parents=[common], help="cross-sections of a saved likelihood surface")
    _add(p, "input", "out")
    p.add_argument("--at-alpha2", type=float, default=None, help="alpha2 of the sigma2 slice (default: estimate)")
    p.add_argument("--at-sigma2", type=float, default=None, help="sigma2 of the alpha2 slice (default: estimate)")
    return parser


_DEFAULTS = {
    "simulate": dict(eps=0.0, dt_sim=0.01, dt_obs=1.0, seed=0, x0="100.5"),
    "estimate": dict(workers=1, n_cells=100, splitting="lie", transport="forward", step=1.0),
    "filter": dict(eps=0.0, n_cells=100, splitting="lie", transport="forward"),
    "verify": dict(seed=0),
    "surface": dict(),
}

_REQUIRED = {
    "simulate": ("theta", "sigma_bar2", "T", "out"),
    "estimate": ("input", "out"),
    "filter": ("input", "theta", "sigma_bar2", "out"),
    "verify": (),
    "surface": ("input", "out"),
}


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, the config overlay and explicit flags (in that order)."""
    eff = dict(_DEFAULTS[args.command])
    if args.config:
        try:
            overlay = read_config(args.config)
        except FileNotFoundError as exc:
            raise DataError(str(exc)) from None
        for key, raw in overlay.items():
            if key not in _CONFIG_KEYS:
                raise UsageError(f"unknown config key {key!r} in {args.config}")
            dest, conv = _CONFIG_KEYS[key]
            if dest not in vars(args):
                raise UsageError(f"config key {key!r} does not apply to {args.command}")
            try:
                eff[dest] = conv(raw)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"config key {key!r}: {exc}") from None
    for k, v in vars(args).items():
        if k in ("command", "config", "verbose") or v is None:
            continue
        if isinstance(v, bool) and not v and k in eff:
            continue
        eff[k] = v
    missing = [k for k in _REQUIRED[args.command] if eff.get(k) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))
    return eff


def _config_meta(eff: dict, command: str) -> dict:
    """Effective configuration flattened for artifact headers."""
    meta = {"command": command, "version": __version__}
    for k, v in sorted(eff.items()):
        if isinstance(v, tuple):
            v = ",".join(repr(x) for x in v)
        meta[f"config.{k}"] = v
    return meta


def _params(eff: dict) -> ModelParams:
    a, b, s2 = eff["theta"]
    try:
        return ModelParams(a, b, s2, eff["sigma_bar2"], eff.get("eps", 0.0))
    except ValueError as exc:
        raise UsageError(f"invalid parameters: {exc}") from None


def _load_path(eff: dict, ticks: bool = False):
    src = eff["input"]
    if not Path(src).exists():
        raise DataError(f"no such input file: {src}")
    if not ticks:
        return load_dataset(src)
    keys = ("window_start", "window_end", "session_open", "step")
    try:
        session = SessionConfig(**{k: eff[k] for k in keys if eff.get(k) is not None})
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return resample(load_ticks(src), session.step, session.window)


# ---------------------------------------------------------------- commands

def cmd_simulate(eff: dict) -> int:
    p = _params(eff)
    x0 = eff["x0"]
    x0 = x0 if x0 == "uniform" else float(x0)
    try:
        cfg = SimConfig(p, eff["T"], eff["dt_sim"], eff["dt_obs"], eff["seed"], x0)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    path = simulate_path(cfg)
    path.meta.update(_config_meta(eff, "simulate"))
    write_dataset(path, eff["out"])
    logger.info("wrote %d observations to %s", len(path), eff["out"])
    return EXIT_OK


def cmd_estimate(eff: dict, ticks: bool = False) -> int:
    path = _load_path(eff, ticks)
    meta = _config_meta(eff, "estimate")
    meta["horizon"] = path.horizon
    result, mle = estimate_session(
        path,
        alpha2=eff.get("grid_alpha2"),
        sigma2=eff.get("grid_sigma2"),
        m_blocks=eff.get("m_blocks"),
        filter_grid=FilterGrid(eff["n_cells"]),
        workers=eff["workers"],
        meta=meta,
        splitting=eff["splitting"],
        transport=eff["transport"],
    )
    save_result(result, eff["out"])
    surface_out = eff.get("surface_out") or str(Path(eff["out"]).with_suffix("")) + ".surface.csv"
    write_surface(result.surface, surface_out, meta)
    print(
        f"alpha={result.alpha:.6g} beta={result.beta:.6g} sigma2={result.sigma2:.6g} "
        f"sigma_bar2={result.sigma_bar2:.6g} Sigma_hat={result.Sigma_hat:.6g} eps={result.eps:.4g}"
        + (" (clamped)" if result.eps_clamped else "")
    )
    if len(result.ties) > 1:
        print(f"note: {len(result.ties)} co-maximizers; lexicographically smallest reported")
    return EXIT_OK


def cmd_filter(eff: dict) -> int:
    path = _load_path(eff)
    p = _params(eff)
    out = run_filter(path, p, FilterGrid(eff["n_cells"]), dt=path.dt_obs,
                     splitting=eff["splitting"], transport=eff["transport"])
    inc = np.concatenate([out.loglik_increments, [np.nan]])
    meta = _config_meta(eff, "filter")
    meta["loglik"] = float(out.loglik_increments.sum())
    write_table(eff["out"], ("time", "order_flow", "mu", "loglik_increment"),
                [path.times, path.order_flow, out.mu, inc], meta)
    return EXIT_OK


def cmd_verify(eff: dict, full: bool = False) -> int:
    from .verify import full_battery, quick_battery

    results = full_battery(eff["seed"]) if full else quick_battery(eff["seed"])
    for r in results:
        print(r.line(), flush=True)
    n_fail = sum(not r.passed for r in results)
    print(f"{len(results) - n_fail}/{len(results)} checks passed")
    return EXIT_OK if n_fail == 0 else EXIT_NUMERICAL


def cmd_surface(eff: dict, at_alpha2: Optional[float], at_sigma2: Optional[float]) -> int:
    res = load_result(eff["input"])
    surf = np.asarray(res.surface, dtype=float).reshape(-1, 4)
    if surf.shape[0] == 0:
        raise DataError(f"{eff['input']} holds an empty surface")
    horizon = float(res.meta.get("horizon", 1.0))
    a_axis = np.unique(surf[:, 0])
    s_axis = np.unique(surf[:, 1])
    a0 = a_axis[np.argmin(np.abs(a_axis - (at_alpha2 if at_alpha2 is not None else res.alpha**2)))]
    s0 = s_axis[np.argmin(np.abs(s_axis - (at_sigma2 if at_sigma2 is not None else res.sigma2)))]
    fix_a = surf[surf[:, 0] == a0]
    fix_s = surf[surf[:, 1] == s0]
    rows = np.vstack([fix_a, fix_s])
    kind = np.array(["sigma2"] * len(fix_a) + ["alpha2"] * len(fix_s))
    meta = _config_meta(eff, "surface")
    meta.update(source=eff["input"], horizon=horizon, fixed_alpha2=a0, fixed_sigma2=s0)
    write_table(eff["out"], ("varying", "alpha2", "sigma2", "beta", "loglik_per_T"),
                [kind, rows[:, 0], rows[:, 1], rows[:, 2], rows[:, 3] / horizon], meta)
    return EXIT_OK


# ---------------------------------------------------------------- entry

def _fail(category: str, message: str, code: int) -> int:
    print(f"latentprice: error[{category}]: {message}", file=sys.stderr)
    return code


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        eff = resolve(args)
        if args.command == "simulate":
            return cmd_simulate(eff)
        if args.command == "estimate":
            return cmd_estimate(eff, args.ticks)
        if args.command == "filter":
            return cmd_filter(eff)
        if args.command == "verify":
            return cmd_verify(eff, args.full)
        return cmd_surface(eff, args.at_alpha2, args.at_sigma2)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        return _fail("usage", str(exc), EXIT_USAGE)
    except (DataError, FileNotFoundError, OSError) as exc:
        return _fail("data", str(exc), EXIT_DATA)
    except (FilterDiagnosticError, QuadratureError, NumericalError, ArithmeticError) as exc:
        return _fail("numerical", str(exc), EXIT_NUMERICAL)
    except ValueError as exc:
        # remaining validation failures come from inputs (paths, grids, windows)
        return _fail("data", str(exc), EXIT_DATA)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
