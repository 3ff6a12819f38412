"""Command-line interface.

Subcommands write tables to a file (or stdout) as CSV or JSON:

    clockspin levels    energy levels tracked over a field grid
    clockspin find-ct   clock transitions (df/dB = 0 or df/dA = 0)
    clockspin spectrum  echo-detected field sweep at one microwave frequency
    clockspin t2        decoherence model: fit, eval, echo decay fit, simulate

Units are fixed: T, GHz, s, cm^-3.  Exit status is 0 on success, 2 for
usage or configuration errors and 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .clock_finder import DEFAULT_GRID, RefinementError, ct_rows, find_all_cts
from .decoherence import (
    EXAMPLE_MODEL,
    ConvergenceError,
    DecoherenceModel,
    channel_rates,
    fit_echo_decay,
    fit_t2_model,
    inv_t2,
    normalized_slope,
    simulate_echo_decay,
)
from .io import format_table, read_config, read_table
from .spectra import PRESET_LINEWIDTHS, LinewidthModel, field_sweep, spectrum_rows
from .spin_core import (
    BranchTrackingError,
    EigensolverError,
    build_operators,
    get_system,
    solve,
    sweep,
)
from .transitions import StepSizeError, branch_function

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

# 7.0317 GHz clock transition of Si:Bi: |F=4, mF=-2> -> |F=5, mF=-1>, as (mF, rank) pairs
DEFAULT_BRANCH = ((-2.0, 0), (-1.0, 1))

log = logging.getLogger("clockspin")


class ConfigError(ValueError):
    pass


def _common(p, grid_default=None, range_default=None):
    p.add_argument("--config", help="INI file with a [run] section (and optional [system])")
    p.add_argument("--system", help="preset name, e.g. Si:Bi")
    p.add_argument("--S", type=float, help="electron spin of an inline system")
    p.add_argument("--I", type=float, help="nuclear spin of an inline system")
    p.add_argument("--gamma-e", type=float, help="GHz/T")
    p.add_argument("--gamma-n", type=float, help="GHz/T")
    p.add_argument("--A", type=float, help="hyperfine constant, GHz")
    p.add_argument("--range", nargs=2, type=float, metavar=("MIN_T", "MAX_T"))
    p.add_argument("--grid", type=int, help="number of field points")
    p.add_argument("--output", "-o", help="output path (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--seed", type=int)
    p.set_defaults(grid_default=grid_default, range_default=range_default)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clockspin", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("levels", help="eigenlevels over a field grid")
    _common(p, grid_default=512, range_default=(0.0, 0.6))

    p = sub.add_parser("find-ct", help="clock transitions in a field range")
    _common(p, grid_default=DEFAULT_GRID, range_default=(0.005, 0.6))
    p.add_argument("--quantity", choices=("dfdB", "dfdA"))
    p.add_argument("--include-weak", action="store_true", default=None)

    p = sub.add_parser("spectrum", help="echo-detected field sweep")
    _common(p, grid_default=2001, range_default=(0.07, 0.09))
    p.add_argument("--fmw", type=float, help="microwave frequency, GHz")
    p.add_argument("--width-preset", choices=sorted(PRESET_LINEWIDTHS))
    p.add_argument("--width-f0", type=float, help="intrinsic FWHM, GHz (default 270e-6)")
    p.add_argument("--width-A", type=float, help="hyperfine-constant spread FWHM, GHz")
    p.add_argument("--width-B", type=float, help="field spread FWHM, T")
    p.add_argument("--shape", choices=("gaussian", "lorentzian"))

    p = sub.add_parser("t2", help="decoherence model and echo decays")
    _common(p)
    p.add_argument("--mode", choices=("fit", "eval", "decay", "simulate"))
    p.add_argument("--data", help="CSV/JSON input table")
    p.add_argument("--model", help="model JSON written by 't2 --mode fit' (default: bundled example)")
    p.add_argument("--x", type=float, help="normalized slope |df/dB|/gamma_e")
    p.add_argument("--concentration", type=float, help="donor concentration, cm^-3")
    p.add_argument("--separate", action="store_true", default=None, help="fit each concentration separately")
    p.add_argument("--transition", help="branch for B_T inputs as 'mF,rank:mF,rank' (default: 7.0317 GHz CT)")
    p.add_argument("--T2", type=float, help="simulate: 1/e time, s")
    p.add_argument("--n", type=float, help="simulate: stretch exponent")
    p.add_argument("--noise", type=float, help="simulate: noise standard deviation")
    p.add_argument("--points", type=int, help="simulate: number of delays")
    return parser


def _settings(args) -> dict:
    """Merge defaults, config file and flags (flags win)."""
    cfg = {}
    if args.config:
        try:
            cfg = read_config(args.config)
        except (OSError, KeyError, ValueError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    out = dict(cfg)
    out.update({k: v for k, v in vars(args).items() if v is not None and k != "config"})
    return out


def _get(settings, key, default=None, cast=None):
    value = settings.get(key, default)
    if value is None:
        return default
    try:
        return cast(value) if cast else value
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc


def _system(settings):
    inline = {k: settings.get(k) for k in ("S", "I", "gamma_e", "gamma_n", "A")}
    params = dict(settings.get("system_params", {}))
    params.update({k: v for k, v in inline.items() if v is not None})
    try:
        if params:
            missing = [k for k in ("S", "I", "gamma_e", "gamma_n", "A") if k not in params]
            if missing:
                raise ConfigError(f"inline system is missing {', '.join(missing)}")
            return get_system(params)
        return get_system(settings.get("system", "Si:Bi"))
    except (KeyError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _range(settings):
    value = settings.get("range", settings.get("range_default"))
    if isinstance(value, str):
        value = value.replace(",", " ").split()
    try:
        lo, hi = (float(v) for v in value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad field range {value!r}") from exc
    if lo > hi:
        raise ConfigError(f"field range must be ordered, got {lo} > {hi}")
    return lo, hi


def _grid(settings):
    grid = _get(settings, "grid", settings.get("grid_default"), int)
    if grid is None or grid < 16:
        raise ConfigError(f"grid must be >= 16, got {grid}")
    return grid


def _fmt(settings):
    fmt = _get(settings, "format", "csv")
    if fmt not in ("csv", "json"):
        raise ConfigError(f"format must be csv or json, got {fmt!r}")
    return fmt


def _emit(settings, rows, columns, meta, notice=None):
    fmt = _fmt(settings)
    text = format_table(rows, fmt, columns, meta)
    out = settings.get("output")
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")
    if notice:
        print(notice, file=sys.stderr)


def _meta(command, system, **extra):
    meta = {"command": command, "version": __version__, "system": system.to_dict()}
    meta.update(extra)
    return meta


def cmd_levels(settings):
    system = _system(settings)
    lo, hi = _range(settings)
    grid = _grid(settings)
    fields = np.array([lo]) if lo == hi else np.linspace(lo, hi, grid)
    ops = build_operators(system)
    sw = sweep(system, fields, ops)
    rows = []
    for p, B in enumerate(fields):
        # labels at this field, matched to tracked branches by key
        here = {lab.key: lab for lab in solve(system, float(B), ops).labels}
        for k, key in enumerate(sw.keys):
            lab = here[key]
            rows.append({
                "B_T": float(B),
                "branch": k,
                "energy_GHz": float(sw.energies[p, k]),
                "F": lab.F,
                "mF": lab.mF,
                "purity": lab.purity,
            })
    columns = ["B_T", "branch", "energy_GHz", "F", "mF", "purity"]
    _emit(settings, rows, columns, _meta("levels", system, range=[lo, hi], grid=len(fields)))


def cmd_find_ct(settings):
    system = _system(settings)
    lo, hi = _range(settings)
    grid = _grid(settings)
    quantity = _get(settings, "quantity", "dfdB")
    if quantity not in ("dfdB", "dfdA"):
        raise ConfigError(f"quantity must be dfdB or dfdA, got {quantity!r}")
    weak = str(_get(settings, "include_weak", False)).lower() in ("1", "true", "yes")
    cts = find_all_cts(system, (lo, hi), quantity=quantity, n_grid=grid, include_weak=weak)
    columns = ["quantity", "kind", "B_star_T", "f_star_GHz", "curvature_GHz_per_T2", "level_i", "level_j", "selection"]
    notice = None if cts else f"no clock transitions found in [{lo}, {hi}] T"
    _emit(settings, ct_rows(cts), columns,
          _meta("find-ct", system, range=[lo, hi], grid=grid, quantity=quantity), notice)


def cmd_spectrum(settings):
    system = _system(settings)
    lo, hi = _range(settings)
    grid = _grid(settings)
    f_mw = _get(settings, "fmw", None, float)
    if f_mw is None:
        raise ConfigError("spectrum needs --fmw")
    base = PRESET_LINEWIDTHS[_get(settings, "width_preset", "28Si")]
    try:
        model = LinewidthModel(
            sigma_f0=_get(settings, "width_f0", base.sigma_f0, float),
            sigma_A=_get(settings, "width_A", base.sigma_A, float),
            sigma_B=_get(settings, "width_B", base.sigma_B, float),
            shape=_get(settings, "shape", base.shape),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    spec = field_sweep(system, f_mw, (lo, hi), grid, model)
    rows = spectrum_rows(spec)
    columns = ["B_T", "amplitude"] + list(spec.components)
    notice = None if spec.components else f"nothing resonant at {f_mw} GHz in [{lo}, {hi}] T"
    _emit(settings, rows, columns,
          _meta("spectrum", system, f_mw=f_mw, range=[lo, hi], grid=grid,
                linewidth={"sigma_f0": model.sigma_f0, "sigma_A": model.sigma_A,
                           "sigma_B": model.sigma_B, "shape": model.shape},
                selections=spec.selections),
          notice)


def _branch(settings):
    text = _get(settings, "transition", None)
    if text is None:
        return DEFAULT_BRANCH
    try:
        a, b = text.split(":")
        ka = tuple(float(v) for v in a.split(","))
        kb = tuple(float(v) for v in b.split(","))
        return ((ka[0], int(ka[1])), (kb[0], int(kb[1])))
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"bad --transition {text!r}, expected 'mF,rank:mF,rank'") from exc


def _x_column(settings, system, rows):
    if all("x" in r for r in rows):
        return np.array([float(r["x"]) for r in rows])
    if all("B_T" in r for r in rows):
        g = branch_function(system, _branch(settings), "dfdB")
        return normalized_slope([g(float(r["B_T"])) for r in rows], system.gamma_e)
    raise ConfigError("data needs an 'x' or a 'B_T' column")


def _load_model(settings):
    path = _get(settings, "model", None)
    if path is None:
        return EXAMPLE_MODEL
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read model {path}: {exc}") from exc
    if "meta" in doc and "model" in doc.get("meta", {}):
        doc = doc["meta"]["model"]
    return DecoherenceModel.from_dict(doc.get("model", doc))


def _rows(settings):
    path = _get(settings, "data", None)
    if path is None:
        raise ConfigError("this mode needs --data")
    try:
        return read_table(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read data {path}: {exc}") from exc


def cmd_t2(settings):
    system = _system(settings)
    mode = _get(settings, "mode", "eval")
    if mode == "eval":
        model = _load_model(settings)
        if _get(settings, "data") is not None:
            rows = _rows(settings)
            xs = _x_column(settings, system, rows)
            Cs = [float(r.get("concentration_cm3", model.C)) for r in rows]
        else:
            xs = [_get(settings, "x", 0.0, float)]
            Cs = [_get(settings, "concentration", model.C, float)]
        out = []
        for x, C in zip(xs, Cs):
            rates = channel_rates(model, x, C)
            rate = inv_t2(model, x, C)
            out.append({"x": float(x), "concentration_cm3": float(C), "T2_s": 1.0 / rate,
                        "rate_dFF": float(rates[0]), "rate_iFF": float(rates[1]), "rate_ID": float(rates[2])})
        columns = ["x", "concentration_cm3", "T2_s", "rate_dFF", "rate_iFF", "rate_ID"]
        _emit(settings, out, columns, _meta("t2-eval", system, model=model.to_dict()))
    elif mode == "fit":
        rows = _rows(settings)
        xs = _x_column(settings, system, rows)
        try:
            data = [(x, float(r["concentration_cm3"]), float(r["T2_s"])) for x, r in zip(xs, rows)]
        except KeyError as exc:
            raise ConfigError(f"data is missing column {exc}") from exc
        separate = str(_get(settings, "separate", False)).lower() in ("1", "true", "yes")
        fit = fit_t2_model(data, shared=not separate)
        out = []
        for C, m in sorted(fit.per_concentration.items()):
            out.append({"concentration_cm3": C, "k_dFF": m.k_dFF, "k_iFF": m.k_iFF, "k_ID": m.k_ID,
                        "T2_ct_s": 1.0 / inv_t2(m, 0.0)})
        columns = ["concentration_cm3", "k_dFF", "k_iFF", "k_ID", "T2_ct_s"]
        meta = _meta("t2-fit", system, **fit.to_dict())
        _emit(settings, out, columns, meta,
              notice=("unidentifiable: " + ", ".join(fit.unidentifiable)) if fit.unidentifiable else None)
    elif mode == "decay":
        rows = _rows(settings)
        if rows and "two_tau_s" in rows[0]:
            delays = [float(r["two_tau_s"]) for r in rows]
        elif rows and "tau_s" in rows[0]:
            delays = [2.0 * float(r["tau_s"]) for r in rows]
        else:
            raise ConfigError("decay data needs a 'tau_s' or 'two_tau_s' column")
        try:
            amps = [float(r["amplitude"]) for r in rows]
        except KeyError as exc:
            raise ConfigError("decay data needs an 'amplitude' column") from exc
        res = fit_echo_decay(delays, amps)
        d = res.to_dict()
        _emit(settings, [d], list(d), _meta("t2-decay", system))
    elif mode == "simulate":
        T2 = _get(settings, "T2", 0.093, float)
        n = _get(settings, "n", 1.0, float)
        noise = _get(settings, "noise", 0.0, float)
        points = _get(settings, "points", 64, int)
        seed = _get(settings, "seed", 0, int)
        delays = np.linspace(0.0, 3.0 * T2, points)
        try:
            dec = simulate_echo_decay(T2, n, delays, noise=noise, magnitude=True,
                                      rng=np.random.default_rng(seed))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        out = [{"tau_s": float(t / 2), "amplitude": float(a)} for t, a in zip(dec.delays, dec.amplitude)]
        _emit(settings, out, ["tau_s", "amplitude"],
              _meta("t2-simulate", system, T2=T2, n=n, noise=noise, seed=seed))
    else:
        raise ConfigError(f"unknown mode {mode!r}")


COMMANDS = {
    "levels": cmd_levels,
    "find-ct": cmd_find_ct,
    "spectrum": cmd_spectrum,
    "t2": cmd_t2,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        settings = _settings(args)
        COMMANDS[args.command](settings)
    except (EigensolverError, BranchTrackingError, RefinementError, StepSizeError,
            ConvergenceError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, OSError) as exc:
        # ConfigError, FitError and LabelError are ValueErrors
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
