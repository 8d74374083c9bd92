"""Command-line entry point ``mdiqkd``.

Exit codes: 0 success, 2 usage or configuration error, 3 data error or
infeasible bounds, 4 protocol or internal assertion.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
import warnings
from dataclasses import replace
from pathlib import Path

from . import config, decoy, fit, lp, pipeline, pulsesim, session, tables
from .forward import full_gain_table
from .model import Basis, Intensity

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4

# launch powers of the measured coexistence tables (uW)
DEFAULT_POWERS_UW = (4.68, 11.8, 15.0, 61.7, 155.0, 392.0)


class UsageError(Exception):
    pass


def _num(x: float) -> str:
    return "%.16e" % x


def _load_config(args) -> config.RunConfig:
    src = getattr(args, "config", None) or "lab"
    if src in ("lab", "deployed") and not Path(src).exists():
        cfg = config.bundled(src)
    else:
        cfg = config.load(src)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "rounds", None) is not None:
        cfg = replace(cfg, rounds=args.rounds)
    if getattr(args, "output", None) is not None:
        cfg = replace(cfg, output=args.output)
    return cfg


def _scenario(cfg: config.RunConfig, args):
    sc = cfg.scenario
    if getattr(args, "loss", None) is not None:
        sc = sc.with_loss(args.loss, getattr(args, "asymmetry", None))
    return sc


def _emit(text: str, cfg: config.RunConfig) -> None:
    if cfg.output:
        with open(cfg.output, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _report(pairs) -> str:
    out = []
    for k, v in pairs:
        if isinstance(v, float):
            v = "%.6e" % v
        out.append(f"{k} {v}")
    return "\n".join(out) + "\n"


def _decoy_report(res: decoy.DecoyResult) -> str:
    return _report(
        [
            ("s11_Z_lower", res.s11_Z_lower),
            ("e11_X_upper", res.e11_X_upper),
            ("R", res.R),
            ("R_clamped", res.R_clamped),
            ("degenerate", str(res.degenerate).lower()),
        ]
    )


def _triple(text: str | None, name: str):
    if text is None:
        return None
    try:
        vals = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise UsageError(f"{name} needs three comma-separated numbers") from None
    if len(vals) != 3:
        raise UsageError(f"{name} needs three comma-separated numbers")
    return vals


def _cells(text: str | None):
    """``Z:vs,X:sd`` -> ``[(Basis.Z, VACUUM, SIGNAL), (Basis.X, SIGNAL, DECOY)]``."""
    if not text:
        return []
    out = []
    for item in text.split(","):
        try:
            b, pair = item.strip().split(":")
            if len(pair) != 2:
                raise ValueError
            out.append((Basis[b.upper()], Intensity.from_label(pair[0]), Intensity.from_label(pair[1])))
        except (KeyError, ValueError):
            raise UsageError(f"bad cell {item!r}; use BASIS:AB with A, B in s, d, v") from None
    return out


def _points(text: str | None):
    if text is None:
        return None
    try:
        pts = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError("--points needs comma-separated numbers") from None
    return pts


def _check_grid(pts) -> None:
    if not pts:
        raise UsageError("sweep grid is empty")
    if any(b <= a for a, b in zip(pts, pts[1:])):
        raise UsageError("sweep points must be strictly increasing")


# subcommands


def cmd_gains(args) -> int:
    cfg = _load_config(args)
    _emit(tables.format_table(full_gain_table(_scenario(cfg, args))), cfg)
    return EXIT_OK


def cmd_montecarlo(args) -> int:
    cfg = _load_config(args)
    if cfg.rounds < 1:
        raise UsageError("--rounds must be >= 1")
    summary = pulsesim.simulate_batch(_scenario(cfg, args), cfg.rounds, cfg.seed)
    emp = pulsesim.empirical_gain_table(summary)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["basis", "mu_a", "mu_b", "sent", "psi_minus", "errors", "Q", "Q_se", "E", "E_se"])
    for b in Basis:
        for ia in Intensity:
            for ib in Intensity:
                c = (b, ia, ib)
                w.writerow(
                    [
                        b.name,
                        ia.label,
                        ib.label,
                        int(summary.sent[c]),
                        int(summary.psi_minus[c]),
                        int(summary.errors[c]),
                        _num(emp.table.Q[c]),
                        _num(emp.gain_stderr[c]),
                        _num(emp.table.E[c]),
                        _num(emp.error_stderr[c]),
                    ]
                )
    _emit(buf.getvalue(), cfg)
    return EXIT_OK


def cmd_decoy(args) -> int:
    cfg = _load_config(args)
    if (args.table is None) == (args.fixture is None):
        raise UsageError("give exactly one of a table file or --fixture")
    table = tables.read_table(args.table) if args.table else tables.fixture(args.fixture).table()
    mu_a = _triple(args.mu_a, "--mu-a") or cfg.scenario.alice.mu
    mu_b = _triple(args.mu_b, "--mu-b") or cfg.scenario.bob.mu
    f = args.f if args.f is not None else cfg.f_ec
    res = decoy.analyze(table, mu_a, mu_b, f, exclude=_cells(args.exclude))
    _emit(_decoy_report(res), cfg)
    return EXIT_OK


def cmd_keyrate(args) -> int:
    cfg = _load_config(args)
    res = pipeline.key_rate(_scenario(cfg, args), cfg.f_ec)
    _emit(_decoy_report(res), cfg)
    return EXIT_OK


def _sweep_text(points) -> str:
    rows = [(p.axis, p.R, p.R_clamped, p.noise_cps) for p in points]
    for p in points:
        if p.error:
            print(f"mdiqkd: point {p.axis:g} failed: {p.error}", file=sys.stderr)
    return tables.format_sweep(rows)


def cmd_sweep_loss(args) -> int:
    cfg = _load_config(args)
    pts = _points(args.points)
    if pts is None:
        pts = list(cfg.sweep.points) if cfg.sweep.axis == "loss" else []
    _check_grid(pts)
    asym = args.asymmetry if args.asymmetry is not None else cfg.sweep.asymmetry_db
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        points = pipeline.loss_sweep(cfg.scenario, pts, asym, cfg.f_ec)
    for w in caught:
        print(f"mdiqkd: warning: {w.message}", file=sys.stderr)
    _emit(_sweep_text(points), cfg)
    return EXIT_OK


def cmd_sweep_power(args) -> int:
    cfg = _load_config(args)
    pts = _points(args.points)
    if pts is None:
        if cfg.sweep.axis == "power":
            pts = [config._unit(p, config.PER_UW) for p in cfg.sweep.points]
        else:
            pts = list(DEFAULT_POWERS_UW)
    _check_grid(pts)
    powers = [p / config.PER_UW for p in pts]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        points = pipeline.power_sweep(_scenario(cfg, args), cfg.noise, powers, cfg.f_ec)
    for w in caught:
        print(f"mdiqkd: warning: {w.message}", file=sys.stderr)
    points = [replace(p, axis=a) for p, a in zip(points, pts)]  # report in µW
    _emit(_sweep_text(points), cfg)
    return EXIT_OK


def _measurements(items, asymmetry: float):
    data = []
    for item in items:
        if "@" in item:
            path, loss = item.rsplit("@", 1)
            try:
                loss_db = float(loss)
            except ValueError:
                raise UsageError(f"bad loss in {item!r}; use PATH@LOSS_DB") from None
            data.append(fit.Measurement(tables.read_table(path), loss_db, asymmetry))
        else:
            try:
                fx = tables.fixture(item)
            except KeyError as exc:
                raise UsageError(str(exc.args[0])) from None
            data.append(fit.Measurement(fx.table(), fx.loss_db, asymmetry))
    return data


def cmd_fit(args) -> int:
    cfg = _load_config(args)
    asym = args.asymmetry if args.asymmetry is not None else cfg.sweep.asymmetry_db
    data = _measurements(args.tables, asym)
    if len(data) < 2:
        raise UsageError("fit needs measured tables at >= 2 loss points")
    free = tuple(x.strip() for x in args.free.split(",")) if args.free else fit.DEFAULT_FREE
    bad = [x for x in free if x not in fit.PARAMS]
    if bad:
        raise UsageError(f"unknown fit parameters {bad}; choose from {', '.join(fit.PARAMS)}")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = fit.fit(cfg.scenario, data, free)
    for w in caught:
        print(f"mdiqkd: warning: {w.message}", file=sys.stderr)
    pairs = [(k, float(res.params[k])) for k in fit.PARAMS]
    pairs += [(f"stderr_{k}", v) for k, v in res.stderr.items()]
    pairs += [("residual", res.residual), ("converged", str(res.converged).lower()), ("nfev", res.nfev)]
    sys.stderr.write(_report(pairs))
    fitted = replace(cfg, scenario=res.scenario, output=None)
    _emit(config.dumps(fitted), cfg)
    return EXIT_OK


def cmd_session(args) -> int:
    cfg = _load_config(args)
    if cfg.rounds < 1:
        raise UsageError("--rounds must be >= 1")
    sc = _scenario(cfg, args)
    if args.consistent:
        sc = pipeline.decoy_consistent(sc)
    ses = cfg.session
    latency = args.latency if args.latency is not None else ses.latency
    s = session.Session(
        sc,
        cfg.rounds,
        cfg.seed,
        latency,
        reveal_x=ses.reveal_x,
        reveal_z=ses.reveal_z,
        block=ses.block,
        record=args.log is not None,
        f=cfg.f_ec,
    )
    out = s.run()
    if s.causality.violations:
        raise AssertionError("causality violations: " + "; ".join(s.causality.violations[:5]))
    if args.log is not None:
        Path(args.log).write_text(s.log_text())
    pairs = [
        ("rounds", cfg.rounds),
        ("retained", len(out.store_a)),
        ("revealed", int(s.estimate.revealed.sum())),
        ("causality_checks", s.causality.checks),
        ("causality_violations", len(s.causality.violations)),
    ]
    text = _report(pairs) + tables.format_table(out.table)
    if out.result is not None:
        text += _decoy_report(out.result)
    else:
        text += f"decoy_error {s.decoy_error}\n"
    _emit(text, cfg)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="YAML run config, or 'lab' / 'deployed'")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--rounds", type=int, default=argparse.SUPPRESS)
    common.add_argument("--output", default=argparse.SUPPRESS, help="output file (default stdout)")
    common.add_argument("--format", choices=["csv"], default=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="mdiqkd", description="MDI-QKD network simulator", parents=[common])
    sub = p.add_subparsers(dest="cmd", required=True)

    def add(name, func, help_text):
        sp = sub.add_parser(name, help=help_text, parents=[common])
        sp.set_defaults(func=func)
        return sp

    def loss_flags(sp):
        sp.add_argument("--loss", type=float, help="total link loss in dB")
        sp.add_argument("--asymmetry", type=float, help="Alice-minus-Bob loss in dB")

    loss_flags(add("gains", cmd_gains, "analytic gain table CSV"))
    loss_flags(add("montecarlo", cmd_montecarlo, "pulse-by-pulse Monte Carlo counts"))
    sp = add("decoy", cmd_decoy, "decoy bounds and key rate of a measured table")
    sp.add_argument("table", nargs="?", help="gain table CSV")
    sp.add_argument("--fixture", help="bundled measured table, e.g. lab_19dB")
    sp.add_argument("--mu-a", help="Alice signal,decoy,vacuum intensities")
    sp.add_argument("--mu-b", help="Bob signal,decoy,vacuum intensities")
    sp.add_argument("--f", type=float, help="error-correction inefficiency")
    sp.add_argument("--exclude", help="cells to leave out, e.g. Z:vd,Z:vv")
    loss_flags(add("keyrate", cmd_keyrate, "key rate of the configured scenario"))
    sp = add("sweep-loss", cmd_sweep_loss, "key rate versus total loss (dB)")
    sp.add_argument("--points", help="comma-separated losses in dB")
    sp.add_argument("--asymmetry", type=float, help="Alice-minus-Bob loss in dB")
    sp = add("sweep-power", cmd_sweep_power, "key rate versus data launch power (uW)")
    sp.add_argument("--points", help="comma-separated launch powers in uW")
    loss_flags(sp)
    sp = add("fit", cmd_fit, "fit the scenario to measured tables")
    sp.add_argument("tables", nargs="+", help="PATH@LOSS_DB or bundled fixture name")
    sp.add_argument("--free", help=f"comma-separated parameters (default {','.join(fit.DEFAULT_FREE)})")
    sp.add_argument("--asymmetry", type=float, help="Alice-minus-Bob loss in dB")
    sp = add("session", cmd_session, "three-node protocol session")
    loss_flags(sp)
    sp.add_argument("--latency", type=float, help="control-channel latency in s")
    sp.add_argument("--log", help="write the JSONL event log here")
    sp.add_argument(
        "--consistent",
        action="store_true",
        help="give every intensity the signal-level qubit states",
    )
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"mdiqkd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except config.ConfigError as exc:
        print(f"mdiqkd: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except decoy.InfeasibleError as exc:
        print(f"mdiqkd: infeasible: {exc}", file=sys.stderr)
        for cell in exc.cells:
            print(f"  constraint {cell}", file=sys.stderr)
        return EXIT_DATA
    except (tables.TableFormatError, FileNotFoundError, ValueError) as exc:
        print(f"mdiqkd: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (session.ProtocolError, lp.LPError, AssertionError) as exc:
        print(f"mdiqkd: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
