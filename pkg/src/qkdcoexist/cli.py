"""Command-line driver.

Exit codes: 0 success (and a feasible link for ``evaluate``), 2 infeasible
link, 3 input error, 4 failed reproduction check. CSV goes to stdout or to
``--out``; summaries and check lines go to stderr. Output is assembled in
memory and written once, so an error never leaves a partial file.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .calibration import DEFAULT_ANCHORS, fit_anchors
from .channel import calibrate_raman_coeff
from .detector import DETECTOR_PRESETS, detector_preset
from .keyrate import SRS_MODELS, InsufficientStatistics, evaluate, format_value, operating_point, \
    report_from_stats, sweep_distance, sweep_power, write_reports_csv
from .postprocessing import LEDGER_COLUMNS, AuthenticationError, distill, shared_pools
from .presets import FIBER_PRESETS, fiber_preset
from .protocol_sim import simulate_block
from .reproduce import TARGETS, run as run_reproduction
from .scenario import DEFAULT_SEED, load_scenario

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_INPUT = 3
EXIT_REPRODUCTION = 4
DEFAULT_SCENARIO = "g654-110-co-21dBm"


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def parse_range(text, what):
    """``start:stop:step`` (inclusive of stop) or a comma-separated list."""
    try:
        if ":" in text:
            parts = [float(x) for x in text.split(":")]
            if len(parts) != 3 or parts[2] <= 0 or parts[1] < parts[0]:
                raise ValueError
            start, stop, step = parts
            count = int(round((stop - start) / step))
            values = [start + i * step for i in range(count + 1)]
            if values[-1] > stop + 1e-9 * max(1.0, abs(stop)):
                values.pop()
            return [round(v, 9) for v in values]
        values = [float(x) for x in text.split(",") if x.strip()]
        if not values:
            raise ValueError
        return values
    except ValueError:
        raise InputError(f"{what}: expected 'start:stop:step' or a comma list, got {text!r}") from None


def _scenario(args):
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    if args.srs_model is not None:
        scenario = scenario.with_srs_model(args.srs_model)
    return scenario


def _seed(args, scenario=None):
    if args.seed is not None:
        return args.seed
    return scenario.seed if scenario is not None else DEFAULT_SEED


def _rows_csv(columns, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_value(row[c]) for c in columns])
    return buf.getvalue()


def _reports_csv(reports):
    buf = io.StringIO()
    write_reports_csv(reports, buf)
    return buf.getvalue()


def _summary(report):
    rate = f"{report.rate / 1e3:.3f} kbps" if report.feasible else "no key"
    return f"QSNR {report.qsnr:.2f} dB, QBER {100 * report.qber:.3f}%, rate {rate}"


# --- verbs -----------------------------------------------------------------


def cmd_evaluate(args, err):
    scenario = _scenario(args)
    report = evaluate(scenario)
    print(f"{scenario.name}: {_summary(report)}", file=err)
    return _reports_csv([report]), EXIT_OK if report.feasible else EXIT_INFEASIBLE


def cmd_sweep_power(args, err):
    scenario = _scenario(args)
    if scenario.traffic is None:
        raise InputError("sweep-power needs a scenario with classical traffic")
    powers = parse_range(args.powers, "--powers")
    reports = sweep_power(scenario, powers, workers=args.workers)
    print(f"{scenario.name}: {sum(r.feasible for r in reports)}/{len(reports)} powers feasible", file=err)
    return _reports_csv(reports), EXIT_OK


def cmd_sweep_distance(args, err):
    scenario = _scenario(args)
    if args.detector is not None:
        scenario = replace(scenario, detector=detector_preset(args.detector))
    lengths = parse_range(args.lengths, "--lengths")
    if min(lengths) < 0:
        raise InputError("--lengths: lengths must be non-negative")
    reports = sweep_distance(scenario, lengths, srs_model=scenario.srs_model, workers=args.workers)
    reach = None
    for length, rep in zip(lengths, reports):
        if not rep.feasible:
            break
        reach = length
    print(f"{scenario.name}: key up to {reach} km" if reach is not None else f"{scenario.name}: no key", file=err)
    return _reports_csv(reports), EXIT_OK


def cmd_reproduce(args, err):
    srs_model = args.srs_model or ("physical" if args.target == "fig4" else None)
    kwargs = {"seed": _seed(args)}
    if srs_model is not None:
        kwargs["srs_model"] = srs_model
    result = run_reproduction(args.target, **kwargs)
    for check in result.checks:
        print(check.line(), file=err)
    return _rows_csv(result.columns, result.rows), EXIT_OK if result.passed else EXIT_REPRODUCTION


def cmd_calibrate(args, err):
    if args.anchors:
        cal, residuals = fit_anchors(DEFAULT_ANCHORS, srs_model=args.srs_model or "physical")
        for anchor, r in zip(DEFAULT_ANCHORS, residuals):
            print(f"{anchor.fiber} {anchor.direction} {anchor.launch_power:g} dBm: residual {r:+.2e}", file=err)
        print(f"receiver_loss {cal.receiver_loss:.4f} dB, srs_scale {cal.srs_scale:.6g}", file=err)
        row = {"receiver_loss_db": cal.receiver_loss, "srs_scale": cal.srs_scale,
               "residual_max": max(abs(r) for r in residuals)}
        return _rows_csv(tuple(row), [row]), EXIT_OK
    names = [args.fiber] if args.fiber else list(FIBER_PRESETS)
    rows = []
    for name in names:
        fiber = fiber_preset(name)
        k, residual = calibrate_raman_coeff(fiber, args.direction)
        print(f"{name} {args.direction}: K {k:.6g} cps/(mW km), residual {100 * residual:.3g}% of beta", file=err)
        rows.append({"fiber": name, "direction": args.direction, "beta_srs_cps_per_dbm_km": fiber.beta_srs,
                     "raman_coeff_cps_per_mw_km": k, "relative_residual": residual})
    return _rows_csv(tuple(rows[0]), rows), EXIT_OK


def cmd_distill(args, err):
    scenario = _scenario(args)
    if args.blocks < 0:
        raise InputError("--blocks must be non-negative")
    protocol = scenario.protocol
    if args.block_size is not None:
        if args.block_size <= 0:
            raise InputError("--block-size must be positive")
        protocol = replace(protocol, block_size=args.block_size)
    seed = _seed(args, scenario)
    op = operating_point(scenario)
    pools = shared_pools(seed, n_keys=2 * max(args.blocks, 1))
    columns = ("block",) + LEDGER_COLUMNS + ("est_rate_bps",)
    rows = []
    for i in range(args.blocks):
        block_seed = np.random.SeedSequence([seed, i])
        sim = simulate_block(op.loss_db, op.noise, scenario.detector, protocol, block_seed)
        try:
            report = report_from_stats(sim.stats, protocol)
        except InsufficientStatistics as exc:
            raise InputError(f"block {i}: {exc}") from None
        duration = sim.n_slots / protocol.rep_rate
        key = sim.signal
        out = distill(key.bits_alice, key.bits_bob, protocol, report, duration,
                      seed=int(block_seed.generate_state(1)[0]), pools=pools)
        if out.emitted and not np.array_equal(out.alice_key, out.bob_key):
            raise RuntimeError(f"block {i}: emitted keys differ")
        row = {"block": i, **out.ledger.as_row(), "est_rate_bps": report.rate}
        rows.append(row)
    if rows:
        final = sum(r["final_bits"] for r in rows)
        secs = sum(r["duration_s"] for r in rows)
        qber = float(np.mean([r["qber"] for r in rows]))
        print(f"{scenario.name}: {len(rows)} blocks, mean QBER {100 * qber:.3f}%, "
              f"{final} final bits, {final / secs:.1f} bps", file=err)
    else:
        print(f"{scenario.name}: no blocks requested", file=err)
    return _rows_csv(columns, rows), EXIT_OK


# --- parser ----------------------------------------------------------------


def _global_flags(parser, suppress):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--scenario", default=d(DEFAULT_SCENARIO),
                        help="scenario file or bundled scenario name (default %(default)s)" if not suppress
                        else "scenario file or bundled scenario name")
    parser.add_argument("--seed", type=int, default=d(None), help="RNG seed (default: the scenario's run.seed)")
    parser.add_argument("--out", default=d(None), help="write CSV here instead of stdout")
    parser.add_argument("--srs-model", choices=SRS_MODELS, default=d(None), help="override model.srs")


def build_parser():
    parser = _Parser(prog="qkdcoexist", description="QKD coexistence with classical WDM traffic")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    p = sub.add_parser("evaluate", parents=[common], help="key rate of one scenario")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep-power", parents=[common], help="sweep the classical launch power")
    p.add_argument("--powers", default="8:21:1", help="dBm, 'start:stop:step' or comma list (default %(default)s)")
    p.add_argument("--workers", type=int, default=None, help="parallel worker processes")
    p.set_defaults(func=cmd_sweep_power)

    p = sub.add_parser("sweep-distance", parents=[common], help="sweep the span length")
    p.add_argument("--lengths", default="0:200:1", help="km, 'start:stop:step' or comma list (default %(default)s)")
    p.add_argument("--detector", choices=sorted(DETECTOR_PRESETS), default=None, help="override the detector")
    p.add_argument("--workers", type=int, default=None, help="parallel worker processes")
    p.set_defaults(func=cmd_sweep_distance)

    p = sub.add_parser("reproduce", parents=[common], help="run a result matrix with its checks")
    p.add_argument("target", choices=TARGETS)
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("calibrate", parents=[common], help="fit model coefficients")
    p.add_argument("--fiber", choices=sorted(FIBER_PRESETS), default=None, help="one fiber preset (default: all)")
    p.add_argument("--direction", choices=("co", "counter", "both"), default="both")
    p.add_argument("--anchors", action="store_true", help="fit receiver loss and Raman scale to the QBER anchors")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("distill", parents=[common], help="simulate blocks and distill keys end to end")
    p.add_argument("--blocks", type=int, default=1, help="blocks to simulate (default 1)")
    p.add_argument("--block-size", type=int, default=None, help="sifted bits per block (default protocol.block_size_bits)")
    p.set_defaults(func=cmd_distill)
    return parser


def main(argv=None, stdout=None, stderr=None):
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        text, code = args.func(args, stderr)
    except (InputError, ValueError) as exc:
        # domain validation (ScenarioError, preset lookups, ranges) surfaces as ValueError
        print(f"error: {exc}", file=stderr)
        return EXIT_INPUT
    except AuthenticationError as exc:
        print(f"authentication failure: {exc}", file=stderr)
        return EXIT_INPUT
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        stdout.write(text)
    return code
