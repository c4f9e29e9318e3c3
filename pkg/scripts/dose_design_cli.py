"""Command-line surface for two-dose optimization designs.

Subcommands:
  design     sample size and selection threshold for a dose pair
  bias       selection-induced bias of the chosen dose (binary or survival endpoints)
  type1      Type I error of a pooled confirmatory test under that bias
  simulate   Monte Carlo batch from a JSON scenario config
  reproduce  regenerate a published table and diff it against the reference values

Exit codes: 0 success, 2 invalid input, 3 resource cap hit, 4 reproduce --strict diff failure.
"""
import argparse
import logging
import sys

import pandas as pd

from design_errors import ConfigError, ContractError, DomainError, ResourceCapError
from design_sizer import (DEFAULT_N_CAP, DesignScenario, GridSpec, optimal_design_approx, optimal_design_exact,
                          rose_scenario)
from outcome_model import RESPONSE_ONLY, UtilityMoments, UtilitySpec, joint_probs, utility_moments
from selection_bias import (TwoStagePlan, binomial_critical, binomial_type1, bias_report, combined_bias, max_bias,
                            selection_bias, z_test_type1)
from simulate_runner import SimulationBatchRunner
from table_reproduction import TableReproducer
from trial_sim import DEFAULT_REPLICATIONS, default_workers
from tte_bias import (TtePlan, bridge_type1, expected_events, landmark_hazard_bridge, landmark_type1,
                      tte_bias_report)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CAP = 3
EXIT_DIFF = 4


def _banner(title):
    print("\n" + "=" * 60)
    print(title)
    print("=" * 60)


def _utilities(args):
    if getattr(args, 'response_only', False):
        return RESPONSE_ONLY
    if getattr(args, 'utilities', None):
        return UtilitySpec(*args.utilities)
    return None


def cmd_design(args):
    if args.rose:
        s = rose_scenario(args.p, args.delta, args.alpha)
    else:
        s = DesignScenario(p=args.p, q=args.q, delta=args.delta, d=args.d, phi=args.phi,
                           utilities=_utilities(args),
                           alpha_L=args.alpha_L or args.alpha, alpha_H=args.alpha_H or args.alpha)

    grid = GridSpec(allow_negative=args.allow_negative)
    methods = ("approx", "exact") if args.method == "both" else (args.method,)
    results = []
    for method in methods:
        if method == "approx":
            results.append(optimal_design_approx(s))
        else:
            results.append(optimal_design_exact(s, lambda_grid=grid, n_cap=args.n_cap, workers=args.workers))

    _banner(f"🎯 {'ROSE' if args.rose else 'UTILITY'} DESIGN")
    u = s.utilities
    print(f"📊 SCENARIO: p={s.p}, q={s.q}, delta={s.delta}, d={s.d}, phi={s.phi}")
    print(f"  • Utilities: ({u.u1:.4g}, {u.u2:.4g}, {u.u3:.4g}, {u.u4:.4g})")
    print(f"  • PCS targets: alpha_L={s.alpha_L}, alpha_H={s.alpha_H}")
    for res in results:
        print(f"\n📐 {res.method.upper()}:")
        print(f"  • n per arm: {res.n}")
        print(f"  • lambda_u: {res.lambda_u:.6f}")
        print(f"  • PCS_L: {res.pcs_L:.4f}  PCS_H: {res.pcs_H:.4f} ({res.pcs_kind})")
        print(f"  • Binding scenario: {res.binding}")

    frame = pd.DataFrame([res.to_row() for res in results])
    if args.out:
        frame.to_csv(args.out, index=False)
        logger.info(f"Design saved to {args.out}")
    else:
        print()
        print(frame.to_csv(index=False), end='')
    return EXIT_OK


def _binary_moments(args):
    """Utility moments from a model or from direct inputs; None when neither is given"""
    if args.cov_xu is not None and args.sigma_u is not None:
        return UtilityMoments(mu=0.0, sigma2=args.sigma_u ** 2, cov_xu=args.cov_xu)
    u = _utilities(args)
    if u is None:
        return None
    if args.p is None:
        raise ContractError("Utility moments need --p")
    return utility_moments(u, joint_probs(args.p, args.q, args.phi))


def _n2(args):
    return args.n2 if args.n2 is not None else args.n_total - args.n1


def _tte_plan(args, n2):
    n_total = args.n1 + n2
    d_events = args.d_events or expected_events(n_total, args.lambda0, args.t_entry, args.t_admin)
    d_total = args.d_total or 2.0 * d_events
    return TtePlan(n1=args.n1, n2=n2, d_events=d_events, d_total=d_total, lambda0=args.lambda0, tau=args.tau,
                   lambda_u=args.lambda_u, alpha=args.alpha)


def _tte_report(args, n2):
    plan = _tte_plan(args, n2)
    if args.max or args.bridge:
        stage1_max = max_bias(plan.s0_tau, plan.n1, plan.lambda_u, args.sigma_u)
        hazard_upper, beta_upper = landmark_hazard_bridge(plan.s0_tau, plan.tau, plan.lambda0, stage1_max, plan.w1)
        return plan, None, {'landmark_bias_max': plan.w1 * stage1_max, 'hazard_bias_upper': hazard_upper,
                            'beta_bias_upper': beta_upper}
    missing = [name for name in ('cov_su', 'cov_tu', 'sigma_u') if getattr(args, name) is None]
    if missing:
        raise ContractError(f"Survival plugin needs --{', --'.join(m.replace('_', '-') for m in missing)} "
                            f"(or use --max/--bridge)")
    return plan, tte_bias_report(plan, args.cov_su, args.cov_tu, args.sigma_u), None


def cmd_bias(args):
    n2 = _n2(args)
    if args.p is None and not args.tte:
        raise ContractError("bias needs --p")
    if args.tte:
        plan, report, bounds = _tte_report(args, n2)
        _banner("⏱️ SURVIVAL ENDPOINT BIAS")
        print(f"📊 PLAN: n1={plan.n1}, n2={plan.n2}, lambda0={plan.lambda0}/week, tau={plan.tau} weeks")
        print(f"  • Expected events: selected arm {plan.d_events:.1f}, both arms {plan.d_total:.1f}")
        if bounds is not None:
            print(f"  • Landmark bias bound (combined): {bounds['landmark_bias_max']:.6f}")
            print(f"  • Hazard bias bound: {bounds['hazard_bias_upper']:.6f}")
            print(f"  • Log-hazard-ratio bias bound: {bounds['beta_bias_upper']:.6f}")
        else:
            print(f"  • Landmark bias (combined): {report.landmark_bias:.6f}")
            print(f"  • Mean survival time bias (stage 1): {report.mean_time_bias:.6f} weeks")
            print(f"  • Hazard bias (stage 1): {report.hazard_bias:.6f}")
            print(f"  • Log-hazard bias (combined): {report.log_hazard_bias_combined:.6f}")
        return EXIT_OK

    moments = _binary_moments(args)
    if args.max:
        sigma = moments.sigma if moments is not None else None
        stage1 = max_bias(args.p, args.n1, args.lambda_u, sigma)
        label = "Maximum bias"
    else:
        if moments is None:
            raise ContractError("Bias plugin needs utilities (--utilities, --response-only) "
                                "or --cov-xu with --sigma-u; use --max for the bound")
        stage1 = selection_bias(moments, args.n1, args.lambda_u)
        label = "Bias"

    _banner("🎯 SELECTION-INDUCED BIAS")
    print(f"📊 PLAN: p={args.p}, n1={args.n1}, n2={n2}, lambda_u={args.lambda_u}")
    print(f"  • {label} (stage 1): {stage1:.6f}")
    print(f"  • {label} (combined): {combined_bias(stage1, args.n1, n2):.6f}")
    print(f"  • Dilution factor n1/(n1+n2): {args.n1 / (args.n1 + n2):.4f}")
    return EXIT_OK


def cmd_type1(args):
    n2 = _n2(args)
    if args.tte or args.test in ("landmark", "exp", "cox"):
        plan, report, bounds = _tte_report(args, n2)
        _banner("⏱️ SURVIVAL ENDPOINT TYPE I ERROR")
        if bounds is not None:
            values = {
                'landmark': landmark_type1(plan, bounds['landmark_bias_max']),
                'exp': bridge_type1(plan, bounds['beta_bias_upper'], "exp"),
                'cox': bridge_type1(plan, bounds['beta_bias_upper'], "cox"),
            }
        else:
            values = {'landmark': report.landmark_type1, 'exp': report.exp_type1, 'cox': report.cox_type1}
        tests = (args.test,) if args.test in values else tuple(values)
        for test in tests:
            print(f"  • {test}: {values[test]:.4f} (nominal {plan.alpha})")
        return EXIT_OK

    p0 = args.p0 if args.p0 is not None else args.p
    if p0 is None:
        raise ContractError("type1 needs --p0 or --p")
    plan = TwoStagePlan(n1=args.n1, n2=n2, lambda_u=args.lambda_u, p0=p0, alpha=args.alpha)
    moments = _binary_moments(args)
    if args.max:
        sigma = moments.sigma if moments is not None else None
        shift = combined_bias(max_bias(p0, plan.n1, plan.lambda_u, sigma), plan.n1, plan.n2)
    else:
        if moments is None:
            raise ContractError("Type I plugin needs utilities (--utilities, --response-only) "
                                "or --cov-xu with --sigma-u; use --max for the bound")
        shift = bias_report(moments, plan).combined_bias

    _banner("⚖️ TYPE I ERROR OF THE POOLED TEST")
    print(f"📊 PLAN: p0={p0}, n1={plan.n1}, n2={plan.n2}, alpha={plan.alpha}")
    print(f"  • Combined bias{' bound' if args.max else ''}: {shift:.6f}")
    if args.test == "z":
        print(f"  • Z-test Type I error: {z_test_type1(plan, shift):.4f}")
    else:
        k_c = binomial_critical(plan.n_total, p0, plan.alpha)
        print(f"  • Critical value k_c: reject when responders > {k_c}")
        print(f"  • Binomial Type I error: {binomial_type1(plan, shift):.4f}")
    return EXIT_OK


def cmd_simulate(args):
    runner = SimulationBatchRunner(args.config, output_dir=args.out, workers=args.workers,
                                   replications=args.replications, seed=args.seed)
    runner.load_config()
    return runner.run_all()


def cmd_reproduce(args):
    reproducer = TableReproducer(output_dir=args.out, replications=args.replications, seed=args.seed,
                                 workers=args.workers, method=args.method, pcs=args.pcs)
    _, _, passed = reproducer.reproduce(args.table)
    if args.strict and not passed:
        logger.error(f"Table {args.table} differs from the reference values")
        return EXIT_DIFF
    return EXIT_OK


def _add_plan_arguments(sub):
    sub.add_argument("--p", type=float, help="response probability of both doses under the null")
    sub.add_argument("--q", type=float, default=0.8, help="no-adverse-event probability (default: 0.8)")
    sub.add_argument("--phi", type=float, default=0.0, help="efficacy/safety correlation (default: 0)")
    sub.add_argument("--utilities", type=float, nargs=4, metavar=("U1", "U2", "U3", "U4"),
                     help="utility scores for (response, no AE), (response, AE), (no response, no AE), "
                          "(no response, AE)")
    sub.add_argument("--response-only", action="store_true", help="utility equals the response indicator")
    sub.add_argument("--cov-xu", type=float, help="Cov(X, U) supplied directly")
    sub.add_argument("--sigma-u", type=float, help="utility standard deviation supplied directly")
    sub.add_argument("--n1", type=int, required=True, help="Stage-1 patients per arm")
    sub.add_argument("--n2", type=int, help="Stage-2 patients on the selected dose (default: n-total - n1)")
    sub.add_argument("--n-total", type=int, default=200, help="pooled sample size n1 + n2 (default: 200)")
    sub.add_argument("--lambda-u", type=float, default=0.0, help="selection threshold on mean utility (default: 0)")
    sub.add_argument("--alpha", type=float, default=0.025, help="one-sided nominal level (default: 0.025)")
    sub.add_argument("--max", action="store_true", help="use the conservative maximum-bias bound")

    tte = sub.add_argument_group("survival endpoints")
    tte.add_argument("--tte", action="store_true", help="evaluate survival endpoints")
    tte.add_argument("--bridge", action="store_true", help="use the landmark-to-hazard bridge bound")
    tte.add_argument("--cov-su", type=float, help="Cov(S(tau), U) from Stage-1 data")
    tte.add_argument("--cov-tu", type=float, help="Cov(T, U) from Stage-1 data, in weeks")
    tte.add_argument("--lambda0", type=float, default=0.1, help="null hazard per week (default: 0.1)")
    tte.add_argument("--tau", type=float, default=24.0, help="landmark time in weeks (default: 24)")
    tte.add_argument("--t-entry", type=float, default=52.0, help="accrual period in weeks (default: 52)")
    tte.add_argument("--t-admin", type=float, default=76.0, help="administrative censoring in weeks (default: 76)")
    tte.add_argument("--d-events", type=float, help="events on the selected arm (default: expected events)")
    tte.add_argument("--d-total", type=float, help="events in both arms (default: twice --d-events)")


def build_parser():
    parser = argparse.ArgumentParser(
        description="Design and bias calculations for randomized two-dose optimization studies",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python dose_design_cli.py design --p 0.4 --delta 0.15 --alpha 0.8 --rose --method approx
  python dose_design_cli.py design --p 0.3 --q 0.5 --delta 0.10 --d 0.15 --alpha 0.8 --method exact
  python dose_design_cli.py type1 --p0 0.4 --p 0.4 --n1 60 --n2 140 --test z --max
  python dose_design_cli.py simulate configs/table2_example.json --replications 10000
  python dose_design_cli.py reproduce 1 --method approx --strict
""",
    )
    parser.add_argument("--workers", type=int, default=None,
                        help="worker processes (default: $DOSEOPT_WORKERS or 1)")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("--quiet", action="store_true", help="warnings and errors only")
    subparsers = parser.add_subparsers(dest="command", required=True)

    design = subparsers.add_parser("design", help="sample size and threshold for a dose pair")
    design.add_argument("--p", type=float, required=True, help="response probability of the higher dose")
    design.add_argument("--q", type=float, default=0.5, help="no-adverse-event probability of the lower dose "
                                                             "(default: 0.5)")
    design.add_argument("--delta", type=float, required=True, help="efficacy margin, probability scale")
    design.add_argument("--d", type=float, default=0.15, help="safety margin, probability scale (default: 0.15)")
    design.add_argument("--phi", type=float, default=0.0, help="efficacy/safety correlation (default: 0)")
    design.add_argument("--alpha", type=float, default=0.8, help="PCS target for both scenarios (default: 0.8)")
    design.add_argument("--alpha-L", type=float, help="PCS target when the lower dose is better")
    design.add_argument("--alpha-H", type=float, help="PCS target when the higher dose is better")
    design.add_argument("--utilities", type=float, nargs=4, metavar=("U1", "U2", "U3", "U4"),
                        help="utility scores (default: derived from delta and d)")
    design.add_argument("--rose", action="store_true", help="efficacy-only design (q and d ignored)")
    design.add_argument("--method", choices=["approx", "exact", "both"], default="approx",
                        help="normal approximation, exact lattice search, or both (default: approx)")
    design.add_argument("--allow-negative", action="store_true", help="allow negative thresholds in the exact search; "
                        "without it thresholds are kept at 0 or above")
    design.add_argument("--n-cap", type=int, default=DEFAULT_N_CAP,
                        help=f"largest n the exact search tries (default: {DEFAULT_N_CAP})")
    design.add_argument("--out", help="write the design rows to this CSV file")
    design.set_defaults(func=cmd_design)

    bias = subparsers.add_parser("bias", help="selection-induced bias of the chosen dose")
    _add_plan_arguments(bias)
    bias.set_defaults(func=cmd_bias)

    type1 = subparsers.add_parser("type1", help="Type I error of the pooled confirmatory test")
    _add_plan_arguments(type1)
    type1.add_argument("--p0", type=float, help="null response rate (default: --p)")
    type1.add_argument("--test", choices=["z", "binomial", "landmark", "exp", "cox"], default="z",
                       help="confirmatory test (default: z)")
    type1.set_defaults(func=cmd_type1)

    simulate = subparsers.add_parser("simulate", help="Monte Carlo batch from a JSON config")
    simulate.add_argument("config", help="JSON config with 'defaults' and 'scenarios'")
    simulate.add_argument("--out", default="data/results", help="output directory (default: data/results)")
    simulate.add_argument("--replications", type=int, help="override replications per scenario")
    simulate.add_argument("--seed", type=int, help="override the seed of every scenario")
    simulate.set_defaults(func=cmd_simulate)

    reproduce = subparsers.add_parser("reproduce", help="regenerate a published table and diff it")
    reproduce.add_argument("table", type=int, choices=range(1, 7), help="table number, 1-6")
    reproduce.add_argument("--method", choices=["approx", "exact", "both"], default="both",
                           help="Table 1 sizing method (default: both)")
    reproduce.add_argument("--pcs", action="store_true", help="Table 1: add simulated PCS columns")
    reproduce.add_argument("--strict", action="store_true", help="exit 4 when any cell is outside tolerance")
    reproduce.add_argument("--out", default="data/results", help="output directory (default: data/results)")
    reproduce.add_argument("--replications", type=int, default=DEFAULT_REPLICATIONS,
                           help=f"Monte Carlo replications (default: {DEFAULT_REPLICATIONS:,})")
    reproduce.add_argument("--seed", type=int, default=2024, help="random seed (default: 2024)")
    reproduce.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format='%(asctime)s - %(levelname)s - %(message)s')
    try:
        args.workers = args.workers or default_workers()
        return args.func(args)
    except ConfigError as e:
        for problem in e.problems:
            logger.error(f"Config: {problem}")
        return EXIT_INPUT
    except (DomainError, ContractError) as e:
        logger.error(str(e))
        return EXIT_INPUT
    except ResourceCapError as e:
        logger.error(str(e))
        if e.best is not None:
            logger.error(f"Best PCS pair found: {e.best}")
        return EXIT_CAP


if __name__ == "__main__":
    sys.exit(main())
