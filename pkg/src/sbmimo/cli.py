"""Command line interface.

Subcommands:
  run       Monte-Carlo evaluation of the estimators; writes CSV tables
            (and PNG figures unless --no-figures) into the output directory.
  converge  Convergence study of the semi-blind estimator for different
            initializations; writes converge.csv (+ figure).
  check     Quick self-test on tiny instances; exit code 0 iff all pass.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import estimators, evaluation, experiment, numerics, report, signalmodel
from .errors import SbmimoError
from .scenario import Scenario, allocate_pilots, load_scenario


def _parse_methods(text: str):
    methods = tuple(m.strip() for m in text.split(",") if m.strip())
    return methods


def _build_plan(args) -> experiment.ExperimentPlan:
    scenario = load_scenario(args.config)
    kwargs = dict(scenario=scenario, out_dir=args.out, workers=args.workers)
    if args.drops is not None:
        kwargs["drops"] = args.drops
    if args.methods is not None:
        kwargs["methods"] = _parse_methods(args.methods)
    if getattr(args, "sweep", None):
        kwargs["sweep"] = tuple(int(t) for t in args.sweep.split(","))
    return experiment.ExperimentPlan(**kwargs)


def cmd_run(args) -> int:
    plan = _build_plan(args)
    paths = experiment.run_experiment(plan)
    if not args.no_figures:
        paths += report.render_all(paths)
    for p in paths:
        print(p)
    return 0


def cmd_converge(args) -> int:
    plan = _build_plan(args)
    if "semi_blind" not in plan.methods:
        plan.methods = tuple(plan.methods) + ("semi_blind",)
    result = experiment.run_convergence_study(plan)
    path = experiment.write_convergence_csv(result, plan.out_dir)
    paths = [path]
    if not args.no_figures:
        paths.append(report.render_figure(path))
    for p in paths:
        print(p)
    return 0


def cmd_check(args) -> int:
    """Run fast oracle checks on tiny instances."""
    rng = np.random.default_rng(7)
    ok = True

    def report_line(name, passed):
        nonlocal ok
        ok = ok and passed
        print(f"{'PASS' if passed else 'FAIL'}  {name}")

    # gradient of the semi-blind objective vs finite differences
    sc = Scenario(L=3, K=1, M=6, T_ul=8, T_tr=2, rho_ul=1.0, seed=1)
    pilots = allocate_pilots(sc, rng)
    beta = rng.uniform(0.2, 2.0, sc.n_users)
    ch = signalmodel.draw_channels(beta, sc.M, rng)
    Y_ul, _ = signalmodel.synth_uplink_data(ch, sc.rho_ul, sc.T_ul, rng)
    Y_tr = signalmodel.synth_training(ch, sc.rho_tr, pilots, rng)
    H = signalmodel.crandn(rng, sc.M, sc.n_users)

    def obj(x):
        return estimators.semi_blind_objective(
            numerics.real_to_complex(x, H.shape), Y_ul, Y_tr, pilots, beta,
            sc.rho_ul, sc.rho_tr)

    g_ana = numerics.wirtinger_to_real_grad(
        estimators.semi_blind_gradient(H, Y_ul, Y_tr, pilots, beta,
                                       sc.rho_ul, sc.rho_tr))
    g_num = numerics.finite_diff_grad(obj, numerics.complex_to_real(H))
    rel = np.linalg.norm(g_ana - g_num) / np.linalg.norm(g_num)
    report_line(f"semi-blind gradient vs finite differences (rel={rel:.2e})",
                rel < 1e-5)

    # blind singular values are stationary points
    beta_s = rng.uniform(0.1, 3.0, 4)
    sigma = np.sort(rng.uniform(1.0, 20.0, 4))[::-1]
    _, pi_inv = estimators.assign_permutation(beta_s)
    xi = estimators.blind_singular_values(sigma, beta_s, pi_inv, 2.0, 16)
    s2 = sigma ** 2
    bb = beta_s[pi_inv]
    x2 = xi ** 2
    deriv = (s2 / 2.0 / (x2 + 0.5) ** 2 - 16 / (x2 + 0.5) - 1.0 / bb)
    active = x2 > 0
    stat = np.all(np.abs(deriv[active]) < 1e-9) if active.any() else True
    report_line("blind singular values satisfy stationarity", bool(stat))

    # pilot contamination identity at zero noise
    sc2 = Scenario(L=3, K=2, M=4, T_ul=4, T_tr=2, seed=3)
    pil2 = allocate_pilots(sc2, rng)
    ch2 = signalmodel.draw_channels(rng.uniform(0.5, 2, sc2.n_users),
                                   sc2.M, rng)
    Ytr2 = signalmodel.synth_training(ch2, sc2.rho_tr, pil2, rng,
                                      noise_scale=0.0)
    ls = estimators.ls_estimate(Ytr2, pil2.cell_block(0), sc2.rho_tr)
    total = sum(ch2.H[:, i * 2:(i + 1) * 2] for i in range(3))
    err = np.linalg.norm(ls - total) / np.linalg.norm(total)
    report_line(f"pilot contamination identity (rel={err:.2e})", err < 1e-12)

    # MF equals ZF on orthogonal-column estimates
    Q = np.linalg.qr(signalmodel.crandn(rng, 8, 3))[0] * [2.0, 1.0, 0.5]
    ang = max(evaluation.subspace_angle(evaluation.mf_precoder(Q)[:, j],
                                        evaluation.zf_precoder(Q)[:, j])
              for j in range(3))
    report_line(f"MF/ZF equivalence for orthogonal estimates "
                f"(max angle={ang:.2e} deg)", ang < 1e-7)

    return 0 if ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sbmimo",
        description="Multi-cell massive MIMO channel estimation simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True,
                        help="scenario config file (JSON)")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--drops", type=int, default=None,
                        help="Monte-Carlo drops")
    common.add_argument("--methods", default=None,
                        help="comma separated subset of "
                             f"{','.join(experiment.ALL_METHODS)}")
    common.add_argument("--workers", type=int, default=1,
                        help="parallel worker processes")
    common.add_argument("--no-figures", action="store_true",
                        help="skip PNG rendering")

    p_run = sub.add_parser("run", parents=[common],
                           help="run the Monte-Carlo evaluation")
    p_run.add_argument("--sweep", default=None,
                       help="comma separated T_ul values for the rate sweep")
    p_run.set_defaults(func=cmd_run)

    p_conv = sub.add_parser("converge", parents=[common],
                            help="run the convergence-vs-initialization study")
    p_conv.set_defaults(func=cmd_converge)

    p_check = sub.add_parser("check", help="run quick self-tests")
    p_check.set_defaults(func=cmd_check)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SbmimoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
