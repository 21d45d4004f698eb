"""Command-line front end: ``emlaplace fit | laplace | check``.

Exit codes: 0 ok, 1 bad input, 2 EM did not converge, 3 Hessian or mode
failure, 4 oracle check failure.

The environment variable ``EMLAPLACE_SEED`` is reserved for future
stochastic features and is currently ignored.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import logging
import os
import re
import sys
import time
from pathlib import Path

import numpy as np

from . import diffnum as dn
from .em import EmConfig, em_fit
from .errors import EmFitError, EmLaplaceError
from .laplace import grad_log_joint, laplace_posterior
from .models import CoinMixture, GaussianMixture, GaussianPrior
from .oracle import run_checks
from .report import RunReport, dumps

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NOT_CONVERGED = 2
EXIT_HESSIAN = 3
EXIT_CHECK = 4

log = logging.getLogger("emlaplace")


class InputError(Exception):
    pass


def _floats(text, what):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InputError(f"--{what}: expected comma-separated numbers, got {text!r}") from None


def read_data(path, family):
    """Parse a data file; returns (records, raw bytes)."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    rows = []
    for lineno, row in enumerate(csv.reader(raw.decode("utf-8").splitlines()), start=1):
        cells = [c.strip() for c in row]
        if not cells or all(c == "" for c in cells):
            continue
        try:
            if family == "gmm":
                if len(cells) != 1:
                    raise ValueError("expected one value")
                rows.append(float(cells[0]))
            else:
                if len(cells) != 2:
                    raise ValueError("expected successes,trials")
                s, t = int(cells[0]), int(cells[1])
                if t < 1 or not 0 <= s <= t:
                    raise ValueError("need 0 <= successes <= trials and trials >= 1")
                rows.append((s, t))
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from None
        if family == "gmm" and not np.isfinite(rows[-1]):
            raise InputError(f"{path}:{lineno}: non-finite value")
    if not rows:
        raise InputError(f"{path}: no records")
    return np.asarray(rows, dtype=float), raw


def build_model(args):
    K = args.components
    weights = _floats(args.weights, "weights") if args.weights else [1.0 / K] * K
    if len(weights) != K:
        raise InputError(f"--weights has {len(weights)} entries for {K} components")
    prior = None
    if args.prior_var is not None:
        pv = _floats(args.prior_var, "prior-var")
        pm = _floats(args.prior_mean, "prior-mean") if args.prior_mean else [0.0]
        if len(pv) not in (1, K) or len(pm) not in (1, K):
            raise InputError("prior mean/variance need 1 or K entries")
        prior = GaussianPrior(pm, pv, size=K)
    elif args.prior_mean:
        raise InputError("--prior-mean requires --prior-var")
    if args.model == "gmm":
        variances = _floats(args.variances, "variances") if args.variances else [1.0] * K
        if len(variances) != K:
            raise InputError(f"--variances has {len(variances)} entries for {K} components")
        return GaussianMixture(weights, variances, prior)
    return CoinMixture(weights, prior)


def _initial_theta(args, model, data):
    text = args.init_means if args.model == "gmm" else args.init_logodds
    if text is None:
        return model.default_init(data)
    theta = _floats(text, "init-means" if args.model == "gmm" else "init-logodds")
    if len(theta) != model.n_params:
        raise InputError(f"initial point has {len(theta)} entries, expected {model.n_params}")
    return np.asarray(theta)


def _setup(args):
    try:
        model = build_model(args)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    data, raw = read_data(args.data, args.model)
    try:
        data = model.check_data(data)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    theta0 = _initial_theta(args, model, data)
    try:
        config = EmConfig(args.max_iters, args.tol_loglik, args.tol_param)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    digest = {"records": int(data.shape[0]), "sha256": hashlib.sha256(raw).hexdigest()}
    return model, data, theta0, config, digest


def _fit(args):
    model, data, theta0, config, digest = _setup(args)
    timings = {}
    t0 = time.perf_counter()
    try:
        trace = em_fit(model, data, theta0, config)
        diagnostic = None
    except EmFitError as exc:
        trace, diagnostic = exc.trace, str(exc)
    timings["em"] = time.perf_counter() - t0
    report = RunReport(
        command=args.command,
        model=model.describe(),
        data=digest,
        strategy=None,
        theta_init=[float(v) for v in theta0],
        theta_hat=[float(v) for v in trace.theta] if trace.iterates else [float(v) for v in theta0],
        em={
            "iterations": int(trace.n_iter) if trace.iterates else 0,
            "final_log_joint": float(trace.log_joint) if trace.iterates else None,
            "converged": bool(trace.converged),
            "reason": trace.reason if diagnostic is None else "error",
        },
        diagnostic=diagnostic,
        timings=None if args.no_timings else timings,
    )
    return model, data, trace, report


def _emit(args, text):
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _strategy(args):
    return dn.DiffStrategy.from_name(args.strategy, args.step)


def _threads(args):
    return args.threads if args.threads else (os.cpu_count() or 1)


def cmd_fit(args):
    _, _, trace, report = _fit(args)
    _emit(args, report.dumps())
    return EXIT_OK if trace.converged else EXIT_NOT_CONVERGED


def cmd_laplace(args):
    model, data, trace, report = _fit(args)
    report.strategy = _strategy(args).kind
    if not trace.converged:
        _emit(args, report.dumps())
        return EXIT_NOT_CONVERGED
    t0 = time.perf_counter()
    try:
        post = laplace_posterior(model, data, trace.theta, _strategy(args), _threads(args))
    except EmLaplaceError as exc:
        report.diagnostic = str(exc)
        try:
            g = grad_log_joint(model, data, trace.theta)
            report.grad_max_norm = float(np.max(np.abs(g)))
        except EmLaplaceError:
            pass
        print(f"emlaplace: {exc}", file=sys.stderr)
        _emit(args, report.dumps())
        return EXIT_HESSIAN
    if report.timings is not None:
        report.timings["laplace"] = time.perf_counter() - t0
    report.grad_max_norm = post.grad_norm
    report.hessian = post.hessian.tolist()
    report.covariance = post.covariance.tolist()
    report.log_det_neg_lambda = post.log_det_neg_lambda
    report.log_evidence = post.log_evidence
    _emit(args, report.dumps())
    return EXIT_OK


def cmd_check(args):
    model, data, trace, report = _fit(args)
    strategy = _strategy(args)
    evidence = None
    results = []
    status = EXIT_OK
    try:
        if args.quadrature:
            try:
                evidence = laplace_posterior(model, data, trace.theta, strategy,
                                             _threads(args)).log_evidence
            except EmLaplaceError as exc:
                print(f"emlaplace: laplace: {exc}", file=sys.stderr)
                status = EXIT_CHECK
        results = run_checks(model, data, trace.theta, strategy, quadrature=args.quadrature,
                             perturb_grad=args.perturb_grad, laplace_evidence=evidence,
                             threads=_threads(args))
    except EmLaplaceError as exc:
        print(f"emlaplace: oracle error: {exc}", file=sys.stderr)
        return EXIT_CHECK
    if not all(r.passed for r in results):
        status = EXIT_CHECK

    if args.json:
        _emit(args, dumps({
            "theta": [float(v) for v in trace.theta],
            "em_reason": trace.reason,
            "checks": [r.to_dict() for r in results],
            "passed": status == EXIT_OK,
        }))
    else:
        lines = [f"theta = {', '.join(format(float(v), '.17g') for v in trace.theta)} "
                 f"(EM: {report.em['iterations']} iterations, {trace.reason})"]
        for r in results:
            if r.tolerance is None:
                lines.append(f"INFO  {r.name:<28} value={r.residual:.6g}")
            else:
                lines.append(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<28} "
                             f"residual={r.residual:.3e}  tol={r.tolerance:g}")
        lines.append("all checks passed" if status == EXIT_OK else "CHECKS FAILED")
        _emit(args, "\n".join(lines) + "\n")
    return status


def _common(p):
    p.add_argument("--model", choices=["gmm", "coin"], required=True)
    p.add_argument("--components", type=int, default=2)
    p.add_argument("--weights", help="comma-separated component weights (default uniform)")
    p.add_argument("--variances", help="gmm: comma-separated component variances (default 1)")
    p.add_argument("--prior-mean", help="prior mean, 1 or K values (default 0)")
    p.add_argument("--prior-var", help="prior variance, 1 or K values; omit for a flat prior")
    p.add_argument("--data", required=True, help="gmm: one value per line; coin: successes,trials")
    p.add_argument("--init-means", help="gmm: initial means (default: data quantiles)")
    p.add_argument("--init-logodds", help="coin: initial log-odds (default: evenly spaced)")
    p.add_argument("--max-iters", type=int, default=1000)
    p.add_argument("--tol-loglik", type=float, default=1e-13)
    p.add_argument("--tol-param", type=float, default=1e-8)
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--no-timings", action="store_true", help="omit wall-clock timings")


def _diff_opts(p):
    p.add_argument("--strategy", choices=["dual", "complex", "fd"], default="dual")
    p.add_argument("--step", type=float, default=None,
                   help="complex-step size or central-difference base step")
    p.add_argument("--threads", type=int, default=None,
                   help="threads for Hessian columns (default: all cores)")


def build_parser():
    parser = argparse.ArgumentParser(prog="emlaplace", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit by EM and report the mode")
    _common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("laplace", help="fit, then report the Laplace posterior and evidence")
    _common(p)
    _diff_opts(p)
    p.set_defaults(func=cmd_laplace)

    p = sub.add_parser("check", help="run oracle cross-checks at the fitted mode")
    _common(p)
    _diff_opts(p)
    p.add_argument("--quadrature", action="store_true",
                   help="also compare the Laplace evidence with grid quadrature (n <= 2)")
    p.add_argument("--perturb-grad", type=float, default=0.0,
                   help="test hook: add this to the gradient before checking it")
    p.add_argument("--json", action="store_true", help="emit JSON instead of text")
    p.set_defaults(func=cmd_check)
    return parser


_NEG_VALUE = re.compile(r"^-\.?\d")


def _join_negative_values(argv):
    # argparse reads "-2,2" as an option; rewrite "--opt -2,2" as "--opt=-2,2"
    out = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if (tok.startswith("--") and "=" not in tok and i + 1 < len(argv)
                and _NEG_VALUE.match(argv[i + 1])):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(_join_negative_values(argv))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    if args.components < 1:
        print("emlaplace: --components must be >= 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except InputError as exc:
        print(f"emlaplace: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
