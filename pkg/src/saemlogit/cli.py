"""Command line entry point: ``saemlogit fit|loglik|select|predict|simulate``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings

import numpy as np

from .data import DEFAULT_MISSING_TOKENS, load_csv, parse_covariates, read_table
from .exceptions import ParseError
from .inference import FitResult, bic, fit_model, obs_loglik
from .saem import SaemConfig
from .selection import exhaustive_select, forward_select, labels, predict_proba
from .simulation import METHODS, PRESETS, preset, replicate_study

logger = logging.getLogger("saemlogit")


def _tokens(args):
    return frozenset(args.missing_token) if args.missing_token else DEFAULT_MISSING_TOKENS


def _load(args, check_identifiable=True):
    return load_csv(args.input, args.response, missing_tokens=_tokens(args),
                    row_id_column=args.id_column, check_identifiable=check_identifiable)


def _config(args):
    return SaemConfig(k1=args.k1, tau=args.tau, n_iter=args.iters, mh_steps=args.mh_steps, seed=args.seed)


def _write_trace(trace, columns, path):
    names = ["intercept", *columns]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "gamma", "acceptance", *names])
        for k in range(len(trace)):
            acc = trace.acceptance[k]
            w.writerow([k + 1, repr(float(trace.gamma[k])), "" if np.isnan(acc) else repr(float(acc)),
                        *(repr(float(b)) for b in trace.beta[k])])


def _summary(res):
    names = ["intercept", *res.columns]
    lines = [f"{'coef':>12} {'estimate':>11} {'se':>9} {'lo':>9} {'hi':>9}"]
    for j, name in enumerate(names):
        lines.append(f"{name:>12} {res.theta.beta[j]:11.5f} {res.se[j]:9.5f} "
                     f"{res.ci_low[j]:9.5f} {res.ci_high[j]:9.5f}")
    lines.append(f"loglik {res.loglik_obs:.4f}  BIC {res.bic:.4f}")
    return "\n".join(lines)


def cmd_fit(args):
    d = _load(args)
    res = fit_model(d, _config(args), fim_samples=args.fim_samples, loglik_samples=args.loglik_samples,
                    level=args.level)
    res.to_json(args.out)
    if args.trace:
        _write_trace(res.trace, res.columns, args.trace)
    print(_summary(res))
    return 0


def cmd_loglik(args):
    fit = FitResult.from_json(args.fit)
    d = load_csv(args.input, args.response, missing_tokens=_tokens(args), columns=list(fit.columns),
                 row_id_column=args.id_column, check_identifiable=False)
    ll, rows = obs_loglik(fit.theta, d, S=args.samples, rng=np.random.default_rng(args.seed), per_row=True)
    print(f"loglik {ll!r}")
    print(f"bic {float(bic(ll, d.n, fit.active, d.p))!r}")
    if args.per_row:
        with open(args.per_row, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["row_id", "loglik"])
            for rid, v in zip(d.row_ids, rows):
                w.writerow([int(rid), repr(float(v))])
    return 0


def cmd_select(args):
    d = _load(args)
    search = exhaustive_select if args.method == "exhaustive" else forward_select
    model, fits = search(d, _config(args), S_loglik=args.loglik_samples, selection_iter=args.selection_iters)
    final = fits[-1]
    out = final.to_dict()
    out["selected"] = list(model.names(d.columns))
    out["method"] = args.method
    out["candidates"] = [{"active": [d.columns[j] for j in f.active], "bic": f.bic} for f in fits[:-1]]
    with open(args.out, "w") as fh:
        json.dump(out, fh, indent=2)
    print("selected:", ", ".join(out["selected"]) or "(intercept only)")
    print(_summary(final))
    return 0


def cmd_predict(args):
    fit = FitResult.from_json(args.fit)
    header, cells, lines = read_table(args.input, _tokens(args))
    missing_cols = [c for c in fit.columns if c not in header]
    if missing_cols:
        raise ParseError(f"columns not in header: {missing_cols}", line=1)
    x, mask = parse_covariates(cells, lines, [header.index(c) for c in fit.columns], _tokens(args))
    if args.id_column:
        k = header.index(args.id_column)
        ids = [int(row[k]) for row in cells]
    else:
        ids = list(range(len(cells)))
    prob = predict_proba(fit.theta, x, mask, S=args.samples, rng=np.random.default_rng(args.seed))
    lab = labels(prob, args.threshold)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row_id", "prob", "label"])
        for rid, pr, lb in zip(ids, prob, lab):
            w.writerow([rid, repr(float(pr)), int(lb)])
    print(f"wrote {len(ids)} predictions to {args.out}")
    return 0


def cmd_simulate(args):
    design_ = preset(args.design, n=args.n, rate=args.rate, separability=args.separability, seed=args.seed)
    cfg = SaemConfig(k1=args.k1, tau=args.tau, n_iter=args.iters, mh_steps=args.mh_steps, seed=args.seed)
    res = replicate_study(design_, args.reps, method=args.method, cfg=cfg, n_test=args.n_test,
                          seed=args.seed, out_dir=args.out)
    print(res.coverage.to_string(index=False))
    if res.failures:
        print(f"{len(res.failures)} replication(s) failed", file=sys.stderr)
    return 0


def _add_saem(p):
    g = p.add_argument_group("SAEM")
    g.add_argument("--k1", type=int, default=50, help="iterations with step size 1")
    g.add_argument("--tau", type=float, default=1.0, help="step-size decay exponent")
    g.add_argument("--iters", type=int, default=500)
    g.add_argument("--mh-steps", type=int, default=10)
    g.add_argument("--seed", type=int, default=0)


def _add_input(p, response=True):
    p.add_argument("--input", required=True)
    if response:
        p.add_argument("--response", default="y")
    p.add_argument("--missing-token", action="append", default=None,
                   help="cell content meaning missing (repeatable; default: empty and NA)")
    p.add_argument("--id-column", default=None, help="integer column with row identities")


def build_parser():
    ap = argparse.ArgumentParser(prog="saemlogit",
                                 description="Logistic regression with missing covariates by SAEM.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a model, write estimates and standard errors")
    _add_input(p)
    _add_saem(p)
    p.add_argument("--out", default="fit.json")
    p.add_argument("--trace", default=None, help="CSV of per-iteration coefficients")
    p.add_argument("--fim-samples", type=int, default=1000)
    p.add_argument("--loglik-samples", type=int, default=1000)
    p.add_argument("--level", type=float, default=0.95)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("loglik", help="observed log-likelihood and BIC of a fitted model")
    _add_input(p)
    p.add_argument("--fit", required=True)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--per-row", default=None, help="CSV of per-row log-densities")
    p.set_defaults(func=cmd_loglik)

    p = sub.add_parser("select", help="BIC model selection")
    _add_input(p)
    _add_saem(p)
    p.add_argument("--method", choices=("forward", "exhaustive"), default="forward")
    p.add_argument("--selection-iters", type=int, default=200)
    p.add_argument("--loglik-samples", type=int, default=1000)
    p.add_argument("--out", default="model.json")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("predict", help="probabilities for rows with missing covariates")
    _add_input(p, response=False)
    p.add_argument("--fit", required=True)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="preds.csv")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("simulate", help="replication study on a synthetic design")
    p.add_argument("--design", choices=PRESETS, default="default")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--rate", type=float, default=0.1)
    p.add_argument("--separability", type=float, default=1.0, help="factor applied to the true coefficients")
    p.add_argument("--reps", type=int, default=400)
    p.add_argument("--method", choices=METHODS, default="saem")
    p.add_argument("--n-test", type=int, default=100)
    _add_saem(p)
    p.add_argument("--out", default="study")
    p.set_defaults(func=cmd_simulate)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.verbose:
        warnings.simplefilter("default")
    try:
        return args.func(args)
    except (ValueError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
