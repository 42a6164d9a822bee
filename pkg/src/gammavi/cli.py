"""Command-line experiment runner.

::

    gammavi fit   --model epm --opt adadelta --momentum 0.9 --iters 1000 --out runs/epm
    gammavi sweep --model epm --grid opt=sgd,adagrad,rmsprop,adadelta --grid momentum=1,0.9
    gammavi eval  runs/epm --samples 100

``fit`` writes ``manifest.json`` (the resolved configuration), and for each
fit a ``trace.csv`` and ``qparams.json``. EPM runs put those in one
``split_XX`` directory per train/test split. ``eval`` rebuilds the data from
the manifest and writes ``metrics.json``. ``sweep`` writes ``results.csv``
with one row per grid cell.

The default output directory is ``$GAMMAVI_OUTPUT_DIR`` or ``./runs``.
Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

import argparse
import concurrent.futures
import csv
import itertools
import json
import logging
import os
import sys

import numpy as np

from gammavi import __version__
from gammavi.data_io import (SplitSpec, load_edge_list, load_matrix, load_qparams,
                             save_matrix, save_qparams, split_pairs, synth_epm,
                             synth_gpfa)
from gammavi.engine import (NormalState, VariationalState, fit_gamma_sgvb, fit_map,
                            fit_normal_sgvb)
from gammavi.epm import EpmModel, predict_link_prob, unflatten
from gammavi.errors import (DomainError, LayoutMismatchError, NonFiniteGradientError,
                            SolverError)
from gammavi.gpfa import GpfaData, GpfaModel, expected_covariance
from gammavi.metrics import (amari_error, empirical_cov, gaussian_perplexity,
                             ledoit_wolf_cov, roc_auc)
from gammavi.optim import OPTIMIZERS, OptimizerConfig

log = logging.getLogger("gammavi")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
NUMERIC_ERRORS = (SolverError, NonFiniteGradientError, FloatingPointError, DomainError,
                  np.linalg.LinAlgError)
ALGOS = ("gamma_sgvb", "norm_sgvb", "map")
ENV_OUT = "GAMMAVI_OUTPUT_DIR"


class ConfigError(Exception):
    """Invalid configuration; the message names the offending flag."""


# ---------------------------------------------------------------- arguments

def _add_run_args(p):
    g = p.add_argument_group("model and inference")
    g.add_argument("--model", choices=("epm", "gpfa"), default="epm")
    g.add_argument("--algo", choices=ALGOS, default="gamma_sgvb")
    g.add_argument("--opt", choices=OPTIMIZERS, default="adadelta")
    g.add_argument("--rho", type=float, default=0.9, help="AdaDelta weight on the new squared term")
    g.add_argument("--eps", type=float, default=1e-4, help="AdaDelta epsilon")
    g.add_argument("--momentum", type=float, default=0.9,
                   help="lambda in v <- lambda*g + (1-lambda)*v; 1 disables momentum")
    g.add_argument("--lr", type=float, default=0.01, help="fixed step for --opt sgd")
    g.add_argument("--k", type=int, default=10, help="truncation level / number of factors")
    g.add_argument("--iters", type=int, default=1000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--tau-fixed", type=float, default=None,
                   help="GPFA: hold the noise precision fixed instead of inferring it")

    d = p.add_argument_group("data")
    d.add_argument("--data", default=None,
                   help="edge list (epm) or delimited matrix (gpfa); omit to synthesize")
    d.add_argument("--synth-nodes", type=int, default=40, help="synthetic EPM node count")
    d.add_argument("--blocks", default=None,
                   help="synthetic EPM planted two-block strengths 'within,between'")
    d.add_argument("--synth-d", type=int, default=50)
    d.add_argument("--synth-k", type=int, default=10, help="true number of factors")
    d.add_argument("--synth-n", type=int, default=1000)
    d.add_argument("--noise-var", type=float, default=0.1)
    d.add_argument("--synth-seed", type=int, default=None, help="defaults to --seed")
    d.add_argument("--holdout", type=float, default=0.2,
                   help="EPM: fraction of pairs held out (0 fits the full graph)")
    d.add_argument("--n-splits", type=int, default=1)
    d.add_argument("--stratified", action="store_true")
    d.add_argument("--test-fraction", type=float, default=0.2,
                   help="GPFA: fraction of rows held out for perplexity")

    o = p.add_argument_group("output")
    o.add_argument("--out", default=None, help=f"output directory (default ${ENV_OUT} or ./runs)")
    o.add_argument("--window", type=int, default=100, help="smoothing window for the final ELBO")
    o.add_argument("--config", default=None,
                   help="manifest.json of an earlier run; its config becomes the defaults")


def build_parser():
    parser = argparse.ArgumentParser(prog="gammavi", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"gammavi {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit one configuration")
    _add_run_args(p)

    p = sub.add_parser("sweep", help="fit a grid of configurations")
    _add_run_args(p)
    p.add_argument("--grid", action="append", default=[], metavar="FLAG=V1,V2,...",
                   help="axis of the grid, e.g. opt=sgd,adadelta or rho=0.7,0.9; repeatable")
    p.add_argument("--jobs", type=int, default=1, help="worker threads")

    p = sub.add_parser("eval", help="evaluate a fitted run directory")
    p.add_argument("run_dir")
    p.add_argument("--samples", type=int, default=100, help="posterior samples S")
    p.add_argument("--center", action="store_true",
                   help="center the data for the empirical and Ledoit-Wolf baselines")
    p.add_argument("--out", default=None, help="metrics file (default RUN_DIR/metrics.json)")
    return parser


CONFIG_KEYS = ("model", "algo", "opt", "rho", "eps", "momentum", "lr", "k", "iters", "seed",
               "tau_fixed", "data", "synth_nodes", "blocks", "synth_d", "synth_k", "synth_n",
               "noise_var", "synth_seed", "holdout", "n_splits", "stratified", "test_fraction",
               "window")


def resolve_config(args):
    """Validate the parsed flags and return a plain dict."""
    cfg = {k: getattr(args, k) for k in CONFIG_KEYS}
    if cfg["synth_seed"] is None:
        cfg["synth_seed"] = cfg["seed"]
    if cfg["data"] is not None:
        cfg["data"] = os.path.abspath(cfg["data"])
        if not os.path.isfile(cfg["data"]):
            raise ConfigError(f"--data: file not found: {cfg['data']}")
    if cfg["blocks"] is not None:
        try:
            w, b = (float(v) for v in str(cfg["blocks"]).split(","))
        except ValueError:
            raise ConfigError(f"--blocks: expected 'within,between', got {cfg['blocks']!r}") from None
        if w < 0 or b < 0:
            raise ConfigError("--blocks: strengths must be >= 0")
        cfg["blocks"] = f"{w!r},{b!r}"
    for flag, ok in (("--k", cfg["k"] >= 1), ("--iters", cfg["iters"] >= 0),
                     ("--n-splits", cfg["n_splits"] >= 1),
                     ("--holdout", 0.0 <= cfg["holdout"] < 1.0),
                     ("--test-fraction", 0.0 <= cfg["test_fraction"] < 1.0),
                     ("--synth-nodes", cfg["synth_nodes"] >= 2),
                     ("--synth-d", cfg["synth_d"] >= 1), ("--synth-k", cfg["synth_k"] >= 1),
                     ("--synth-n", cfg["synth_n"] >= 1), ("--noise-var", cfg["noise_var"] > 0),
                     ("--window", cfg["window"] >= 1),
                     ("--tau-fixed", cfg["tau_fixed"] is None or cfg["tau_fixed"] > 0)):
        if not ok:
            raise ConfigError(f"{flag}: value out of range")
    try:
        optimizer_config(cfg)
    except ValueError as exc:
        # OptimizerConfig messages start with the field name
        field = str(exc).split()[0]
        flag = field if field in ("momentum", "rho", "eps", "lr") else "opt"
        raise ConfigError(f"--{flag}: {exc}") from None
    return cfg


def optimizer_config(cfg):
    return OptimizerConfig(name=cfg["opt"], momentum=cfg["momentum"], rho=cfg["rho"],
                           eps=cfg["eps"], lr=cfg["lr"])


# ---------------------------------------------------------------- data

def load_epm(cfg):
    """Full graph plus the ground truth when synthetic (else None)."""
    if cfg["data"]:
        return _read_data(load_edge_list, cfg["data"]), None
    blocks = None
    if cfg["blocks"]:
        blocks = tuple(float(v) for v in cfg["blocks"].split(","))
    return synth_epm(cfg["synth_nodes"], 2 if blocks else cfg["synth_k"],
                     seed=cfg["synth_seed"], blocks=blocks)


def _read_data(loader, path):
    try:
        return loader(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"--data: cannot read {path}: {exc}") from None


def epm_splits(cfg, data):
    if cfg["holdout"] == 0:
        return None
    spec = SplitSpec(cfg["holdout"], seed=cfg["seed"], n_splits=cfg["n_splits"],
                     stratified=cfg["stratified"])
    return split_pairs(data, spec)


def load_gpfa(cfg):
    """``(Y_train, Y_test, W_true or None)`` with a seeded row split."""
    if cfg["data"]:
        Y, W = _read_data(load_matrix, cfg["data"]), None
    else:
        Y, W = synth_gpfa(cfg["synth_d"], cfg["synth_k"], cfg["synth_n"],
                          seed=cfg["synth_seed"], noise_var=cfg["noise_var"])
    n_test = int(round(cfg["test_fraction"] * len(Y)))
    if n_test >= len(Y):
        raise ConfigError("--test-fraction: leaves no training rows")
    perm = np.random.default_rng([cfg["seed"], 7919]).permutation(len(Y))
    return Y[np.sort(perm[n_test:])], Y[np.sort(perm[:n_test])], W


def make_model(cfg, train):
    if cfg["model"] == "epm":
        return EpmModel(train, cfg["k"])
    return GpfaModel(GpfaData.from_samples(train), cfg["k"], tau_fixed=cfg["tau_fixed"])


# ---------------------------------------------------------------- fitting

def run_fit(cfg, model):
    """Run the configured algorithm; returns ``(state, trace or None)``."""
    opt = optimizer_config(cfg)
    if cfg["algo"] == "gamma_sgvb":
        tr = fit_gamma_sgvb(model, optimizer=opt, iterations=cfg["iters"], seed=cfg["seed"])
        return tr.final_state, tr
    if cfg["algo"] == "norm_sgvb":
        tr = fit_normal_sgvb(model, optimizer=opt, iterations=cfg["iters"], seed=cfg["seed"])
        return tr.final_state, tr
    # A fixed all-ones start is a symmetric saddle for both models, so MAP
    # starts from one draw of the default G(1, 1) posterior instead.
    x0 = VariationalState.default(model.latent_dim).sample(np.random.default_rng(cfg["seed"]))
    return fit_map(model, x0, optimizer=opt, iterations=cfg["iters"]), None


def _write_trace(trace, path, model):
    if trace is not None:
        trace.to_csv(path)
    else:
        with open(path, "w") as fh:
            fh.write("iteration,elbo,wall_ms\n")


def _manifest(cfg, model):
    return {"tool": "gammavi", "version": __version__, "model": cfg["model"],
            "layout": model.layout, "latent_dim": model.latent_dim, "K": cfg["k"],
            "seed": cfg["seed"], "iterations": cfg["iters"], "config": cfg}


def _write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def cmd_fit(cfg, out):
    os.makedirs(out, exist_ok=True)
    summary = {}
    if cfg["model"] == "epm":
        data, _ = load_epm(cfg)
        splits = epm_splits(cfg, data)
        trains = [s.train for s in splits] if splits else [data]
        for s, train in enumerate(trains):
            model = make_model(cfg, train)
            state, trace = run_fit(cfg, model)
            d = os.path.join(out, f"split_{s:02d}")
            os.makedirs(d, exist_ok=True)
            _write_trace(trace, os.path.join(d, "trace.csv"), model)
            save_qparams(state, os.path.join(d, "qparams.json"), _manifest(cfg, model))
            if trace is not None:
                summary[f"split_{s:02d}"] = trace.smoothed_elbo(cfg["window"])
    else:
        Y_train, _, _ = load_gpfa(cfg)
        model = make_model(cfg, Y_train)
        state, trace = run_fit(cfg, model)
        _write_trace(trace, os.path.join(out, "trace.csv"), model)
        save_qparams(state, os.path.join(out, "qparams.json"), _manifest(cfg, model))
        if trace is not None:
            summary["smoothed_elbo"] = trace.smoothed_elbo(cfg["window"])
    _write_json(_manifest(cfg, model), os.path.join(out, "manifest.json"))
    for k, v in summary.items():
        log.info("%s: smoothed ELBO %.6g", k, v)
    return summary


# ---------------------------------------------------------------- evaluation

def _posterior_draws(state, rng, S):
    if isinstance(state, (VariationalState, NormalState)):
        return np.atleast_2d(state.sample(rng, size=S))
    return np.atleast_2d(state)       # point estimate: every "draw" is the same


def cmd_eval(run_dir, S=100, center=False, out=None):
    if S < 1:
        raise ConfigError("--samples: must be >= 1")
    mpath = os.path.join(run_dir, "manifest.json")
    if not os.path.isfile(mpath):
        raise ConfigError(f"run_dir: no manifest.json in {run_dir}")
    with open(mpath) as fh:
        cfg = json.load(fh)["config"]
    rng = np.random.default_rng([cfg["seed"], 104729])
    res = {"model": cfg["model"], "algo": cfg["algo"], "samples": S, "low_precision": S < 10}

    if cfg["model"] == "epm":
        data, _ = load_epm(cfg)
        splits = epm_splits(cfg, data)
        if not splits:
            raise ConfigError("--holdout: the run was fitted without held-out pairs")
        aucs = []
        for s, sp in enumerate(splits):
            model = make_model(cfg, sp.train)
            state, _ = load_qparams(os.path.join(run_dir, f"split_{s:02d}", "qparams.json"),
                                    expect_layout=model.layout)
            lats = [unflatten(x, sp.train.n_nodes, cfg["k"]) for x in _posterior_draws(state, rng, S)]
            prob = predict_link_prob(np.stack([l.W for l in lats]), np.stack([l.r for l in lats]),
                                     sp.test_pairs)
            aucs.append(roc_auc(prob, sp.test_labels))
        res.update(auc=aucs, auc_mean=float(np.mean(aucs)), auc_sd=float(np.std(aucs)))
    else:
        Y_train, Y_test, W_true = load_gpfa(cfg)
        model = make_model(cfg, Y_train)
        state, _ = load_qparams(os.path.join(run_dir, "qparams.json"), expect_layout=model.layout)
        W_s, tau_s = model.split_samples(_posterior_draws(state, rng, S))
        cov = expected_covariance(W_s, tau_s)
        W_mean = W_s.mean(axis=0)
        save_matrix(cov, os.path.join(run_dir, "expected_cov.csv"))
        save_matrix(W_mean, os.path.join(run_dir, "loadings.csv"))
        if len(Y_test):
            res["perplexity_gpfa"] = gaussian_perplexity(Y_test, cov)
            res["perplexity_empirical"] = _perplexity_or_none(Y_test, lambda: empirical_cov(Y_train, center))
            res["perplexity_lw"] = _perplexity_or_none(Y_test, lambda: ledoit_wolf_cov(Y_train, center))
        if W_true is not None:
            res["amari"] = amari_error(W_true, W_mean)
    _write_json(res, out or os.path.join(run_dir, "metrics.json"))
    return res


def _perplexity_or_none(Y_test, make_cov):
    # A singular baseline covariance has no finite perplexity; report null.
    try:
        return gaussian_perplexity(Y_test, make_cov())
    except DomainError:
        return None


# ---------------------------------------------------------------- sweep

GRID_TYPES = {"opt": str, "algo": str, "model": str, "rho": float, "eps": float,
              "momentum": float, "lr": float, "k": int, "iters": int, "seed": int}
RESULT_COLS = ("final_elbo", "smoothed_elbo", "final_log_joint", "wall_s", "error")


def parse_grid(items):
    axes = {}
    for item in items:
        key, sep, vals = item.partition("=")
        key = key.strip().lstrip("-").replace("-", "_")
        if not sep or key not in GRID_TYPES:
            raise ConfigError(f"--grid: expected FLAG=V1,V2 with FLAG in {sorted(GRID_TYPES)}, got {item!r}")
        try:
            axes[key] = [GRID_TYPES[key](v) for v in vals.split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"--grid: bad value in {item!r}") from None
    return axes


def _sweep_cell(cfg, model):
    row = dict.fromkeys(RESULT_COLS, "")
    try:
        resolve_config(argparse.Namespace(**cfg))
        state, trace = run_fit(cfg, model)
        if trace is not None:
            row["final_elbo"] = float(trace.elbo[-1]) if len(trace.elbo) else float("nan")
            row["smoothed_elbo"] = trace.smoothed_elbo(cfg["window"])
            row["wall_s"] = trace.wall_time
        else:
            row["final_log_joint"] = float(model.log_joint(state))
    except (ConfigError, ValueError, *NUMERIC_ERRORS) as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def cmd_sweep(cfg, axes, out, jobs=1):
    """Cross product of ``axes`` on top of ``cfg``; one CSV row per cell.

    Sweeps compare ELBO traces, so EPM cells fit the full graph.
    """
    os.makedirs(out, exist_ok=True)
    keys = list(axes)
    cells = [dict(zip(keys, vals)) for vals in itertools.product(*axes.values())]
    data_cache = {}

    def model_for(c):
        key = (c["model"], c["k"])
        if key not in data_cache:
            if c["model"] == "epm":
                data_cache[key] = make_model(c, load_epm(c)[0])
            else:
                data_cache[key] = make_model(c, load_gpfa(c)[0])
        return data_cache[key]

    jobs_in = []
    for cell in cells:
        c = dict(cfg, **cell)
        jobs_in.append((c, model_for(c)))
    if jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(jobs) as ex:
            rows = list(ex.map(lambda a: _sweep_cell(*a), jobs_in))
    else:
        rows = [_sweep_cell(*a) for a in jobs_in]

    path = os.path.join(out, "results.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys + list(RESULT_COLS))
        for cell, row in zip(cells, rows):
            w.writerow([cell[k] for k in keys] + [row[c] for c in RESULT_COLS])
    _write_json({"tool": "gammavi", "version": __version__, "config": cfg, "grid": axes},
                os.path.join(out, "manifest.json"))
    return path, rows


# ---------------------------------------------------------------- entry point

def _default_out():
    return os.environ.get(ENV_OUT) or os.path.join(os.getcwd(), "runs")


def _apply_config_file(parser, argv, path):
    try:
        with open(path) as fh:
            saved = json.load(fh)["config"]
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"--config: cannot read a run manifest from {path} ({exc})") from None
    sub = parser._subparsers._group_actions[0].choices[argv[0]]
    sub.set_defaults(**{k: v for k, v in saved.items() if k in CONFIG_KEYS})
    return parser.parse_args(argv)


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)     # argparse itself exits 2 on bad flags
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "eval":
            res = cmd_eval(args.run_dir, S=args.samples, center=args.center, out=args.out)
            print(json.dumps(res, indent=1, sort_keys=True))
            return EXIT_OK
        if args.config:
            cmd_index = argv.index(args.command)
            args = _apply_config_file(parser, argv[cmd_index:], args.config)
        cfg = resolve_config(args)
        out = args.out or _default_out()
        if args.command == "fit":
            cmd_fit(cfg, out)
            print(out)
        else:
            path, rows = cmd_sweep(cfg, parse_grid(args.grid), out, jobs=args.jobs)
            failed = sum(bool(r["error"]) for r in rows)
            print(path)
            if failed:
                log.warning("%d of %d sweep cells failed; see the error column", failed, len(rows))
        return EXIT_OK
    except ConfigError as exc:
        print(f"gammavi: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (LayoutMismatchError, FileNotFoundError) as exc:
        print(f"gammavi: error: run directory does not match its manifest: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        print(f"gammavi: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
