"""``skaf`` command-line interface.

Verbs: generate, train, forecast, evaluate, bench, inspect-model. Every
verb takes ``--config FILE`` and any number of ``--set key=value``
overrides (see :mod:`skaf.config` for the grammar).

Exit codes: 0 success, 2 configuration error, 3 data error (bad or
missing files, dimension problems), 4 numerical failure.

Environment: ``SKAF_DATA_DIR`` sets the default data directory and
``SKAF_THREADS`` caps the BLAS thread pool.
"""

import argparse
import csv
import hashlib
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import config as cfgmod
from . import dynamics, io, kaf, metrics
from .errors import ConfigError, DataError, NumericError, SkafError
from .features import median_bandwidth

log = logging.getLogger("skaf")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
MEDIAN_SAMPLE = 1000


# data layout -----------------------------------------------------------------

def train_path(cfg):
    return os.path.join(cfg.data_dir, "train.traj")


def test_path(cfg, i):
    return os.path.join(cfg.data_dir, f"test_{i + 1}.traj")


def manifest_path(cfg):
    return os.path.join(cfg.data_dir, "manifest.cfg")


def _file_hash(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# generate --------------------------------------------------------------------

def cmd_generate(cfg, csv_export=False):
    """Training trajectory, chained test sets and a manifest under ``data_dir``."""
    os.makedirs(cfg.data_dir, exist_ok=True)
    p = cfg.params()
    # the family of models for the largest lead needs n_train + q_max raw snapshots
    n_raw = cfg.n_train + max(cfg.resolved_leads() + [cfg.q])
    t0 = time.perf_counter()
    train = dynamics.generate(p, n=n_raw, burn_in=cfg.burn_in, seed=cfg.data_seed)
    tests = dynamics.split_test_chain(train.final_state, p, cfg.m_test, cfg.test_sets)
    paths = [train_path(cfg)] + [test_path(cfg, i) for i in range(cfg.test_sets)]
    for traj, path in zip([train] + tests, paths):
        io.write_trajectory(traj, path)
        if csv_export:
            obs = traj.data[cfg.covariate_rows()]
            io.write_csv(obs, path[:-5] + ".csv", io.coordinate_names(obs.shape[0], p))
    with open(manifest_path(cfg), "w") as fh:
        fh.write(f"# skaf manifest; config digest {cfg.digest()}\n")
        fh.write(cfgmod.render(cfg))
        for path in paths:
            fh.write(f"# sha256 {os.path.basename(path)} {_file_hash(path)}\n")
    log.info("generated %s: %d training snapshots, %d x %d test (%.2fs)",
             cfg.system, n_raw, cfg.test_sets, cfg.m_test, time.perf_counter() - t0)
    return paths


# training --------------------------------------------------------------------

def _open_train(cfg):
    path = train_path(cfg)
    if not os.path.isfile(path):
        raise DataError(f"training file not found: {path} (run 'skaf generate' first)")
    return io.TrajectoryFile(path)


def _response_rows(cfg, d_obs):
    if cfg.responses == "all":
        return list(range(d_obs))
    return [cfg.variable]


def _gamma(cfg, U):
    g = cfg.resolved_gamma()
    if g != "median_rule":
        return float(g)
    step = max(1, U.shape[1] // MEDIAN_SAMPLE)
    return median_bandwidth(U[:, ::step][:, :MEDIAN_SAMPLE])


def _raw_observables(cfg, f, n):
    rows = cfg.covariate_rows()
    mm = f._map()
    return np.array(mm[:n].T[rows], dtype=np.float64)


def train_one(cfg, q=None, n=None, method=None, ell=None, gamma=None, s=None):
    """Train a single model at lead ``q`` from the generated training file."""
    q = cfg.q if q is None else q
    method = method or cfg.method
    f = _open_train(cfg)
    n = cfg.n_train if n is None else n
    if n + q > f.n:
        raise DataError(f"training file has {f.n} snapshots, need n + q = {n + q}")
    rows = cfg.covariate_rows()
    d_obs = len(range(f.d)[rows])
    resp = _response_rows(cfg, d_obs)
    ell = cfg.resolved_ell() if ell is None else ell
    if gamma is None:
        gamma = _gamma(cfg, _raw_observables(cfg, f, min(n, 20 * MEDIAN_SAMPLE)))
    t0 = time.perf_counter()
    if method == "streaming":
        s = cfg.resolved_s(n) if s is None else s
        view = _Prefix(f, rows, n + q)
        resp_rows = np.arange(f.d)[rows][resp]
        data = kaf.PairedStream(view, _Prefix(f, resp_rows, n + q), q, cfg.block)
        tc = kaf.TrainConfig(q=q, ell=ell, gamma=gamma, s=s, mu=cfg.mu,
                             feature_seed=cfg.feature_seed, sketch_seed=cfg.sketch_seed,
                             block=cfg.block, passes=cfg.passes)
        model = kaf.train_streaming(data, tc)
        passes = data.passes
    else:
        X = _raw_observables(cfg, f, n + q)
        U, G = X[:, :n], X[resp, q:q + n]
        if method == "naive":
            model = kaf.train_naive(U, G, ell, gamma, cfg.mu, q=q, max_n=cfg.naive_max_n)
        else:
            model = kaf.LinearModel(kaf.train_linear(U, G), q)
            resid = np.linalg.norm(G - model.A @ U) / max(np.linalg.norm(G), 1e-300)
            log.info("linear fit relative residual %.3e", resid)
        passes = 1
    elapsed = time.perf_counter() - t0
    log.info("train %s: n=%d s=%s ell=%d gamma=%g q=%d passes=%d wall=%.3fs",
             method, n, getattr(model, "s", "-"), ell, gamma, q, passes, elapsed)
    return model, elapsed


class _Prefix:
    """Column source over the first ``n`` snapshots of selected rows."""

    def __init__(self, f, rows, n):
        self.f, self.sel, self.n_columns = f, rows, n
        self.n_rows = len(range(f.d)[rows]) if isinstance(rows, slice) else len(rows)

    def blocks(self):
        left = self.n_columns
        for B in self.f.blocks(rows=self.sel):
            if left <= 0:
                return
            yield B[:, :left]
            left -= B.shape[1]


def save_model(model, path):
    if isinstance(model, kaf.ForecastModel):
        io.write_model(model, path)
    else:
        with open(path, "wb") as fh:
            io.save_baseline(model, fh)


def cmd_train(cfg, out=None):
    model, _ = train_one(cfg)
    path = out or cfg.model or os.path.join(cfg.data_dir, f"model_q{cfg.q}.skaf")
    save_model(model, path)
    return path


# forecast --------------------------------------------------------------------

def _read_inputs(path, cfg):
    if path.endswith(".csv"):
        _, data = io.read_csv(path)
        return data
    f = io.TrajectoryFile(path)
    data = f.read().data
    if cfg.system == "l96" and f.d == cfg.params().dim:
        data = data[cfg.covariate_rows()]
    return data


def cmd_forecast(cfg, model_path, input_path, output):
    if not os.path.isfile(model_path):
        raise DataError(f"model file not found: {model_path}")
    if not os.path.isfile(input_path):
        raise DataError(f"input file not found: {input_path}")
    model = io.load_any_model(model_path)
    Y = _read_inputs(input_path, cfg)
    F = model.forecast(Y, cfg.block)
    io.write_csv(F, output, [f"f{i + 1}" for i in range(F.shape[0])])
    return F


# evaluate --------------------------------------------------------------------

def _load_tests(cfg):
    out = []
    for i in range(cfg.test_sets):
        path = test_path(cfg, i)
        if not os.path.isfile(path):
            raise DataError(f"test file not found: {path}")
        out.append(io.read_trajectory(path))
    return out


def _family(cfg, leads, n=None, ell=None, gamma=None, s=None, method=None):
    method = method or cfg.method
    f = _open_train(cfg)
    n = cfg.n_train if n is None else n
    q_max = max(leads)
    if n + q_max > f.n:
        raise DataError(f"training file has {f.n} snapshots, need {n + q_max}")
    X = _raw_observables(cfg, f, n + q_max)
    resp = _response_rows(cfg, X.shape[0])
    ell = cfg.resolved_ell() if ell is None else ell
    gamma = _gamma(cfg, X[:, :n]) if gamma is None else gamma
    if method == "streaming":
        s = cfg.resolved_s(n) if s is None else s
        tc = kaf.TrainConfig(q=0, ell=ell, gamma=gamma, s=s, mu=cfg.mu,
                             feature_seed=cfg.feature_seed, sketch_seed=cfg.sketch_seed,
                             block=cfg.block, passes=cfg.passes)
        return kaf.train_family(X, X[resp], leads, tc)
    models = {}
    for q in leads:
        U, G = X[:, :n], X[resp, q:q + n]
        if method == "naive":
            models[q] = kaf.train_naive(U, G, ell, gamma, cfg.mu, q=q, max_n=cfg.naive_max_n)
        else:
            models[q] = kaf.LinearModel(kaf.train_linear(U, G), q)
    return models


def evaluate(cfg, models=None, leads=None):
    leads = cfg.resolved_leads() if leads is None else leads
    if models is None:
        models = _family(cfg, leads)
    tests = _load_tests(cfg)
    rows = cfg.covariate_rows()
    row = 0 if cfg.responses == "variable" else None
    lyap = metrics.lyapunov_steps(cfg.dt) if cfg.system == "l63" else None
    return metrics.evaluate_curve(models, tests, cfg.variable, leads,
                                  observe=lambda D: D[rows], response_row=row,
                                  dt=cfg.dt, lyapunov_time_steps=lyap)


def _load_model_dir(path, leads):
    models = {}
    for q in leads:
        p = os.path.join(path, f"model_q{q}.skaf")
        if not os.path.isfile(p):
            raise DataError(f"no model for lead {q}: {p} missing")
        models[q] = io.load_any_model(p)
    return models


def cmd_evaluate(cfg, models_dir=None, out=None):
    leads = cfg.resolved_leads()
    models = _load_model_dir(models_dir, leads) if models_dir else None
    curve = evaluate(cfg, models, leads)
    path = out or cfg.curve or os.path.join(cfg.data_dir, "curve.csv")
    curve.to_csv(path)
    for q, m, sd in zip(curve.lead_steps, curve.mean, curve.std):
        note = ""
        if curve.lyapunov_time_steps:
            note = f"  ({q / curve.lyapunov_time_steps:.2f} Lyapunov times)"
        print(f"lead {q:5d} steps  t={q * curve.dt:7.3f}  rmse {m:.4f} +- {sd:.4f}{note}")
    return path, curve


# bench -----------------------------------------------------------------------

BENCH_FIELDS = ["method", "n", "ell", "gamma", "s", "q", "train_seconds", "test_seconds",
                "rmse", "status"]


def bench_cell(cfg, method, cell):
    n, ell, gamma, s = cfgmod.parse_cell(cell)
    row = {"method": method, "n": n, "ell": ell, "gamma": gamma, "s": "", "q": cfg.q,
           "train_seconds": "", "test_seconds": "", "rmse": "", "status": "ok"}
    try:
        if isinstance(s, str):
            s = kaf.recommended_features(n) if s == "sqrt_n_log_n" else cfg.s_multiple * ell
        model, train_s = train_one(cfg, q=cfg.q, n=n, method=method, ell=ell, gamma=gamma,
                                   s=s if method == "streaming" else None)
        if method == "streaming":
            row["s"] = s
        tests = _load_tests(cfg)
        rows = cfg.covariate_rows()
        t0 = time.perf_counter()
        preds = [model.forecast(t.data[rows][:, :t.n - cfg.q], cfg.block) for t in tests]
        row["test_seconds"] = (time.perf_counter() - t0) / len(tests)
        errs = [metrics.normalized_rmse(p[0], t.data[rows][cfg.variable, cfg.q:])
                for p, t in zip(preds, tests)]
        row["train_seconds"] = train_s
        row["rmse"] = float(np.mean(errs))
    except SkafError as exc:
        row["status"] = f"{type(exc).__name__}: {exc}"
    return row


def cmd_bench(cfg, parallel=False, out=None):
    cells = cfg.grid or [f"{cfg.n_train}/{cfg.resolved_ell()}/{cfg.resolved_gamma()}/{cfg.s}"]
    jobs = [(m, c) for c in cells for m in cfg.bench_methods]
    if parallel:
        with ProcessPoolExecutor() as ex:
            rows = list(ex.map(bench_cell, [cfg] * len(jobs), *zip(*jobs)))
    else:
        rows = [bench_cell(cfg, m, c) for m, c in jobs]
    path = out or cfg.report or os.path.join(cfg.data_dir, "bench.csv")
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, BENCH_FIELDS)
        w.writeheader()
        w.writerows(rows)
    for r in rows:
        print(" ".join(f"{k}={r[k]}" for k in BENCH_FIELDS))
    return path, rows


# inspect ---------------------------------------------------------------------

def cmd_inspect(path):
    if not os.path.isfile(path):
        raise DataError(f"model file not found: {path}")
    m = io.load_any_model(path)
    if isinstance(m, kaf.ForecastModel):
        info = {"kind": "streaming", "d": m.d, "r": m.r, "s": m.s, "ell": m.ell, "q": m.q,
                "gamma": m.gamma, "mu": m.mu, "feature_seed": m.feature_seed,
                "training_n": m.training_n, "bytes": os.path.getsize(path)}
    elif isinstance(m, kaf.NaiveModel):
        info = {"kind": "naive", "d": m.d, "r": m.r, "n": m.U.shape[1], "ell": m.ell,
                "q": m.q, "gamma": m.gamma, "mu": m.mu}
    else:
        info = {"kind": "linear", "d": m.d, "r": m.r, "q": m.q}
    for k, v in info.items():
        print(f"{k} = {v}")
    return info


# entry point -------------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="skaf", description="Streaming kernel analog forecasting")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)

    def common(p):
        p.add_argument("--config", help="key-value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
        p.add_argument("--data-dir", help="data directory (overrides config and SKAF_DATA_DIR)")

    p = sub.add_parser("generate", help="integrate training and test trajectories")
    common(p)
    p.add_argument("--manifest", help="regenerate from a manifest written by an earlier run")
    p.add_argument("--csv", action="store_true", help="also export observables as CSV")

    p = sub.add_parser("train", help="train one model at lead q")
    common(p)
    p.add_argument("-o", "--output", help="model file path")

    p = sub.add_parser("forecast", help="apply a model to covariates")
    common(p)
    p.add_argument("model")
    p.add_argument("input", help="trajectory (.traj) or CSV file")
    p.add_argument("-o", "--output", required=True, help="CSV for forecasts")

    p = sub.add_parser("evaluate", help="RMSE versus lead time")
    common(p)
    p.add_argument("--models", help="directory with model_q<q>.skaf files (default: train now)")
    p.add_argument("-o", "--output", help="curve CSV path")

    p = sub.add_parser("bench", help="train/test timing and RMSE over a grid")
    common(p)
    p.add_argument("--parallel", action="store_true", help="run grid cells concurrently")
    p.add_argument("-o", "--output", help="report CSV path")

    p = sub.add_parser("inspect-model", help="print model metadata")
    p.add_argument("model")
    return ap


def _apply_threads():
    n = os.environ.get("SKAF_THREADS")
    if not n:
        return
    from threadpoolctl import threadpool_limits
    threadpool_limits(int(n))


def run(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    _apply_threads()
    if args.verb == "inspect-model":
        cmd_inspect(args.model)
        return EXIT_OK
    if args.verb == "generate" and args.manifest:
        cfg = cfgmod.load(args.manifest, args.set)
    else:
        cfg = cfgmod.load(args.config, args.set)
    if args.data_dir:
        cfg.data_dir = args.data_dir
    if args.verb == "generate":
        for path in cmd_generate(cfg, args.csv):
            print(path)
    elif args.verb == "train":
        print(cmd_train(cfg, args.output))
    elif args.verb == "forecast":
        cmd_forecast(cfg, args.model, args.input, args.output)
        print(args.output)
    elif args.verb == "evaluate":
        path, _ = cmd_evaluate(cfg, args.models, args.output)
        print(path)
    elif args.verb == "bench":
        path, _ = cmd_bench(cfg, args.parallel, args.output)
        print(path)
    return EXIT_OK


def main(argv=None):
    try:
        return run(argv)
    except ConfigError as exc:
        print(f"skaf: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"skaf: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"skaf: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
