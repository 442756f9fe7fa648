"""Command line interface: ``ppp <subcommand>``.

Thin wrappers around the library; all tabular output is CSV with the
headers documented in the subcommand help strings.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import baselines, envelopes, nn, pipeline, simulate, sumstats
from .geometry import Window, read_pattern_csv, write_pattern_csv


def _parse_window(text: str) -> Window:
    try:
        x_min, x_max, y_min, y_max = (float(v) for v in text.split(","))
    except ValueError as exc:
        raise SystemExit(f"bad --window {text!r}; expected xmin,xmax,ymin,ymax") from exc
    return Window(x_min, x_max, y_min, y_max)


def _parse_params(text: str) -> dict[str, float]:
    out = {}
    for item in text.split(","):
        if not item:
            continue
        try:
            name, value = item.split("=")
            out[name.strip()] = float(value)
        except ValueError as exc:
            raise SystemExit(f"bad --params item {item!r}; expected name=value") from exc
    return out


def _model_params(model: str, kv: dict[str, float]):
    if model == "poisson":
        return kv["intensity"]
    names = pipeline.PARAM_NAMES[model]
    missing = [n for n in names if n not in kv]
    if missing:
        raise SystemExit(f"--params missing {missing} for model {model}")
    return pipeline.params_from_theta(model, [kv[n] for n in names])


def _load_pattern(args):
    window = _parse_window(args.window) if args.window else None
    return read_pattern_csv(args.pattern, window)


def _build_config(args) -> pipeline.RunConfig:
    cfg: dict = {}
    if args.config:
        with open(args.config) as fh:
            cfg = json.load(fh)
    for key in (
        "model", "n_train", "n_test", "seed", "r_grid_size", "resolution",
        "n_iter", "s_levels", "epochs", "batch_size", "lr",
    ):
        value = getattr(args, key.replace("-", "_"), None)
        if value is not None:
            cfg[key] = value
    if args.window:
        cfg["window"] = [v for v in args.window.split(",")]
    if args.ranges:
        cfg["ranges"] = {
            name: list(map(float, rng.split(":")))
            for name, rng in (item.split("=") for item in args.ranges.split(","))
        }
    if "window" not in cfg or "ranges" not in cfg or "model" not in cfg:
        raise SystemExit("config needs at least model, window, and ranges")
    w = cfg.pop("window")
    window = Window(*(float(v) for v in w)) if isinstance(w, list) else Window.from_dict(w)
    cfg["ranges"] = {k: tuple(v) for k, v in cfg["ranges"].items()}
    return pipeline.RunConfig(window=window, **cfg)


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args):
    params = _model_params(args.model, _parse_params(args.params))
    window = _parse_window(args.window) if args.window else Window.unit_square()
    rng = np.random.default_rng(args.seed)
    trace = None
    if args.model == "strauss":
        out = simulate.sample_strauss(
            window, params, args.iters or simulate.DEFAULT_STRAUSS_ITERS, rng,
            trace_every=args.trace_every if args.trace else None,
        )
    elif args.model == "lgcp-strauss":
        out = simulate.sample_lgcp_strauss(
            window, params, args.resolution,
            args.iters or simulate.DEFAULT_LGCP_STRAUSS_ITERS, rng,
            trace_every=args.trace_every if args.trace else None,
        )
    else:
        out = simulate.simulate_model(
            args.model, params, window, rng, args.resolution, args.iters
        )
    pattern = out
    if isinstance(out, tuple):
        pattern, trace = out
    write_pattern_csv(pattern, args.out)
    if args.trace and trace is not None:
        with open(args.trace, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "n", "s_r"])
            for row in zip(trace.iterations, trace.n_points, trace.r_close_pairs):
                writer.writerow(row)
    print(f"wrote {pattern.n()} points to {args.out}")


def cmd_summarize(args):
    pattern = _load_pattern(args)
    curve = sumstats.estimate_statistic(args.stat, pattern)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    writer = csv.writer(out)
    writer.writerow(["r", "value", "valid"])
    for r, v, ok in zip(curve.r, curve.values, curve.valid):
        writer.writerow([r, v if ok else "", int(ok)])
    if args.out:
        out.close()


def cmd_make_data(args):
    cfg = _build_config(args)
    ds = pipeline.generate_training_data(cfg)
    pipeline.save_dataset(args.out, ds)
    print(f"wrote {len(ds)} rows to {args.out}")
    if cfg.n_test:
        test_cfg = pipeline.RunConfig(
            **{**cfg.__dict__, "n_train": cfg.n_test, "n_test": 0}
        )
        test = pipeline.generate_training_data(test_cfg, offset=cfg.n_train)
        test_path = args.test_out or str(args.out).replace(".npz", "") + "_test.npz"
        pipeline.save_dataset(test_path, test)
        print(f"wrote {len(test)} test rows to {test_path}")


def cmd_train(args):
    train_set = pipeline.load_dataset(args.data)
    test_set = pipeline.load_dataset(args.test) if args.test else None
    tm = pipeline.train_model(
        train_set, test_set, epochs=args.epochs, batch_size=args.batch,
        lr=args.lr, seed=args.seed,
    )
    pipeline.save_model(args.out, tm)
    if args.history:
        pipeline.write_history_csv(args.history, tm.history)
    print(f"final train MSE {tm.history['train_mse'][-1]:.6f}")
    if "test_mse" in tm.history:
        print(f"final test MSE {tm.history['test_mse'][-1]:.6f}")


def cmd_evaluate(args):
    tm = pipeline.load_model(args.model_file)
    test_set = pipeline.load_dataset(args.test)
    ev = pipeline.evaluate_on_test(tm, test_set)
    if args.out:
        pipeline.write_evaluation_csv(args.out, ev)
    print(f"standardized MSE {ev.standardized_mse:.6f}")
    for j, name in enumerate(ev.param_names):
        print(
            f"{name}: rmse={ev.rmse[j]:.6g} bias={ev.bias[j]:.6g} corr={ev.corr[j]:.4f}"
        )


def cmd_estimate(args):
    tm = pipeline.load_model(args.model_file)
    pattern = _load_pattern(args)
    theta = pipeline.estimate(tm, pattern)
    print(json.dumps(theta, indent=2))


def cmd_baseline(args):
    pattern = _load_pattern(args)
    if args.method == "mincontrast":
        res = baselines.minimum_contrast_lgcp(pattern)
        out = {
            "mu": res.mu, "sigma2": res.sigma2, "s": res.s,
            "contrast": res.contrast, "converged": res.converged,
        }
    else:
        res = baselines.profile_mple_strauss(pattern)
        out = {"beta": res.beta, "gamma": res.gamma, "R": res.R}
    text = json.dumps(out, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)


def cmd_envelope(args):
    pattern = _load_pattern(args)
    params = _model_params(args.model, _parse_params(args.params))
    rng = np.random.default_rng(args.seed)
    result = envelopes.validate_fit(
        pattern, args.model, params, rng, n_sim=args.nsim, statistic=args.stat,
        alpha=args.alpha, resolution=args.resolution, n_iter=args.iters,
    )
    data_curve = sumstats.estimate_statistic(args.stat, pattern)
    mask = np.isin(data_curve.r, result.r)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    writer = csv.writer(out)
    writer.writerow(["r", "lower", "central", "upper", "data"])
    for row in zip(
        result.r, result.lower, result.central, result.upper,
        data_curve.values[mask],
    ):
        writer.writerow(row)
    if args.out:
        out.close()
    print(f"p-value: {result.p_value:.4f}")


def cmd_size_study(args):
    cfg = _build_config(args)
    sizes = [int(v) for v in args.sizes.split(",")]
    train_set = pipeline.generate_training_data(
        pipeline.RunConfig(**{**cfg.__dict__, "n_train": max(sizes)})
    )
    test_cfg = pipeline.RunConfig(**{**cfg.__dict__, "n_train": cfg.n_test or 500})
    test_set = pipeline.generate_training_data(test_cfg, offset=max(sizes))
    results = pipeline.size_study(
        train_set, sizes, test_set, epochs=cfg.epochs,
        batch_size=cfg.batch_size, lr=cfg.lr, seed=cfg.seed,
    )
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    writer = csv.writer(out)
    writer.writerow(["n_train", "test_mse"])
    for size, mse in results:
        writer.writerow([size, mse])
    if args.out:
        out.close()


def cmd_coverage_check(args):
    train_set = pipeline.load_dataset(args.data)
    pattern = _load_pattern(args)
    report = pipeline.coverage_check(train_set, pattern)
    print(f"count quantile in training data: {report.count_quantile:.4f}")
    print(f"centered-L curve inside 95% envelope: {report.curve_inside_envelope}")
    print(f"envelope p-value: {report.envelope_p_value:.4f}")


# ---------------------------------------------------------------------------


def _add_config_args(p):
    p.add_argument("--config", help="JSON file with run configuration fields")
    p.add_argument("--model", choices=sorted(pipeline.PARAM_NAMES))
    p.add_argument("--window", help="xmin,xmax,ymin,ymax")
    p.add_argument("--ranges", help="e.g. mu=4:6,sigma2=0:4,s=0.001:0.1")
    p.add_argument("--n-train", type=int, dest="n_train")
    p.add_argument("--n-test", type=int, dest="n_test")
    p.add_argument("--seed", type=int)
    p.add_argument("--r-grid-size", type=int, dest="r_grid_size")
    p.add_argument("--resolution", type=int)
    p.add_argument("--iters", type=int, dest="n_iter")
    p.add_argument("--s-levels", type=int, dest="s_levels")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int, dest="batch_size")
    p.add_argument("--lr", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ppp",
        description="Spatial point process simulation and neural parameter estimation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw one pattern from a model")
    p.add_argument("--model", required=True,
                   choices=("poisson", "lgcp", "strauss", "lgcp-strauss"))
    p.add_argument("--params", required=True, help="name=value,... ")
    p.add_argument("--window", help="xmin,xmax,ymin,ymax (default unit square)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iters", type=int)
    p.add_argument("--resolution", type=int, default=simulate.DEFAULT_RESOLUTION)
    p.add_argument("--trace", help="write thinned chain trace CSV (iter,n,s_r)")
    p.add_argument("--trace-every", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("summarize", help="summary statistic CSV (r,value,valid)")
    p.add_argument("--stat", required=True, choices=("K", "L", "F", "G", "J"))
    p.add_argument("--window")
    p.add_argument("--out")
    p.add_argument("pattern")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("make-data", help="generate a training data set")
    _add_config_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--test-out", dest="test_out")
    p.set_defaults(func=cmd_make_data)

    p = sub.add_parser("train", help="train the network on a data set")
    p.add_argument("--data", required=True)
    p.add_argument("--test")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch", type=int, default=100)
    p.add_argument("--lr", type=float, default=nn.ADAM_LR)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--history", help="per-epoch MSE CSV (epoch,train_mse,test_mse)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="test-set evaluation of a trained model")
    p.add_argument("--model-file", required=True, dest="model_file")
    p.add_argument("--test", required=True)
    p.add_argument("--out", help="per-row CSV (true_*,est_*)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("estimate", help="estimate parameters for a pattern")
    p.add_argument("--model-file", required=True, dest="model_file")
    p.add_argument("--window")
    p.add_argument("pattern")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("baseline", help="classical estimator for a pattern")
    p.add_argument("--method", required=True, choices=("mincontrast", "mple"))
    p.add_argument("--window")
    p.add_argument("--out")
    p.add_argument("pattern")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("envelope", help="global envelope test under a model")
    p.add_argument("--stat", default="J", choices=("K", "L", "F", "G", "J"))
    p.add_argument("--nsim", type=int, default=envelopes.DEFAULT_N_SIM)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--model", required=True,
                   choices=("poisson", "lgcp", "strauss", "lgcp-strauss"))
    p.add_argument("--params", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iters", type=int)
    p.add_argument("--resolution", type=int, default=simulate.DEFAULT_RESOLUTION)
    p.add_argument("--window")
    p.add_argument("--out")
    p.add_argument("pattern")
    p.set_defaults(func=cmd_envelope)

    p = sub.add_parser("size-study", help="test MSE against training-set size")
    _add_config_args(p)
    p.add_argument("--sizes", required=True, help="e.g. 500,1000,2000")
    p.add_argument("--out")
    p.set_defaults(func=cmd_size_study)

    p = sub.add_parser("coverage-check", help="training-range coverage diagnostic")
    p.add_argument("--data", required=True)
    p.add_argument("--window")
    p.add_argument("pattern")
    p.set_defaults(func=cmd_coverage_check)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
