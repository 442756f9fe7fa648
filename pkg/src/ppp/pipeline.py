"""End-to-end orchestration: training-data generation, network training,
estimation on observed patterns, test-set evaluation, training-set sizing
study, and range-coverage diagnostics.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import nn
from .envelopes import envelope_from_curves
from .geometry import PointPattern, Window
from .simulate import (
    DEFAULT_RESOLUTION,
    GrfParams,
    LgcpStraussParams,
    StraussParams,
    simulate_model,
    snap_scale,
)
from .sumstats import SummaryCurve, centered_l_input, default_r_grid

DATASET_FORMAT_VERSION = 1

#: parameter order per model, fixed for data sets and network outputs
PARAM_NAMES = {
    "lgcp": ("mu", "sigma2", "s"),
    "strauss": ("beta", "gamma", "R"),
    "lgcp-strauss": ("mu", "sigma2", "s", "gamma", "R"),
}


class PipelineError(RuntimeError):
    pass


def params_from_theta(model: str, theta):
    """Build the sampler parameter object from an ordered theta vector."""
    theta = np.asarray(theta, dtype=float)
    if model == "lgcp":
        return GrfParams(*theta)
    if model == "strauss":
        return StraussParams(*theta)
    if model == "lgcp-strauss":
        return LgcpStraussParams(GrfParams(*theta[:3]), *theta[3:])
    raise PipelineError(f"unknown model {model!r}")


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to build a training set and train a network."""

    model: str
    ranges: dict[str, tuple[float, float]]
    window: Window
    n_train: int
    n_test: int = 0
    seed: int = 0
    r_grid_size: int = 513
    resolution: int = DEFAULT_RESOLUTION
    n_iter: int | None = None
    #: optional discretization of the field correlation scale so bulk
    #: generation can reuse cached Cholesky factors (labels stay exact)
    s_levels: int | None = None
    epochs: int = 20
    batch_size: int = 100
    lr: float = nn.ADAM_LR

    def __post_init__(self):
        names = PARAM_NAMES.get(self.model)
        if names is None:
            raise PipelineError(f"unknown model {self.model!r}")
        if tuple(self.ranges) != names:
            raise PipelineError(
                f"ranges must be given for {names} in order, got {tuple(self.ranges)}"
            )
        for name, (lo, hi) in self.ranges.items():
            if not lo < hi:
                raise PipelineError(f"empty range for {name}: ({lo}, {hi})")
        if self.n_train < 1:
            raise PipelineError("n_train must be >= 1")

    @property
    def param_names(self) -> tuple[str, ...]:
        return PARAM_NAMES[self.model]

    def r_grid(self) -> np.ndarray:
        return default_r_grid(self.window, self.r_grid_size)


@dataclass(frozen=True)
class TrainingSet:
    """Rows of (centered-L curve, count, theta) plus provenance."""

    curves: np.ndarray
    counts: np.ndarray
    thetas: np.ndarray
    degenerate: np.ndarray
    r: np.ndarray
    window: Window
    model: str
    ranges: dict[str, tuple[float, float]]
    seed: int
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.curves.shape[0]

    def subset(self, n: int) -> "TrainingSet":
        return replace(
            self,
            curves=self.curves[:n],
            counts=self.counts[:n],
            thetas=self.thetas[:n],
            degenerate=self.degenerate[:n],
        )


def _row_rng(seed: int, index: int, attempt: int = 0) -> np.random.Generator:
    # substream fully determined by (master seed, row index, attempt)
    return np.random.default_rng([seed, index, attempt])


def _sample_theta(cfg: RunConfig, rng: np.random.Generator) -> np.ndarray:
    return np.array(
        [rng.uniform(lo, hi) for lo, hi in cfg.ranges.values()], dtype=float
    )


def _sim_theta(cfg: RunConfig, theta: np.ndarray) -> np.ndarray:
    """Theta actually fed to the sampler: the label stays exact, but the
    field scale may be snapped to the discretization grid."""
    sim_theta = theta.copy()
    if cfg.s_levels and "s" in cfg.param_names:
        idx = cfg.param_names.index("s")
        lo, hi = cfg.ranges["s"]
        sim_theta[idx] = snap_scale(sim_theta[idx], lo, hi, cfg.s_levels)
    return sim_theta


def _simulate_row(cfg: RunConfig, theta: np.ndarray, rng: np.random.Generator):
    params = params_from_theta(cfg.model, _sim_theta(cfg, theta))
    return simulate_model(
        cfg.model, params, cfg.window, rng, cfg.resolution, cfg.n_iter
    )


def generate_training_data(cfg: RunConfig, offset: int = 0) -> TrainingSet:
    """Simulate ``cfg.n_train`` rows with independent per-row substreams.

    Row i is fully determined by (seed, offset + i), so generation order
    cannot change the bytes.  Degenerate patterns (fewer than 2 points)
    keep their theta with a flagged zero curve; a sampler failure is
    retried once on a fresh substream, then recorded in the metadata.
    """
    r = cfg.r_grid()
    n = cfg.n_train
    k = len(cfg.param_names)
    curves = np.zeros((n, len(r)))
    counts = np.zeros(n)
    thetas = np.zeros((n, k))
    degenerate = np.zeros(n, dtype=bool)
    failed: list[int] = []
    # sample every theta first (row i's substream starts with its theta and
    # continues into its simulation)
    rngs = [_row_rng(cfg.seed, offset + i) for i in range(n)]
    for i in range(n):
        thetas[i] = _sample_theta(cfg, rngs[i])
    # process rows grouped by the (snapped) field scale so the Cholesky
    # cache is reused; the output is written at the row index, so the
    # processing order cannot change the bytes
    if cfg.s_levels and "s" in cfg.param_names:
        s_idx = cfg.param_names.index("s")
        order = np.argsort(
            [_sim_theta(cfg, thetas[i])[s_idx] for i in range(n)], kind="stable"
        )
    else:
        order = np.arange(n)
    for i in order:
        row_index = offset + int(i)
        rng = rngs[i]
        theta = thetas[i]
        pattern = None
        for attempt in (0, 1):
            try:
                rng_a = rng if attempt == 0 else _row_rng(cfg.seed, row_index, 1)
                pattern = _simulate_row(cfg, theta, rng_a)
                break
            except Exception:
                pattern = None
        if pattern is None:
            failed.append(row_index)
            degenerate[i] = True
            continue
        curve = centered_l_input(pattern, r)
        curves[i] = curve.values
        counts[i] = pattern.n()
        degenerate[i] = curve.degenerate
    meta = {
        "offset": offset,
        "failed_rows": failed,
        "resolution": cfg.resolution,
        "n_iter": cfg.n_iter,
        "s_levels": cfg.s_levels,
    }
    return TrainingSet(
        curves, counts, thetas, degenerate, r, cfg.window, cfg.model,
        dict(cfg.ranges), cfg.seed, meta,
    )


# ---------------------------------------------------------------------------
# dataset persistence


def save_dataset(path, ds: TrainingSet) -> None:
    np.savez(
        path,
        format_version=np.array(DATASET_FORMAT_VERSION),
        curves=ds.curves,
        counts=ds.counts,
        thetas=ds.thetas,
        degenerate=ds.degenerate,
        r=ds.r,
        header_json=np.array(
            json.dumps(
                {
                    "model": ds.model,
                    "ranges": {k: list(v) for k, v in ds.ranges.items()},
                    "window": ds.window.to_dict(),
                    "seed": ds.seed,
                    "meta": ds.meta,
                }
            )
        ),
    )


def load_dataset(path) -> TrainingSet:
    try:
        data = np.load(path, allow_pickle=False)
        version = int(data["format_version"])
        if version != DATASET_FORMAT_VERSION:
            raise PipelineError(f"dataset version {version} not supported")
        header = json.loads(str(data["header_json"]))
        curves = data["curves"]
        if curves.shape != (len(data["counts"]), len(data["r"])):
            raise PipelineError("dataset shapes are inconsistent")
        return TrainingSet(
            curves=curves,
            counts=data["counts"],
            thetas=data["thetas"],
            degenerate=data["degenerate"],
            r=data["r"],
            window=Window.from_dict(header["window"]),
            model=header["model"],
            ranges={k: tuple(v) for k, v in header["ranges"].items()},
            seed=header["seed"],
            meta=header["meta"],
        )
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(f"cannot read dataset {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# training and estimation


@dataclass(frozen=True)
class TrainedModel:
    net: nn.Network
    standardizer: nn.Standardizer
    r: np.ndarray
    window: Window
    model: str
    param_names: tuple[str, ...]
    history: dict[str, list[float]]


def train_model(
    train_set: TrainingSet,
    test_set: TrainingSet | None = None,
    epochs: int = 20,
    batch_size: int = 100,
    lr: float = nn.ADAM_LR,
    seed: int = 0,
    arch: nn.NetworkArch | None = None,
) -> TrainedModel:
    """Fit the standardizer, train the network, return the bundle.

    Test data, when given, is scaled with the training standardizer and
    its MSE is recorded per epoch.
    """
    st = nn.fit_standardizer(train_set.curves, train_set.counts, train_set.thetas)
    sc, sn, sth = nn.standardize(train_set.curves, train_set.counts, train_set.thetas, st)
    test = None
    if test_set is not None:
        if len(test_set.r) != len(train_set.r):
            raise PipelineError("test set r grid does not match the training grid")
        test = nn.standardize(test_set.curves, test_set.counts, test_set.thetas, st)
    if arch is None:
        arch = nn.NetworkArch(
            out_dim=train_set.thetas.shape[1], input_len=train_set.curves.shape[1]
        )
    rng = np.random.default_rng(seed)
    net = nn.Network.initialize(arch, rng)
    history = nn.train(
        net, sc, sn, sth, epochs=epochs, batch_size=batch_size, rng=rng,
        test=test, lr=lr,
    )
    return TrainedModel(
        net, st, train_set.r, train_set.window, train_set.model,
        PARAM_NAMES[train_set.model], history,
    )


def save_model(path, tm: TrainedModel) -> None:
    nn.save_network(
        path,
        tm.net,
        tm.standardizer,
        extra={
            "model": tm.model,
            "param_names": list(tm.param_names),
            "window": tm.window.to_dict(),
            "r": list(tm.r),
            "history": tm.history,
        },
    )


def load_model(path) -> TrainedModel:
    net, st, extra = nn.load_network(path)
    return TrainedModel(
        net,
        st,
        np.array(extra["r"]),
        Window.from_dict(extra["window"]),
        extra["model"],
        tuple(extra["param_names"]),
        extra.get("history", {}),
    )


def _check_window(tm: TrainedModel, pattern: PointPattern) -> None:
    got = pattern.window.side_lengths()
    want = tm.window.side_lengths()
    if not np.allclose(got, want, rtol=1e-12):
        raise PipelineError(
            f"pattern window sides {got} do not match training window {want}; "
            "cross-window transfer is not supported"
        )


def estimate(tm: TrainedModel, pattern: PointPattern) -> dict[str, float]:
    """Estimate parameters for an observed pattern via one forward pass."""
    _check_window(tm, pattern)
    curve = centered_l_input(pattern, tm.r)
    sc, sn, _ = nn.standardize(
        curve.values[None, :], np.array([pattern.n()]), None, tm.standardizer
    )
    pred = tm.net.forward(sc, sn)
    theta = nn.destandardize_theta(pred, tm.standardizer)[0]
    return dict(zip(tm.param_names, map(float, theta)))


@dataclass(frozen=True)
class Evaluation:
    param_names: tuple[str, ...]
    thetas: np.ndarray
    predictions: np.ndarray
    rmse: np.ndarray
    bias: np.ndarray
    corr: np.ndarray
    standardized_mse: float


def evaluate_on_test(tm: TrainedModel, test_set: TrainingSet) -> Evaluation:
    """Predict every test row and summarize per-parameter errors."""
    if len(test_set.r) != len(tm.r):
        raise PipelineError("test set r grid does not match the model grid")
    sc, sn, sth = nn.standardize(
        test_set.curves, test_set.counts, test_set.thetas, tm.standardizer
    )
    pred_std = tm.net.forward(sc, sn)
    preds = nn.destandardize_theta(pred_std, tm.standardizer)
    err = preds - test_set.thetas
    corr = np.array(
        [
            np.corrcoef(preds[:, j], test_set.thetas[:, j])[0, 1]
            for j in range(preds.shape[1])
        ]
    )
    return Evaluation(
        param_names=tm.param_names,
        thetas=test_set.thetas,
        predictions=preds,
        rmse=np.sqrt(np.mean(err**2, axis=0)),
        bias=err.mean(axis=0),
        corr=corr,
        standardized_mse=nn.mse_loss(pred_std, sth),
    )


def size_study(
    train_set: TrainingSet,
    sizes: list[int],
    test_set: TrainingSet,
    epochs: int = 20,
    batch_size: int = 100,
    lr: float = nn.ADAM_LR,
    seed: int = 0,
) -> list[tuple[int, float]]:
    """Test MSE against training-set size, on nested subsets.

    Every per-size run uses the same initialization seed so the comparison
    is controlled.
    """
    if list(sizes) != sorted(sizes):
        raise PipelineError("sizes must be increasing")
    results = []
    for size in sizes:
        if size > len(train_set):
            raise PipelineError(f"size {size} exceeds the training set")
        tm = train_model(
            train_set.subset(size), test_set=None, epochs=epochs,
            batch_size=batch_size, lr=lr, seed=seed,
        )
        ev = evaluate_on_test(tm, test_set)
        results.append((size, ev.standardized_mse))
    return results


@dataclass(frozen=True)
class CoverageReport:
    count_quantile: float
    curve_inside_envelope: bool
    envelope_p_value: float


def coverage_check(
    train_set: TrainingSet, pattern: PointPattern, alpha: float = 0.05
) -> CoverageReport:
    """Is the observed pattern represented in the training data?

    Reports the quantile of the observed count among training counts and
    whether the observed centered-L curve lies within the global envelope
    of the training curves.
    """
    count_q = float(np.mean(train_set.counts <= pattern.n()))
    data = centered_l_input(pattern, train_set.r)
    keep = ~train_set.degenerate
    sims = [
        SummaryCurve(train_set.r, v, "L_centered", np.ones_like(train_set.r, bool))
        for v in train_set.curves[keep]
    ]
    result = envelope_from_curves(data, sims, alpha)
    mask = np.isin(train_set.r, result.r)
    inside = result.data_inside(data.values[mask])
    return CoverageReport(count_q, inside, result.p_value)


# ---------------------------------------------------------------------------
# CSV emission helpers (documented headers, used by the CLI)


def write_history_csv(path, history: dict[str, list[float]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        cols = ["epoch", "train_mse"] + (["test_mse"] if "test_mse" in history else [])
        writer.writerow(cols)
        for i, train in enumerate(history["train_mse"]):
            row = [i + 1, train]
            if "test_mse" in history:
                row.append(history["test_mse"][i])
            writer.writerow(row)


def write_evaluation_csv(path, ev: Evaluation) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = [f"true_{n}" for n in ev.param_names]
        header += [f"est_{n}" for n in ev.param_names]
        writer.writerow(header)
        for true, pred in zip(ev.thetas, ev.predictions):
            writer.writerow([*true, *pred])
