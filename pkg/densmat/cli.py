"""
densmat command line

    densmat synth | split | fit | predict | eval | bench | convergence | search | serve

Exit codes: 0 success, 2 usage or invalid argument, 3 data error, 4 numeric failure.
"""

import csv
import functools
import json
import logging
import sys
import time
from pathlib import Path
from typing import List, Optional

import click
from pydantic import ValidationError

from densmat.bench import convergence_study, evaluate, random_search, write_records_csv, write_result
from densmat.config import settings
from densmat.datasets import (
    Dataset,
    minmax_scale,
    gen_mixture_1d,
    gen_spirals_2d,
    load_csv,
    pca_reduce,
    split,
    write_csv,
)
from densmat.estimators.baseline_kde import timing_sweep
from densmat.exceptions import DataError, DensmatError, InvalidArgumentError
from densmat.models import FitParams, OptimizerConfig
from densmat.services import MODEL_KINDS, STRATEGIES, model_service
from densmat.storage import load_model, model_kind, save_model

logger = logging.getLogger("densmat.cli")

EXIT_USAGE = 2


def handle_errors(fn):
    """
    Map library exceptions to exit codes
    """

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except DensmatError as e:
            logger.error(f"{type(e).__name__}: {e}")
            click.echo(f"Error: {e}", err=True)
            sys.exit(e.exit_code)
        except ValidationError as e:
            click.echo(f"Error: invalid parameters: {e}", err=True)
            sys.exit(EXIT_USAGE)

    return wrapper


def parse_int_list(text: str) -> List[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise InvalidArgumentError(f"expected a comma-separated list of integers, got '{text}'") from e
    if not values:
        raise InvalidArgumentError("empty list")
    return values


def _has_label_header(path: Path) -> bool:
    try:
        with path.open("r", encoding="utf-8", newline="") as handle:
            first = next(csv.reader(handle), [])
    except OSError as e:
        raise DataError(f"cannot read '{path}': {e.strerror or e}") from e
    return "label" in [cell.strip() for cell in first]


def read_dataset(path: str, label_column: Optional[str], header: bool) -> Dataset:
    """
    Load a CSV; with a header, a column named "label" is taken as labels unless one is given
    """
    path = Path(path)
    if label_column is None and header and _has_label_header(path):
        label_column = "label"
    return load_csv(path, label_column=label_column, has_header=header)


def open_log_sink(path: str):
    try:
        return open(path, "w", encoding="utf-8")
    except OSError as e:
        logger.error(f"Cannot open training log {path}: {e}")
        raise DataError(f"cannot write '{path}': {e.strerror or e}") from e


def data_options(fn):
    fn = click.option("--no-header", "no_header", is_flag=True, help="The CSV has no header line")(fn)
    fn = click.option("--label-column", default=None, help="Header name or index of the label column")(fn)
    fn = click.option("--data", "data_path", required=True, type=click.Path(), help="CSV dataset")(fn)
    return fn


@click.group()
@click.option("--log-level", default=None, help="Logging level (default from DENSMAT_LOG_LEVEL)")
@click.version_option(settings.app_version, prog_name=settings.app_name)
def cli(log_level: Optional[str]):
    """Density-matrix kernel density estimation, classification and ordinal regression."""
    logging.basicConfig(
        level=(log_level or settings.log_level).upper(),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    )


@cli.command()
@click.option("--kind", type=click.Choice(["mixture1d", "spirals"]), required=True)
@click.option("--n", "n", type=int, default=10000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--noise", type=float, default=0.05, show_default=True, help="Spiral noise level")
@click.option("--out", required=True, type=click.Path())
@handle_errors
def synth(kind: str, n: int, seed: int, noise: float, out: str):
    """Generate a synthetic dataset as CSV."""
    data = gen_mixture_1d(n, seed) if kind == "mixture1d" else gen_spirals_2d(n, seed, noise=noise)
    write_csv(data, out)
    click.echo(f"Wrote {data.n} rows to {out}")


@cli.command(name="split")
@data_options
@click.option("--test-fraction", type=float, default=0.5, show_default=True)
@click.option("--stratify", is_flag=True, help="Preserve class proportions")
@click.option("--scale", is_flag=True, help="Min-max scale features with the training range")
@click.option("--pca", "pca_k", type=int, default=None, help="Reduce to K principal components fitted on train")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--train-out", required=True, type=click.Path())
@click.option("--test-out", required=True, type=click.Path())
@handle_errors
def split_cmd(data_path, label_column, no_header, test_fraction, stratify, scale, pca_k, seed, train_out, test_out):
    """Split a dataset into train and test CSVs, optionally reducing and scaling both."""
    data = read_dataset(data_path, label_column, not no_header)
    train, test = split(data, test_fraction=test_fraction, stratify=stratify, seed=seed)
    if pca_k is not None:
        train, projection = pca_reduce(train, pca_k)
        test = Dataset(features=projection.transform(test.features), labels=test.labels, meta=train.meta)
    if scale:
        train, scaler = minmax_scale(train)
        test = Dataset(features=scaler.transform(test.features), labels=test.labels, meta=train.meta)
    write_csv(train, train_out)
    write_csv(test, test_out)
    click.echo(f"Wrote {train.n} train rows to {train_out} and {test.n} test rows to {test_out}")
    if train.meta.scaler is not None:
        scaler_out = f"{train_out}.scaler.json"
        params = {"data": data_path, "test_fraction": test_fraction, "stratify": stratify, "pca": pca_k, "seed": seed}
        write_result("split", params, {"scaler": train.meta.scaler}, scaler_out)
        click.echo(f"Wrote scaler to {scaler_out}")


@cli.command()
@click.option("--model", "kind", type=click.Choice(MODEL_KINDS), required=True)
@click.option("--strategy", type=click.Choice(STRATEGIES), default="estimate", show_default=True)
@data_options
@click.option("--gamma", type=float, required=True, help="Kernel spread")
@click.option("--rff-dim", type=int, default=1024, show_default=True)
@click.option("--rank", type=int, default=None, help="Factorization rank")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--embedding", type=click.Choice(["normalized", "raw"]), default="normalized", show_default=True)
@click.option("--landmarks", type=int, default=16, show_default=True, help="QMR landmark count")
@click.option("--beta", type=float, default=32.0, show_default=True, help="QMR softmax shape")
@click.option("--alpha", "alpha_tradeoff", type=float, default=0.1, show_default=True, help="QMR variance weight")
@click.option("--epochs", type=int, default=10, show_default=True)
@click.option("--lr", type=float, default=1e-3, show_default=True)
@click.option("--batch-size", type=int, default=64, show_default=True)
@click.option("--allow-large-lr", is_flag=True, help="Permit learning rates above 1e-3")
@click.option("--log-jsonl", type=click.Path(), default=None, help="Per-epoch training log")
@click.option("--out", required=True, type=click.Path(), help="Model file")
@handle_errors
def fit(kind, strategy, data_path, label_column, no_header, gamma, rff_dim, rank, seed, embedding,
        landmarks, beta, alpha_tradeoff, epochs, lr, batch_size, allow_large_lr, log_jsonl, out):
    """Train a model and save it as versioned JSON."""
    data = read_dataset(data_path, label_column, not no_header)
    params = FitParams(
        gamma=gamma,
        rff_dim=rff_dim,
        rank=rank,
        seed=seed,
        embedding=embedding,
        landmarks=landmarks,
        beta=beta,
        alpha_tradeoff=alpha_tradeoff,
        optimizer=OptimizerConfig(
            learning_rate=lr,
            epochs=epochs,
            batch_size=batch_size,
            seed=seed,
            allow_large_lr=allow_large_lr,
        ),
    )
    started = time.perf_counter()
    sink = open_log_sink(log_jsonl) if log_jsonl else None
    try:
        model = model_service.fit(kind, strategy, data.features, data.labels, params, log_sink=sink)
    finally:
        if sink is not None:
            sink.close()
    seconds = time.perf_counter() - started
    save_model(model, out)
    info = model_service.describe(model)
    click.echo(f"{kind} ({strategy}): N={data.n} D={info.feature_dim} r={info.rank} train_seconds={seconds:.3f}")


@cli.command()
@click.option("--model", "model_path", required=True, type=click.Path())
@data_options
@click.option("--out", required=True, type=click.Path(), help="Prediction JSON")
@handle_errors
def predict(model_path, data_path, label_column, no_header, out):
    """Predict densities, posteriors or regression outputs for every row."""
    model = load_model(model_path)
    data = read_dataset(data_path, label_column, not no_header)
    response = model_service.predict(model, data.features)
    try:
        Path(out).write_text(response.model_dump_json(exclude_none=True) + "\n", encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot write '{out}': {e.strerror or e}") from e
    click.echo(f"Wrote {response.count} {model_kind(model)} predictions to {out}")


@cli.command(name="eval")
@click.option("--task", type=click.Choice(["density-rmse", "accuracy", "mae", "loglik", "loglik-compare"]), required=True)
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--data", "data_path", default=None, type=click.Path(), help="Evaluation CSV")
@click.option("--train", "train_path", default=None, type=click.Path(), help="Training CSV (loglik-compare)")
@click.option("--label-column", default=None)
@click.option("--no-header", "no_header", is_flag=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", default=None, type=click.Path(), help="Result JSON")
@handle_errors
def eval_cmd(task, model_path, data_path, train_path, label_column, no_header, seed, out):
    """Score a saved model; prints and optionally writes the metrics."""
    model = load_model(model_path)
    data = read_dataset(data_path, label_column, not no_header) if data_path else None
    train = read_dataset(train_path, label_column, not no_header) if train_path else None
    metrics = evaluate(task, model, data=data, train=train, seed=seed)
    params = {"task": task, "model": str(model_path), "data": data_path, "train": train_path, "seed": seed}
    if out:
        write_result("eval", params, metrics, out)
    click.echo(json.dumps(metrics, sort_keys=True))


@cli.command()
@click.option("--ns", default="1000,10000,100000", show_default=True, help="Training sizes")
@click.option("--d", "d", type=int, default=1, show_default=True)
@click.option("--gamma", type=float, default=8.0, show_default=True)
@click.option("--rff-dim", type=int, default=1024, show_default=True)
@click.option("--rank", type=int, default=128, show_default=True)
@click.option("--queries", type=int, default=1000, show_default=True)
@click.option("--runs", type=int, default=5, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(), help="Timing CSV")
@handle_errors
def bench(ns, d, gamma, rff_dim, rank, queries, runs, seed, out):
    """Prediction-time sweep of KDE against DMKDE."""
    records = timing_sweep(parse_int_list(ns), d, gamma, rff_dim, rank, queries, seed=seed, runs=runs)
    write_records_csv(records, out)
    click.echo(f"Wrote {len(records)} timing rows to {out}")


@cli.command()
@click.option("--d-list", default="64,256,1024,4096", show_default=True, help="RFF dimensions")
@click.option("--seeds", type=int, default=30, show_default=True)
@click.option("--dataset", type=click.Choice(["mixture1d", "spirals"]), default="mixture1d", show_default=True)
@click.option("--gamma", type=float, default=None, help="Default 8 (mixture1d) or 128 (spirals)")
@click.option("--rank", type=int, default=None, help="Default 30 (mixture1d) or 100 (spirals)")
@click.option("--n-train", type=int, default=None)
@click.option("--data-seed", type=int, default=0, show_default=True)
@click.option("--embedding", type=click.Choice(["normalized", "raw"]), default="normalized", show_default=True)
@click.option("--out", required=True, type=click.Path(), help="Convergence CSV")
@handle_errors
def convergence(d_list, seeds, dataset, gamma, rank, n_train, data_seed, embedding, out):
    """DMKDE accuracy against KDE (and the true pdf) as D grows."""
    records = convergence_study(
        parse_int_list(d_list),
        seeds,
        dataset=dataset,
        gamma=gamma,
        rank=rank,
        n_train=n_train,
        data_seed=data_seed,
        embedding=embedding,
    )
    write_records_csv(records, out)
    click.echo(f"Wrote {len(records)} rows to {out}")


@cli.command()
@click.option("--model", "kind", type=click.Choice(MODEL_KINDS), required=True)
@click.option("--strategy", type=click.Choice(STRATEGIES), default="estimate", show_default=True)
@data_options
@click.option("--n-configs", type=int, default=25, show_default=True)
@click.option("--folds", type=int, default=5, show_default=True)
@click.option("--rff-dim", type=int, default=256, show_default=True)
@click.option("--epochs", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(), help="Search result JSON")
@handle_errors
def search(kind, strategy, data_path, label_column, no_header, n_configs, folds, rff_dim, epochs, seed, out):
    """Random hyperparameter search with k-fold cross-validation."""
    data = read_dataset(data_path, label_column, not no_header)
    result = random_search(kind, data, strategy=strategy, n_configs=n_configs, folds=folds,
                           seed=seed, rff_dim=rff_dim, epochs=epochs)
    params = {"model": kind, "strategy": strategy, "data": data_path, "n_configs": n_configs,
              "folds": folds, "rff_dim": rff_dim, "epochs": epochs, "seed": seed}
    write_result("search", params, result, out)
    click.echo(f"Best {result['metric']}={result['best']['score']:.6g} (trial {result['best']['index']})")


@cli.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--host", default=None, help="Default from DENSMAT_API_HOST")
@click.option("--port", type=int, default=None, help="Default from DENSMAT_API_PORT")
@handle_errors
def serve(model_path, host, port):
    """Serve a saved model over HTTP."""
    import uvicorn

    settings.model_path = str(model_path)
    uvicorn.run("densmat.main:app", host=host or settings.api_host, port=port or settings.api_port)


if __name__ == "__main__":
    cli()
