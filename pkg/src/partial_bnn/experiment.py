"""Config-driven experiment runs and their output files.

A run builds the dataset, network, partition, and log-density model from a
validated config, executes the chosen backend per seed, and writes
results.json, metrics.csv, predictive.csv (1-d regression only), and
manifest.json into the output directory. Reruns with the same config and
seed are byte-identical: every random draw is keyed by (seed, stream), CSV
floats are printed with 17 significant digits, JSON keys are sorted, and
nothing records wall-clock time.

The per-run seed offsets the dataset and split seeds, so a seed list
doubles as a list of independent splits. Two-stage runs fit a MAP point
first, derive the partition from it, and hand the chosen backend a model
whose network (and therefore initial point) is the MAP fit.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import replace

import numpy as np

from . import __version__
from . import autodiff as ad
from .config import config_hash
from .data import Dataset, gen_sine_large, gen_sine_small, load_csv, make_split
from .inference import (
    CategoricalLikelihood,
    GaussianLikelihood,
    HmcConfig,
    LaplaceConfig,
    LogDensityModel,
    MapConfig,
    MfviConfig,
    SampleSet,
    SwagConfig,
    fit_laplace,
    fit_swag,
    run_hmc,
    save_posterior,
    train_map,
    train_mfvi,
    tune_prior_precision,
)
from .network import Activation, ArchitectureSpec, Network, init_network, save_network
from .partition import (
    ParameterPartition,
    PriorSpec,
    select_all,
    select_by_layer,
    select_top_abs,
)
from .predictive import compute_metrics, predict, predictive_intervals

METRIC_COLUMNS = (
    "stage",
    "seed",
    "k",
    "n_stochastic",
    "nll",
    "rmse",
    "accuracy",
    "ece",
    "coverage_1sd",
    "coverage_2sd",
    "coverage_3sd",
)


def build_dataset(cfg: dict, seed: int) -> Dataset:
    """Dataset for one run; the run seed offsets generator and split seeds."""
    ds_cfg = cfg["dataset"]
    kind = ds_cfg["kind"]
    if kind == "sine_small":
        ds = gen_sine_small(ds_cfg["seed"] + seed, noise_std=ds_cfg["noise_std"])
    elif kind == "sine_large":
        ds = gen_sine_large(ds_cfg["seed"] + seed, noise_std=ds_cfg["noise_std"])
    else:
        ds = load_csv(ds_cfg["path"], ds_cfg["target_columns"], normalize=False)
    sp = ds_cfg["split"]
    if sp["kind"] != "none":
        ds = make_split(
            ds,
            kind=sp["kind"],
            seed=sp["seed"] + seed,
            test_fraction=sp["test_fraction"],
            val_fraction=sp["val_fraction"],
            feature_index=sp["feature_index"],
        )
    if ds_cfg["normalize"]:
        from .data import standardize

        ds = standardize(ds)
    return ds


def build_architecture(cfg: dict, ds: Dataset) -> ArchitectureSpec:
    arch = cfg["architecture"]
    if ds.task == "classification":
        n_out = int(ds.y.max()) + 1
    else:
        n_out = ds.y.shape[1]
    return ArchitectureSpec(
        input_dim=ds.n_features,
        hidden=tuple(arch["hidden"]),
        output_dim=n_out,
        activation=Activation(arch["activation"], arch["slope"]),
        parameterization=arch["parameterization"],
    )


def build_partition(cfg: dict, spec: ArchitectureSpec) -> ParameterPartition:
    part = cfg["partition"]
    if part["kind"] == "all":
        return select_all(spec)
    return select_by_layer(spec, part["layers"], include_biases=part["include_biases"])


def build_model(cfg: dict, net: Network, part: ParameterPartition, ds: Dataset) -> LogDensityModel:
    prior = PriorSpec(cfg["prior"]["mean"], cfg["prior"]["variance"], cfg["prior"]["rescale"])
    if ds.task == "classification":
        lik = CategoricalLikelihood()
    else:
        lk = cfg["likelihood"]
        lik = GaussianLikelihood(
            noise_var=lk["noise_var"],
            learn_precision=lk["learn_precision"],
            precision_prior=tuple(lk["precision_prior"]),
        )
    tx, ty = ds.train
    return LogDensityModel(net, part, prior, lik, cfg["temperature"], x=tx, y=ty)


def run_backend(cfg: dict, model: LogDensityModel, ds: Dataset, seed: int):
    """Execute the configured backend; returns (posterior, model, info).

    MAP returns the trained Network as its "posterior" (a point mass); the
    model comes back with its network moved to the trained point whenever
    the backend fits one.
    """
    bk = cfg["backend"]
    kind = bk["kind"]
    info: dict = {"backend": kind}

    if kind == "map":
        p = bk["map"]
        net = train_map(
            model,
            ds,
            MapConfig(
                steps=p["steps"],
                lr=p["lr"],
                batch_size=p["batch_size"],
                seed=seed,
                val_check_every=p["val_check_every"],
            ),
        )
        model = replace(model, network=net)
        return net, model, info

    if kind == "mfvi":
        p = bk["mfvi"]
        q = train_mfvi(
            model,
            ds,
            MfviConfig(
                epochs=p["epochs"],
                lr=p["lr"],
                weight_decay=p["weight_decay"],
                batch_size=p["batch_size"],
                mc_samples=p["mc_samples"],
                kl_anneal_epochs=p["kl_anneal_epochs"],
                mu_init_std=p["mu_init_std"],
                rho_init_mean=p["rho_init_mean"],
                rho_init_std=p["rho_init_std"],
                seed=seed,
                val_check_every=p["val_check_every"],
                val_samples=p["val_samples"],
            ),
        )
        return q, model, info

    if kind == "hmc":
        p = bk["hmc"]
        if p["init_map_steps"] > 0:
            net = train_map(
                model, ds, MapConfig(steps=p["init_map_steps"], lr=p["init_map_lr"], seed=seed)
            )
            model = replace(model, network=net)
        samples = run_hmc(
            model,
            model.initial_point(),
            HmcConfig(
                chains=p["chains"],
                warmup=p["warmup"],
                samples=p["samples"],
                leapfrog_steps=p["leapfrog_steps"],
                step_size=p["step_size"],
                target_accept=p["target_accept"],
                adapt_step_size=p["adapt_step_size"],
                divergence_threshold=p["divergence_threshold"],
                seed=seed,
            ),
        )
        info["accept_rates"] = [c.accept_rate for c in samples.chains]
        info["step_sizes"] = [c.step_size for c in samples.chains]
        info["divergences"] = samples.total_divergences()
        if samples.warning:
            info["warning"] = samples.warning
        return samples, model, info

    if kind == "laplace":
        p = bk["laplace"]
        if p["map_steps"] > 0:
            net = train_map(model, ds, MapConfig(steps=p["map_steps"], lr=p["map_lr"], seed=seed))
            model = replace(model, network=net)
        if p["tune"]:
            post, curve = tune_prior_precision(model, ds, structure=p["structure"])
            info["tuned_prior_precision"] = post.prior_precision
            info["tuned_val_nll"] = min(n for _, n in curve)
        else:
            post = fit_laplace(
                model, LaplaceConfig(structure=p["structure"], prior_precision=p["prior_precision"])
            )
        return post, model, info

    p = bk["swag"]
    if p["map_steps"] > 0:
        net = train_map(model, ds, MapConfig(steps=p["map_steps"], lr=p["map_lr"], seed=seed))
        model = replace(model, network=net)
    post = fit_swag(
        model,
        ds,
        SwagConfig(
            epochs=p["epochs"],
            snapshots_per_epoch=p["snapshots_per_epoch"],
            rank=p["rank"],
            lr=p["lr"],
            momentum=p["momentum"],
            weight_decay=p["weight_decay"],
            batch_size=p["batch_size"],
            seed=seed,
        ),
    )
    info["n_snapshots"] = post.n_snapshots
    return post, model, info


def score(cfg: dict, model: LogDensityModel, posterior, ds: Dataset, seed: int):
    """(MetricsReport, PredictiveResult) on the test split."""
    tx, ty = ds.test
    if len(tx) == 0:
        raise ValueError("the dataset has no test split to score")
    pred = predict(
        model.network,
        model.partition,
        posterior,
        tx,
        n_samples=cfg["predictions"]["n_samples"],
        task=ds.task,
        noise_var=None if ds.task == "classification" else cfg["likelihood"]["noise_var"],
        seed=seed,
    )
    return compute_metrics(pred, ty, task=ds.task), pred


def predictive_curve(cfg: dict, model: LogDensityModel, posterior, ds: Dataset, seed: int):
    """Rows (x, mean, std, three interval bounds) on an evenly spaced grid.

    Only for 1-d regression; the grid pads the observed x range by the
    configured margin, in the model's input coordinates.
    """
    if ds.task != "regression" or ds.n_features != 1:
        return []
    pc = cfg["predictions"]
    lo = float(ds.x.min()) - pc["grid_margin"]
    hi = float(ds.x.max()) + pc["grid_margin"]
    grid = np.linspace(lo, hi, pc["grid_points"])
    pred = predict(
        model.network,
        model.partition,
        posterior,
        grid[:, None],
        n_samples=pc["n_samples"],
        task="regression",
        noise_var=cfg["likelihood"]["noise_var"],
        seed=seed,
    )
    bands = predictive_intervals(pred, ks=(1, 2, 3))
    std = np.sqrt(np.clip(pred.variance[:, 0], 0.0, None))
    rows = []
    for i, x in enumerate(grid):
        row = [seed, x, pred.mean[i, 0], std[i]]
        for k in (1, 2, 3):
            lo_b, hi_b = bands[k]
            row.extend([lo_b[i, 0], hi_b[i, 0]])
        rows.append(row)
    return rows


def _fmt(value) -> str:
    if value is None or value == "":
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "%.17g" % float(value)


def _metrics_row(stage: str, seed: int, k, n_stochastic: int, report) -> dict:
    row = {c: "" for c in METRIC_COLUMNS}
    row["stage"] = stage
    row["seed"] = seed
    row["k"] = "" if k is None else k
    row["n_stochastic"] = n_stochastic
    for name, val in report.as_dict().items():
        row[name] = val
    return row


def write_metrics_csv(path: str, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRIC_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in METRIC_COLUMNS])


def write_predictive_csv(path: str, rows: list) -> None:
    header = ["seed", "x", "mean", "std"]
    for k in (1, 2, 3):
        header.extend(["lower_%dsd" % k, "upper_%dsd" % k])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _write_json(path: str, obj: dict) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _manifest(cfg: dict, command: str, seeds: list, outputs: list) -> dict:
    return {
        "command": command,
        "config_sha256": config_hash(cfg),
        "outputs": sorted(outputs),
        "seeds": list(seeds),
        "version": __version__,
    }


def run_experiment(cfg: dict, out_dir: str, seeds=None, command: str = "run") -> dict:
    """One backend per seed; returns the results.json payload."""
    seeds = list(cfg["seeds"] if seeds is None else seeds)
    os.makedirs(out_dir, exist_ok=True)
    metric_rows = []
    curve_rows = []
    runs = []
    for seed in seeds:
        ds = build_dataset(cfg, seed)
        spec = build_architecture(cfg, ds)
        net = init_network(spec, seed=seed, stream=1)
        part = build_partition(cfg, spec)
        model = build_model(cfg, net, part, ds)
        posterior, model, info = run_backend(cfg, model, ds, seed)
        report, _ = score(cfg, model, posterior, ds, seed)
        metric_rows.append(_metrics_row(cfg["backend"]["kind"], seed, None, part.n_stochastic, report))
        curve_rows.extend(predictive_curve(cfg, model, posterior, ds, seed))
        if not isinstance(posterior, Network):
            save_posterior(posterior, os.path.join(out_dir, "posterior_seed%d" % seed))
        save_network(model.network, os.path.join(out_dir, "network_seed%d" % seed))
        runs.append({"seed": seed, "info": info, "metrics": report.as_dict()})

    outputs = ["metrics.csv", "results.json", "manifest.json"]
    write_metrics_csv(os.path.join(out_dir, "metrics.csv"), metric_rows)
    if curve_rows:
        write_predictive_csv(os.path.join(out_dir, "predictive.csv"), curve_rows)
        outputs.append("predictive.csv")
    results = {
        "backend": cfg["backend"]["kind"],
        "config_sha256": config_hash(cfg),
        "runs": runs,
        "version": __version__,
    }
    _write_json(os.path.join(out_dir, "results.json"), results)
    _write_json(os.path.join(out_dir, "manifest.json"), _manifest(cfg, command, seeds, outputs))
    return results


def resolve_k(k, param_count: int) -> int:
    if k == "all":
        return param_count
    k = int(k)
    if not 1 <= k <= param_count:
        raise ValueError("k=%d outside [1, %d]" % (k, param_count))
    return k


def map_stage(cfg: dict, seed: int, out_dir: str):
    """Stage 1 of a two-stage run: full MAP fit, persisted as a checkpoint.

    Returns (dataset, map network, map metrics row, map metrics report).
    """
    ds = build_dataset(cfg, seed)
    spec = build_architecture(cfg, ds)
    net = init_network(spec, seed=seed, stream=1)
    mp = cfg["two_stage"]["map"]
    stage1 = build_model(cfg, net, select_all(spec), ds)
    map_net = train_map(
        stage1,
        ds,
        MapConfig(
            steps=mp["steps"],
            lr=mp["lr"],
            batch_size=mp["batch_size"],
            seed=seed,
            val_check_every=mp["val_check_every"],
        ),
    )
    save_network(map_net, os.path.join(out_dir, "map_seed%d" % seed))
    map_model = replace(stage1, network=map_net)
    map_report, _ = score(cfg, map_model, map_net, ds, seed)
    map_row = _metrics_row("map", seed, None, spec.param_count, map_report)
    return ds, map_net, map_row, map_report


def subset_stage(cfg: dict, seed: int, out_dir: str, ds: Dataset, map_net: Network, k=None):
    """Stage 2: partition from the MAP fit, then the configured backend.

    Returns (stage2 metrics row, results entry). The derived partition is
    persisted next to the MAP checkpoint.
    """
    spec = map_net.spec
    sel = cfg["two_stage"]["select"]
    if sel["kind"] == "layers":
        part = select_by_layer(spec, sel["layers"], include_biases=sel["include_biases"])
        k_used = part.n_stochastic
    else:
        k_used = resolve_k(sel["k"] if k is None else k, spec.param_count)
        part = select_top_abs(ad.value_of(map_net.theta), k_used)
    with open(os.path.join(out_dir, "partition_seed%d_k%d.json" % (seed, k_used)), "w") as fh:
        json.dump(part.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")

    model2 = build_model(cfg, map_net.copy(), part, ds)
    posterior, model2, info = run_backend(cfg, model2, ds, seed)
    report, _ = score(cfg, model2, posterior, ds, seed)
    row = _metrics_row(cfg["backend"]["kind"], seed, k_used, part.n_stochastic, report)
    entry = {
        "seed": seed,
        "k": k_used,
        "n_stochastic": part.n_stochastic,
        "metrics": report.as_dict(),
        "info": info,
    }
    return row, entry


def two_stage_single(cfg: dict, seed: int, out_dir: str, k=None):
    """MAP fit, partition from it, then the configured backend on the subset."""
    ds, map_net, map_row, map_report = map_stage(cfg, seed, out_dir)
    row, entry = subset_stage(cfg, seed, out_dir, ds, map_net, k=k)
    entry["map_metrics"] = map_report.as_dict()
    return map_row, row, entry


def run_two_stage(cfg: dict, out_dir: str, seeds=None) -> dict:
    seeds = list(cfg["seeds"] if seeds is None else seeds)
    os.makedirs(out_dir, exist_ok=True)
    metric_rows = []
    runs = []
    for seed in seeds:
        map_row, row, entry = two_stage_single(cfg, seed, out_dir)
        metric_rows.extend([map_row, row])
        runs.append(entry)
    write_metrics_csv(os.path.join(out_dir, "metrics.csv"), metric_rows)
    results = {
        "backend": cfg["backend"]["kind"],
        "config_sha256": config_hash(cfg),
        "runs": runs,
        "version": __version__,
    }
    _write_json(os.path.join(out_dir, "results.json"), results)
    outputs = ["metrics.csv", "results.json", "manifest.json"]
    _write_json(os.path.join(out_dir, "manifest.json"), _manifest(cfg, "two-stage", seeds, outputs))
    return results


def run_sweep(cfg: dict, out_dir: str, seeds=None) -> dict:
    """Two-stage runs over the configured subset sizes, one row per (k, seed)."""
    if "sweep" not in cfg or not cfg["sweep"].get("ks"):
        raise ValueError("sweep needs a 'sweep.ks' list in the config")
    seeds = list(cfg["seeds"] if seeds is None else seeds)
    ks = cfg["sweep"]["ks"]
    os.makedirs(out_dir, exist_ok=True)
    # exactly one metrics row per (k, seed); MAP checkpoints still land on disk
    metric_rows = []
    runs = []
    for seed in seeds:
        ds, map_net, _, _ = map_stage(cfg, seed, out_dir)
        for k in ks:
            row, entry = subset_stage(cfg, seed, out_dir, ds, map_net, k=k)
            metric_rows.append(row)
            runs.append(entry)
    write_metrics_csv(os.path.join(out_dir, "metrics.csv"), metric_rows)
    results = {
        "backend": cfg["backend"]["kind"],
        "config_sha256": config_hash(cfg),
        "runs": runs,
        "version": __version__,
    }
    _write_json(os.path.join(out_dir, "results.json"), results)
    outputs = ["metrics.csv", "results.json", "manifest.json"]
    _write_json(os.path.join(out_dir, "manifest.json"), _manifest(cfg, "sweep", seeds, outputs))
    return results
