"""Command-line front end: reproducible experiments with file outputs.

Subcommands: gen-data, simulate, train, analyze, verify-paths. One JSON
config file drives everything; command-line flags override single values.
Exit codes: 0 success, 1 check failure, 2 usage/config error, 3 I/O error.

Determinism: per-run seeds are derived from the master seed, ensembles are
aggregated in run order, CSV floats are written in round-trip repr, JSON is
key-sorted, and SVG output carries no timestamps. Every output file embeds
its provenance (command, config, master seed): CSVs in a leading comment
line, JSON under a "provenance" key. The dataset CSV schema is fixed, so
gen-data writes its provenance to a sidecar JSON instead. Ensemble runs are
independent (any execution order yields these outputs); they execute
sequentially here and aggregation sorts by run index.
"""

from __future__ import annotations

import argparse
import copy
import dataclasses
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import datagen, dynamics, morpho, netcore, pathform
from .errors import (
    DivergenceError,
    MorpholabError,
    ParseError,
    PreconditionError,
    UndefinedCorrelationError,
)

PACKAGE = "morpholab"

DEFAULT_CONFIG: dict = {
    "master_seed": 0,
    "output_dir": "out",
    "ensemble_size": 1,
    "data": {
        "n_samples": 5000,
        "n_clusters": 11,
        "n_features": 10,
        "std": 0.05,
        "center_low": 0.0,
        "center_high": 1.0,
    },
    "train": {
        "layer_sizes": [10, 10, 10, 10, 10, 10, 10, 10, 10, 10, 10, 1],
        "bias_mode": "trainable",
        "learning_rate": 0.01,
        "batch_size": 256,
        "epochs": 500,
        "optimizer": "adam",
        "loss_halved": True,
        "init_low": -0.05,
        "init_high": 0.05,
        "dataset": None,
        "train_fraction": 0.8,
        "split_seed": None,
    },
    "simulate": {
        "model": "intralayer",
        "n_nodes": 20,
        "n_layers": 12,
        "dt": 0.004,
        "steps": 250,
        "r_init": "uniform_perturbed",
        "perturbation_scale": 0.01,
        "c_init_low": 0.5,
        "c_init_high": 1.5,
        "max_trajectory_files": 10,
    },
    "analyze": {
        "snapshots": None,
        "epoch": None,
        "threshold_rule": "median",
        "rho_min": 0.5,
        "autocorr_max": -0.2,
        "accuracy_mode": "median",
        "accuracy_threshold": 0.9,
        "plots": True,
    },
    "verify": {
        "n_nets": 12,
        "n_inputs": 5,
        "tolerance": 1e-10,
        "inject_fault": False,
    },
}


@dataclass
class ExperimentConfig:
    master_seed: int
    output_dir: str
    ensemble_size: int
    data: dict
    train: dict
    simulate: dict
    analyze: dict
    verify: dict

    def as_dict(self) -> dict:
        return {
            "master_seed": self.master_seed,
            "output_dir": self.output_dir,
            "ensemble_size": self.ensemble_size,
            "data": self.data,
            "train": self.train,
            "simulate": self.simulate,
            "analyze": self.analyze,
            "verify": self.verify,
        }


class UsageError(MorpholabError, ValueError):
    """Bad flags or malformed config file."""


def _merge_section(name: str, base: dict, override: dict) -> dict:
    merged = dict(base)
    for key, value in override.items():
        if key not in base:
            raise UsageError(f"unknown config key {name}.{key}")
        merged[key] = value
    return merged


def load_config(path: str | None) -> ExperimentConfig:
    raw: dict = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except FileNotFoundError:
            raise UsageError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise UsageError("config root must be a JSON object")
    merged = {}
    for key, default in DEFAULT_CONFIG.items():
        if isinstance(default, dict):
            section = raw.get(key, {})
            if not isinstance(section, dict):
                raise UsageError(f"config section {key!r} must be an object")
            merged[key] = _merge_section(key, default, section)
        else:
            merged[key] = raw.get(key, default)
    for key in raw:
        if key not in DEFAULT_CONFIG:
            raise UsageError(f"unknown config key {key}")
    cfg = ExperimentConfig(
        master_seed=int(merged["master_seed"]),
        output_dir=str(merged["output_dir"]),
        ensemble_size=int(merged["ensemble_size"]),
        data=merged["data"],
        train=merged["train"],
        simulate=merged["simulate"],
        analyze=merged["analyze"],
        verify=merged["verify"],
    )
    if cfg.ensemble_size < 1:
        raise UsageError("ensemble_size must be >= 1")
    return cfg


def _provenance(cfg: ExperimentConfig, command: str) -> str:
    return json.dumps(
        {"package": PACKAGE, "command": command, "master_seed": cfg.master_seed, "config": cfg.as_dict()},
        sort_keys=True,
        separators=(",", ":"),
    )


def _json_ready(obj):
    if isinstance(obj, dict):
        return {str(k): _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_json_ready(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_json_ready(payload), fh, sort_keys=True, indent=1)
        fh.write("\n")


def _write_csv(path: Path, provenance: str, header: str, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# provenance: {provenance}\n")
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _out_dir(cfg: ExperimentConfig, sub: str) -> Path:
    out = Path(cfg.output_dir) / sub
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# gen-data


def cmd_gen_data(cfg: ExperimentConfig) -> int:
    out = _out_dir(cfg, "data")
    spec = datagen.ClusterSpec(seed=cfg.master_seed, **cfg.data)
    data = datagen.gen_clusters(spec)
    csv_path = out / "clusters.csv"
    datagen.save_csv(data, csv_path)
    _write_json(
        out / "clusters.json",
        {
            "provenance": json.loads(_provenance(cfg, "gen-data")),
            "n_samples": len(data),
            "n_features": data.features.shape[1],
            "targets": sorted(set(float(t) for t in data.targets)),
            "csv": csv_path.name,
        },
    )
    print(f"wrote {csv_path} ({len(data)} samples)")
    return 0


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(cfg: ExperimentConfig) -> int:
    out = _out_dir(cfg, "simulate")
    sim = cfg.simulate
    model = sim["model"]
    if model not in ("intralayer", "coupled", "amplitude"):
        raise UsageError(f"unknown model {model!r}")
    config = dynamics.SimConfig(
        dt=float(sim["dt"]),
        steps=int(sim["steps"]),
        seed=cfg.master_seed,
        r_init=str(sim["r_init"]),
        perturbation_scale=float(sim["perturbation_scale"]),
        c_init_low=float(sim["c_init_low"]),
        c_init_high=float(sim["c_init_high"]),
    )
    N = int(sim["n_nodes"])
    L = int(sim["n_layers"])
    runs = cfg.ensemble_size
    prov = _provenance(cfg, "simulate")
    max_files = int(sim["max_trajectory_files"])

    finals = []
    seeds = []
    clamp_total = 0
    diverged: list[dict] = []
    for i in range(runs):
        run_seed = dynamics.derive_seed(cfg.master_seed, i)
        seeds.append(run_seed)
        run_cfg = dataclasses.replace(config, seed=run_seed)
        try:
            if model == "intralayer":
                traj = dynamics.simulate_intralayer(run_cfg, N)
                finals.append(traj.r[-1])
            elif model == "coupled":
                traj = dynamics.simulate_coupled(run_cfg, N, L)
                finals.append(traj.r[-1].ravel())
            else:
                traj = dynamics.simulate_amplitude(run_cfg, N, L)
                finals.append(traj.R[-1])
        except DivergenceError as exc:
            diverged.append({"run": i, "seed": run_seed, "error": str(exc)})
            continue
        clamp_total += traj.clamp_events
        if i < max_files:
            dynamics.write_trajectory_csv(traj, out / f"trajectory_run{i:04d}.csv", prov)

    if not finals:
        print("all runs diverged", file=sys.stderr)
        return 1
    pooled = np.concatenate([f.ravel() for f in finals])

    summary: dict = {
        "provenance": json.loads(prov),
        "model": model,
        "runs": runs,
        "run_seeds": seeds,
        "diverged": diverged,
        "clamp_events_total": clamp_total,
    }

    if model in ("intralayer", "coupled"):
        counts, edges = np.histogram(pooled, bins=50, range=(0.0, max(1.0, float(pooled.max()))))
        _write_csv(
            out / "final_histogram.csv",
            prov,
            "bin_low,bin_high,count",
            ((edges[k], edges[k + 1], int(counts[k])) for k in range(len(counts))),
        )
        try:
            summary["bimodality_coefficient"] = morpho.bimodality_coefficient(pooled)
        except MorpholabError:
            summary["bimodality_coefficient"] = None
        summary["final_values"] = {
            "count": int(pooled.size),
            "min": float(pooled.min()),
            "max": float(pooled.max()),
            "mean": float(pooled.mean()),
        }
    else:
        profiles = np.stack(finals)
        increments = [np.diff(p) for p in profiles]
        rows = []
        lag_summary = {}
        for lag in (1, 2, 3):
            try:
                est = morpho.pooled_increment_autocorrelation(increments, lag)
            except MorpholabError:
                rows.append((lag, "", 0, "", ""))
                lag_summary[str(lag)] = {"value": None, "n_pairs": 0, "ci_low": None, "ci_high": None}
                continue
            ci_defined = runs > 1
            rows.append(
                (
                    lag,
                    est.value,
                    est.n_pairs,
                    est.ci_low if ci_defined else "",
                    est.ci_high if ci_defined else "",
                )
            )
            lag_summary[str(lag)] = {
                "value": est.value,
                "n_pairs": est.n_pairs,
                "ci_low": est.ci_low if ci_defined else None,
                "ci_high": est.ci_high if ci_defined else None,
            }
        _write_csv(out / "profile_autocorrelation.csv", prov, "lag,value,n_pairs,ci_low,ci_high", rows)
        summary["profile_increment_autocorrelation"] = lag_summary
        if runs == 1:
            summary["note"] = "confidence intervals undefined for a single run"

    _write_json(out / "summary.json", summary)
    print(f"wrote {out}/summary.json ({model}, {runs} runs)")
    return 0


# ---------------------------------------------------------------------------
# train


def _load_training_data(cfg: ExperimentConfig) -> tuple[netcore.Dataset, dict]:
    """Dataset plus the reproduction recipe analyze needs to rebuild it."""
    train = cfg.train
    if train["dataset"]:
        data = datagen.load_csv(train["dataset"])
        recipe = {"dataset_csv": str(train["dataset"]), "cluster_spec": None}
    else:
        spec = datagen.ClusterSpec(seed=cfg.master_seed, **cfg.data)
        data = datagen.gen_clusters(spec)
        recipe = {
            "dataset_csv": None,
            "cluster_spec": {
                "n_samples": spec.n_samples,
                "n_clusters": spec.n_clusters,
                "n_features": spec.n_features,
                "std": spec.std,
                "center_low": spec.center_low,
                "center_high": spec.center_high,
                "seed": spec.seed,
            },
        }
    return data, recipe


def cmd_train(cfg: ExperimentConfig) -> int:
    out = _out_dir(cfg, "train")
    tr = cfg.train
    data, recipe = _load_training_data(cfg)
    split_seed = cfg.master_seed if tr["split_seed"] is None else int(tr["split_seed"])
    train_part, test_part = datagen.split(data, float(tr["train_fraction"]), split_seed)
    arch = netcore.NetworkArch(tuple(int(n) for n in tr["layer_sizes"]), bias_mode=str(tr["bias_mode"]))
    prov = _provenance(cfg, "train")

    rows = []
    statuses = []
    for i in range(cfg.ensemble_size):
        run_seed = dynamics.derive_seed(cfg.master_seed, i)
        config = netcore.TrainConfig(
            learning_rate=float(tr["learning_rate"]),
            batch_size=int(tr["batch_size"]),
            epochs=int(tr["epochs"]),
            optimizer=str(tr["optimizer"]),
            loss_halved=bool(tr["loss_halved"]),
            init_low=float(tr["init_low"]),
            init_high=float(tr["init_high"]),
            seed=run_seed,
        )
        net = netcore.init_network(arch, config)
        try:
            series = netcore.train(net, train_part, config)
        except DivergenceError as exc:
            print(f"run {i} diverged: {exc}", file=sys.stderr)
            rows.append((i, run_seed, "diverged", "", "", ""))
            statuses.append({"run": i, "seed": run_seed, "status": "diverged"})
            continue
        netcore.save_snapshots(series, out / f"run_{i:04d}")
        final = series.network_at(-1)
        train_acc = netcore.accuracy(final, train_part)
        test_acc = netcore.accuracy(final, test_part)
        final_loss = series.loss_history[-1] if series.loss_history else ""
        rows.append((i, run_seed, "ok", train_acc, test_acc, final_loss))
        statuses.append({"run": i, "seed": run_seed, "status": "ok", "test_accuracy": test_acc})

    _write_csv(
        out / "accuracy.csv",
        prov,
        "run,seed,status,train_accuracy,test_accuracy,final_loss",
        rows,
    )
    _write_json(
        out / "runs.json",
        {
            "provenance": json.loads(prov),
            "runs": statuses,
            "data": recipe,
            "train_fraction": float(tr["train_fraction"]),
            "split_seed": split_seed,
            "layer_sizes": [int(n) for n in tr["layer_sizes"]],
            "bias_mode": str(tr["bias_mode"]),
        },
    )
    ok = sum(1 for s in statuses if s["status"] == "ok")
    print(f"trained {ok}/{cfg.ensemble_size} runs into {out}")
    return 0


# ---------------------------------------------------------------------------
# analyze


def _rebuild_dataset(runs_meta: dict) -> netcore.Dataset:
    recipe = runs_meta["data"]
    if recipe.get("dataset_csv"):
        return datagen.load_csv(recipe["dataset_csv"])
    spec = datagen.ClusterSpec(**recipe["cluster_spec"])
    return datagen.gen_clusters(spec)


def _deterministic_figure(path: Path, draw) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = PACKAGE
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    draw(ax)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def cmd_analyze(cfg: ExperimentConfig) -> int:
    out = _out_dir(cfg, "analyze")
    an = cfg.analyze
    snap_root = Path(an["snapshots"]) if an["snapshots"] else Path(cfg.output_dir) / "train"
    runs_meta_path = snap_root / "runs.json"
    if not runs_meta_path.exists():
        raise FileNotFoundError(f"no runs.json under {snap_root}; run the train subcommand first")
    with open(runs_meta_path, encoding="utf-8") as fh:
        runs_meta = json.load(fh)
    data = _rebuild_dataset(runs_meta)
    train_part, test_part = datagen.split(
        data, float(runs_meta["train_fraction"]), int(runs_meta["split_seed"])
    )
    thresholds = morpho.StructureThresholds(
        rho_min=float(an["rho_min"]), autocorr_max=float(an["autocorr_max"])
    )
    rule = str(an["threshold_rule"])
    prov = _provenance(cfg, "analyze")

    run_dirs = sorted(snap_root.glob("run_*"))
    missing: list[str] = []
    nets = []  # (run_index, final net, initial net, test_accuracy)
    for d in run_dirs:
        if not (d / "meta.json").exists():
            missing.append(d.name)
            continue
        series = netcore.load_snapshots(d)
        idx = int(d.name.split("_")[1])
        if an["epoch"] is None:
            k = len(series.snapshots) - 1
        else:
            try:
                k = series.epoch_indices.index(int(an["epoch"]))
            except ValueError:
                missing.append(f"{d.name} (no epoch {an['epoch']})")
                continue
        final = series.network_at(k)
        initial = series.network_at(0)
        nets.append((idx, final, initial, netcore.accuracy(final, test_part)))
    if not nets:
        raise FileNotFoundError(f"no usable snapshot directories under {snap_root}")

    accuracies = np.array([acc for _, _, _, acc in nets])
    if an["accuracy_mode"] == "median":
        cut = float(np.median(accuracies))
        selected = {idx for (idx, _, _, acc) in nets if acc > cut}
        filter_desc = {"mode": "median", "cutoff": cut}
    elif an["accuracy_mode"] == "threshold":
        cut = float(an["accuracy_threshold"])
        selected = {idx for (idx, _, _, acc) in nets if acc > cut}
        filter_desc = {"mode": "threshold", "cutoff": cut}
    else:
        raise UsageError(f"unknown accuracy_mode {an['accuracy_mode']!r}")

    # per-network reports and pooled series
    reports: dict[int, morpho.MorphologyReport] = {}
    table_rows = []
    scatter_rows = []
    access_rows = []
    entropy_rows = []
    embed_rows = []
    pooled_in, pooled_out = [], []
    pooled_dS: list[np.ndarray] = []
    pooled_entropy_pairs: list[tuple[np.ndarray, np.ndarray]] = []
    for idx, final, initial, acc in nets:
        report = morpho.build_report(final, data=train_part, threshold_rule=rule, thresholds=thresholds)
        reports[idx] = report
        _write_json(
            out / f"report_run{idx:04d}.json",
            {
                "provenance": json.loads(prov),
                "run": idx,
                "test_accuracy": acc,
                "selected": idx in selected,
                "report": morpho.report_to_dict(report),
            },
        )
        table_rows.append(
            (
                idx,
                acc,
                idx in selected,
                "" if report.omega_correlation is None else report.omega_correlation,
                ""
                if report.lag_autocorrelations.get(1) is None
                else report.lag_autocorrelations[1],
                "" if report.structure_formed is None else report.structure_formed,
            )
        )
        control = morpho.accessible_nodes(initial, rule)
        for depth, (count, ctrl) in enumerate(zip(report.accessible, control)):
            access_rows.append((idx, depth, int(count), int(ctrl)))
        for l, S in enumerate(report.profile.S, start=1):
            entropy_rows.append((idx, l, S))
        if idx in selected:
            o_in, o_out = report.field.pooled_omegas()
            pooled_in.append(o_in)
            pooled_out.append(o_out)
            for l, (oi, oo) in enumerate(zip(report.field.omega_in, report.field.omega_out), start=1):
                for n in range(oi.size):
                    scatter_rows.append((idx, l, n, oi[n], oo[n]))
            pooled_dS.append(report.profile.dS)
            if report.embedding is not None:
                d_emb = np.diff(report.embedding.astype(np.float64))
                pooled_entropy_pairs.append((report.profile.dS, d_emb))
                for g in range(d_emb.size):
                    embed_rows.append((idx, g, report.profile.dS[g], d_emb[g]))

    _write_csv(
        out / "structure_table.csv",
        prov,
        "run,test_accuracy,selected,omega_correlation,entropy_lag1_autocorr,structure_formed",
        table_rows,
    )
    _write_csv(out / "omega_scatter.csv", prov, "run,layer,node,omega_in,omega_out", scatter_rows)
    _write_csv(
        out / "accessibility.csv", prov, "run,depth_from_output,trained_count,control_count", access_rows
    )
    _write_csv(out / "entropy_profile.csv", prov, "run,layer,entropy", entropy_rows)
    _write_csv(out / "embedding_increments.csv", prov, "run,gap,dS,d_embedding", embed_rows)

    summary: dict = {"provenance": json.loads(prov), "accuracy_filter": filter_desc}
    summary["n_networks"] = len(nets)
    summary["n_selected"] = len(selected)
    summary["missing_snapshots"] = missing
    if pooled_in:
        try:
            summary["pooled_omega_correlation"] = morpho.pearson(
                np.concatenate(pooled_in), np.concatenate(pooled_out)
            )
        except UndefinedCorrelationError:
            summary["pooled_omega_correlation"] = None
    if pooled_dS:
        try:
            est = morpho.pooled_increment_autocorrelation(pooled_dS, lag=1)
            summary["pooled_entropy_lag1"] = {
                "value": est.value,
                "n_pairs": est.n_pairs,
                "ci_low": est.ci_low,
                "ci_high": est.ci_high,
            }
        except (PreconditionError, UndefinedCorrelationError):
            # too few pooled pairs, or a constant pool; report nothing rather than abort
            summary["pooled_entropy_lag1"] = None
    if pooled_entropy_pairs:
        xs = np.concatenate([p[0] for p in pooled_entropy_pairs])
        ys = np.concatenate([p[1] for p in pooled_entropy_pairs])
        try:
            summary["entropy_embedding_correlation"] = morpho.pearson(xs, ys)
        except UndefinedCorrelationError:
            summary["entropy_embedding_correlation"] = None

    # structure (rows) against high accuracy (columns), over classifiable runs
    acc_cut = float(an["accuracy_threshold"])
    a = b = c = d = 0
    for idx, _, _, acc in nets:
        formed = reports[idx].structure_formed
        if formed is None:
            continue
        high = acc > acc_cut
        if formed and high:
            a += 1
        elif formed and not high:
            b += 1
        elif high:
            c += 1
        else:
            d += 1
    if a + b + c + d >= 1:
        table = morpho.ContingencyTable2x2(a, b, c, d)
        summary["fisher"] = {
            "table": [[a, b], [c, d]],
            "rows": "structure_formed yes/no",
            "cols": f"test_accuracy > {acc_cut} yes/no",
            "p_value": morpho.fisher_exact(table),
        }
    _write_json(out / "summary.json", summary)

    if bool(an["plots"]):
        S_by_run = {}
        for idx, l, S in entropy_rows:
            S_by_run.setdefault(idx, []).append(S)

        def draw_entropy(ax):
            for idx in sorted(S_by_run):
                S = S_by_run[idx]
                ax.plot(range(1, len(S) + 1), S, color="tab:blue", alpha=0.35, linewidth=0.9)
            ax.set_xlabel("hidden layer")
            ax.set_ylabel("entropy")

        def draw_scatter(ax):
            if scatter_rows:
                oi = [row[3] for row in scatter_rows]
                oo = [row[4] for row in scatter_rows]
                ax.plot(oi, oo, ".", markersize=3, alpha=0.6)
            ax.set_xlabel("in fraction")
            ax.set_ylabel("out fraction")

        depth_tr: dict[int, list[int]] = {}
        depth_ct: dict[int, list[int]] = {}
        for _, depth, count, ctrl in access_rows:
            depth_tr.setdefault(depth, []).append(count)
            depth_ct.setdefault(depth, []).append(ctrl)

        def draw_access(ax):
            depths = sorted(depth_tr)
            ax.plot(depths, [np.mean(depth_tr[d]) for d in depths], "o-", label="trained")
            ax.plot(depths, [np.mean(depth_ct[d]) for d in depths], "s--", label="untrained control")
            ax.set_xlabel("depth from output")
            ax.set_ylabel("accessible nodes")
            ax.legend()

        _deterministic_figure(out / "entropy_profile.svg", draw_entropy)
        _deterministic_figure(out / "omega_scatter.svg", draw_scatter)
        _deterministic_figure(out / "accessibility.svg", draw_access)

    print(f"analyzed {len(nets)} runs ({len(selected)} selected) into {out}")
    return 0


# ---------------------------------------------------------------------------
# verify-paths


def _verify_archs(n_nets: int) -> list[tuple[int, ...]]:
    base = [
        (1, 1, 1, 1),
        (2, 2, 1),
        (3, 3, 3, 1),
        (4, 4, 4, 4, 1),
        (2, 3, 2, 1),
        (3, 2, 4, 1),
    ]
    return [base[i % len(base)] for i in range(n_nets)]


def _random_zero_bias_net(layer_sizes: tuple[int, ...], seed: int) -> netcore.LayeredNetwork:
    arch = netcore.NetworkArch(layer_sizes, bias_mode=netcore.BIAS_ZERO)
    config = netcore.TrainConfig(init_low=-1.0, init_high=1.0, seed=seed)
    return netcore.init_network(arch, config)


def _probe_coupling(net, x, delta_y, source, target, delta):
    """Linear two-point probe: slope of the frozen-activity update of `source`
    in the value of `target`, via path enumeration (independent of the
    closed-form route)."""
    paths = pathform.enumerate_paths(net.arch)
    table = pathform.path_activity_table(net, x, paths)
    A = table.activities[0]
    P = paths.paths
    p, a_node, b_node = source
    sel = (P[:, p - 1] == a_node) & (P[:, p] == b_node)

    def increment(target_value: float) -> float:
        w = [m.copy() for m in net.weights]
        q, u, v = target
        w[q - 1][u, v] = target_value
        prod = np.ones(paths.total)
        for k in range(1, net.arch.depth + 1):
            if k != p:
                prod *= w[k - 1][P[:, k - 1], P[:, k]]
        return float(delta_y * np.sum(x[P[:, 0]] * A * prod * sel))

    q, u, v = target
    base = net.weights[q - 1][u, v]
    return (increment(base + delta) - increment(base - delta)) / (2.0 * delta)


def _rel_err(got: float, want: float) -> float:
    scale = max(abs(got), abs(want))
    if scale == 0.0:
        return 0.0
    return abs(got - want) / scale


def cmd_verify(cfg: ExperimentConfig) -> int:
    out = _out_dir(cfg, "verify")
    ver = cfg.verify
    tol = float(ver["tolerance"])
    n_inputs = int(ver["n_inputs"])
    checks: list[dict] = []

    def record(name: str, max_err: float, tolerance: float, cases: int) -> None:
        checks.append(
            {
                "check": name,
                "max_rel_error": max_err,
                "tolerance": tolerance,
                "cases": cases,
                "passed": bool(max_err <= tolerance),
            }
        )

    # 1) path-sum output vs nested forward
    err_out = 0.0
    cases = 0
    archs = _verify_archs(int(ver["n_nets"]))
    for i, sizes in enumerate(archs):
        net = _random_zero_bias_net(sizes, dynamics.derive_seed(cfg.master_seed, i))
        if bool(ver["inject_fault"]) and i == 0:
            net.weights[0][0, 0] += 0.5
            reference = _random_zero_bias_net(sizes, dynamics.derive_seed(cfg.master_seed, i))
        else:
            reference = net
        paths = pathform.enumerate_paths(net.arch)
        rng = np.random.default_rng(dynamics.derive_seed(cfg.master_seed, 1000 + i))
        for _ in range(n_inputs):
            x = rng.uniform(-1.0, 1.0, size=sizes[0])
            err_out = max(err_out, _rel_err(pathform.path_output(net, x, paths), netcore.forward(reference, x)))
            cases += 1
    record("path_output_vs_forward", err_out, tol, cases)

    # 2) path gradient vs backprop
    err_grad = 0.0
    cases = 0
    for i, sizes in enumerate(archs):
        net = _random_zero_bias_net(sizes, dynamics.derive_seed(cfg.master_seed, i))
        rng = np.random.default_rng(dynamics.derive_seed(cfg.master_seed, 2000 + i))
        X = rng.uniform(-1.0, 1.0, size=(n_inputs, sizes[0]))
        y = rng.uniform(-1.0, 1.0, size=n_inputs)
        batch = netcore.Dataset(X, y)
        grads = netcore.backprop_gradient(net, batch)
        H = net.arch.depth
        for p in range(1, H + 1):
            a_node = int(rng.integers(sizes[p - 1]))
            b_node = int(rng.integers(sizes[p]))
            got = pathform.path_gradient(net, batch, (p, a_node, b_node))
            err_grad = max(err_grad, _rel_err(got, float(grads.weights[p - 1][a_node, b_node])))
            cases += 1
    record("path_gradient_vs_backprop", err_grad, tol, cases)

    # 3) coupling constants vs two-step linear probe
    err_cpl = 0.0
    cases = 0
    for i, sizes in enumerate(archs):
        if len(sizes) < 4:
            continue
        net = _random_zero_bias_net(sizes, dynamics.derive_seed(cfg.master_seed, i))
        rng = np.random.default_rng(dynamics.derive_seed(cfg.master_seed, 3000 + i))
        x = rng.uniform(-1.0, 1.0, size=sizes[0])
        delta_y = float(rng.uniform(0.5, 1.5))
        H = net.arch.depth
        p = int(rng.integers(1, H))
        a_node = int(rng.integers(sizes[p - 1]))
        b_node = int(rng.integers(sizes[p]))
        c_node = int(rng.integers(sizes[p + 1]))
        pair = pathform.coupling_adjacent(net, x, delta_y, (p, a_node, b_node), (p + 1, b_node, c_node))
        for delta in (0.5, 0.25):
            probe = _probe_coupling(net, x, delta_y, (p, a_node, b_node), (p + 1, b_node, c_node), delta)
            err_cpl = max(err_cpl, _rel_err(pair[0].value, probe))
            cases += 1
        if H >= 3 and p <= H - 2:
            d_node = int(rng.integers(sizes[p + 1]))
            e_node = int(rng.integers(sizes[p + 2]))
            pair = pathform.coupling_separated(net, x, delta_y, (p, a_node, b_node), (p + 2, d_node, e_node))
            for delta in (0.5, 0.25):
                probe = _probe_coupling(net, x, delta_y, (p, a_node, b_node), (p + 2, d_node, e_node), delta)
                err_cpl = max(err_cpl, _rel_err(pair[0].value, probe))
                cases += 1
    record("coupling_vs_linear_probe", err_cpl, tol, cases)

    # 4) homogeneous fixed points of both dynamics
    err_fix = 0.0
    for N in (2, 10, 20):
        state = dynamics.LayerState(np.full(N, 1.0 / N**2), np.full(N, 1.3))
        err_fix = max(err_fix, float(np.max(np.abs(dynamics.intralayer_rhs(state)))))
        layers = [dynamics.LayerState(np.full(N, 1.0 / N**2), np.full(N, 1.0)) for _ in range(3)]
        ones_v = np.full(N, 0.8)
        ones_m = np.full((N, N), 1.1)
        stack = dynamics.LayerStackState(
            layers,
            c_right=[ones_v.copy() for _ in range(3)],
            c_left=[ones_v.copy() for _ in range(3)],
            c_next=[ones_m.copy(), ones_m.copy(), None],
            c_prev=[None, ones_m.copy(), ones_m.copy()],
        )
        for l in (1, 2, 3):
            err_fix = max(err_fix, float(np.max(np.abs(dynamics.coupled_rhs(stack, l)))))
    record("homogeneous_fixed_point", err_fix, 1e-12, 12)

    # 5) integrator order on dy/dt = -y (error ratio ~ 2^6 when dt halves)
    y0 = np.array([1.0])
    errs = []
    for dt in (0.2, 0.1):
        y1 = dynamics.rk_step(lambda y: -y, y0, dt)
        errs.append(abs(float(y1[0]) - float(np.exp(-dt))))
    ratio = errs[0] / errs[1]
    ratio_err = abs(ratio - 64.0) / 64.0
    record("rk_step_order", ratio_err, 0.2, 2)

    report = {
        "provenance": json.loads(_provenance(cfg, "verify-paths")),
        "checks": checks,
        "passed": all(c["passed"] for c in checks),
    }
    _write_json(out / "verify_report.json", report)
    print(json.dumps(_json_ready(report), sort_keys=True))
    return 0 if report["passed"] else 1


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    # SUPPRESS defaults let the shared flags appear before or after the
    # subcommand without the subparser default clobbering the value.
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", default=argparse.SUPPRESS, help="JSON experiment config file")
    shared.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override master_seed")
    shared.add_argument("--out", default=argparse.SUPPRESS, help="override output_dir")
    shared.add_argument("--runs", type=int, default=argparse.SUPPRESS, help="override ensemble_size")

    parser = argparse.ArgumentParser(
        prog=PACKAGE, description=__doc__.splitlines()[0], parents=[shared]
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-data", parents=[shared], help="write the synthetic cluster dataset")
    p_sim = sub.add_parser("simulate", parents=[shared], help="run an ODE ensemble")
    p_sim.add_argument("--model", choices=["intralayer", "coupled", "amplitude"])
    p_tr = sub.add_parser("train", parents=[shared], help="train an ensemble of networks")
    p_tr.add_argument(
        "--high-variance", action="store_true", help="initialize weights uniform on [-1, 1]"
    )
    p_an = sub.add_parser("analyze", parents=[shared], help="morphology reports for trained snapshots")
    p_an.add_argument("--snapshots", help="snapshot root (default <out>/train)")
    p_an.add_argument("--threshold-rule", choices=["median", "mean"])
    p_an.add_argument("--rho-min", type=float)
    p_an.add_argument("--autocorr-max", type=float)
    p_an.add_argument("--accuracy-threshold", type=float)
    p_ver = sub.add_parser("verify-paths", parents=[shared], help="run the oracle equivalence checks")
    p_ver.add_argument("--inject-fault", action="store_true", help="corrupt a fixture to prove detection")
    return parser


def _apply_overrides(cfg: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    cfg = copy.deepcopy(cfg)
    seed = getattr(args, "seed", None)
    out = getattr(args, "out", None)
    runs = getattr(args, "runs", None)
    if seed is not None:
        cfg.master_seed = seed
    if out is not None:
        cfg.output_dir = out
    if runs is not None:
        if runs < 1:
            raise UsageError("--runs must be >= 1")
        cfg.ensemble_size = runs
    if args.command == "simulate" and args.model:
        cfg.simulate["model"] = args.model
    if args.command == "train" and args.high_variance:
        cfg.train["init_low"] = -1.0
        cfg.train["init_high"] = 1.0
    if args.command == "analyze":
        if args.snapshots:
            cfg.analyze["snapshots"] = args.snapshots
        if args.threshold_rule:
            cfg.analyze["threshold_rule"] = args.threshold_rule
        if args.rho_min is not None:
            cfg.analyze["rho_min"] = args.rho_min
        if args.autocorr_max is not None:
            cfg.analyze["autocorr_max"] = args.autocorr_max
        if args.accuracy_threshold is not None:
            cfg.analyze["accuracy_threshold"] = args.accuracy_threshold
    if args.command == "verify-paths" and args.inject_fault:
        cfg.verify["inject_fault"] = True
    return cfg


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _apply_overrides(load_config(getattr(args, "config", None)), args)
        if args.command == "gen-data":
            return cmd_gen_data(cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "analyze":
            return cmd_analyze(cfg)
        return cmd_verify(cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except MorpholabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
