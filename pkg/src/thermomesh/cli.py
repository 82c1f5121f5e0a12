"""Command-line orchestration of end-to-end experiments.

Every subcommand reads one JSON config (see :mod:`thermomesh.config`) and
writes plain CSV/JSON artifacts into the output directory.  Given the same
config, re-running any subcommand reproduces its artifacts byte for byte.

Exit codes: 0 success, 1 usage or config error, 2 runtime failure.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click

from . import compensation as comp
from . import evaluation as ev
from .config import ConfigError, ExperimentConfig, load_config, override_seeds, save_config
from .mesh import MeshConfigurationError, build_mesh, ring_preset, save_mesh_config
from .models import MODEL_KINDS, fit_model
from .sampling import build_dataset, load_dataset, save_dataset
from .simulator import GroundTruthCrosstalk, NoiseSpec, RingPhysics


def _mesh_and_rings(config: ExperimentConfig):
    mesh = build_mesh(**config.mesh)
    rings = {name: ring_preset(mesh, name) for name in config.rings}
    return mesh, rings


def _ring_noise(config: ExperimentConfig, ring_index: int) -> NoiseSpec:
    # Per-ring noise stream: separate measurement sessions per placement.
    return NoiseSpec(
        amplitude_std_db=config.noise["amplitude_std_db"],
        drift_step_std_pm=config.noise["drift_step_std_pm"],
        seed=config.noise["seed"] + ring_index,
    )


def _ground_truth(config: ExperimentConfig) -> GroundTruthCrosstalk:
    return GroundTruthCrosstalk(**config.ground_truth)


def _physics(config: ExperimentConfig, ring) -> RingPhysics:
    return RingPhysics.from_ring(
        ring, round_trip_amplitude=config.ring_physics["round_trip_amplitude"])


def _dataset_path(out: Path, ring_id: str) -> Path:
    return out / f"dataset_{ring_id}.csv"


def _load_datasets(config: ExperimentConfig, out: Path):
    datasets = {}
    missing = []
    for name in config.rings:
        path = _dataset_path(out, name)
        if path.exists():
            datasets[name] = load_dataset(path)
        else:
            missing.append(path.name)
    if missing:
        raise FileNotFoundError(
            f"missing dataset artifacts in {out}: {missing}; run `gen` first")
    return datasets


def run_gen(config: ExperimentConfig, out: Path, jobs: int = 1) -> list[Path]:
    """Generate per-ring datasets through the simulated measurement protocol."""
    mesh, rings = _mesh_and_rings(config)
    out.mkdir(parents=True, exist_ok=True)
    save_mesh_config(out / "mesh_config.json", mesh, rings)
    save_config(config, out / "config.json")
    gt = _ground_truth(config)
    written = [out / "mesh_config.json", out / "config.json"]
    for index, name in enumerate(config.rings):
        ring = rings[name]
        dataset = build_dataset(
            mesh, ring, gt, _ring_noise(config, index),
            n_samples=config.sampling["n_samples"],
            seed=config.sampling["seed"] + index,
            split_seed=config.sampling["split_seed"] + index,
            variance=config.sampling["variance"],
            n_portions=config.sampling["n_portions"],
            train_fraction=config.sampling["train_fraction"],
            phys=_physics(config, ring),
            jobs=jobs,
        )
        path = _dataset_path(out, name)
        save_dataset(dataset, path)
        written.append(path)
    return written


def run_fit(config: ExperimentConfig, out: Path, ring: str | None = None,
            model_kind: str | None = None) -> list[Path]:
    """Fit models on generated datasets and save parameter/report JSONs."""
    if model_kind is not None and model_kind not in MODEL_KINDS:
        raise ConfigError(f"unknown model kind {model_kind!r}; expected one of {MODEL_KINDS}")
    if ring is not None and ring not in config.rings:
        raise ConfigError(f"unknown ring {ring!r}; config defines {config.rings}")
    datasets = _load_datasets(config, out)
    rings = [ring] if ring else config.rings
    kinds = [model_kind] if model_kind else list(MODEL_KINDS)
    written = []
    for name in rings:
        for kind in kinds:
            kwargs = {"cv_folds": config.models["cv_folds"],
                      "cv_seed": config.models["cv_seed"]} if kind == "ridge" else {}
            _, report = fit_model(kind, datasets[name], **kwargs)
            path = out / f"fit_{name}_{kind}.json"
            report.save(path)
            written.append(path)
    return written


def run_eval(config: ExperimentConfig, out: Path) -> list[Path]:
    """Fit all models on all rings; write the RMSE table and weight diagnostics."""
    datasets = _load_datasets(config, out)
    fitted = ev.fit_all_models(datasets, cv_seed=config.models["cv_seed"])
    written = []
    table_path = out / "rmse_table.csv"
    ev.save_rmse_table_csv(table_path, fitted)
    written.append(table_path)
    summary = {}
    for name, per_kind in fitted.items():
        ridge = per_kind["ridge"]["model"]
        diag = ev.weight_distance_diagnostics(
            ridge.weights_, datasets[name].distances_mm, datasets[name].puc_ids)
        path = out / f"weights_{name}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["puc_id", "distance_mm", "weight_pm_per_pi"])
            for puc_id, distance, weight in diag["rows"]:
                writer.writerow([puc_id, repr(distance), repr(weight)])
        written.append(path)
        summary[name] = {
            "spearman_rho": diag["spearman_rho"],
            **{kind: {"train_rmse_pm": entry["report"].train_rmse_pm,
                      "test_rmse_pm": entry["report"].test_rmse_pm}
               for kind, entry in per_kind.items()},
        }
        for kind, entry in per_kind.items():
            fit_path = out / f"fit_{name}_{kind}.json"
            entry["report"].save(fit_path)
            written.append(fit_path)
    summary_path = out / "eval_summary.json"
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(summary_path)
    return written


def _fit_decay_models(config: ExperimentConfig, datasets):
    models = {}
    for name in config.rings:
        model, _ = fit_model("thermal-decay", datasets[name])
        models[name] = model
    return models


def run_cross_eval(config: ExperimentConfig, out: Path) -> list[Path]:
    """Evaluate the distance-aware model across all ring placements."""
    datasets = _load_datasets(config, out)
    models = _fit_decay_models(config, datasets)
    matrix = ev.cross_eval(models, datasets)
    path = out / "cross_eval.csv"
    ev.save_cross_eval_csv(path, matrix)
    return [path]


def run_sweep(config: ExperimentConfig, out: Path, ring: str | None = None) -> list[Path]:
    """Training-size sweep of all three models on one ring's dataset."""
    ring = ring or config.rings[0]
    if ring not in config.rings:
        raise ConfigError(f"unknown ring {ring!r}; config defines {config.rings}")
    datasets = _load_datasets(config, out)
    results = []
    for kind in MODEL_KINDS:
        kwargs = {"cv_seed": config.models["cv_seed"]} if kind == "ridge" else {}
        results.append(ev.size_sweep(
            datasets[ring], kind,
            sizes=config.sweep["sizes"],
            n_subsets=config.sweep["n_subsets"],
            seed=config.sweep["seed"],
            **kwargs,
        ))
    path = out / f"sweep_{ring}.csv"
    ev.save_sweep_csv(path, results)
    return [path]


def run_compensate(config: ExperimentConfig, out: Path) -> list[Path]:
    """Closed-loop compensation for every (trained ring, evaluated ring) pair."""
    mesh, rings = _mesh_and_rings(config)
    datasets = _load_datasets(config, out)
    models = _fit_decay_models(config, datasets)
    gt = _ground_truth(config)
    records_by_pair = {}
    for trained in config.rings:
        for evaluated_index, evaluated in enumerate(config.rings):
            dataset = datasets[evaluated]
            model = models[trained]
            predict_fn = lambda X, m=model, d=dataset.distances_mm: m.predict(X, distances=d)
            pair_offset = 3 * dataset.n_samples * (1 + config.rings.index(trained))
            records_by_pair[(trained, evaluated)] = comp.run_compensation(
                mesh, rings[evaluated], _physics(config, rings[evaluated]), gt,
                dataset, predict_fn, _ring_noise(config, evaluated_index),
                n_samples=config.compensation["n_samples"],
                seed=config.compensation["seed"],
                time_offset=pair_offset,
            )
    csv_path = out / "compensation.csv"
    comp.save_compensation_csv(csv_path, records_by_pair)
    summary_path = out / "compensation_summary.json"
    comp.save_compensation_summary(summary_path, records_by_pair)
    return [csv_path, summary_path]


def _read_csv_rows(path: Path) -> list[list[str]]:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def run_report(config: ExperimentConfig, out: Path) -> Path:
    """Render all evaluation artifacts into a single markdown report."""
    expected = {
        "rmse table": out / "rmse_table.csv",
        "cross-evaluation matrix": out / "cross_eval.csv",
        "size sweep": out / f"sweep_{config.rings[0]}.csv",
        "compensation summary": out / "compensation_summary.json",
    }
    missing = [f"{label} ({path.name})" for label, path in expected.items()
               if not path.exists()]
    if missing:
        raise FileNotFoundError(f"missing artifacts in {out}: " + ", ".join(missing))

    lines = ["# Thermal crosstalk experiment report", ""]

    lines += ["## Model fit summary", "",
              "| ring | model | train RMSE (pm) | test RMSE (pm) |",
              "| --- | --- | --- | --- |"]
    for row in _read_csv_rows(expected["rmse table"])[1:]:
        lines.append(f"| {row[0]} | {row[1]} | {float(row[2]):.4f} | {float(row[3]):.4f} |")
    lines.append("")

    lines += ["## Cross-placement generalization (distance-aware model)", "",
              "| evaluated ring | trained ring | test RMSE (pm) |",
              "| --- | --- | --- |"]
    for row in _read_csv_rows(expected["cross-evaluation matrix"])[1:]:
        lines.append(f"| {row[0]} | {row[1]} | {float(row[2]):.4f} |")
    lines.append("")

    lines += [f"## Training-size sweep ({config.rings[0]})", "",
              "| model | train size | train RMSE (pm) | +/- | test RMSE (pm) | +/- |",
              "| --- | --- | --- | --- | --- | --- |"]
    for row in _read_csv_rows(expected["size sweep"])[1:]:
        lines.append("| " + " | ".join([row[0], row[1]] +
                                       [f"{float(v):.4f}" for v in row[2:]]) + " |")
    lines.append("")

    with open(expected["compensation summary"], "r", encoding="utf-8") as fh:
        summaries = json.load(fh)
    lines += ["## Compensation summary", "",
              "| trained | evaluated | median meas (pm) | median predicted (pm) "
              "| median residual (pm) |",
              "| --- | --- | --- | --- | --- |"]
    for entry in summaries:
        lines.append(
            f"| {entry['trained_ring']} | {entry['evaluated_ring']} "
            f"| {entry['delta_meas_pm']['p50']:.4f} "
            f"| {entry['delta_pred_pm']['p50']:.4f} "
            f"| {entry['delta_post_comp_pm']['p50']:.4f} |")
    lines.append("")

    report_path = out / "report.md"
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines))
    return report_path


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Experiment config JSON (defaults apply if omitted).")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Output directory (overrides the config's output_dir).")
@click.option("--seed", "seed_override", type=int, default=None,
              help="Master seed overriding every seed in the config.")
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Worker processes for dataset generation.")
@click.pass_context
def cli(ctx, config_path, out_dir, seed_override, jobs):
    """Simulate, fit, evaluate and compensate thermal crosstalk on the mesh."""
    config = load_config(config_path) if config_path else ExperimentConfig()
    if seed_override is not None:
        config = override_seeds(config, seed_override)
    ctx.obj = {
        "config": config,
        "out": Path(out_dir) if out_dir else Path(config.output_dir),
        "jobs": max(1, jobs),
    }


@cli.command()
@click.pass_context
def gen(ctx):
    """Generate per-ring datasets (spectra simulated and shifts extracted)."""
    written = run_gen(ctx.obj["config"], ctx.obj["out"], jobs=ctx.obj["jobs"])
    for path in written:
        click.echo(f"wrote {path}")


@cli.command()
@click.option("--ring", default=None, help="Fit only this ring (default: all).")
@click.option("--model", "model_kind", default=None,
              help=f"Fit only this model kind; one of {', '.join(MODEL_KINDS)}.")
@click.pass_context
def fit(ctx, ring, model_kind):
    """Fit crosstalk models on generated datasets."""
    written = run_fit(ctx.obj["config"], ctx.obj["out"], ring=ring, model_kind=model_kind)
    for path in written:
        click.echo(f"wrote {path}")


@cli.command("eval")
@click.pass_context
def eval_cmd(ctx):
    """Fit all models on all rings; write RMSE tables and diagnostics."""
    written = run_eval(ctx.obj["config"], ctx.obj["out"])
    for path in written:
        click.echo(f"wrote {path}")


@cli.command("cross-eval")
@click.pass_context
def cross_eval_cmd(ctx):
    """Evaluate the distance-aware model across ring placements."""
    written = run_cross_eval(ctx.obj["config"], ctx.obj["out"])
    for path in written:
        click.echo(f"wrote {path}")


@cli.command()
@click.option("--ring", default=None, help="Ring to sweep (default: first in config).")
@click.pass_context
def sweep(ctx, ring):
    """Training-size sweep with resampled training subsets."""
    written = run_sweep(ctx.obj["config"], ctx.obj["out"], ring=ring)
    for path in written:
        click.echo(f"wrote {path}")


@cli.command()
@click.pass_context
def compensate(ctx):
    """Apply model-based compensation and measure residual shifts."""
    written = run_compensate(ctx.obj["config"], ctx.obj["out"])
    for path in written:
        click.echo(f"wrote {path}")


@cli.command()
@click.pass_context
def report(ctx):
    """Bundle evaluation artifacts into a markdown report."""
    path = run_report(ctx.obj["config"], ctx.obj["out"])
    click.echo(f"wrote {path}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except (click.UsageError, ConfigError, MeshConfigurationError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except Exception as exc:  # runtime failures: missing artifacts, degenerate fits
        click.echo(f"error: {exc}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
