"""Command-line entry point: ``bearing-stager <command> [options]``.

Commands: ingest-check, synth, label, train, predict, evaluate. Every config
key can be set in an INI file (``--config``) and overridden by a flag;
``bearing-stager <command> --help`` lists them. Each artifact gets a JSON
manifest with the config hash, seeds, versions and input content hashes.

Exit status is 0 on success, 1 on runtime errors and 2 on usage errors; the
error is reported on stderr as one line of JSON.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .classify import build_training_set, predict_smoothed, train_classifier, write_posteriors_csv
from .config import PipelineConfig, load_config, override_flags
from .errors import BearingStagerError, ConfigError, InvalidConfig, NoSnapshots
from .evaluation import EvaluationReport, emit_report, evaluate_bearing
from .ingest import SNAPSHOT_PATTERN, load_run, validate_run
from .label import LabeledRun, attach_labels, label_run_ae, label_run_pca
from .persist import FORMAT_VERSION, KIND_CLASSIFIER, load_model, save_model
from .synth import generate_run, write_dataset

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    """Argument parser that raises instead of printing usage and exiting."""

    def error(self, message):
        raise ConfigError(message)


# --------------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------------


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _tree_digest(directory: Path, pattern: str = SNAPSHOT_PATTERN) -> str:
    h = hashlib.sha256()
    for p in sorted(directory.glob(pattern)):
        h.update(p.name.encode("utf-8") + b"\0")
        h.update(hashlib.sha256(p.read_bytes()).digest())
    return h.hexdigest()


def bearing_dir(root: str | Path, bearing_id: str) -> Path:
    root = Path(root)
    for candidate in (root / bearing_id, root / f"Bearing{bearing_id}"):
        if candidate.is_dir():
            return candidate
    raise NoSnapshots(f"no directory for bearing {bearing_id!r} under {root}")


def discover_bearings(root: str | Path) -> list[str]:
    root = Path(root)
    if not root.is_dir():
        raise NoSnapshots(f"{root} is not a directory")
    ids = [d.name for d in root.iterdir() if d.is_dir() and any(d.glob(SNAPSHOT_PATTERN))]
    if not ids:
        raise NoSnapshots(f"no bearing directories under {root}")
    return sorted(ids)


def label_spec(spec: str) -> tuple[str, Path]:
    """``BEARING=PATH`` or a bare path whose name identifies the bearing.

    Bare paths: ``<dir>/<id>/truth_labels.csv`` gives ``<id>``, otherwise the
    file stem minus a ``.labels`` or ``_labels`` suffix.
    """
    if "=" in spec and not Path(spec).exists():
        bid, path = spec.split("=", 1)
        return bid, Path(path)
    path = Path(spec)
    if path.name == "truth_labels.csv":
        return path.parent.name, path
    stem = path.stem
    for suffix in (".labels", "_labels"):
        stem = stem.removesuffix(suffix)
    return stem, path


def _manifest(command: str, config: PipelineConfig, arguments: dict, inputs: dict, outputs: list[Path]) -> dict:
    seed = config.pipeline.seed
    return {
        "command": command,
        "arguments": arguments,
        "config": config.to_dict(),
        "config_hash": config.digest(),
        "seeds": {
            "pipeline": seed,
            "source": config.seed_source,
            "autoencoders": [seed, seed + 1],
            "kmeans": seed + 2,
            "classifier": seed,
            "synth": config.synth.seed,
        },
        "versions": {
            "bearing_stager": __version__,
            "model_format": FORMAT_VERSION,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
        "inputs": dict(sorted(inputs.items())),
        "outputs": {str(p): _sha256_file(p) for p in sorted(outputs)},
    }


def write_manifest(path: Path, *args) -> Path:
    path.write_text(json.dumps(_manifest(*args), sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return path


def _run_pool(fn, jobs: list, workers: int) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        futures = [pool.submit(fn, *j) for j in jobs]
        return [f.result() for f in futures]


# --------------------------------------------------------------------------------
# workers (module level so they pickle)
# --------------------------------------------------------------------------------


def _label_job(directory: str, bearing_id: str, method: str, config: PipelineConfig):
    run = load_run(directory, bearing_id)
    lc = config.label_config()
    labeled = label_run_ae(run, lc) if method == "ae" else label_run_pca(run, lc)
    return bearing_id, run.time_indices, labeled.labels, labeled.method, labeled.info.get("models", {})


def _evaluate_job(directory: str, bearing_id: str, label_path: str, model_path: str, window: int):
    clf = load_model(model_path, KIND_CLASSIFIER)
    run = load_run(directory, bearing_id)
    reference = attach_labels(run, label_path)
    seq = predict_smoothed(clf, run, window)
    return evaluate_bearing(seq.stages, reference, bearing_id, run=run)


# --------------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------------


def cmd_ingest_check(args, config: PipelineConfig) -> int:
    root = Path(config.pipeline.root or ".")
    ids = args.bearing or discover_bearings(root)
    reports = []
    for bid in ids:
        run = load_run(bearing_dir(root, bid), bid)
        reports.append(validate_run(run).to_dict())
    text = json.dumps({"runs": reports}, sort_keys=True, indent=1) + "\n"
    if args.out:
        out = Path(args.out)
        out.write_text(text, encoding="utf-8")
        inputs = {f"run:{bid}": _tree_digest(bearing_dir(root, bid)) for bid in ids}
        write_manifest(out.with_name(out.name + ".manifest.json"), "ingest-check", config, {"bearing": ids}, inputs, [out])
    else:
        sys.stdout.write(text)
    bad = [r["bearing_id"] for r in reports if not r["ok"]]
    if bad:
        raise BearingStagerError(f"validation problems in runs {bad}")
    return EXIT_OK


def cmd_synth(args, config: PipelineConfig) -> int:
    run, truth = generate_run(config.synth)
    target = write_dataset(run, truth, args.out)
    outputs = sorted(target.glob(SNAPSHOT_PATTERN)) + [target / "truth_labels.csv"]
    write_manifest(target / "manifest.json", "synth", config, {"out": str(args.out)}, {}, outputs)
    return EXIT_OK


def cmd_label(args, config: PipelineConfig) -> int:
    root = Path(config.pipeline.root or ".")
    ids = sorted(set(args.bearing)) if args.bearing else discover_bearings(root)
    out = Path(args.out)
    single_file = out.suffix == ".csv"
    if single_file and len(ids) != 1:
        raise ConfigError("--out ending in .csv needs exactly one --bearing")
    dirs = {bid: bearing_dir(root, bid) for bid in ids}
    jobs = [(str(dirs[bid]), bid, args.method, config) for bid in ids]
    results = _run_pool(_label_job, jobs, args.jobs)

    outputs = []
    if not single_file:
        out.mkdir(parents=True, exist_ok=True)
    for bid, time_indices, labels, method, models in sorted(results, key=lambda r: r[0]):
        path = out if single_file else out / f"{bid}.labels.csv"
        _write_label_rows(path, time_indices, labels, method)
        outputs.append(path)
        if args.save_models:
            mdir = Path(args.save_models)
            mdir.mkdir(parents=True, exist_ok=True)
            for channel, model in sorted(models.items()):
                outputs.append(save_model(model, mdir / f"{bid}_{args.method}_{channel}.json"))
    manifest = out.with_name(out.name + ".manifest.json") if single_file else out / "manifest.json"
    inputs = {f"run:{bid}": _tree_digest(d) for bid, d in dirs.items()}
    write_manifest(manifest, "label", config, {"bearing": ids, "method": args.method}, inputs, outputs)
    return EXIT_OK


def _write_label_rows(path: Path, time_indices, labels, method: str) -> None:
    # same layout as label.write_labels_csv, without rebuilding the run
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_index", "stage", "method"])
        for t, s in zip(time_indices, labels):
            w.writerow([int(t), int(s), method])


def _labeled_runs(root: Path, specs: list[str]) -> tuple[list[LabeledRun], dict]:
    labeled, inputs = [], {}
    for bid, path in sorted(label_spec(s) for s in specs):
        d = bearing_dir(root, bid)
        run = load_run(d, bid)
        labeled.append(attach_labels(run, path))
        inputs[f"run:{bid}"] = _tree_digest(d)
        inputs[f"labels:{bid}"] = _sha256_file(path)
    return labeled, inputs


def cmd_train(args, config: PipelineConfig) -> int:
    root = Path(config.pipeline.root or ".")
    labeled, inputs = _labeled_runs(root, args.labels)
    ids = [lr.run.bearing_id for lr in labeled]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"duplicate bearings in --labels: {ids}")
    dataset = build_training_set(labeled, config.pipeline.downsample, seed=config.pipeline.seed)
    clf = train_classifier(dataset, config.classifier_config())
    out = Path(args.out)
    save_model(clf, out)
    history = out.with_name(out.stem + ".history.csv")
    with open(history, "w", newline="") as fh:
        fh.write("epoch,loss,accuracy\n")
        for i, (l, a) in enumerate(zip(clf.history["loss"], clf.history["accuracy"]), start=1):
            fh.write(f"{i},{l!r},{a!r}\n")
    write_manifest(
        out.with_name(out.name + ".manifest.json"), "train", config,
        {"labels": sorted(str(p) for _, p in map(label_spec, args.labels)), "out": str(out)},
        inputs, [out, history],
    )
    return EXIT_OK


def cmd_predict(args, config: PipelineConfig) -> int:
    clf = load_model(args.model, KIND_CLASSIFIER)
    run = load_run(args.run)
    seq = predict_smoothed(clf, run, config.pipeline.window)
    out = Path(args.out)
    write_posteriors_csv(seq, out)
    inputs = {"model": _sha256_file(Path(args.model)), f"run:{run.bearing_id}": _tree_digest(Path(args.run))}
    write_manifest(out.with_name(out.name + ".manifest.json"), "predict", config,
                   {"model": str(args.model), "run": str(args.run)}, inputs, [out])
    return EXIT_OK


def cmd_evaluate(args, config: PipelineConfig) -> int:
    root = Path(config.pipeline.root or ".")
    specs = sorted(label_spec(s) for s in args.labels)
    jobs = [
        (str(bearing_dir(root, bid)), bid, str(path), str(args.model), config.pipeline.window)
        for bid, path in specs
    ]
    results = _run_pool(_evaluate_job, jobs, args.jobs)
    report = EvaluationReport(results)
    out = Path(args.out)
    written = emit_report(report, out)
    inputs = {"model": _sha256_file(Path(args.model))}
    for bid, path in specs:
        inputs[f"run:{bid}"] = _tree_digest(bearing_dir(root, bid))
        inputs[f"labels:{bid}"] = _sha256_file(path)
    write_manifest(out / "manifest.json", "evaluate", config,
                   {"model": str(args.model), "labels": [str(p) for _, p in specs]}, inputs, written)
    return EXIT_OK


COMMANDS = {
    "ingest-check": cmd_ingest_check,
    "synth": cmd_synth,
    "label": cmd_label,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
}


# --------------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------------


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="INI file with [pipeline], [ae], [kmeans], [classifier], [synth]")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes for per-bearing work")
    group = parser.add_argument_group("config overrides")
    for flag, section, key in override_flags():
        names = [flag, "--runs"] if flag == "--root" else [flag]
        group.add_argument(*names, dest=f"cfg:{section}:{key}", metavar="VALUE", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bearing-stager", description="Bearing degradation stage labelling and classification.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("ingest-check", help="validate runs in FEMTO layout")
    p.add_argument("--bearing", action="append", help="bearing id (repeatable; default: all)")
    p.add_argument("--out", help="write the JSON report here instead of stdout")

    p = sub.add_parser("synth", help="write a synthetic run with ground-truth labels")
    p.add_argument("--out", required=True, help="dataset root; the run goes to <out>/<synth.bearing_id>")

    p = sub.add_parser("label", help="automatic stage labels per bearing")
    p.add_argument("--bearing", action="append", help="bearing id (repeatable; default: all)")
    p.add_argument("--method", choices=("ae", "pca"), default="ae")
    p.add_argument("--out", required=True, help="label CSV (single bearing) or output directory")
    p.add_argument("--save-models", help="directory for the fitted embedding models")

    p = sub.add_parser("train", help="train the stage classifier on labelled runs")
    p.add_argument("--labels", nargs="+", required=True, help="label files, PATH or BEARING=PATH")
    p.add_argument("--out", required=True, help="model file")

    p = sub.add_parser("predict", help="smoothed stage posteriors for one run")
    p.add_argument("--model", required=True)
    p.add_argument("--run", required=True, help="bearing directory")
    p.add_argument("--out", required=True, help="posteriors CSV")

    p = sub.add_parser("evaluate", help="accuracy, overlap and fault timing against reference labels")
    p.add_argument("--model", required=True)
    p.add_argument("--labels", nargs="+", required=True, help="reference label files, PATH or BEARING=PATH")
    p.add_argument("--out", required=True, help="report directory")

    for p in sub.choices.values():
        _common(p)
    return parser


def _overrides(args) -> dict[str, dict[str, str]]:
    out: dict[str, dict[str, str]] = {}
    for dest, value in vars(args).items():
        if dest.startswith("cfg:") and value is not None:
            _, section, key = dest.split(":")
            out.setdefault(section, {})[key] = value
    return out


def _fail(exc: BaseException, code: int) -> int:
    payload = {"error": type(exc).__name__, "message": " ".join(str(exc).split()), "exit": code}
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
    return code


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        config = load_config(args.config, _overrides(args))
    except (ConfigError, InvalidConfig) as exc:
        return _fail(exc, EXIT_USAGE)
    try:
        return COMMANDS[args.command](args, config)
    except (ConfigError, InvalidConfig) as exc:
        return _fail(exc, EXIT_USAGE)
    except (BearingStagerError, OSError, ValueError) as exc:
        return _fail(exc, EXIT_RUNTIME)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
