"""Command-line entry point.

Subcommands mirror the pipeline stages (synth, annotate, detect, select,
export-pairs, evaluate) plus ``pipeline`` which runs them end to end. Every
subcommand accepts ``--config FILE`` (a JSON object keyed by flag name);
explicit flags override values from the file.

Exit codes: 0 success, 2 configuration/usage, 3 input contract violation,
4 numeric failure during training, 5 missing ground truth.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

from . import _jit
from .annotator import RelationSchema, ScoreMatrix, annotate_dataset, stub_scorer, synthetic_schema, with_label_space
from .dataset import SynthConfig, dataset_stats, generate_synthetic, labels_sidecar, load_dataset, save_jsonl
from .errors import ContractError, MissingGroundTruthError, ParseError, SchemaError, SilverSieveError, TrainingError
from .evaluation import emit_report
from .o2u import CyclicalSchedule, o2u_detect
from .presets import DESK_PIPELINE
from .selector import CORE, DIVERSITY, CleanSet, SelectionConfig, select_class_aware
from .trainer import LOSS_KINDS, WEIGHT_TARGETS, TrainConfig, load_records, save_records, train_detector
from .verbalizer import export_pairs

log = logging.getLogger("silver_sieve")

EXIT_OK, EXIT_CONFIG, EXIT_INPUT, EXIT_NUMERIC, EXIT_NO_GOLD = 0, 2, 3, 4, 5


class ConfigError(SilverSieveError):
    pass


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, MissingGroundTruthError):
        return EXIT_NO_GOLD
    if isinstance(exc, TrainingError):
        return EXIT_NUMERIC
    if isinstance(exc, (ContractError, ParseError, SchemaError, OSError, json.JSONDecodeError)):
        return EXIT_INPUT
    return 1


# ---------------------------------------------------------------------------
# helpers


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2))


def _atomic_write(path: Path, write) -> None:
    """Run ``write(tmp_path)`` and move the result into place only on success."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        result = write(tmp)
        os.replace(tmp, path)
        return result
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _write_json(path: Path, obj) -> None:
    def write(tmp):
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(obj, fh, indent=2)
            fh.write("\n")

    _atomic_write(Path(path), write)


def _save_dataset(ds, path: Path) -> None:
    """Dataset JSONL plus its label-space sidecar, each written atomically."""
    path = Path(path)
    _atomic_write(path, lambda tmp: save_jsonl(ds, tmp))
    _write_json(labels_sidecar(path), {**ds.label_space.to_json(), "feature_dim": ds.feature_dim})


def _load_schema(path):
    return RelationSchema.load(path) if path else None


def _load_ds(path, schema: RelationSchema | None = None):
    ds = load_dataset(path)
    if schema is not None and ds.label_space != schema.label_space:
        ds = with_label_space(ds, schema.label_space)
    return ds


def _train_config(a) -> TrainConfig:
    try:
        return TrainConfig(
            loss_kind=a.loss,
            learning_rate=a.lr,
            epochs=a.epochs,
            batch_size=a.batch_size,
            n_complementary=a.nc,
            weight_decay=a.weight_decay,
            weight_target=a.weight_target,
            seed=a.seed,
        )
    except ContractError as exc:
        raise ConfigError(str(exc)) from None


def _schedule(a) -> CyclicalSchedule:
    try:
        return CyclicalSchedule(
            r_max=a.r_max,
            r_min=a.r_min,
            epochs_per_round=a.cycle_epochs,
            rounds=a.rounds,
            pretrain_epochs=a.pretrain_epochs,
            pretrain_lr=a.pretrain_lr,
            batch_size=a.batch_size,
        )
    except ContractError as exc:
        raise ConfigError(str(exc)) from None


def _selection(a) -> SelectionConfig:
    try:
        return SelectionConfig(a.eta, a.m)
    except ContractError as exc:
        raise ConfigError(str(exc)) from None


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# commands


def cmd_synth(a) -> int:
    if a.sizes is None and (a.power_law is None or a.n is None):
        raise ConfigError("give --sizes, or --power-law together with --n")
    try:
        cfg = SynthConfig(
            num_classes=a.classes,
            feature_dim=a.dim,
            mean_separation=a.separation,
            class_sizes=tuple(a.sizes) if a.sizes else None,
            power_law=a.power_law,
            n_samples=a.n,
            noise_ratio=a.noise,
            noise_mode=a.noise_mode,
            transition=tuple(map(tuple, json.loads(Path(a.transition).read_text()))) if a.transition else None,
            seed=a.seed,
            with_text=a.with_text,
        )
    except ContractError as exc:
        raise ConfigError(str(exc)) from None
    ds = generate_synthetic(cfg)
    _save_dataset(ds, Path(a.out))
    _emit({"out": str(a.out), **dataset_stats(ds).to_json()})
    return EXIT_OK


def cmd_annotate(a) -> int:
    schema = RelationSchema.load(a.schema)
    if a.threshold is not None:
        schema = schema.with_threshold(a.threshold)
    ds = _load_ds(a.dataset, schema)
    if a.scores:
        scores = ScoreMatrix.load(a.scores)
    elif a.stub_corruption is not None:
        scores = stub_scorer(ds, schema, a.stub_corruption, a.seed)
    else:
        raise ConfigError("give --scores or --stub-corruption")
    out = annotate_dataset(ds, scores, schema)
    _save_dataset(out, Path(a.out))
    _emit({"out": str(a.out), **dataset_stats(out).to_json(schema.label_space)})
    return EXIT_OK


def _detect(ds, a, out: Path) -> list[Path]:
    """Run the configured detector; return the auxiliary files written."""
    names = ds.label_space.names
    meta = {"detector": a.detector, "seed": a.seed}
    aux = []
    if a.detector == "o2u":
        sched = _schedule(a)
        ledger, records = o2u_detect(ds, sched, a.seed)
        ledger_path = Path(str(out) + ".ledger.jsonl")
        _atomic_write(ledger_path, ledger.save)
        aux.append(ledger_path)
        meta.update({"loss_kind": "ce", "schedule": sched.to_json()})
    else:
        cfg = _train_config(a)
        result = train_detector(ds, cfg)
        records = result.records
        hist_path = Path(str(out) + ".history.json")
        _write_json(hist_path, result.history_json())
        aux.append(hist_path)
        meta.update({"loss_kind": cfg.loss_kind, "train": cfg.to_json()})
    _atomic_write(out, lambda tmp: save_records(records, tmp, names))
    meta_path = Path(str(out) + ".meta.json")
    _write_json(meta_path, meta)
    aux.append(meta_path)
    return aux


def cmd_detect(a) -> int:
    schema = _load_schema(a.schema)
    ds = _load_ds(a.dataset, schema)
    out = Path(a.out)
    aux = _detect(ds, a, out)
    _emit({"out": str(out), "n": len(ds), "detector": a.detector, "auxiliary": [str(p) for p in aux]})
    return EXIT_OK


def _select(records, a) -> CleanSet:
    sel = _selection(a)
    return select_class_aware(records, sel.eta, sel.m)


def cmd_select(a) -> int:
    _selection(a)
    schema = _load_schema(a.schema)
    ds = _load_ds(a.dataset, schema)
    records = load_records(a.confidences, ds.label_space.names)
    clean = _select(records, a)
    _atomic_write(Path(a.out), clean.save)
    _emit({"out": str(a.out), "core": len(clean.ids_in(CORE)), "diversity": len(clean.ids_in(DIVERSITY))})
    return EXIT_OK


def _export(ds, schema, clean, out: Path, seed: int, all_templates: bool):
    if schema is None:
        schema = synthetic_schema(ds.label_space)
        ds = with_label_space(ds, schema.label_space)
    return _atomic_write(out, lambda tmp: export_pairs(clean, ds, schema, tmp, seed, all_templates))


def cmd_export_pairs(a) -> int:
    schema = _load_schema(a.schema)
    ds = _load_ds(a.dataset, schema)
    clean = CleanSet.load(a.clean)
    res = _export(ds, schema, clean, Path(a.out), a.seed, a.all_templates)
    _emit({"out": str(a.out), "records": res.records, "samples": res.samples, "skipped": res.skipped})
    return EXIT_OK


def _report(ds, clean, records, a, meta: dict):
    if not ds.has_gold:
        raise MissingGroundTruthError("dataset has no gold labels to evaluate against")
    config = {
        "eta": clean.eta,
        "m": clean.m,
        "loss_kind": meta.get("loss_kind", getattr(a, "loss", None)),
        "detector": meta.get("detector", getattr(a, "detector", None)),
        "seed": meta.get("seed", getattr(a, "seed", None)),
    }
    return emit_report(clean, ds, records, config, a.bins, use_gold_split=getattr(a, "gold_split", False))


def cmd_evaluate(a) -> int:
    if a.bins < 1:
        raise ConfigError("--bins must be positive")
    schema = _load_schema(a.schema)
    ds = _load_ds(a.dataset, schema)
    clean = CleanSet.load(a.clean)
    records = load_records(a.confidences, ds.label_space.names) if a.confidences else None
    meta = {}
    if a.confidences and Path(str(a.confidences) + ".meta.json").exists():
        meta = json.loads(Path(str(a.confidences) + ".meta.json").read_text())
    report = _report(ds, clean, records, a, meta)
    _atomic_write(Path(a.out), lambda tmp: Path(tmp).write_text(report.dumps(), encoding="utf-8"))
    _emit({"out": str(a.out), "detection_accuracy": report.detection_accuracy, "silver_accuracy": report.silver_accuracy})
    return EXIT_OK


ARTIFACTS = ("silver.jsonl", "confidences.jsonl", "clean_set.json", "pairs.jsonl", "report.json")


def cmd_pipeline(a) -> int:
    """synthesize or load → (annotate) → detect → select → export pairs → evaluate."""
    if a.out is None:
        raise ConfigError("pipeline needs --out (or 'out' in the config file)")
    _selection(a)
    if a.detector == "grad":
        _train_config(a)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    schema = _load_schema(a.schema)
    if a.threshold is not None and schema is not None:
        schema = schema.with_threshold(a.threshold)

    if a.dataset:
        ds = _load_ds(a.dataset, schema)
    elif a.synth:
        s = a.synth
        try:
            cfg = SynthConfig(
                num_classes=s["classes"],
                feature_dim=s.get("dim", 16),
                mean_separation=s.get("separation", 3.0),
                class_sizes=tuple(s["sizes"]) if s.get("sizes") else None,
                power_law=s.get("power_law"),
                n_samples=s.get("n"),
                noise_ratio=s.get("noise", 0.0),
                noise_mode=s.get("noise_mode", "symmetric"),
                seed=a.seed,
                with_text=s.get("with_text", True),
            )
        except (ContractError, KeyError) as exc:
            raise ConfigError(f"bad synth section: {exc}") from None
        ds = generate_synthetic(cfg)
    else:
        raise ConfigError("pipeline needs a dataset path or a synth section")

    if a.scores:
        if schema is None:
            schema = synthetic_schema(ds.label_space, a.threshold if a.threshold is not None else 0.5)
            ds = with_label_space(ds, schema.label_space)
        scores = stub_scorer(ds, schema, a.stub_corruption or 0.0, a.seed) if a.scores == "stub" else ScoreMatrix.load(a.scores)
        ds = annotate_dataset(ds, scores, schema)

    paths = {name: out / name for name in ARTIFACTS}
    _save_dataset(ds, paths["silver.jsonl"])
    aux = [labels_sidecar(paths["silver.jsonl"])]
    aux += _detect(ds, a, paths["confidences.jsonl"])
    records = load_records(paths["confidences.jsonl"], ds.label_space.names)
    clean = _select(records, a)
    _atomic_write(paths["clean_set.json"], clean.save)
    res = _export(ds, schema, clean, paths["pairs.jsonl"], a.seed, a.all_templates)
    meta = json.loads(Path(str(paths["confidences.jsonl"]) + ".meta.json").read_text())
    report = _report(ds, clean, records, a, meta)
    _atomic_write(paths["report.json"], lambda tmp: Path(tmp).write_text(report.dumps(), encoding="utf-8"))

    manifest = {
        "artifacts": [{"file": name, "sha256": sha256(paths[name])} for name in ARTIFACTS],
        "auxiliary": [{"file": p.name, "sha256": sha256(p)} for p in aux],
        "summary": {
            "n": len(ds),
            "core": len(clean.ids_in(CORE)),
            "diversity": len(clean.ids_in(DIVERSITY)),
            "pairs": res.records,
            "pairs_skipped": res.skipped,
            "detection_accuracy": report.detection_accuracy if ds.has_gold else None,
        },
    }
    _write_json(out / "manifest.json", manifest)
    _emit({"out": str(out), **manifest["summary"]})
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _add_train_flags(p) -> None:
    p.add_argument("--detector", choices=("grad", "o2u"), default="grad")
    p.add_argument("--loss", choices=LOSS_KINDS, default="iwnl")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--nc", type=int, default=None, help="complementary labels per sample (default: number of classes)")
    p.add_argument("--weight-decay", type=float, default=0.0)
    p.add_argument("--weight-target", choices=WEIGHT_TARGETS, default="silver")
    p.add_argument("--r-max", type=float, default=0.1)
    p.add_argument("--r-min", type=float, default=0.001)
    p.add_argument("--cycle-epochs", type=int, default=5)
    p.add_argument("--rounds", type=int, default=1)
    p.add_argument("--pretrain-epochs", type=int, default=2)
    p.add_argument("--pretrain-lr", type=float, default=1e-2)


def _add_selection_flags(p) -> None:
    p.add_argument("--eta", type=float, default=0.05)
    p.add_argument("--m", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="silver-sieve", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, func, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", help="JSON file of flag values; explicit flags win")
        p.add_argument("--seed", type=int, default=0)
        p.set_defaults(func=func)
        return p

    p = command("synth", cmd_synth, "generate a synthetic imbalanced noisy dataset")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--power-law", type=float)
    p.add_argument("--sizes", type=int, nargs="+")
    p.add_argument("--n", type=int)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--separation", type=float, default=3.0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--noise-mode", choices=("symmetric", "pairwise"), default="symmetric")
    p.add_argument("--transition", help="JSON file holding the pairwise noise matrix")
    p.add_argument("--with-text", action="store_true", help="attach placeholder mentions and sentences")
    p.add_argument("--out", required=True)

    p = command("annotate", cmd_annotate, "assign silver labels from entailment scores")
    p.add_argument("--dataset", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--scores")
    p.add_argument("--stub-corruption", type=float)
    p.add_argument("--threshold", type=float)
    p.add_argument("--out", required=True)

    p = command("detect", cmd_detect, "score every sample with a clean-data detector")
    p.add_argument("--dataset", required=True)
    p.add_argument("--schema")
    _add_train_flags(p)
    p.add_argument("--out", required=True)

    p = command("select", cmd_select, "pick the clean set from confidence scores")
    p.add_argument("--confidences", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--schema")
    _add_selection_flags(p)
    p.add_argument("--out", required=True)

    p = command("export-pairs", cmd_export_pairs, "write premise-hypothesis pairs for the clean set")
    p.add_argument("--clean", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--schema")
    p.add_argument("--all-templates", action="store_true", help="one entailment pair per template")
    p.add_argument("--out", required=True)

    p = command("evaluate", cmd_evaluate, "detection-quality report against gold labels")
    p.add_argument("--clean", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--confidences")
    p.add_argument("--schema")
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--gold-split", action="store_true", help="majority/minority split by gold counts")
    p.add_argument("--out", required=True)

    p = command("pipeline", cmd_pipeline, "run every stage and write a manifest")
    p.add_argument("--preset", choices=("desk",), help="start from a built-in configuration")
    p.add_argument("--dataset")
    p.add_argument("--scores", help="score file, or 'stub' for the controlled stand-in scorer")
    p.add_argument("--stub-corruption", type=float)
    p.add_argument("--schema")
    p.add_argument("--threshold", type=float)
    _add_train_flags(p)
    _add_selection_flags(p)
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--gold-split", action="store_true")
    p.add_argument("--all-templates", action="store_true")
    p.add_argument("--out")
    p.set_defaults(synth=None)
    return parser


def _config_defaults(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    """Load ``--config`` / ``--preset`` values as subparser defaults."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    pre.add_argument("--preset")
    known, _ = pre.parse_known_args(argv)
    values: dict = {}
    if known.preset == "desk":
        values.update(DESK_PIPELINE)
    if known.config:
        try:
            values.update(json.loads(Path(known.config).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read config {known.config}: {exc}")
    if not values:
        return
    values = {k.replace("-", "_"): v for k, v in values.items()}
    command = next((x for x in argv if not x.startswith("-")), None)
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    if command in sub.choices:
        subparser = sub.choices[command]
        subparser.set_defaults(**values)
        # a value supplied by the file satisfies a required flag
        for action in subparser._actions:
            if action.dest in values:
                action.required = False


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _config_defaults(parser, argv)
        a = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if a.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        threads = os.environ.get("SILVER_SIEVE_THREADS")
        if threads:
            try:
                _jit.set_thread_cap(int(threads))
            except ValueError:
                raise ConfigError(f"SILVER_SIEVE_THREADS must be an integer, got {threads!r}") from None
        return a.func(a)
    except SilverSieveError as exc:
        code = exit_code(exc)
        print(f"error: {exc}", file=sys.stderr)
        if code == EXIT_CONFIG:
            print(parser.format_usage(), file=sys.stderr, end="")
        return code
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
