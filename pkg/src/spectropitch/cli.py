"""Command-line entry point.

Subcommands::

    spectropitch synth-data --out DIR [--config C] [--seed N]
    spectropitch train      --manifest M --out DIR [--config C] [--seed N]
    spectropitch predict    --model F --wav W --out DIR [--pgm]
    spectropitch eval       --model F --manifest M [--split test] --out DIR
    spectropitch compare    --model F --manifest M [--split test] --out DIR
    spectropitch gradcheck  [--seed N] [--n-seeds 5]

Every command that takes ``--out`` writes the resolved configuration to
``DIR/config.json`` next to its outputs.
"""

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import cnn
from .audio_io import read_wav
from .baseline import YinConfig, yin_f0
from .frontend import FrontendConfig, contour_on_grid, make_image_windows, pgm_filename, write_pgm
from .metrics import aggregate, evaluate_contour, write_reports_csv, write_summary_csv
from .synth import DatasetConfig, F0Contour, build_dataset, load_manifest, read_contour_csv, write_contour_csv
from .trainer import TrainConfig, evaluate_split, featurize_manifest, train

log = logging.getLogger("spectropitch")

SECTIONS = {
    "dataset": DatasetConfig,
    "frontend": FrontendConfig,
    "train": TrainConfig,
    "yin": YinConfig,
}

GRADCHECK_TOLERANCE = 1e-3


class CliError(Exception):
    pass


def load_run_config(path=None) -> dict:
    """Parse a JSON run config into dataclass instances, rejecting unknown keys."""
    raw = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise CliError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise CliError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise CliError("config must be a JSON object")
    unknown = set(raw) - set(SECTIONS)
    if unknown:
        raise CliError(f"unknown config sections: {sorted(unknown)}")
    cfg = {}
    for name, cls in SECTIONS.items():
        section = raw.get(name, {})
        allowed = {f.name for f in dataclasses.fields(cls)}
        bad = set(section) - allowed
        if bad:
            raise CliError(f"unknown keys in [{name}]: {sorted(bad)}")
        try:
            cfg[name] = cls(**section)
        except (TypeError, ValueError) as exc:
            raise CliError(f"invalid [{name}] config: {exc}") from exc
    return cfg


def write_resolved_config(cfg: dict, out_dir: Path, **extra) -> None:
    doc = {name: dataclasses.asdict(value) for name, value in cfg.items()}
    doc.update(extra)
    with open(out_dir / "config.json", "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise CliError(f"output directory {out} is not writable: {exc}") from exc
    return out


def _load_model(path):
    if not Path(path).is_file():
        raise CliError(f"model file {path} does not exist")
    return cnn.load_model(path)


def _load_manifest(path):
    if not Path(path).is_file():
        raise CliError(f"manifest {path} does not exist")
    return load_manifest(path)


# -- commands ---------------------------------------------------------------

def cmd_synth_data(cfg: dict, out_dir, seed=None) -> Path:
    dcfg = cfg["dataset"]
    if seed is not None:
        dcfg = dataclasses.replace(dcfg, seed=seed)
        cfg = {**cfg, "dataset": dcfg}
    out = _out_dir(out_dir)
    build_dataset(dcfg, out)
    write_resolved_config(cfg, out)
    return out / "manifest.json"


def cmd_train(manifest_path, cfg: dict, out_dir, seed=None):
    tcfg = cfg["train"]
    if seed is not None:
        tcfg = dataclasses.replace(tcfg, seed=seed)
        cfg = {**cfg, "train": tcfg}
    manifest = _load_manifest(manifest_path)
    out = _out_dir(out_dir)
    fcfg = cfg["frontend"]
    train_groups = featurize_manifest(manifest, fcfg, "train")
    val_groups = featurize_manifest(manifest, fcfg, "val")
    if not train_groups:
        raise CliError(f"manifest {manifest_path} has no training entries")
    _, history = train(train_groups, val_groups or None, tcfg, out_dir=out)
    write_resolved_config(cfg, out, manifest=str(manifest_path))
    log.info("best epoch %d of %d", history.best_epoch, len(history))
    return out / "model.spf0", out / "loss.csv"


def predict_clip(model, clip, fcfg: FrontendConfig = FrontendConfig()):
    """Predicted contour for a whole clip, plus the images it was read from."""
    images = make_image_windows(clip, fcfg)
    pixels = np.stack([im.pixels for im in images])
    raw = cnn.forward(model, pixels).reshape(-1)
    return F0Contour(fcfg.target_hop_s, cnn.raw_to_hz(raw, fcfg)), images


def cmd_predict(model_path, wav_path, out_dir, cfg: dict, pgm=False) -> Path:
    model = _load_model(model_path)
    if not Path(wav_path).is_file():
        raise CliError(f"audio file {wav_path} does not exist")
    out = _out_dir(out_dir)
    contour, images = predict_clip(model, read_wav(wav_path), cfg["frontend"])
    csv_path = out / (Path(wav_path).stem + ".f0.csv")
    write_contour_csv(contour, csv_path)
    if pgm:
        pgm_dir = out / "pgm"
        pgm_dir.mkdir(exist_ok=True)
        for i, im in enumerate(images):
            write_pgm(im, pgm_dir / pgm_filename(i, im))
    write_resolved_config(cfg, out, model=str(model_path), wav=str(wav_path))
    return csv_path


def _split_groups(manifest, split, fcfg):
    groups = featurize_manifest(manifest, fcfg, split)
    if not groups:
        raise CliError(f"manifest has no entries in split {split!r}")
    return groups


def cmd_eval(model_path, manifest_path, out_dir, cfg: dict, split="test"):
    model = _load_model(model_path)
    manifest = _load_manifest(manifest_path)
    out = _out_dir(out_dir)
    reports = evaluate_split(model, _split_groups(manifest, split, cfg["frontend"]), cfg["frontend"])
    write_reports_csv(reports, out / "report.csv")
    write_summary_csv({"cnn": aggregate(reports)}, out / "summary.csv")
    write_resolved_config(cfg, out, model=str(model_path), manifest=str(manifest_path), split=split)
    return out / "report.csv", out / "summary.csv"


def yin_reports(groups, ycfg: YinConfig = YinConfig()):
    """EvalReports for the YIN baseline, truth averaged onto its own frame grid."""
    reports = []
    for g in groups:
        e = g.entry
        est = yin_f0(read_wav(e["clip_path"]), ycfg)
        truth = contour_on_grid(read_contour_csv(e["contour_path"]), 0.0, est.hop_s, len(est))
        reports.append(evaluate_contour(e["entry_id"], est, truth, e["snr_db"]))
    return sorted(reports, key=lambda r: r.entry_id)


def cmd_compare(model_path, manifest_path, out_dir, cfg: dict, split="test"):
    model = _load_model(model_path)
    manifest = _load_manifest(manifest_path)
    out = _out_dir(out_dir)
    groups = _split_groups(manifest, split, cfg["frontend"])
    summaries = {
        "cnn": aggregate(evaluate_split(model, groups, cfg["frontend"])),
        "yin": aggregate(yin_reports(groups, cfg["yin"])),
    }
    table = out / "compare.csv"
    with open(table, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["snr_db", "ar_cnn", "ar_yin", "n_entries"])
        for snr, ar in summaries["cnn"]["ar_by_snr"].items():
            w.writerow([f"{snr:g}", f"{ar:.6f}", f"{summaries['yin']['ar_by_snr'][snr]:.6f}",
                        summaries["cnn"]["n_by_snr"][snr]])
    write_summary_csv(summaries, out / "summary.csv")
    write_resolved_config(cfg, out, model=str(model_path), manifest=str(manifest_path), split=split)
    return table


def cmd_gradcheck(seed=0, n_seeds=5, backward_fn=None, stream=None) -> int:
    """Gradient check on ``n_seeds`` random (model, image, target) triples.

    Prints the largest relative error and returns the process exit code.
    """
    stream = stream or sys.stdout
    worst = 0.0
    for s in range(seed, seed + n_seeds):
        rng = np.random.default_rng(s)
        model = cnn.init_model(3, s)
        for name in ("conv_b", "fc1_b", "fc2_b", "out_b"):
            getattr(model, name)[:] = rng.normal(0.0, 0.05, getattr(model, name).shape)
        image = rng.uniform(0.0, 1.0, (27, 64))
        target = rng.uniform(0.0, 1.0, cnn.N_OUTPUTS)
        report = cnn.grad_check_report(model, image, target, seed=s, backward_fn=backward_fn)
        print(f"seed {s}: max relative error {report['max_rel_error']:.3e} "
              f"({report['n_checked']} params, {report['n_shrunk']} with reduced step)", file=stream)
        worst = max(worst, report["max_rel_error"])
    ok = worst < GRADCHECK_TOLERANCE
    print(f"max relative error {worst:.3e} -> {'PASS' if ok else 'FAIL'}", file=stream)
    return 0 if ok else 1


# -- argument parsing -------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="spectropitch", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True, seed=False):
        sp.add_argument("--config", help="JSON run configuration")
        if out:
            sp.add_argument("--out", required=True, help="output directory")
        if seed:
            sp.add_argument("--seed", type=int)

    common(sub.add_parser("synth-data", help="generate a synthetic dataset"), seed=True)
    sp = sub.add_parser("train", help="train a model on a manifest")
    common(sp, seed=True)
    sp.add_argument("--manifest", required=True)
    sp = sub.add_parser("predict", help="predict an F0 contour for a WAV file")
    common(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--wav", required=True)
    sp.add_argument("--pgm", action="store_true", help="also dump one PGM image per buffer")
    for name, text in (("eval", "evaluate a model on a split"),
                       ("compare", "per-SNR accuracy of the CNN and YIN")):
        sp = sub.add_parser(name, help=text)
        common(sp)
        sp.add_argument("--model", required=True)
        sp.add_argument("--manifest", required=True)
        sp.add_argument("--split", default="test")
    sp = sub.add_parser("gradcheck", help="verify backpropagation by finite differences")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--n-seeds", type=int, default=5)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "gradcheck":
            return cmd_gradcheck(args.seed, args.n_seeds)
        cfg = load_run_config(args.config)
        if args.command == "synth-data":
            print(cmd_synth_data(cfg, args.out, args.seed))
        elif args.command == "train":
            for path in cmd_train(args.manifest, cfg, args.out, args.seed):
                print(path)
        elif args.command == "predict":
            print(cmd_predict(args.model, args.wav, args.out, cfg, args.pgm))
        elif args.command == "eval":
            for path in cmd_eval(args.model, args.manifest, args.out, cfg, args.split):
                print(path)
        elif args.command == "compare":
            print(cmd_compare(args.model, args.manifest, args.out, cfg, args.split))
    except (CliError, OSError, ValueError) as exc:
        print(f"spectropitch: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
