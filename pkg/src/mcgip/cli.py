"""``mcgip`` command-line interface.

Exit status: 0 on success, 1 on usage errors, 2 on data errors. Every
output file carries a ``#% {json}`` provenance comment holding the effective
configuration; :func:`rerun_argv` turns it back into a command line.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import formats
from .config import (COMMAND_KEYS, DEFAULTS, OPTION_BY_KEY, argv_from_provenance, effective_config,
                     provenance, read_config_file)
from .contrastive import (AugmentationPolicy, GatedSchedule, StaticSchedule, ToyEncoder, TrainConfig,
                          diagonal_schedule, linear_probe, synth_gaze_dataset, train)
from .dhash_sim import dhash_encode, dhash_similarity
from .errors import DataError, DivergenceDetected, FormatError, UsageError
from .gaze_model import FixationSequence, detect_fixations, render_heatmap
from .moment_sim import moment_affinity, moment_vector
from .multimatch import DimensionWeights, multimatch_similarity
from .pairing import build_affinity, select_pairs

PROG = "mcgip"

DESCRIPTIONS = {
    "fixations": "detect fixations in a #gazerec recording and write a #fixseq file",
    "heatmap": "render a #fixseq file to a #heatmap grid",
    "sim": "print the gaze similarity of two items",
    "affinity": "pairwise affinity CSV over many items",
    "pairs": "threshold and gate an affinity matrix into a pairs CSV",
    "synth": "write a synthetic two-pattern dataset (PGM images, #fixseq gaze, labels.csv)",
    "train": "pre-train the toy encoder with the gaze-guided contrastive loss",
    "probe": "linear-probe accuracy of a trained model on a labelled dataset",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_option(parser, key: str) -> None:
    opt = OPTION_BY_KEY[key]
    default = "none" if opt.default is None else opt.default
    help_text = f"{opt.help} (default: {default})"
    if opt.many:
        parser.add_argument(key, nargs="*", default=argparse.SUPPRESS, help=help_text)
        return
    kw = {"dest": key, "default": argparse.SUPPRESS, "help": help_text, "metavar": key.split(".")[-1].upper()}
    if opt.choices:
        kw["metavar"] = "{" + ",".join(opt.choices) + "}"
    parser.add_argument(opt.flag, **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog=PROG, description="Gaze-guided positive pairs for contrastive pre-training.",
                     epilog=f"pairing defaults: t = {DEFAULTS['t']}, p = {DEFAULTS['p']}, "
                            f"alpha = {DEFAULTS['alpha']}; precedence: defaults < --config file < flags")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    for name, (keys, _) in COMMAND_KEYS.items():
        p = sub.add_parser(name, help=DESCRIPTIONS[name], description=DESCRIPTIONS[name])
        p.add_argument("--config", default=None, metavar="FILE",
                       help="INI-style file of 'key = value' defaults, overridden by flags (default: none)")
        for key in keys:
            _add_option(p, key)
    return parser


def parse_command(argv) -> tuple[str, dict]:
    ns = vars(build_parser().parse_args(argv))
    command = ns.pop("command")
    if command is None:
        raise UsageError(f"a command is required ({', '.join(COMMAND_KEYS)})")
    config_path = ns.pop("config")
    flags = {k: OPTION_BY_KEY[k].convert(v, OPTION_BY_KEY[k].flag) if not OPTION_BY_KEY[k].many else v
             for k, v in ns.items()}
    file_values = read_config_file(config_path) if config_path else {}
    return command, effective_config(command, file_values, flags)


def _comments(command, cfg):
    return [formats.provenance_line(provenance(command, cfg))]


def _load_item(path, cfg, scheme):
    item = formats.load_gaze_item(path)
    if scheme in ("moment", "dhash") and isinstance(item, FixationSequence):
        item = render_heatmap(item, cfg["sigma"], cfg["grid_scale"])
    return item


def _weights(cfg) -> DimensionWeights:
    try:
        return DimensionWeights(**{k[len("mm."):]: cfg[k] for k in cfg if k.startswith("mm.w_")})
    except ValueError as exc:
        raise UsageError(f"multimatch weights: {exc}") from None


def _params(cfg) -> dict:
    return {"weights": _weights(cfg), "alpha": cfg["alpha"], "direction": cfg["direction"]}


def cmd_fixations(cfg):
    rec, _ = formats.parse_gazerec(formats.read_text(cfg["in"]), cfg["in"])
    seq = detect_fixations(rec, cfg["dispersion"], cfg["min_dur"])
    formats.write_text(cfg["out"], formats.format_fixseq(seq, _comments("fixations", cfg)))


def cmd_heatmap(cfg):
    seq, _ = formats.parse_fixseq(formats.read_text(cfg["in"]), cfg["in"])
    hm = render_heatmap(seq, cfg["sigma"], cfg["grid_scale"])
    formats.write_text(cfg["out"], formats.format_heatmap(hm, _comments("heatmap", cfg)))


def cmd_sim(cfg):
    scheme = cfg["scheme"]
    a, b = (_load_item(cfg[k], cfg, scheme) for k in ("a", "b"))
    if scheme == "multimatch":
        for k, it in (("a", a), ("b", b)):
            if not isinstance(it, FixationSequence):
                raise FormatError("multimatch needs a #fixseq file", 1, cfg[k])
        value = multimatch_similarity(a, b, _weights(cfg))
    elif scheme == "moment":
        value = moment_affinity(moment_vector(a), moment_vector(b), cfg["alpha"])
    else:
        value = dhash_similarity(dhash_encode(a, cfg["direction"]), dhash_encode(b, cfg["direction"]))
    print(float(value))


def _dataset_paths(data_dir: str, suffix: str):
    labels_path = str(Path(data_dir) / "labels.csv")
    ids, labels, _ = formats.parse_labels_csv(formats.read_text(labels_path), labels_path)
    return ids, labels, [str(Path(data_dir) / f"{i}{suffix}") for i in ids]


def cmd_affinity(cfg):
    scheme = cfg["scheme"]
    paths = list(cfg["inputs"])
    if cfg["data"] is not None:
        paths += _dataset_paths(cfg["data"], ".fix")[2]
    if not paths:
        raise UsageError("affinity: give input files or --data DIR")
    items = [_load_item(p, cfg, scheme) for p in paths]
    if scheme == "multimatch":
        bad = [p for p, it in zip(paths, items) if not isinstance(it, FixationSequence)]
        if bad:
            raise FormatError("multimatch needs a #fixseq file", 1, bad[0])
    ids = [it.image_id for it in items]
    if len(set(ids)) != len(ids):
        raise DataError("affinity: input items must have distinct image ids")
    A = build_affinity(items, scheme, _params(cfg), ids=ids, jobs=cfg["jobs"])
    comments = _comments("affinity", cfg)
    formats.write_text(cfg["out"], formats.format_affinity_csv(A, comments))
    if cfg["features_out"] is not None:
        if scheme == "moment":
            text = formats.format_moments_csv(ids, [moment_vector(h) for h in items], comments)
        elif scheme == "dhash":
            text = formats.format_dhash_csv(ids, [dhash_encode(h, cfg["direction"]) for h in items], comments)
        else:
            raise UsageError("affinity: --features-out applies to the moment and dhash schemes")
        formats.write_text(cfg["features_out"], text)


def cmd_pairs(cfg):
    A, _ = formats.parse_affinity_csv(formats.read_text(cfg["affinity"]), cfg["affinity"])
    ps = select_pairs(A, cfg["t"], cfg["p"], cfg["seed"], cfg["epoch"])
    formats.write_text(cfg["out"], formats.format_pairs_csv(ps, _comments("pairs", cfg)))


def cmd_synth(cfg):
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    ds = synth_gaze_dataset(cfg["n_per_class"], (cfg["width"], cfg["height"]), seed=cfg["seed"])
    comments = _comments("synth", cfg)
    for image_id, img, seq in zip(ds.ids, ds.images, ds.gaze):
        formats.write_text(out / f"{image_id}.pgm", formats.format_pgm(img, comments))
        formats.write_text(out / f"{image_id}.fix", formats.format_fixseq(seq, comments))
    formats.write_text(out / "labels.csv", formats.format_labels_csv(ds.ids, ds.labels, comments))


def load_images(data_dir: str):
    ids, labels, paths = _dataset_paths(data_dir, ".pgm")
    images = [formats.parse_pgm(formats.read_text(p), p) for p in paths]
    if len({im.shape for im in images}) > 1:
        raise DataError(f"{data_dir}: images differ in size")
    return ids, labels, np.stack(images)


def cmd_train(cfg):
    ids, _, images = load_images(cfg["data"])
    if cfg["pairs"] is not None and cfg["affinity"] is not None:
        raise UsageError("train: give at most one of --pairs and --affinity")
    if cfg["pairs"] is not None:
        ps, _ = formats.parse_pairs_csv(formats.read_text(cfg["pairs"]), cfg["pairs"])
        schedule = StaticSchedule(ps)
    elif cfg["affinity"] is not None:
        A, _ = formats.parse_affinity_csv(formats.read_text(cfg["affinity"]), cfg["affinity"])
        missing = [i for i in ids if i not in set(A.ids)]
        if missing:
            raise DataError(f"{cfg['affinity']}: no affinity row for image {missing[0]!r}")
        schedule = GatedSchedule(A, cfg["t"], cfg["p"], cfg["seed"])
    else:
        schedule = diagonal_schedule
    try:
        aug = AugmentationPolicy(cfg["aug.flip_prob"], (cfg["aug.crop_min"], cfg["aug.crop_max"]),
                                 cfg["aug.noise_sigma"], seed=cfg["seed"])
    except ValueError as exc:
        raise UsageError(f"train: {exc}") from None
    tcfg = TrainConfig(epochs=cfg["epochs"], lr=cfg["lr"], batch_size=cfg["batch_size"], cst=cfg["cst"],
                       tau=cfg["tau"], weight_mode=cfg["weight_mode"], pair_order=cfg["pair_order"],
                       exclude_partners=cfg["exclude_partners"], seed=cfg["seed"])
    enc = ToyEncoder.init(images[0].size, cfg["hidden"], cfg["embed_dim"], seed=cfg["seed"])
    res = train(images, ids, enc, schedule, aug, tcfg)
    prov = provenance("train", cfg)
    with open(cfg["out"], "wb") as fh:
        fh.write(formats.encode_model(res.encoder, prov))
    if cfg["trace"] is not None:
        formats.write_text(cfg["trace"], formats.format_trace_csv(res.trace_rows(), _comments("train", cfg)))


def cmd_probe(cfg):
    ids, labels, images = load_images(cfg["data"])
    with open(cfg["model"], "rb") as fh:
        enc, _ = formats.decode_model(fh.read(), cfg["model"])
    if enc.input_dim != images[0].size:
        raise DataError(f"{cfg['model']}: model expects {enc.input_dim} pixels, images have {images[0].size}")
    acc = linear_probe(enc(images), labels, seed=cfg["seed"], test_fraction=cfg["test_fraction"])
    print(float(acc))
    if cfg["out"] is not None:
        formats.write_text(cfg["out"], f"accuracy\n{float(acc)!r}\n" + "\n".join(_comments("probe", cfg)) + "\n")


COMMANDS = {
    "fixations": cmd_fixations, "heatmap": cmd_heatmap, "sim": cmd_sim, "affinity": cmd_affinity,
    "pairs": cmd_pairs, "synth": cmd_synth, "train": cmd_train, "probe": cmd_probe,
}


def run_command(argv) -> int:
    try:
        command, cfg = parse_command(list(argv))
        COMMANDS[command](cfg)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"{PROG}: usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, DivergenceDetected) as exc:
        print(f"{PROG}: data error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:  # parameter values a library routine rejected
        print(f"{PROG}: usage error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        name = exc.filename if exc.filename is not None else ""
        print(f"{PROG}: data error: {name}: {exc.strerror or exc}", file=sys.stderr)
        return 2
    return 0


def rerun_argv(path, outputs: dict[str, str]) -> list[str]:
    """Command line reproducing the artifact at ``path`` from its provenance record."""
    data = Path(path).read_bytes()
    if data[:4] == formats.MODEL_MAGIC:
        record = formats.decode_model(data, str(path))[1]
    else:
        record = formats.find_provenance(data.decode("ascii").split("\n"))
    if record is None:
        raise FormatError("no provenance record", None, str(path))
    return argv_from_provenance(record, outputs)


def main(argv=None) -> None:
    sys.exit(run_command(sys.argv[1:] if argv is None else argv))


if __name__ == "__main__":
    main()
