"""Flat pipeline configuration: documented defaults, INI files and provenance.

Precedence, lowest to highest: built-in defaults, the ``--config`` file,
command-line flags. Config files hold ``key = value`` lines (an optional
``[mcgip]`` section header is accepted); keys use the names below, e.g.
``t = 0.7`` or ``mm.w_shape = 0.3``.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from typing import Any, Callable

from .errors import UsageError
from .gaze_model import DEFAULT_DISPERSION_PX, DEFAULT_GRID_SCALE, DEFAULT_MIN_DURATION_MS, DEFAULT_SIGMA_PX
from .moment_sim import DEFAULT_ALPHA
from .pairing import DEFAULT_CONFIDENCE, DEFAULT_THRESHOLD, SCHEMES
from .contrastive.losses import CST_CHOICES, DEFAULT_TAU, PAIR_ORDERS, WEIGHT_MODES

SECTION = "mcgip"


def parse_bool(text: str) -> bool:
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected true or false, got {text!r}")


@dataclass(frozen=True)
class Option:
    key: str
    type: Callable[[str], Any]
    default: Any
    help: str
    check: Callable[[Any], bool] | None = None
    rule: str = ""
    choices: tuple | None = None
    output: bool = False  # output paths stay out of provenance records
    many: bool = False

    @property
    def flag(self) -> str:
        return "--" + self.key.replace("mm.", "mm-").replace("aug.", "").replace("_", "-")

    def convert(self, raw, source: str):
        try:
            value = self.type(raw) if isinstance(raw, str) else raw
        except ValueError as exc:
            raise UsageError(f"{source}: invalid value for {self.key}: {exc}") from None
        if self.choices is not None and value not in self.choices:
            raise UsageError(f"{source}: {self.key} must be one of {', '.join(map(str, self.choices))}, "
                             f"got {value!r}")
        if self.check is not None and not self.check(value):
            raise UsageError(f"{source}: {self.key} {self.rule}, got {value!r}")
        return value


def _pos(x):
    return x > 0


def _nonneg(x):
    return x >= 0


def _unit(x):
    return 0 <= x <= 1


OPTIONS = [
    Option("in", str, None, "input file"),
    Option("out", str, None, "output path", output=True),
    Option("dispersion", float, DEFAULT_DISPERSION_PX, "I-DT dispersion threshold in pixels", _pos, "must be > 0"),
    Option("min_dur", float, DEFAULT_MIN_DURATION_MS, "minimum fixation duration in ms", _pos, "must be > 0"),
    Option("sigma", float, DEFAULT_SIGMA_PX, "heatmap Gaussian sigma in pixels", _pos, "must be > 0"),
    Option("grid_scale", float, DEFAULT_GRID_SCALE, "heatmap cells per pixel", _pos, "must be > 0"),
    Option("scheme", str, "moment", "similarity scheme", choices=SCHEMES),
    Option("a", str, None, "first item (#fixseq or #heatmap file)"),
    Option("b", str, None, "second item (#fixseq or #heatmap file)"),
    Option("alpha", float, DEFAULT_ALPHA, "moment scheme weight of the mass term", _unit, "must lie in [0, 1]"),
    Option("direction", str, "row", "dHash differencing direction", choices=("row", "col")),
    Option("mm.w_shape", float, 0.2, "multimatch weight of the shape dimension", _nonneg, "must be >= 0"),
    Option("mm.w_length", float, 0.2, "multimatch weight of the length dimension", _nonneg, "must be >= 0"),
    Option("mm.w_direction", float, 0.2, "multimatch weight of the direction dimension", _nonneg, "must be >= 0"),
    Option("mm.w_position", float, 0.2, "multimatch weight of the position dimension", _nonneg, "must be >= 0"),
    Option("mm.w_duration", float, 0.2, "multimatch weight of the duration dimension", _nonneg, "must be >= 0"),
    Option("inputs", str, [], "input #fixseq or #heatmap files", many=True),
    Option("data", str, None, "dataset directory holding labels.csv, <id>.pgm and <id>.fix"),
    Option("jobs", int, 1, "worker threads for pairwise evaluation", _pos, "must be >= 1"),
    Option("features_out", str, None, "also write per-item features (moment vectors or dHash codes)",
           output=True),
    Option("affinity", str, None, "affinity CSV"),
    Option("pairs", str, None, "pairs CSV (fixed pair set)"),
    Option("t", float, DEFAULT_THRESHOLD, "affinity threshold for candidate pairs"),
    Option("p", float, DEFAULT_CONFIDENCE, "acceptance probability of a candidate pair", _unit,
           "must lie in [0, 1]"),
    Option("seed", int, 0, "random seed"),
    Option("epoch", int, 0, "epoch index keying the acceptance draws", _nonneg, "must be >= 0"),
    Option("n_per_class", int, 100, "images per class", _pos, "must be >= 1"),
    Option("width", int, 32, "image width in pixels", _pos, "must be >= 1"),
    Option("height", int, 32, "image height in pixels", _pos, "must be >= 1"),
    Option("cst", str, "infonce", "constraint function", choices=CST_CHOICES),
    Option("tau", float, DEFAULT_TAU, "InfoNCE temperature", _pos, "must be > 0"),
    Option("weight_mode", str, "binary", "pair weights: indicator or affinity", choices=WEIGHT_MODES),
    Option("pair_order", str, "both", "ordered terms per off-diagonal pair", choices=PAIR_ORDERS),
    Option("exclude_partners", parse_bool, False, "drop gaze partners from InfoNCE denominators"),
    Option("epochs", int, 50, "training epochs", _nonneg, "must be >= 0"),
    Option("lr", float, 0.5, "SGD learning rate", _nonneg, "must be >= 0"),
    Option("batch_size", int, 20, "mini-batch size", _pos, "must be >= 1"),
    Option("hidden", int, 64, "encoder hidden width", _pos, "must be >= 1"),
    Option("embed_dim", int, 16, "embedding dimension", _pos, "must be >= 1"),
    Option("aug.flip_prob", float, 0.5, "augmentation horizontal flip probability", _unit, "must lie in [0, 1]"),
    Option("aug.crop_min", float, 0.75, "smallest crop side as a fraction of the image", _pos, "must be > 0"),
    Option("aug.crop_max", float, 1.0, "largest crop side as a fraction of the image", _unit,
           "must lie in [0, 1]"),
    Option("aug.noise_sigma", float, 0.05, "augmentation Gaussian noise sigma", _nonneg, "must be >= 0"),
    Option("trace", str, None, "write the per-epoch loss trace CSV here", output=True),
    Option("model", str, None, "model file written by train"),
    Option("test_fraction", float, 0.5, "held-out fraction for the probe",
           lambda x: 0 < x < 1, "must lie in (0, 1)"),
]
OPTION_BY_KEY = {o.key: o for o in OPTIONS}
DEFAULTS = {o.key: o.default for o in OPTIONS}

_MM = ["mm.w_shape", "mm.w_length", "mm.w_direction", "mm.w_position", "mm.w_duration"]
_AUG = ["aug.flip_prob", "aug.crop_min", "aug.crop_max", "aug.noise_sigma"]

# keys each subcommand reads, and the ones it cannot run without
COMMAND_KEYS = {
    "fixations": (["in", "out", "dispersion", "min_dur"], ["in", "out"]),
    "heatmap": (["in", "out", "sigma", "grid_scale"], ["in", "out"]),
    "sim": (["scheme", "a", "b", "alpha", "direction", *_MM, "sigma", "grid_scale"], ["a", "b"]),
    "affinity": (["scheme", "inputs", "data", "out", "features_out", "alpha", "direction", *_MM,
                  "sigma", "grid_scale", "jobs"], ["out"]),
    "pairs": (["affinity", "t", "p", "seed", "epoch", "out"], ["affinity", "out"]),
    "synth": (["out", "n_per_class", "width", "height", "seed"], ["out"]),
    "train": (["data", "pairs", "affinity", "t", "p", "cst", "tau", "weight_mode", "pair_order",
               "exclude_partners", "epochs", "lr", "batch_size", "hidden", "embed_dim", *_AUG, "seed",
               "out", "trace"], ["data", "out"]),
    "probe": (["data", "model", "seed", "test_fraction", "out"], ["data", "model"]),
}


def read_config_file(path: str) -> dict[str, Any]:
    """Typed values from an INI-style file; unknown keys are a usage error."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"--config: cannot read {path}: {exc.strerror}") from None
    if not text.lstrip().startswith("["):
        text = f"[{SECTION}]\n" + text
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    parser.optionxform = str
    try:
        parser.read_string(text, source=path)
    except configparser.Error as exc:
        raise UsageError(f"--config: {exc}") from None
    values = {}
    for section in parser.sections():
        if section != SECTION:
            raise UsageError(f"{path}: unknown section [{section}]")
        for key, raw in parser.items(section):
            opt = OPTION_BY_KEY.get(key)
            if opt is None:
                raise UsageError(f"{path}: unknown configuration key {key!r}")
            values[key] = [r for r in raw.split()] if opt.many else opt.convert(raw, path)
    return values


def effective_config(command: str, file_values: dict, flag_values: dict) -> dict[str, Any]:
    """Merge defaults, file and flags for the keys ``command`` uses."""
    keys, required = COMMAND_KEYS[command]
    cfg = {k: DEFAULTS[k] for k in keys}
    cfg.update({k: v for k, v in file_values.items() if k in cfg})
    cfg.update({k: v for k, v in flag_values.items() if k in cfg})
    for k in required:
        if cfg.get(k) in (None, []):
            raise UsageError(f"missing required option {OPTION_BY_KEY[k].flag}")
    return cfg


def provenance(command: str, cfg: dict) -> dict[str, Any]:
    """The record embedded in outputs: every non-output key plus the command name."""
    rec = {k: v for k, v in cfg.items() if not OPTION_BY_KEY[k].output}
    rec["command"] = command
    return rec


def argv_from_provenance(record: dict, outputs: dict[str, str]) -> list[str]:
    """Command line that re-runs a provenance record, writing to ``outputs``."""
    record = dict(record)
    command = record.pop("command")
    argv, positional = [command], []
    for key, value in sorted(record.items()):
        opt = OPTION_BY_KEY[key]
        if value is None:
            continue
        if opt.many:
            positional += [str(v) for v in value]
            continue
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = repr(value)
        argv += [opt.flag, str(value)]
    for key, path in outputs.items():
        argv += [OPTION_BY_KEY[key].flag, path]
    return argv + positional
