"""INI-style run configuration with a typed schema and ``key=value`` overrides.

A config file has up to five sections; every key is optional and falls back
to the default listed in ``SCHEMA``::

    [data]
    task = clusters            ; clusters | moons | csv
    num_classes = 3
    rotation_deg = 40

    [model]
    g_hidden = 32,32           ; comma-separated widths, empty for none

    [train]
    total_iters = 3000
    seed = 1

    [variant]
    variant = gvb-gd
    lambda = 1
    mu = 1

    [ablate]
    variants = baseline,gvb-gd
    seeds = 1,2,3,4

Key names are unique across sections, so an override may name just the key
(``seed=3``) or the section too (``train.seed=3``).
"""

from __future__ import annotations

import configparser
import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .data import Dataset, Domain, SyntheticSpec, generate, load_csv
from .errors import ConfigError
from .gvb import ABLATION_VARIANTS, Variant
from .nn import make_rng
from .trainer import TrainConfig


def _int(s: str) -> int:
    return int(s)


def _float(s: str) -> float:
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("not finite")
    return v


def _bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true or false")


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(p) for p in s.split(",") if p.strip())


def _names(s: str) -> tuple[str, ...]:
    return tuple(p.strip() for p in s.split(",") if p.strip())


def _opt_str(s: str) -> str | None:
    return s.strip() or None


def _opt_int(s: str) -> int | None:
    return int(s) if s.strip() else None


def _fmt(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    return str(v)


# section -> key -> (parser, default)
SCHEMA: dict[str, dict[str, tuple[Callable[[str], Any], Any]]] = {
    "data": {
        "task": (str, "clusters"),
        "num_classes": (_int, 3),
        "samples_per_domain": (_int, 600),
        "rotation_deg": (_float, 40.0),
        "shift_x": (_float, 0.0),
        "shift_y": (_float, 0.0),
        "noise_std": (_float, 0.5),
        # empty: use the training seed
        "data_seed": (_opt_int, None),
        "source_csv": (_opt_str, None),
        "target_csv": (_opt_str, None),
        "label_column": (str, "y"),
        # "auto": use label_column when the target file has it
        "target_label_column": (str, "auto"),
        "eval_split": (_float, 0.0),
        "standardize": (_bool, True),
    },
    "model": {
        "g_hidden": (_ints, (32, 32)),
        "feat_dim": (_int, 16),
        "d_hidden": (_ints, (32,)),
        "g3_hidden": (_ints, ()),
        "bridge_scale": (_float, 0.1),
    },
    "train": {
        "total_iters": (_int, 3000),
        "batch_size": (_int, 64),
        "base_lr": (_float, 0.003),
        "momentum": (_float, 0.9),
        "grl_gamma": (_float, 10.0),
        "seed": (_int, 0),
        "eval_every": (_int, 100),
        "frozen_bridges": (_bool, False),
    },
    "variant": {
        "variant": (str, "gvb-gd"),
        "lambda": (_float, 1.0),
        "mu": (_float, 1.0),
    },
    "ablate": {
        "variants": (_names, ABLATION_VARIANTS),
        "seeds": (_ints, (1, 2, 3, 4)),
    },
}

_SECTION_OF = {key: section for section, keys in SCHEMA.items() for key in keys}


@dataclass
class RunConfig:
    """A fully resolved configuration: every schema key has a value."""

    values: dict[str, dict[str, Any]]

    def __getitem__(self, dotted: str) -> Any:
        section, key = _locate(dotted)
        return self.values[section][key]

    def replace(self, **changes) -> "RunConfig":
        values = {s: dict(kv) for s, kv in self.values.items()}
        for key, v in changes.items():
            section, key = _locate(key)
            values[section][key] = v
        return RunConfig(values)

    def train_config(self, **extra) -> TrainConfig:
        m, t, v = self.values["model"], self.values["train"], self.values["variant"]
        return TrainConfig(
            variant=v["variant"],
            lam=v["lambda"],
            mu=v["mu"],
            total_iters=t["total_iters"],
            batch_size=t["batch_size"],
            base_lr=t["base_lr"],
            momentum=t["momentum"],
            grl_gamma=t["grl_gamma"],
            seed=t["seed"],
            eval_every=t["eval_every"],
            frozen_bridges=t["frozen_bridges"],
            g_hidden=m["g_hidden"],
            feat_dim=m["feat_dim"],
            d_hidden=m["d_hidden"],
            g3_hidden=m["g3_hidden"],
            bridge_scale=m["bridge_scale"],
            **extra,
        )

    def variant(self) -> Variant:
        v = self.values["variant"]
        return Variant.from_name(v["variant"], v["lambda"], v["mu"])

    def validate(self) -> "RunConfig":
        """Check cross-field constraints by building everything that can be built cheaply."""
        d = self.values["data"]
        if d["task"] not in ("clusters", "moons", "csv"):
            raise ConfigError(f"[data] task must be clusters, moons or csv, got {d['task']!r}")
        if d["task"] == "csv" and not (d["source_csv"] and d["target_csv"]):
            raise ConfigError("[data] task=csv needs source_csv and target_csv")
        if not 0.0 <= d["eval_split"] < 1.0:
            raise ConfigError(f"[data] eval_split must be in [0, 1), got {d['eval_split']}")
        if d["task"] == "moons" and d["num_classes"] != 2:
            raise ConfigError(f"[data] task=moons needs num_classes = 2, got {d['num_classes']}")
        if d["num_classes"] < 2:
            raise ConfigError(f"[data] num_classes must be >= 2, got {d['num_classes']}")
        if d["task"] != "csv":
            self.synthetic_spec()
        self.train_config()
        for name in self.values["ablate"]["variants"]:
            Variant.from_name(name)
        return self

    def synthetic_spec(self, seed: int | None = None) -> SyntheticSpec:
        d = self.values["data"]
        if seed is None:
            seed = d["data_seed"] if d["data_seed"] is not None else self.values["train"]["seed"]
        return SyntheticSpec(
            task=d["task"],
            num_classes=d["num_classes"],
            samples_per_domain=d["samples_per_domain"],
            rotation=math.radians(d["rotation_deg"]),
            translation=(d["shift_x"], d["shift_y"]),
            noise_std=d["noise_std"],
            seed=seed,
        )

    def load_data(self, base_dir=".") -> tuple[tuple[Dataset, Dataset], tuple[Dataset, Dataset]]:
        """``((train_source, train_target), (eval_source, eval_target))``.

        Without an eval split both pairs are the same full datasets.
        Standardization uses statistics of the training source only.
        """
        d = self.values["data"]
        if d["task"] == "csv":
            source, target = self._load_csv_pair(Path(base_dir))
        else:
            source, target = generate(self.synthetic_spec())
        seed = d["data_seed"] if d["data_seed"] is not None else self.values["train"]["seed"]
        if d["eval_split"] > 0:
            (source, ev_s), (target, ev_t) = (
                _split(source, d["eval_split"], make_rng([seed, 2])),
                _split(target, d["eval_split"], make_rng([seed, 3])),
            )
        else:
            ev_s, ev_t = source, target
        if d["standardize"]:
            mean, std = source.features.mean(axis=0), source.features.std(axis=0)
            std = np.where(std > 0, std, 1.0)
            scaled = {id(ds): ds.with_features((ds.features - mean) / std) for ds in (source, target, ev_s, ev_t)}
            source, target, ev_s, ev_t = (scaled[id(ds)] for ds in (source, target, ev_s, ev_t))
        return (source, target), (ev_s, ev_t)

    def _load_csv_pair(self, base: Path) -> tuple[Dataset, Dataset]:
        d = self.values["data"]
        src_path = base / d["source_csv"]
        tgt_path = base / d["target_csv"]
        source = load_csv(src_path, d["label_column"], d["num_classes"], Domain.Source)
        tcol = d["target_label_column"]
        if tcol == "auto":
            tcol = d["label_column"] if d["label_column"] in _csv_header(tgt_path) else None
        elif tcol.lower() in ("", "none"):
            tcol = None
        target = load_csv(tgt_path, tcol, d["num_classes"], Domain.Target)
        return source, target

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        for section, keys in self.values.items():
            cp[section] = {k: _fmt(v) for k, v in keys.items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def _split(ds: Dataset, fraction: float, rng: np.random.Generator) -> tuple[Dataset, Dataset]:
    n_eval = int(round(fraction * len(ds)))
    if n_eval < 1 or n_eval >= len(ds):
        raise ConfigError(f"eval_split {fraction} leaves an empty split for {len(ds)} rows")
    perm = rng.permutation(len(ds))
    tr, ev = np.sort(perm[n_eval:]), np.sort(perm[:n_eval])

    def take(idx):
        return Dataset(ds.features[idx], None if ds.labels is None else ds.labels[idx], ds.domain, ds.num_classes)

    return take(tr), take(ev)


def _csv_header(path: Path) -> list[str]:
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            return [h.strip() for h in next(csv.reader(fh), [])]
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from None


def _locate(dotted: str) -> tuple[str, str]:
    dotted = dotted.strip().lower()
    if "." in dotted:
        section, key = dotted.split(".", 1)
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}] in key {dotted!r}")
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key {key!r} in section [{section}]")
        return section, key
    if dotted == "lam":
        dotted = "lambda"
    if dotted not in _SECTION_OF:
        raise ConfigError(f"unknown key {dotted!r}")
    return _SECTION_OF[dotted], dotted


def _parse_value(section: str, key: str, raw: str, where: str) -> Any:
    parser, _ = SCHEMA[section][key]
    try:
        return parser(raw.strip())
    except ValueError as e:
        raise ConfigError(f"{where}: [{section}] {key} = {raw!r}: {e}") from None


def defaults() -> RunConfig:
    return RunConfig({s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()})


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    """Line number of every ``key = value`` entry, by (section, key)."""
    lines, section = {}, None
    for no, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s[0] in "#;":
            continue
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip().lower()
            continue
        sep = min((i for i in (s.find("="), s.find(":")) if i >= 0), default=-1)
        if section is not None and sep > 0:
            lines.setdefault((section, s[:sep].strip().lower()), no)
    return lines


def parse_config_text(text: str, origin: str = "<config>") -> RunConfig:
    """Parse INI text over the defaults; unknown sections or keys are errors."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text, source=origin)
    except configparser.MissingSectionHeaderError as e:
        raise ConfigError(f"{origin}:{e.lineno}: entry before any [section]") from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as e:
        raise ConfigError(f"{origin}:{e.lineno}: {e.message if hasattr(e, 'message') else e}") from None
    except configparser.ParsingError as e:
        lineno, line = e.errors[0]
        raise ConfigError(f"{origin}:{lineno}: cannot parse {line!r}") from None
    where = _key_lines(text)
    cfg = defaults()
    for section in cp.sections():
        sec = section.lower()
        if sec not in SCHEMA:
            raise ConfigError(f"{origin}: unknown section [{section}]")
        for key, raw in cp.items(section):
            loc = f"{origin}:{where.get((sec, key), '?')}"
            if key not in SCHEMA[sec]:
                raise ConfigError(f"{loc}: unknown key {key!r} in section [{sec}]")
            cfg.values[sec][key] = _parse_value(sec, key, raw, loc)
    return cfg


def load_config(path=None, overrides=()) -> RunConfig:
    """Defaults, then the file at ``path`` (if any), then ``key=value`` overrides."""
    if path is None:
        cfg = defaults()
    else:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e.strerror or e}") from None
        cfg = parse_config_text(text, str(path))
    return apply_overrides(cfg, overrides).validate()


def apply_overrides(cfg: RunConfig, overrides) -> RunConfig:
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        section, key = _locate(key)
        value = _parse_value(section, key, raw, f"--set {item}")
        cfg = cfg.replace(**{f"{section}.{key}": value})
    return cfg


def config_fields() -> list[str]:
    """Every ``section.key`` the schema accepts, in file order."""
    return [f"{s}.{k}" for s, keys in SCHEMA.items() for k in keys]

