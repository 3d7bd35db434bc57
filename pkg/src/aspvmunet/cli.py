"""Command-line entry point: train, eval, verify, emit-scan-order, synth-data.

Exit codes: 0 ok, 2 configuration or usage error, 3 numeric failure,
4 verification failure.
"""

from __future__ import annotations

import argparse
import difflib
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Sequence

import tomli
import tomli_w

from .errors import ConfigError, DataError
from .network import CheckpointError, NetworkConfig, build, load_checkpoint
from .numerics import NumericError
from .pipeline import TrainConfig, evaluate, load_dataset, save_dataset, synth_dataset, train
from .scan import SCAN_METHODS, scan_order_csv

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_VERIFY = 0, 2, 3, 4


@dataclass
class DataConfig:
    dir: str = ""  # empty: generate synthetic data
    synthetic: int = 200
    synthetic_seed: int = 0
    separable: bool = False


@dataclass
class OutputConfig:
    dir: str = "runs/latest"


SECTIONS: dict[str, type] = {"network": NetworkConfig, "train": TrainConfig, "data": DataConfig, "output": OutputConfig}
SHORTCUTS = {"epochs": "train.epochs", "seed": "train.seed", "out": "output.dir", "data": "data.dir"}


@dataclass
class RunConfig:
    network: NetworkConfig = field(default_factory=lambda: NetworkConfig.tiny(input_size=(64, 64)))
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def as_dict(self) -> dict[str, dict[str, Any]]:
        return {"network": self.network.as_dict(), "train": self.train.as_dict(), "data": asdict(self.data), "output": asdict(self.output)}

    def to_toml(self) -> str:
        return tomli_w.dumps(self.as_dict())


def _known(section: str) -> dict[str, Any]:
    cls = SECTIONS[section]
    return {f.name: f for f in fields(cls)}


def _suggest(key: str, section: str | None) -> str:
    sections = [section] if section else list(SECTIONS)
    names = {k: (f"{s}.{k}" if section is None else k) for s in reversed(sections) for k in _known(s)}
    close = difflib.get_close_matches(key, list(names), n=1, cutoff=0.6)
    return f"; did you mean '{names[close[0]]}'?" if close else ""


def _coerce(section: str, key: str, value: Any, default: Any) -> Any:
    where = f"{section}.{key}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
    elif isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
    elif isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        value = float(value)
    elif isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
    elif isinstance(default, tuple):
        if not isinstance(value, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"{where}: expected a list of integers, got {value!r}")
        value = tuple(value)
    return value


def _resolve(key: str) -> tuple[str, str]:
    """'section.key' or a bare key that exists in exactly one section."""
    if "." in key:
        section, name = key.split(".", 1)
        if section not in SECTIONS:
            close = difflib.get_close_matches(section, list(SECTIONS), n=1)
            hint = f"; did you mean '{close[0]}.{name}'?" if close else f"; sections are {list(SECTIONS)}"
            raise ConfigError(f"unknown section '{section}' in '{key}'{hint}")
        if name not in _known(section):
            raise ConfigError(f"unknown key '{name}' in [{section}]{_suggest(name, section)}")
        return section, name
    owners = [s for s in SECTIONS if key in _known(s)]
    if len(owners) == 1:
        return owners[0], key
    if len(owners) > 1:
        raise ConfigError(f"ambiguous key '{key}': qualify it as one of {[f'{s}.{key}' for s in owners]}")
    raise ConfigError(f"unknown key '{key}'{_suggest(key, None)}")


def _flatten(doc: dict[str, Any]) -> list[tuple[str, Any]]:
    items = []
    for k, v in doc.items():
        if isinstance(v, dict):
            if k not in SECTIONS:
                close = difflib.get_close_matches(k, list(SECTIONS), n=1)
                hint = f"; did you mean [{close[0]}]?" if close else f"; sections are {list(SECTIONS)}"
                raise ConfigError(f"unknown section [{k}]{hint}")
            items.extend((f"{k}.{kk}", vv) for kk, vv in v.items())
        else:
            items.append((k, v))
    return items


def parse_value(text: str) -> Any:
    """TOML literal if it parses as one (numbers, booleans, lists, quoted strings), else the raw string."""
    try:
        return tomli.loads(f"v = {text}")["v"]
    except tomli.TOMLDecodeError:
        return text


def build_run_config(doc: dict[str, Any], overrides: Sequence[tuple[str, Any]] = (), variant: str | None = None) -> RunConfig:
    items = _flatten(doc) + list(overrides)
    values: dict[str, dict[str, Any]] = {s: {} for s in SECTIONS}
    for key, raw in items:
        section, name = _resolve(key)
        values[section][name] = raw
    variant = values["network"].get("variant", variant or "tiny")
    defaults = {
        "network": NetworkConfig.base() if variant == "base" else NetworkConfig.tiny(input_size=(64, 64)),
        "train": TrainConfig(),
        "data": DataConfig(),
        "output": OutputConfig(),
    }
    built = {}
    for section, given in values.items():
        base = asdict(defaults[section])
        for name, raw in given.items():
            base[name] = _coerce(section, name, raw, getattr(defaults[section], name))
        built[section] = SECTIONS[section](**base)
    cfg = RunConfig(**built)
    cfg.network.validate()
    cfg.train.validate()
    return cfg


def load_run_config(path: str | Path | None, overrides: Sequence[tuple[str, Any]] = ()) -> RunConfig:
    doc: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            doc = tomli.loads(path.read_text())
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return build_run_config(doc, overrides)


def split_overrides(extra: Sequence[str]) -> list[tuple[str, Any]]:
    """``--section.key value`` pairs (or ``--section.key=value``) from leftover arguments."""
    out = []
    i = 0
    while i < len(extra):
        arg = extra[i]
        if not arg.startswith("--"):
            raise ConfigError(f"unexpected argument {arg!r}; overrides look like --section.key value")
        key = arg[2:]
        if "=" in key:
            key, text = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise ConfigError(f"override {arg} is missing a value")
            text = extra[i + 1]
            i += 2
        out.append((SHORTCUTS.get(key, key).replace("-", "_"), parse_value(text)))
    return out


# -- commands -----------------------------------------------------------------------


def _dataset(data: DataConfig, size: tuple[int, int]):
    if data.dir:
        if not Path(data.dir).is_dir():
            raise DataError(f"dataset directory not found: {data.dir}")
        return load_dataset(data.dir, size)
    return synth_dataset(data.synthetic, size[0], size[1], seed=data.synthetic_seed, separable=data.separable)


def cmd_train(args, extra: Sequence[str]) -> int:
    overrides = split_overrides(extra)
    for name in ("epochs", "seed", "out", "data"):
        value = getattr(args, name)
        if value is not None:
            overrides.append((SHORTCUTS[name], value))
    cfg = load_run_config(args.config, overrides)
    out = Path(cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    text = cfg.to_toml()
    (out / "config.toml").write_text(text)
    print(f"# effective config ({out / 'config.toml'})\n{text}")
    dataset = _dataset(cfg.data, cfg.network.input_size)
    net = build(cfg.network, seed=cfg.train.seed)

    def progress(row):
        print(f"epoch {row['epoch']:3d}  lr {row['lr']:.2e}  loss {row['loss']:.4f}  dsc {row['dsc']:.4f}  miou {row['miou']:.4f}", flush=True)

    result = train(net, dataset, cfg.train, out_dir=out, resume=args.resume, progress=progress)
    print(f"checkpoint: {result.path}\nlog: {out / 'log.csv'}")
    return EXIT_OK


def cmd_eval(args, extra: Sequence[str]) -> int:
    if extra:
        raise ConfigError(f"eval takes no overrides, got {list(extra)}")
    net, ck = load_checkpoint(args.checkpoint)
    size = net.cfg.input_size
    data = DataConfig(dir=args.data or "", synthetic=args.synthetic, synthetic_seed=args.synthetic_seed)
    dataset = _dataset(data, size)
    norm = None
    if "norm_mean" in ck.extra:
        norm = (ck.extra["norm_mean"], ck.extra["norm_std"])
    metrics = evaluate(net, dataset, norm, batch_size=args.batch_size, two_class_miou=args.two_class_miou)
    print(metrics.report())
    return EXIT_OK


def cmd_verify(args, extra: Sequence[str]) -> int:
    from .verify import SUITES, format_table, run_suites

    names = list(SUITES) if args.suite == "all" else [args.suite]
    checks = run_suites(names)
    print(format_table(checks))
    failed = [c for c in checks if not c.passed]
    print(f"\n{len(checks) - len(failed)}/{len(checks)} checks passed")
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_emit_scan_order(args, extra: Sequence[str]) -> int:
    if min(args.height, args.width, args.step) < 1:
        raise ConfigError("height, width and step must be positive")
    text = scan_order_csv(args.method, args.height, args.width, args.step)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_synth_data(args, extra: Sequence[str]) -> int:
    samples = synth_dataset(args.n, args.height, args.width, seed=args.seed, separable=args.separable)
    root = save_dataset(samples, args.out)
    print(f"wrote {len(samples)} image/mask pairs to {root}")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aspvmunet", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train on an image/mask directory or synthetic data; extra --section.key value pairs override the config")
    t.add_argument("--config", help="TOML file with [network], [train], [data] and [output] sections")
    t.add_argument("--epochs", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--out", help="output directory (checkpoint, log.csv, config.toml)")
    t.add_argument("--data", help="dataset directory with images/ and masks/")
    t.add_argument("--resume", help="checkpoint to continue from")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint and print MIOU, DSC, Acc, Spe, Sen")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", help="dataset directory; synthetic data if omitted")
    e.add_argument("--synthetic", type=int, default=200)
    e.add_argument("--synthetic-seed", type=int, default=0)
    e.add_argument("--batch-size", type=int, default=8)
    e.add_argument("--two-class-miou", action="store_true", help="average foreground and background IoU")
    e.set_defaults(func=cmd_eval)

    v = sub.add_parser("verify", help="run self-check suites")
    v.add_argument("suite", choices=["scan", "gradcheck", "params", "metrics", "ssm-oracle", "all"])
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("emit-scan-order", help="write the scan order as CSV (padded-grid indices, -1 for padding)")
    s.add_argument("--height", "-H", type=int, required=True)
    s.add_argument("--width", "-W", type=int, required=True)
    s.add_argument("--step", "-S", type=int, default=2)
    s.add_argument("--method", choices=SCAN_METHODS, default="atrous")
    s.add_argument("--out", help="CSV path; stdout if omitted")
    s.set_defaults(func=cmd_emit_scan_order)

    d = sub.add_parser("synth-data", help="write synthetic lesion images and masks as PNGs")
    d.add_argument("--n", type=int, required=True)
    d.add_argument("--height", "-H", type=int, default=64)
    d.add_argument("--width", "-W", type=int, default=64)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--separable", action="store_true")
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_synth_data)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = make_parser()
    args, extra = parser.parse_known_args(argv)
    if extra and args.command != "train":
        parser.error(f"unrecognized arguments: {' '.join(extra)}")
    try:
        return args.func(args, extra)
    except (ConfigError, DataError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
