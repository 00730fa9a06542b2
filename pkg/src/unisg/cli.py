"""Command line: ``unisg {convert,validate,scene-gen,export,experiment}``.

Options come from three layers: built-in defaults, an optional
``--config`` file of ``key = value`` lines, and flags, later layers winning.
``UNISG_SEED`` supplies the seed when neither the file nor a flag does.
The effective configuration is written next to every output.

Exit codes: 0 ok, 1 validation failure, 2 parse or usage error,
3 conversion failure, 4 training divergence.
"""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import sceneio
from .audit import audit
from .datasets import (
    TEMPLATES,
    AugmentationConfig,
    augment,
    gen_cube_stack,
    gen_or_dataset,
    instantiate,
)
from .experiments import TASKS, ExperimentConfig, run_experiment
from .export import Vocabulary, export_tensors
from .nn.optim import TrainingDivergence
from .sceneio import SceneDocument, SceneParseError
from .xform import ALL_FORMS, Form, InvalidTransform

EXIT_OK, EXIT_INVALID, EXIT_PARSE, EXIT_CONVERT, EXIT_TRAIN = 0, 1, 2, 3, 4
FORM_NAMES = [f.value for f in ALL_FORMS]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Option:
    name: str
    type: type
    default: object
    help: str
    choices: tuple | None = None

    @property
    def dest(self):
        return self.name.replace("-", "_")


def _bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


SEED = Option("seed", int, 0, "random seed (falls back to $UNISG_SEED, then 0)")

OPTIONS = {
    "convert": [
        Option("to", str, None, "target representation form", tuple(FORM_NAMES)),
        Option("out", str, None, "output .unisg file"),
    ],
    "validate": [
        Option("reference", str, None, "compare world placements against this .unisg file"),
    ],
    "scene-gen": [
        Option("template", str, "operating_room", "what to generate",
               tuple(TEMPLATES) + ("or_dataset", "cube_stack")),
        SEED,
        Option("count", int, 1, "number of scenes (augmented copies or dataset size)"),
        Option("augment", _bool, False, "perturb template scenes"),
        Option("translation-sigma", float, 0.05, "translation noise, fraction of scene diameter"),
        Option("rotation-max-deg", float, 5.0, "largest random rotation in degrees"),
        Option("mesh-sigma", float, 0.01, "mesh feature jitter"),
        Option("cubes", int, 1000, "cube count for cube_stack"),
        Option("form", str, "matrix", "TRS form of generated transforms", tuple(FORM_NAMES)),
        Option("out", str, None, "output directory"),
    ],
    "export": [
        Option("form", str, "matrix", "TRS form used for features", tuple(FORM_NAMES)),
        Option("mesh-width", int, 64, "mesh feature bins after pooling (1024 keeps all)"),
        Option("flat", _bool, False, "also write native-width flat tables"),
        Option("out", str, None, "output directory"),
    ],
    "experiment": [
        Option("form", str, "matrix", "representation form, or 'all'", tuple(FORM_NAMES) + ("all",)),
        SEED,
        Option("epochs", int, None, "epochs (task default when omitted)"),
        Option("repeats", int, 1, "independent runs per form, seeds seed..seed+N-1"),
        Option("lr", float, None, "learning rate (task default when omitted)"),
        Option("hidden", int, 64, "hidden width"),
        Option("n-per-class", int, 50, "classification scenes per template"),
        Option("n-scenes", int, 100, "generation dataset size"),
        Option("n-cubes", int, 1000, "cubes in the link prediction scene"),
        Option("mesh-width", int, 64, "mesh feature bins after pooling"),
        Option("aggregator", str, "mean", "classifier neighbourhood aggregator", ("mean", "attention")),
        Option("out", str, None, "output directory"),
    ],
}

POSITIONALS = {
    "convert": [("input", "input .unisg file")],
    "validate": [("input", "input .unisg file")],
    "export": [("input", "input .unisg file")],
    "experiment": [("task", "classify, generate or linkpred")],
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="unisg", description="Scene graph toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)
    for command, options in OPTIONS.items():
        p = sub.add_parser(command)
        for name, help_text in POSITIONALS.get(command, []):
            p.add_argument(name, help=help_text)
        p.add_argument("--config", help="file of 'key = value' lines")
        for opt in options:
            p.add_argument(f"--{opt.name}", dest=opt.dest, type=opt.type, default=None,
                           choices=opt.choices, help=opt.help)
    return parser


def read_config_file(path) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{n}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            out[key.replace("_", "-")] = value
    return out


def effective_config(command, args) -> dict:
    options = {o.name: o for o in OPTIONS[command]}
    file_values = read_config_file(args.config) if args.config else {}
    unknown = sorted(set(file_values) - set(options))
    if unknown:
        raise ConfigError(f"unknown config keys for {command}: {', '.join(unknown)}")
    config = {}
    for name, opt in options.items():
        value = getattr(args, opt.dest)
        if value is None and name in file_values:
            try:
                value = opt.type(file_values[name])
            except ValueError as exc:
                raise ConfigError(f"config key {name}: {exc}") from None
            if opt.choices and value not in opt.choices:
                raise ConfigError(f"config key {name}: {value!r} not one of {', '.join(opt.choices)}")
        if value is None and name == "seed" and os.environ.get("UNISG_SEED"):
            try:
                value = int(os.environ["UNISG_SEED"])
            except ValueError:
                raise ConfigError(f"UNISG_SEED must be an integer, got {os.environ['UNISG_SEED']!r}") from None
        config[opt.dest] = opt.default if value is None else value
    for name, _ in POSITIONALS.get(command, []):
        config[name] = getattr(args, name)
    return config


def write_config(path, command, config) -> None:
    # written so the file can be fed back through --config
    positional = {name for name, _ in POSITIONALS.get(command, [])}
    lines = [f"# command: {command}"] + [f"# {k}: {config[k]}" for k in sorted(positional)]
    for k, v in sorted(config.items()):
        if k in positional:
            continue
        key = k.replace("_", "-")
        lines.append(f"# {key} = (default)" if v is None else f"{key} = {v}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _require(config, key):
    if config.get(key) is None:
        raise ConfigError(f"--{key.replace('_', '-')} is required")
    return config[key]


def _out_dir(config):
    path = _require(config, "out")
    os.makedirs(path, exist_ok=True)
    return path


# -- commands ---------------------------------------------------------------------------

def cmd_convert(config, out=sys.stdout, err=sys.stderr) -> int:
    target = Form(_require(config, "to"))
    out_path = _require(config, "out")
    doc = sceneio.load(config["input"])
    scene = doc.scene
    failures = []
    for eid in scene.iter_depth_first():
        trs = scene.components[eid].get("trs")
        if trs is None:
            continue
        try:
            trs.repr = trs.repr.to(target)
        except InvalidTransform as exc:
            failures.append((scene.path(eid), str(exc)))
    if failures:
        for path, msg in failures:
            print(f"{path}: {msg}", file=err)
        return EXIT_CONVERT
    sceneio.save(doc, out_path)
    write_config(out_path + ".config", "convert", config)
    print(f"wrote {out_path} ({target.value})", file=out)
    return EXIT_OK


def cmd_validate(config, out=sys.stdout, err=sys.stderr) -> int:
    doc = sceneio.load(config["input"])
    ref = sceneio.load(config["reference"]).scene if config.get("reference") else None
    report = audit(doc.scene, ref)
    for path, msg in report.violations:
        print(f"{path}: {msg}", file=err)
    print(f"transforms checked: {report.checked}", file=out)
    print(f"max deviation: {report.max_deviation:.3e}", file=out)
    print("ok" if report.ok else "FAILED", file=out)
    return EXIT_OK if report.ok else EXIT_INVALID


def cmd_scene_gen(config, out=sys.stdout, err=sys.stderr) -> int:
    directory = _out_dir(config)
    form, seed, template = Form(config["form"]), config["seed"], config["template"]
    written = []
    if template == "cube_stack":
        scene, on_top = gen_cube_stack(config["cubes"], seed, form=form)
        index = {eid: i for i, eid in enumerate(scene.iter_depth_first())}
        path = os.path.join(directory, "cube_stack.unisg")
        sceneio.save(SceneDocument(scene), path)
        with open(os.path.join(directory, "on_top.csv"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write("src,dst\n")
            fh.writelines(f"{index[a]},{index[b]}\n" for a, b in on_top)
        written.append(path)
    else:
        if template == "or_dataset":
            scenes = gen_or_dataset(config["count"], seed, form)
        elif config["augment"]:
            base = instantiate(TEMPLATES[template], seed, form)
            scenes = [augment(base, AugmentationConfig(seed + k, config["translation_sigma"],
                                                       config["rotation_max_deg"], config["mesh_sigma"]))
                      for k in range(config["count"])]
        else:
            scenes = [instantiate(TEMPLATES[template], seed + k, form) for k in range(config["count"])]
        width = len(str(max(len(scenes) - 1, 0)))
        for k, scene in enumerate(scenes):
            path = os.path.join(directory, f"{template}_{k:0{width}d}.unisg")
            sceneio.save(SceneDocument(scene), path)
            written.append(path)
    write_config(os.path.join(directory, "config.txt"), "scene-gen", config)
    print(f"wrote {len(written)} scene file(s) to {directory}", file=out)
    return EXIT_OK


def cmd_export(config, out=sys.stdout, err=sys.stderr) -> int:
    directory = _out_dir(config)
    doc = sceneio.load(config["input"])
    vocab = Vocabulary.from_scenes([doc.scene])
    try:
        g = export_tensors(doc.scene, config["form"], vocab, config["mesh_width"])
    except InvalidTransform as exc:
        print(f"conversion failed: {exc}", file=err)
        return EXIT_CONVERT
    g.dump(directory, vocab)
    np.savetxt(os.path.join(directory, "A.csv"), g.A, delimiter=",", fmt="%d")
    if config["flat"]:
        sceneio.export_flat(doc).write(os.path.join(directory, "flat"))
    write_config(os.path.join(directory, "config.txt"), "export", config)
    print(f"exported N={g.N} F={g.F} to {directory}", file=out)
    return EXIT_OK


def cmd_experiment(config, out=sys.stdout, err=sys.stderr) -> int:
    if config["task"] not in TASKS:
        raise ConfigError(f"unknown task {config['task']!r}; choose from {', '.join(TASKS)}")
    directory = _out_dir(config)
    forms = ALL_FORMS if config["form"] == "all" else (Form(config["form"]),)
    exp = ExperimentConfig(
        task=config["task"], forms=forms, seed=config["seed"], epochs=config["epochs"],
        repeats=config["repeats"], lr=config["lr"], hidden=config["hidden"],
        n_per_class=config["n_per_class"], n_scenes=config["n_scenes"], n_cubes=config["n_cubes"],
        mesh_width=config["mesh_width"], aggregator=config["aggregator"],
    )
    write_config(os.path.join(directory, "config.txt"), "experiment", config)
    try:
        run_experiment(exp, directory, log=lambda line: print(line, file=out))
    except TrainingDivergence as exc:
        print(f"training diverged: {exc}", file=err)
        return EXIT_TRAIN
    return EXIT_OK


COMMANDS = {
    "convert": cmd_convert,
    "validate": cmd_validate,
    "scene-gen": cmd_scene_gen,
    "export": cmd_export,
    "experiment": cmd_experiment,
}


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_PARSE
    try:
        config = effective_config(args.command, args)
        return COMMANDS[args.command](config, out, err)
    except SceneParseError as exc:
        print(f"{getattr(args, 'input', '')}:{exc}", file=err)
        return EXIT_PARSE
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=err)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
