"""Command-line frontend: ``memassoc {collect,train,recall,eval,gradcheck}``.

Settings come from built-in defaults, then an optional JSON ``--config``
file, then command-line flags (flags win). Unknown config keys are rejected.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path


from .checkpoint import load_checkpoint, load_memory, save_checkpoint, save_memory
from .data import downsample, load_idx, synth_shapes
from .errors import ContractError, FormatError
from .gradcheck import check_loss
from .gridworld import NUM_STATES, SCREEN, collect_screens, train_q_policy
from .long_memory import Variant, recall
from .pgm import recall_grid, write_pgm
from .rng import Rng
from .short_memory import ShortTermMemory
from .trainer import TrainConfig, build_model, build_optimizer, eval_recall, gridworld_recall_gap, train

log = logging.getLogger("memassoc")

DATASETS = ("shapes", "gridworld", "idx")
DATASET_CODE = {name: i for i, name in enumerate(DATASETS)}

DEFAULTS = {
    **TrainConfig().to_dict(),
    "dataset": None,
    "idx_images": None,
    "idx_labels": None,
    "downsample": 2,
    "per_class": 200,
    "episodes": 20,
    "q_episodes": 500,
    "out": "out",
    "memory": None,
    "checkpoint": None,
    "resume": None,
    "samples": 4,
    "eval_samples": 100,
    "heldout_per_class": 50,
    "seeds": 5,
    "coords": 8,
    "tolerance": 1e-4,
}


class UsageError(Exception):
    pass


def load_settings(args: argparse.Namespace) -> dict:
    settings = dict(DEFAULTS)
    if args.config:
        doc = json.loads(Path(args.config).read_text())
        if not isinstance(doc, dict):
            raise UsageError("config must be a JSON object")
        unknown = sorted(set(doc) - set(DEFAULTS))
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        settings.update(doc)
    for key, value in vars(args).items():
        if key in DEFAULTS and value is not None:
            settings[key] = value
    if settings["dataset"] is not None and settings["dataset"] not in DATASETS:
        raise UsageError(f"unknown dataset {settings['dataset']!r}")
    return settings


def train_config(s: dict, **override) -> TrainConfig:
    fields = {k: s[k] for k in TrainConfig.field_names()}
    fields.update(override)
    return TrainConfig(**fields)


def _out(s: dict) -> Path:
    out = Path(s["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _memory_path(s: dict) -> Path:
    return Path(s["memory"]) if s["memory"] else Path(s["out"]) / "memory.man"


def _checkpoint_path(s: dict) -> Path:
    return Path(s["checkpoint"]) if s["checkpoint"] else Path(s["out"]) / "model.man"


def _require(path: Path, what: str) -> Path:
    if not path.is_file():
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def _idx_set(s: dict):
    if not s["idx_images"] or not s["idx_labels"]:
        raise UsageError("the idx dataset needs --idx-images and --idx-labels")
    data = load_idx(_require(Path(s["idx_images"]), "IDX images"), _require(Path(s["idx_labels"]), "IDX labels"))
    return downsample(data, s["downsample"]) if s["downsample"] > 1 else data


# ---------------------------------------------------------------- commands


def cmd_collect(s: dict) -> int:
    s["dataset"] = s["dataset"] or "shapes"
    rng = Rng(s["seed"])
    if s["dataset"] == "shapes":
        data = synth_shapes(s["per_class"], rng)
        mem = ShortTermMemory(3, s["capacity"])
        width, height = data.width, data.height
        for x, y in zip(data.images, data.labels):
            mem.insert(int(y), x)
    elif s["dataset"] == "gridworld":
        q = train_q_policy(rng, episodes=s["q_episodes"])
        mem = collect_screens(q, s["episodes"], ShortTermMemory(NUM_STATES, s["capacity"]))
        width = height = SCREEN
    else:
        data = _idx_set(s).take(s["per_class"])
        mem = ShortTermMemory(max(data.num_classes, 1), s["capacity"])
        width, height = data.width, data.height
        for x, y in zip(data.images, data.labels):
            mem.insert(int(y), x)
    path = _out(s) / "memory.man"
    save_memory(path, mem, {"width": width, "height": height, "dataset": DATASET_CODE[s["dataset"]]})
    print(json.dumps({"memory": str(path), "class_counts": mem.class_counts()}))
    return 0


def cmd_train(s: dict) -> int:
    mem, meta = load_memory(_require(_memory_path(s), "memory file"))
    dim = mem.payload_dim()
    if dim is None:
        raise ContractError("memory file holds no samples")
    extras = {"width": meta.get("width", 0), "height": meta.get("height", 0),
              "dataset": meta.get("dataset", 0)}
    if s["resume"]:
        ck = load_checkpoint(_require(Path(s["resume"]), "checkpoint"))
        model, opt, rng = ck.model, ck.optimizer, ck.rng
        if model.num_classes != mem.num_classes or model.input_dim != dim:
            raise ContractError("checkpoint does not match the memory file")
        cfg = train_config(s, num_classes=mem.num_classes, input_dim=dim, variant=model.variant.value)
    else:
        cfg = train_config(s, num_classes=mem.num_classes, input_dim=dim)
        rng = Rng(cfg.seed)
        model = build_model(cfg, rng)
        opt = build_optimizer(cfg)
    model, history = train(model, mem, cfg, rng, opt)
    out = _out(s)
    save_checkpoint(out / "model.man", model, opt, rng, extras)
    (out / "history.json").write_text(json.dumps([vars(r) for r in history], indent=1))
    last = history[-1].loss if history else None
    print(json.dumps({"checkpoint": str(out / "model.man"), "steps": opt.t, "final_loss": last}))
    return 0


def cmd_recall(s: dict) -> int:
    ck = load_checkpoint(_require(_checkpoint_path(s), "checkpoint"))
    model = ck.model
    width, height = int(ck.extras.get("width", 0)), int(ck.extras.get("height", 0))
    if width * height != model.input_dim:
        width = height = int(round(model.input_dim ** 0.5))
        if width * height != model.input_dim:
            raise ContractError("cannot infer the image size from the checkpoint")
    rng = Rng(s["seed"])
    samples = [recall(model, None, i, s["samples"], rng) for i in range(model.num_classes)]
    path = _out(s) / "recall.pgm"
    grid = recall_grid(samples, width, height)
    write_pgm(path, grid)
    print(json.dumps({"recall": str(path), "width": grid.shape[1], "height": grid.shape[0]}))
    return 0


def cmd_eval(s: dict) -> int:
    ck = load_checkpoint(_require(_checkpoint_path(s), "checkpoint"))
    model = ck.model
    rng = Rng(s["seed"])
    dataset = s["dataset"] or DATASETS[int(ck.extras.get("dataset", 0))]
    metrics: dict = {"variant": model.variant.value, "dataset": dataset}
    if dataset == "gridworld":
        mem, _ = load_memory(_require(_memory_path(s), "memory file"))
        if mem.num_classes != model.num_classes:
            raise ContractError(f"memory has {mem.num_classes} classes, model has {model.num_classes}")
        visited_mse, unvisited_mse = gridworld_recall_gap(model, None, mem, rng)
        metrics.update(visited=mem.nonempty_classes(), visited_mse=visited_mse, unvisited_mse=unvisited_mse)
    else:
        if dataset == "shapes":
            real = synth_shapes(s["heldout_per_class"], Rng(s["seed"] + 1))
        else:
            real = _idx_set(s)
        if real.num_classes > model.num_classes or real.images.shape[1] != model.input_dim:
            raise ContractError(
                f"evaluation data ({real.num_classes} classes, width {real.images.shape[1]}) does not match "
                f"the model ({model.num_classes} classes, width {model.input_dim})")
        metrics.update(eval_recall(model, None, real, s["eval_samples"], rng))
    path = _out(s) / "metrics.json"
    path.write_text(json.dumps(metrics, indent=2))
    print(json.dumps(metrics))
    return 0


def cmd_gradcheck(s: dict) -> int:
    worst_overall = 0.0
    report = []
    for variant in (Variant.A, Variant.B):
        for seed in range(s["seed"], s["seed"] + s["seeds"]):
            r = check_loss(variant, seed, coords_per_param=s["coords"])
            worst_overall = max(worst_overall, r.max_error)
            report.append({"variant": variant.value, "seed": seed, "max_error": r.max_error,
                           "worst": r.worst, "skipped_kinks": sum(r.skipped.values())})
    ok = worst_overall < s["tolerance"]
    for entry in report:
        print(f"type {entry['variant']} seed {entry['seed']}: max relative error {entry['max_error']:.3e}")
        for name, err in entry["worst"].items():
            print(f"    {name:<16} {err:.3e}")
    print(f"{'PASS' if ok else 'FAIL'}: worst {worst_overall:.3e} (tolerance {s['tolerance']:g})")
    return 0 if ok else 1


COMMANDS = {"collect": cmd_collect, "train": cmd_train, "recall": cmd_recall,
            "eval": cmd_eval, "gradcheck": cmd_gradcheck}


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="JSON settings file")
    shared.add_argument("--seed", type=int)
    shared.add_argument("--out", help="output directory (default: out)")
    shared.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="memassoc", description="Short/long-term memory association networks.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("collect", parents=[shared], help="fill a short-term memory")
    c.add_argument("--dataset", choices=DATASETS)
    c.add_argument("--per-class", type=int, dest="per_class")
    c.add_argument("--episodes", type=int, help="greedy collection episodes (gridworld)")
    c.add_argument("--q-episodes", type=int, dest="q_episodes", help="Q-learning episodes (gridworld)")
    c.add_argument("--capacity", type=int)
    c.add_argument("--idx-images", dest="idx_images")
    c.add_argument("--idx-labels", dest="idx_labels")
    c.add_argument("--downsample", type=int)

    t = sub.add_parser("train", parents=[shared], help="train a long-term model from a memory file")
    t.add_argument("--memory")
    t.add_argument("--resume", help="continue from this checkpoint")
    t.add_argument("--variant", choices=[v.value for v in Variant])
    t.add_argument("--steps", type=int)
    t.add_argument("--batch-size", type=int, dest="batch_size")
    t.add_argument("--lr", type=float)
    t.add_argument("--prior-scale", type=float, dest="prior_scale")
    t.add_argument("--root-weight", type=float, dest="root_weight")
    t.add_argument("--root-dim", type=int, dest="root_dim")
    t.add_argument("--latent-dim", type=int, dest="latent_dim")

    r = sub.add_parser("recall", parents=[shared], help="write a PGM grid of recalled samples")
    r.add_argument("--checkpoint")
    r.add_argument("--samples", type=int, help="samples per class (grid rows)")

    e = sub.add_parser("eval", parents=[shared], help="recall metrics as JSON")
    e.add_argument("--checkpoint")
    e.add_argument("--memory")
    e.add_argument("--dataset", choices=DATASETS)
    e.add_argument("--eval-samples", type=int, dest="eval_samples")
    e.add_argument("--idx-images", dest="idx_images")
    e.add_argument("--idx-labels", dest="idx_labels")
    e.add_argument("--downsample", type=int)

    g = sub.add_parser("gradcheck", parents=[shared], help="finite-difference check of both losses")
    g.add_argument("--seeds", type=int)
    g.add_argument("--coords", type=int, help="coordinates checked per parameter tensor")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        settings = load_settings(args)
        return COMMANDS[args.command](settings)
    except UsageError as e:
        parser.error(str(e))  # exits with status 2
    except (FileNotFoundError, FormatError, ContractError, json.JSONDecodeError) as e:
        print(f"memassoc {args.command}: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
