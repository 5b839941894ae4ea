"""Command-line entry points: gen-synthetic, train, evaluate, render."""

import json
import math
import os
import sys

import click
import numpy as np
import yaml

from . import baselines, evaluation, learning, scenario
from .observation import N_SECTORS, SECTOR_WIDTH


class CliConfigError(ValueError):
    pass


def _output_root(path):
    root = os.environ.get("SHAIL_OUTPUT_ROOT")
    if root and not os.path.isabs(path):
        return os.path.join(root, path)
    return path


def load_config(path, allowed, required=()):
    with open(path) as f:
        cfg = yaml.safe_load(f) or {}
    if not isinstance(cfg, dict):
        raise CliConfigError("config must be a mapping")
    unknown = sorted(set(cfg) - set(allowed))
    if unknown:
        raise CliConfigError(f"unknown config keys: {', '.join(unknown)}")
    missing = sorted(set(required) - set(cfg))
    if missing:
        raise CliConfigError(f"missing config keys: {', '.join(missing)}")
    return cfg


def _dump_config(cfg, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.yaml"), "w") as f:
        yaml.safe_dump(cfg, f, sort_keys=True)


SYNTH_KEYS = ("ring_radius", "n_arms", "arrival_rate", "idm_parameter_ranges",
              "gap_acceptance_s", "noise_std", "duration", "seed")
TRAIN_KEYS = ("kind", "dataset", "seed", "iterations", "steps_per_iter",
              "max_episode_steps", "hidden", "lr", "lr_value", "lr_disc",
              "disc_steps", "disc_minibatch", "ppo_epochs", "minibatch",
              "eps_clip", "ent_coef", "gamma", "lam", "r_clip", "kl_target",
              "option_v", "option_t", "bc_epochs", "bc_batch", "bc_lr",
              "bc_val_frac", "out_dir")
EVAL_KEYS = ("kind", "checkpoint", "dataset", "episodes", "seed", "runs",
             "max_steps", "out_dir", "save_replays")


def _synth_params(cfg):
    kwargs = {k: cfg[k] for k in SYNTH_KEYS if k in cfg}
    if "idm_parameter_ranges" in kwargs:
        kwargs["idm_parameter_ranges"] = {
            k: tuple(v) for k, v in kwargs["idm_parameter_ranges"].items()}
    return scenario.SynthParams(**kwargs)


@click.group()
def main():
    """Safety-aware hierarchical adversarial imitation learning toolkit."""


@main.command("gen-synthetic")
@click.option("--config", "config_path", type=click.Path(exists=True),
              help="YAML file with synthetic-scenario parameters.")
@click.option("--seed", type=int, default=None, help="Override the seed.")
@click.option("--out", "out_path", required=True, type=click.Path(),
              help="Output CSV path.")
def cmd_gen_synthetic(config_path, seed, out_path):
    """Generate a synthetic roundabout dataset CSV."""
    cfg = load_config(config_path, SYNTH_KEYS) if config_path else {}
    if seed is not None:
        cfg["seed"] = seed
    params = _synth_params(cfg)
    dataset = scenario.synth_roundabout(params)
    out_path = _output_root(out_path)
    os.makedirs(os.path.dirname(os.path.abspath(out_path)), exist_ok=True)
    with open(out_path, "w") as f:
        f.write(scenario.serialize_tracks(dataset))
    n_frames = sum(t.n_frames for t in dataset.tracks.values())
    click.echo(f"wrote {out_path}: {len(dataset.tracks)} tracks, "
               f"{n_frames} frames")


def _load_dataset(path):
    with open(path) as f:
        return scenario.parse_tracks(f.read())


@main.command("train")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True), help="YAML training config.")
@click.option("--out", "out_dir", default=None, type=click.Path(),
              help="Run directory (overrides config out_dir).")
@click.option("--resume", is_flag=True, help="Resume from the run checkpoint.")
def cmd_train(config_path, out_dir, resume):
    """Train a bc/gail/hail/shail model; writes checkpoints and metrics."""
    cfg = load_config(config_path, TRAIN_KEYS, required=("kind", "dataset"))
    kind = cfg["kind"]
    if kind not in ("bc", "gail", "hail", "shail"):
        raise CliConfigError(f"invalid model kind {kind!r}")
    out_dir = _output_root(out_dir or cfg.get("out_dir") or f"runs/{kind}")
    dataset = _load_dataset(cfg["dataset"])
    tc_fields = {k: v for k, v in cfg.items() if k not in ("dataset", "out_dir")}
    for key in ("hidden", "option_v", "option_t"):
        if key in tc_fields:
            tc_fields[key] = tuple(tc_fields[key])
    config = learning.TrainConfig(**tc_fields)
    config.validate()
    _dump_config(cfg, out_dir)

    def progress(rec):
        click.echo(json.dumps(rec, sort_keys=True))

    if kind == "bc":
        learning.bc_train_run(dataset, config, out_dir=out_dir, progress=progress)
    elif kind == "gail":
        learning.gail_train(dataset, config, out_dir=out_dir, resume=resume,
                            progress=progress)
    else:
        learning.shail_train(dataset, config, out_dir=out_dir, resume=resume,
                             progress=progress)
    click.echo(f"run directory: {out_dir}")


@main.command("evaluate")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True), help="YAML evaluation config.")
@click.option("--out", "out_dir", default=None, type=click.Path())
def cmd_evaluate(config_path, out_dir):
    """Evaluate a policy; writes report.json and report.txt."""
    cfg = load_config(config_path, EVAL_KEYS, required=("dataset",))
    dataset = _load_dataset(cfg["dataset"])
    out_dir = _output_root(out_dir or cfg.get("out_dir") or "eval")
    os.makedirs(out_dir, exist_ok=True)
    n_episodes = int(cfg.get("episodes", 20))
    seed = int(cfg.get("seed", 0))
    runs = int(cfg.get("runs", 1))
    max_steps = int(cfg.get("max_steps", 1000))
    if "checkpoint" in cfg:
        policy = baselines.load_policy(cfg["checkpoint"])
        label = policy.kind
    else:
        label = cfg.get("kind", "expert_replay")
        policy = baselines.make_builtin(label)
    reports = []
    for r in range(runs):
        replay_dir = (os.path.join(out_dir, f"replays_run{r}")
                      if cfg.get("save_replays") else None)
        rep = evaluation.evaluate(policy, dataset, n_episodes, seed + r,
                                  max_steps=max_steps, replay_dir=replay_dir)
        reports.append(rep)
        with open(os.path.join(out_dir, f"report_run{r}.json"), "w") as f:
            json.dump(rep.to_dict(), f, indent=2, sort_keys=True)
    table = (evaluation.format_report(reports[0], label) if runs == 1
             else evaluation.aggregate_table([(label, reports)]))
    with open(os.path.join(out_dir, "report.txt"), "w") as f:
        f.write(table + "\n")
    with open(os.path.join(out_dir, "report.json"), "w") as f:
        json.dump([rep.to_dict() for rep in reports], f, indent=2,
                  sort_keys=True)
    click.echo(table)


@main.command("render")
@click.option("--replay", "replay_path", required=True,
              type=click.Path(exists=True), help="Replay log (.jsonl).")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--sensor-radius", type=float, default=15.0,
              help="Radius of the drawn ego sector wedges.")
def cmd_render(replay_path, out_dir, sensor_radius):
    """Render one SVG frame per replay record."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from matplotlib.patches import Polygon

    with open(replay_path) as f:
        records = [json.loads(line) for line in f if line.strip()]
    out_dir = _output_root(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    if not records:
        click.echo("empty replay log: 0 frames")
        return
    xs = [r["ego"]["x"] for r in records] + \
         [v["x"] for r in records for v in r["non_ego"]]
    ys = [r["ego"]["y"] for r in records] + \
         [v["y"] for r in records for v in r["non_ego"]]
    pad = 10.0
    xlim = (min(xs) - pad, max(xs) + pad)
    ylim = (min(ys) - pad, max(ys) + pad)

    def box_corners(x, y, heading, length, width):
        c, s = math.cos(heading), math.sin(heading)
        hl, hw = 0.5 * length, 0.5 * width
        return [(x + c * dx - s * dy, y + s * dx + c * dy)
                for dx, dy in ((hl, hw), (hl, -hw), (-hl, -hw), (-hl, hw))]

    for i, rec in enumerate(records):
        fig, ax = plt.subplots(figsize=(6, 6))
        ax.set_xlim(*xlim)
        ax.set_ylim(*ylim)
        ax.set_aspect("equal")
        e = rec["ego"]
        ax.add_patch(Polygon(box_corners(e["x"], e["y"], e["heading"],
                                         e["length"], e["width"]),
                             closed=True, color="tab:red"))
        for k in range(N_SECTORS):
            ang = e["heading"] + (k - 0.5) * SECTOR_WIDTH + 0.5 * SECTOR_WIDTH
            edge = e["heading"] - 0.5 * SECTOR_WIDTH + k * SECTOR_WIDTH
            ax.plot([e["x"], e["x"] + sensor_radius * math.cos(edge)],
                    [e["y"], e["y"] + sensor_radius * math.sin(edge)],
                    lw=0.5, color="gray", alpha=0.6)
        for v in rec["non_ego"]:
            ax.add_patch(Polygon(box_corners(v["x"], v["y"], v["psi"],
                                             v["length"], v["width"]),
                                 closed=True, color="tab:blue", alpha=0.8))
        ax.set_title(f"t = {rec['time']:.1f} s  ({rec['done']})")
        fig.savefig(os.path.join(out_dir, f"frame_{i:04d}.svg"))
        plt.close(fig)
    click.echo(f"rendered {len(records)} frames to {out_dir}")


def entry():
    try:
        main(standalone_mode=False)
    except click.exceptions.ClickException as e:
        click.echo(f"ERROR usage: {e.format_message()}", err=True)
        sys.exit(2)
    except click.exceptions.Abort:
        sys.exit(130)
    except Exception as e:
        click.echo(f"ERROR {type(e).__name__}: {e}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    entry()
