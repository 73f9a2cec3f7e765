"""Experiment harness CLI.

Subcommands: train, attack, sweep-eps, extract-color, verify, theorem1,
stats. Experiment subcommands read a JSON config file, echo the resolved
config (with the master seed) into the output directory, and stamp every
report row with a short hash of that config so runs are reproducible from
their own outputs. Reports are CSV/JSON; wall-time columns are the only
fields allowed to differ between identical runs.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import attack as attack_mod
from . import data, groupfeat, maxmargin, netcore, train as train_mod
from .attack import AttackConfig, preset
from .binarize import LatticeBinarizer
from .errors import DataError, NumericalError, UsageError
from .train import TrainConfig, build_pipeline

DEFAULT_SWEEP_EPS = [round(0.05 * i, 2) for i in range(11)]  # 0.0 .. 0.5


# ---------------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------------


def load_config(path) -> dict:
    try:
        with open(path) as f:
            return json.load(f)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise UsageError(f"config is not valid JSON: {path}: {exc}")


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def echo_config(cfg: dict, out_dir: Path) -> str:
    out_dir.mkdir(parents=True, exist_ok=True)
    h = config_hash(cfg)
    with open(out_dir / "config.json", "w") as f:
        json.dump({**cfg, "config_hash": h}, f, indent=2, sort_keys=True)
        f.write("\n")
    return h


def _require(cfg: dict, key: str, kind=None):
    cur = cfg
    for part in key.split("."):
        if not isinstance(cur, dict) or part not in cur:
            raise UsageError(f"config is missing required key {key!r}")
        cur = cur[part]
    if kind is not None and not isinstance(cur, kind):
        raise UsageError(f"config key {key!r} has the wrong type")
    return cur


def build_dataset(cfg: dict, split: str = "train") -> data.Dataset:
    spec = _require(cfg, "dataset", dict)
    kind = spec.get("kind")
    seed = int(cfg.get("seed", 0))
    if kind == "synthetic_digits":
        n = int(spec.get("train_size", 3000)) if split == "train" else int(
            spec.get("test_size", 500)
        )
        return data.synth_digits(n, seed=seed + (0 if split == "train" else 1))
    if kind == "mnist_idx":
        located = data.find_mnist(spec.get("dir", "data/mnist"))
        if located is None:
            raise DataError(
                f"MNIST files not found under {spec.get('dir', 'data/mnist')} "
                "(run scripts/fetch_mnist.py or point dataset.dir at them)"
            )
        img, lbl = located[split]
        return data.load_mnist_idx(img, lbl)
    if kind == "synthetic_signs":
        per_class = int(spec.get("per_class", 20)) if split == "train" else int(
            spec.get("test_per_class", max(1, int(spec.get("per_class", 20)) // 4))
        )
        return data.synth_sign_dataset(
            per_class,
            seed=seed + (0 if split == "train" else 1),
            size=int(spec.get("size", 24)),
            noise_amplitude=float(spec.get("noise", 0.02)),
        )
    if kind == "image_dir":
        return data.load_image_dir(_require(cfg, "dataset.path"))
    raise UsageError(f"unknown dataset.kind {kind!r}")


def build_attack_config(cfg: dict, key: str = "attack") -> AttackConfig:
    spec = cfg.get(key) or {"preset": "fast"}
    seed = int(cfg.get("seed", 0))
    if "preset" in spec:
        try:
            base = preset(spec["preset"])
        except KeyError:
            raise UsageError(f"unknown attack preset {spec['preset']!r} in {key!r}")
        overrides = {k: v for k, v in spec.items() if k != "preset"}
        try:
            return replace(base, seed=seed, **overrides)
        except TypeError as exc:
            raise UsageError(f"bad attack override in {key!r}: {exc}")
    try:
        return AttackConfig(
            eps=float(spec["eps"]),
            alpha=float(spec["alpha"]),
            iters=int(spec["iters"]),
            restarts=int(spec.get("restarts", 1)),
            targeted=spec.get("targeted"),
            seed=seed,
        )
    except KeyError as exc:
        raise UsageError(f"attack config in {key!r} is missing {exc}")


def _model_spec(cfg: dict) -> dict:
    spec = _require(cfg, "model", dict)
    kind = spec.get("kind")
    if kind not in train_mod.MODEL_KINDS:
        raise UsageError(
            f"unknown model.kind {kind!r}; known: {list(train_mod.MODEL_KINDS)}"
        )
    return spec


def write_csv(path: Path, header: str, rows: list[str], chash: str) -> None:
    with open(path, "w") as f:
        f.write(header + ",config_hash\n")
        for row in rows:
            f.write(row + f",{chash}\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    out = Path(cfg.get("out_dir", "runs/train"))
    chash = echo_config(cfg, out)
    spec = _model_spec(cfg)
    tspec = cfg.get("train", {})

    train_ds = build_dataset(cfg, "train")
    test_ds = build_dataset(cfg, "test")
    dims = [int(np.prod(train_ds.images.shape[1:]))] + [
        int(h) for h in spec.get("hidden", [256])
    ] + [train_ds.num_classes]
    net = netcore.random_network(dims, seed=int(cfg.get("seed", 0)))
    pipe = build_pipeline(spec["kind"], net, tau=float(spec.get("tau", 0.5)))
    preprocessing = pipe.stages[0] if pipe.stages else None

    adversarial = spec["kind"] in ("mat", "bat")
    tcfg = TrainConfig(
        iterations=int(tspec.get("iterations", 900)),
        batch_size=int(tspec.get("batch_size", 64)),
        learning_rate=float(tspec.get("learning_rate", 0.1)),
        seed=int(cfg.get("seed", 0)),
        adversarial=build_attack_config(cfg, "inner_attack")
        if adversarial
        else None,
        checkpoint_every=int(tspec.get("checkpoint_every", 0)),
        eval_size=int(tspec.get("eval_size", 200)),
        eval_attack=build_attack_config(cfg, "eval_attack")
        if cfg.get("eval_attack")
        else None,
    )
    trainer = train_mod.train_adversarial if adversarial else train_mod.train_natural
    trace = trainer(net, train_ds, tcfg, preprocessing=preprocessing, eval_ds=test_ds)

    netcore.save_checkpoint(net, out / "checkpoint.ckpt")
    write_csv(
        out / "trace.csv",
        trace.CSV_HEADER,
        [row.csv_row() for row in trace.checkpoints],
        chash,
    )
    final = trace.final()
    print(
        f"[train:{spec['kind']}] iterations={final.iteration} "
        f"clean={final.clean_acc:.4f} adv={final.adv_acc:.4f} "
        f"-> {out / 'checkpoint.ckpt'}"
    )
    return 0


def _load_pipeline(cfg: dict, out: Path):
    spec = _model_spec(cfg)
    ckpt = spec.get("checkpoint", str(out / "checkpoint.ckpt"))
    if not Path(ckpt).exists():
        raise DataError(f"checkpoint not found: {ckpt} (run the train subcommand first)")
    net = netcore.load_checkpoint(ckpt)
    return build_pipeline(spec["kind"], net, tau=float(spec.get("tau", 0.5)))


def cmd_attack(args) -> int:
    cfg = load_config(args.config)
    out = Path(cfg.get("out_dir", "runs/attack"))
    chash = echo_config(cfg, out)
    pipe = _load_pipeline(cfg, out)
    test_ds = build_dataset(cfg, "test")
    acfg = build_attack_config(cfg)
    max_examples = cfg.get("eval", {}).get("max_examples")
    report = attack_mod.attack_dataset(pipe, test_ds, acfg, max_examples=max_examples)
    write_csv(out / "attack_report.csv", report.CSV_HEADER, [report.csv_row()], chash)
    with open(out / "attack_report.json", "w") as f:
        json.dump({**report.as_dict(), "config_hash": chash}, f, indent=2, sort_keys=True)
        f.write("\n")
    print(
        f"[attack:{report.model_id}] eps={report.eps} clean={report.clean_acc:.4f} "
        f"adv={report.adv_acc:.4f} ({report.n_examples} examples)"
    )
    return 0


def cmd_sweep_eps(args) -> int:
    cfg = load_config(args.config)
    out = Path(cfg.get("out_dir", "runs/sweep"))
    chash = echo_config(cfg, out)
    pipe = _load_pipeline(cfg, out)
    test_ds = build_dataset(cfg, "test")
    acfg = build_attack_config(cfg)
    eps_values = cfg.get("sweep", {}).get("eps_values", DEFAULT_SWEEP_EPS)
    max_examples = cfg.get("eval", {}).get("max_examples")
    reports = attack_mod.sweep_eps(pipe, test_ds, acfg, eps_values, max_examples)
    write_csv(
        out / "sweep.csv",
        attack_mod.AdversarialAccuracyReport.CSV_HEADER,
        [r.csv_row() for r in reports],
        chash,
    )
    for r in reports:
        print(f"[sweep:{r.model_id}] eps={r.eps:.2f} adv={r.adv_acc:.4f}")
    return 0


def _centers_from_args(args) -> groupfeat.HueCenters:
    if args.centers:
        try:
            r, y, b = (float(v) for v in args.centers.split(","))
        except ValueError:
            raise UsageError("--centers expects three comma-separated degrees")
        return groupfeat.HueCenters(r, y, b)
    return groupfeat.DEFAULT_CENTERS


def cmd_extract_color(args) -> int:
    centers = _centers_from_args(args)
    results = []
    for path in args.images:
        img = data.load_image(path)
        mask = groupfeat.localize_sign(img)
        votes = groupfeat.color_votes(img, mask, centers)
        color = groupfeat.classify_color(img, mask, centers)
        results.append({"path": str(path), "color": color,
                        "votes": {k: round(v, 4) for k, v in votes.items()}})
    print(json.dumps(results, indent=2, sort_keys=True))
    return 0


def cmd_verify(args) -> int:
    centers = _centers_from_args(args)
    results = []
    for path in args.images:
        img = data.load_image(path)
        verdict = groupfeat.verify_color_robustness(img, args.eps, centers)
        entry = {
            "path": str(path),
            "eps": args.eps,
            "color": verdict.baseline_color,
            "robust": verdict.robust,
        }
        if not verdict.robust:
            shift, outcome = verdict.failures[0]
            entry["flipping_shift"] = list(shift)
            entry["flipped_to"] = outcome
        results.append(entry)
    print(json.dumps(results, indent=2, sort_keys=True))
    return 0


def cmd_theorem1(args) -> int:
    cfg = load_config(args.config)
    out = Path(cfg.get("out_dir", "runs/theorem1"))
    chash = echo_config(cfg, out)
    spec = cfg.get("theorem1", {})
    n_fixtures = int(spec.get("fixtures", 20))
    n_points = int(spec.get("points", 50))
    n_samples = int(spec.get("samples", 10_000))
    eps_fraction = float(spec.get("eps_fraction", 0.4))
    grid = int(spec.get("grid_resolution", 200))
    lattice_levels = spec.get("lattice_levels")
    seed = int(cfg.get("seed", 0))

    header = "fixture_id,eps,n_samples,errors,hypothesis_ok,separation,area_raw,area_binarized"
    rows = []
    total_errors = 0
    for i in range(n_fixtures):
        P = maxmargin.random_separable_set(n_points, seed=seed + i)
        L = maxmargin.train_max_margin(P)
        eps = eps_fraction * P.separation
        report = maxmargin.exactness_harness(
            P, L, eps, n_samples, seed=seed + i, fixture_id=f"fixture{i:03d}"
        )
        binarizer = (
            LatticeBinarizer(int(lattice_levels)) if lattice_levels else None
        )
        raw, binned = maxmargin.adversarial_region_area(
            L, P, eps, grid_resolution=grid, binarizer=binarizer
        )
        total_errors += report.errors
        rows.append(f"{report.csv_row()},{raw:.6g},{binned:.6g}")
    write_csv(out / "theorem1.csv", header, rows, chash)
    print(
        f"[theorem1] fixtures={n_fixtures} samples_each={n_samples} "
        f"total_errors={total_errors} -> {out / 'theorem1.csv'}"
    )
    return 0


def cmd_stats(args) -> int:
    cfg = load_config(args.config)
    out = Path(cfg.get("out_dir", "runs/stats"))
    chash = echo_config(cfg, out)
    ds = build_dataset(cfg, args.split)
    low, mid, high = data.pixel_mass_stats(ds, args.low, args.high)
    header = "split,low_cut,high_cut,frac_low,frac_mid,frac_high,n_images"
    row = (
        f"{args.split},{args.low:.6g},{args.high:.6g},"
        f"{low:.6f},{mid:.6f},{high:.6f},{len(ds)}"
    )
    write_csv(out / "stats.csv", header, [row], chash)
    print(f"[stats] {header}")
    print(f"[stats] {row}")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        raise UsageError(message)


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="robustfeat", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn in (
        ("train", cmd_train),
        ("attack", cmd_attack),
        ("sweep-eps", cmd_sweep_eps),
        ("theorem1", cmd_theorem1),
    ):
        p = sub.add_parser(name)
        p.add_argument("config", help="path to the experiment JSON config")
        p.set_defaults(fn=fn)

    p = sub.add_parser("stats")
    p.add_argument("config")
    p.add_argument("--split", choices=["train", "test"], default="train")
    p.add_argument("--low", type=float, default=0.1)
    p.add_argument("--high", type=float, default=0.9)
    p.set_defaults(fn=cmd_stats)

    p = sub.add_parser("extract-color")
    p.add_argument("images", nargs="+")
    p.add_argument("--centers", help="red,yellow,blue hue degrees", default=None)
    p.set_defaults(fn=cmd_extract_color)

    p = sub.add_parser("verify")
    p.add_argument("images", nargs="+")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--centers", default=None)
    p.set_defaults(fn=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
