"""Command-line driver: ``fusiontof {gen,train,eval,infer,mirror-demo,compare}``.

Every failure exits with status 2 and a single ``error: ...`` line on
stderr.  ``eval`` exits 1 when fusion does not strictly lead the other
supplied modes.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io as fio
from .benchmark import compare_pair, off_plane_scenes, predict_pair, run_benchmark
from .fusion import MODES, apply_mode, normalize
from .metrics import evaluate_suite, ssim
from .model import forward, load_model, predict, save_model, split_indices, train
from .pipeline import generate_dataset


class CliError(Exception):
    pass


def _say(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _onoff(v: str) -> bool:
    if v not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on or off")
    return v == "on"


def _config(args) -> fio.RunConfig:
    return fio.load_config(args.config)


def _progress(done: int, total: int) -> None:
    if done == total or done % max(1, total // 20) == 0:
        _say(f"simulated {done}/{total}")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- commands

def cmd_gen(args) -> int:
    cfg = _config(args)
    over = {}
    if args.background is not None:
        over.setdefault("scene", {})["background"] = args.background
    if args.noise is not None:
        over.setdefault("photon", {})["noise"] = args.noise
    if over:
        cfg = cfg.with_values(**over)
    if args.count < 1:
        raise CliError(f"--count must be >= 1, got {args.count}")
    ds = generate_dataset(cfg, args.count, args.seed, progress=_progress)
    fio.write_dataset(ds, args.out)
    _say(f"wrote {len(ds)} samples to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    ds = fio.read_dataset(args.data)
    tcfg = replace(cfg.train, mode=args.mode)
    if args.epochs:
        tcfg = replace(tcfg, epochs=args.epochs)
    if args.seed is not None:
        tcfg = replace(tcfg, seed=args.seed)
    if ds.width * ds.height != cfg.map_size ** 2:
        _say(f"note: dataset maps are {ds.width}x{ds.height}; config map_size is {cfg.map_size}")
    model, rep = train(ds, tcfg, log=_say)
    model.fov_x = model.fov_y = cfg.fov
    save_model(model, args.out_model)
    if args.report:
        with open(args.report, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["epoch", "train_loss", "test_loss", "test_ssim"])
            for i, row in enumerate(zip(rep.train_loss, rep.test_loss, rep.test_ssim), 1):
                w.writerow([i, *(repr(float(v)) for v in row)])
    _say(f"final test loss {rep.test_loss[-1]!r} ssim {rep.test_ssim[-1]:.4f} "
         f"({rep.wall_time:.1f} s); model written to {args.out_model}")
    return 0


def cmd_eval(args) -> int:
    cfg = _config(args)
    if not 1 <= len(args.model) <= 3:
        raise CliError("eval accepts one to three --model files")
    ds = fio.read_dataset(args.data)
    models = {}
    for path in args.model:
        m = load_model(path)
        if m.mode in models:
            raise CliError(f"two models for mode {m.mode} ({path})")
        if m.input_dim != ds.fused.shape[1] or m.output_dim != ds.truth.shape[1]:
            raise CliError(f"{path}: model maps {m.input_dim} -> {m.output_dim} values, dataset has "
                           f"{ds.fused.shape[1]} -> {ds.truth.shape[1]}")
        models[m.mode] = m
    if args.split == "test":
        _, index = split_indices(len(ds), cfg.train.split_ratio, cfg.train.seed)
    else:
        index = np.arange(len(ds))
    rep = evaluate_suite(models, ds.fused[index], ds.truth[index], cfg.ssim)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {"summary": rep.summary(), "split": args.split, "n": int(index.size),
               "fusion_leads": rep.fusion_leads()}
    _write_json(out / "summary.json", summary)
    with open(out / "per_sample.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["mode", "index", "ssim", "mse"])
        for mode, scores in rep.modes.items():
            for i, s, e in zip(index, scores.ssim, scores.mse):
                w.writerow([mode, int(i), repr(float(s)), repr(float(e))])
    for row in rep.summary():
        print(f"{row['mode']:<12} ssim {row['mean_ssim']:.4f}  mse {row['mean_mse']:.6f}  "
              f"n {row['n']}  (reference {row['reference_ssim']:.4f})")
    return 0 if rep.fusion_leads() else 1


def _fused_from_csvs(paths, model) -> np.ndarray:
    photon = radar = None
    for p in paths:
        head, _, y = fio.read_series_csv(p)
        if head == ("bin_start_s", "count"):
            if photon is not None:
                raise CliError("two histogram CSVs supplied")
            photon = normalize(y)
        elif head == ("range_m", "magnitude"):
            if radar is not None:
                raise CliError("two range-profile CSVs supplied")
            radar = normalize(y)
        else:
            raise CliError(f"{p}: unrecognised CSV header {','.join(head)}")
    if photon is None:
        raise CliError("a temporal histogram CSV is required")
    if photon.size != model.photon_len:
        raise CliError(f"histogram has {photon.size} bins, model expects {model.photon_len}")
    if radar is None:
        radar = np.zeros(model.radar_len)
    elif radar.size != model.radar_len:
        raise CliError(f"range profile has {radar.size} bins, model expects {model.radar_len}")
    x = np.concatenate([photon, radar])
    return apply_mode(x, model.photon_len, model.mode)


def cmd_infer(args) -> int:
    model = load_model(args.model)
    truth = None
    if args.data is not None:
        if args.histogram_csv:
            raise CliError("give either --histogram-csv or --data, not both")
        ds = fio.read_dataset(args.data)
        if not 0 <= args.index < len(ds):
            raise CliError(f"--index {args.index} out of range for {len(ds)} samples")
        x = apply_mode(ds.fused[args.index], model.photon_len, model.mode)
        if x.size != model.input_dim:
            raise CliError(f"dataset vectors have {x.size} values, model expects {model.input_dim}")
        truth = ds.truth[args.index].astype(np.float64) / model.depth_scale
    elif args.histogram_csv:
        if len(args.histogram_csv) > 2:
            raise CliError("at most two CSV files (histogram and range profile)")
        x = _fused_from_csvs(args.histogram_csv, model)
    else:
        raise CliError("--histogram-csv or --data is required")
    dm = predict(model, x)
    fio.export_pgm(dm, args.out_pgm)
    info = {"width": model.map_width, "height": model.map_height, "mode": model.mode,
            "min_depth_m": float(dm.depth.min()), "max_depth_m": float(dm.depth.max())}
    if truth is not None:
        pred = forward(model, x).astype(np.float64)
        info["ssim"] = ssim(pred, truth, _config(args).ssim)
    print(json.dumps(info))
    return 0


def _pair_panels(out: Path, tag: str, a, b, preds: dict) -> None:
    fio.export_pgm(a.truth, out / f"{tag}a_truth.pgm")
    fio.export_pgm(b.truth, out / f"{tag}b_truth.pgm")
    for mode, (pa, pb) in preds.items():
        fio.export_pgm(pa, out / f"{tag}a_{mode}.pgm")
        fio.export_pgm(pb, out / f"{tag}b_{mode}.pgm")
    for name, m in (("a", a), ("b", b)):
        fio.write_histogram_csv(m.histogram, out / f"{tag}{name}_histogram.csv")
        fio.write_profile_csv(m.profile, out / f"{tag}{name}_profile.csv")
        fio.save_scene(m.scene, out / f"{tag}{name}_scene.json")


def _mirror_demo(cfg, models: dict, out: Path, seed: int) -> dict:
    photon, fusion = models.get("photon_only"), models.get("fusion")
    if photon is None or fusion is None:
        raise CliError("mirror-demo needs a photon_only and a fusion model")
    scene = off_plane_scenes(cfg, 1, seed)[0]
    res, a, b = compare_pair(scene, cfg, photon, fusion)
    preds = {"photon_only": predict_pair(photon, a, b), "fusion": predict_pair(fusion, a, b)}
    _pair_panels(out, "", a, b, preds)
    fa, fb = preds["fusion"]
    summary = {
        "target_offset_x_m": res.offset_x,
        "photon_histograms_identical": res.photon_identical,
        "photon_histogram_max_diff": float(np.max(np.abs(a.histogram.counts - b.histogram.counts))),
        "radar_segment_max_diff": res.radar_max_diff,
        "photon_only_predictions_identical": bool(np.array_equal(*[p.depth for p in preds["photon_only"]])),
        "photon_only_prediction_mse": res.photon_pred_mse,
        "fusion_predictions_distinct": not np.array_equal(fa.depth, fb.depth),
        "fusion_ssim_own": list(res.own_ssim),
        "fusion_ssim_mirrored": list(res.other_ssim),
        "fusion_nearer_own_truth": all(res.correct),
    }
    summary["ok"] = all(summary[k] for k in ("photon_histograms_identical",
                                             "photon_only_predictions_identical",
                                             "fusion_predictions_distinct",
                                             "fusion_nearer_own_truth"))
    _write_json(out / "summary.json", summary)
    return summary


def cmd_mirror_demo(args) -> int:
    cfg = _config(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    models = {}
    for path in args.model or []:
        m = load_model(path)
        models[m.mode] = m
    if not models:
        _say(f"no --model given; training photon_only and fusion on {args.count} scenes")
        ds = generate_dataset(cfg, args.count, args.seed, progress=_progress)
        for mode in ("photon_only", "fusion"):
            models[mode], _ = train(ds, replace(cfg.train, mode=mode), log=_say)
    summary = _mirror_demo(cfg, models, out, args.seed + 1)
    print(json.dumps(summary, indent=2))
    return 0 if summary["ok"] else 1


def cmd_compare(args) -> int:
    cfg = _config(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.count < 10:
        raise CliError(f"--count must be >= 10, got {args.count}")
    ds = generate_dataset(cfg, args.count, args.seed, progress=_progress)
    fio.write_dataset(ds, out / "dataset.ftds")
    res = run_benchmark(cfg, seed=args.seed, n_pairs=args.pairs, dataset=ds, log=_say)
    for mode, m in res.models.items():
        save_model(m, out / f"model_{mode}.ftmk")
    demo_dir = out / "mirror_demo"
    demo_dir.mkdir(exist_ok=True)
    doc = res.summary()
    doc["mirror_demo"] = _mirror_demo(cfg, res.models, demo_dir, args.seed + 1)
    doc["count"] = args.count
    doc["seed"] = args.seed
    _write_json(out / "summary.json", doc)
    for row in doc["eval"]:
        print(f"{row['mode']:<12} ssim {row['mean_ssim']:.4f}  (reference {row['reference_ssim']:.4f})")
    print(f"mirror pairs correct {doc['mirror_pair_accuracy']:.1%}; "
          f"fusion leads by 0.02: {doc['fusion_leads_by_0.02']}")
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fusiontof",
                                description="Single-photon + radar depth imaging simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("--config", help="INI configuration file (defaults if omitted)")
        return sp

    g = with_config(sub.add_parser("gen", help="simulate a dataset"))
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--background", type=_onoff, choices=(True, False), metavar="{on,off}")
    g.add_argument("--noise", type=_onoff, choices=(True, False), metavar="{on,off}")
    g.set_defaults(func=cmd_gen)

    t = with_config(sub.add_parser("train", help="train one model"))
    t.add_argument("--data", required=True)
    t.add_argument("--mode", choices=MODES, default="fusion")
    t.add_argument("--out-model", required=True)
    t.add_argument("--report", help="per-epoch CSV report")
    t.add_argument("--epochs", type=int, help="override the configured epoch count")
    t.add_argument("--seed", type=int, help="override the configured training seed")
    t.set_defaults(func=cmd_train)

    e = with_config(sub.add_parser("eval", help="score one to three models"))
    e.add_argument("--model", action="append", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True, help="output directory")
    e.add_argument("--split", choices=("test", "all"), default="test",
                   help="held-out split (same seed and ratio as training) or every sample")
    e.set_defaults(func=cmd_eval)

    i = with_config(sub.add_parser("infer", help="reconstruct one depth map"))
    i.add_argument("--model", required=True)
    i.add_argument("--histogram-csv", nargs="+", default=[],
                   help="histogram CSV, optionally followed by a range-profile CSV")
    i.add_argument("--data", help="dataset file to take the input from instead")
    i.add_argument("--index", type=int, default=0)
    i.add_argument("--out-pgm", required=True)
    i.set_defaults(func=cmd_infer)

    m = with_config(sub.add_parser("mirror-demo", help="scene vs mirrored scene"))
    m.add_argument("--out-dir", required=True)
    m.add_argument("--model", action="append", help="photon_only and fusion checkpoints")
    m.add_argument("--count", type=int, default=2000, help="training set size when no models given")
    m.add_argument("--seed", type=int, default=0)
    m.set_defaults(func=cmd_mirror_demo)

    c = with_config(sub.add_parser("compare", help="full benchmark: gen, train x3, eval, mirror pairs"))
    c.add_argument("--out-dir", required=True)
    c.add_argument("--count", type=int, default=2000)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--pairs", type=int, default=50)
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ValueError, OSError, FloatingPointError) as exc:
        msg = " ".join(str(exc).split())
        print(f"error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
