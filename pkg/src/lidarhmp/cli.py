"""Command line entry point: synth, train, eval, predict, gradcheck, sweep.

Exit status: 0 success, 1 contract error, 2 I/O error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

_BLAS_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def threads() -> int:
    raw = os.environ.get("LHMP_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"LHMP_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"LHMP_THREADS must be a positive integer, got {raw!r}")
    return n


def _cap_blas() -> None:
    # only effective before numpy is first imported
    if "LHMP_THREADS" in os.environ:
        for v in _BLAS_VARS:
            os.environ.setdefault(v, os.environ["LHMP_THREADS"])


def _write_json(path, obj) -> None:
    from .dataset import atomic_write_json
    atomic_write_json(path, obj)


def _emit(obj, path) -> None:
    if path is None:
        print(json.dumps(obj, indent=2, sort_keys=True))
    else:
        _write_json(path, obj)


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _windows(data, cfg):
    from .harness.data import load_dataset, window_samples
    store = load_dataset(data)
    samples = window_samples(store, cfg.model.t_obs, cfg.model.t_pred, cfg.stride, cfg.model.n_points)
    return store, samples


def _select(samples, split: str, seed: int):
    from .harness.data import split_by_sequence
    if split == "all":
        return samples
    tr, va = split_by_sequence(samples, seed)
    return tr if split == "train" else va


def cmd_synth(a) -> int:
    from .synth import SynthParams, synth_dataset
    p = SynthParams(n_sequences=a.seqs, frames_per_sequence=a.frames, seed=a.seed, fps=a.fps,
                    noise_frame_ratio=a.noise_ratio, occl_frame_ratio=a.occl_ratio,
                    dist_min=a.dist_min, dist_max=a.dist_max)
    m = synth_dataset(a.out, p, workers=threads())
    print(f"wrote {len(m['sequences'])} sequences to {a.out}")
    return 0


def cmd_train(a) -> int:
    from .config import RunConfig
    from .harness.checkpoint import load_checkpoint
    from .harness.data import split_by_sequence
    from .harness.train import train
    cfg = RunConfig.load(a.config)
    if a.max_steps is not None:
        cfg = cfg.replace(max_steps=a.max_steps)
    _, samples = _windows(a.data, cfg)
    train_set, val = split_by_sequence(samples, cfg.seed, a.val_fraction)
    if not train_set:
        raise ValueError(f"{a.data}: no training windows for t_obs+t_pred={cfg.model.t_total}")
    resume = load_checkpoint(a.resume, cfg) if a.resume else None
    curve_path = a.curve or str(Path(a.out) / "loss_curve.csv")
    res = train(train_set, cfg, a.out, resume=resume, epochs=a.epochs, curve_path=curve_path)
    last = res.curve[-1]["loss"] if res.curve else float("nan")
    print(f"trained {res.checkpoint.step} steps over {res.checkpoint.epoch} epochs "
          f"({len(train_set)} train / {len(val)} held-out windows); final loss {last:.6f}")
    return 0


def _load(a):
    from .harness.checkpoint import load_checkpoint
    ck = load_checkpoint(a.ckpt)
    store, samples = _windows(a.data, ck.config)
    if not samples:
        raise ValueError(f"{a.data}: no windows of length {ck.config.model.t_total}")
    return ck, store, _select(samples, a.split, ck.config.seed)


def cmd_eval(a) -> int:
    from .harness.evaluate import evaluate
    ck, store, samples = _load(a)
    rep = evaluate(samples, ck.params, ck.config.model, store.fps, a.horizons, ck.config.seed)
    rep["dataset_seed"] = store.manifest.get("seed")
    _emit(rep, a.report)
    return 0


def cmd_predict(a) -> int:
    from .harness.evaluate import predict_world
    ck, store, samples = _load(a)
    if not 0 <= a.sample < len(samples):
        raise ValueError(f"sample {a.sample} out of range [0, {len(samples)})")
    s = samples[a.sample]
    pred = predict_world([s], ck.params, ck.config.model)[:, 0]
    out = {"sample": a.sample, "meta": s.meta, "fps": store.fps,
           "hypotheses": pred.tolist()}
    _emit(out, a.out)
    return 0


def cmd_gradcheck(a) -> int:
    from .autodiff.suite import primitive_suite
    ok = True
    for name, err in primitive_suite().items():
        good = err <= 1e-5
        ok &= good
        print(f"{name:20s} max rel err {err:.3e} {'ok' if good else 'FAIL'}")
    if a.full:
        from .checks import end_to_end_check
        errs = end_to_end_check()
        worst = max(errs, key=errs.get)
        good = errs[worst] <= 1e-4
        ok &= good
        print(f"{'end_to_end':20s} max rel err {errs[worst]:.3e} over {len(errs)} parameters "
              f"(worst {worst}) {'ok' if good else 'FAIL'}")
    return 0 if ok else 1


def cmd_sweep(a) -> int:
    from .harness.evaluate import robustness_sweep
    ck, store, samples = _load(a)
    rows = robustness_sweep(samples, ck.params, ck.config.model, store.fps, a.mode, a.levels,
                            ck.config.seed, a.horizons)
    _emit({"mode": a.mode, "seed": ck.config.seed, "rows": rows}, a.report)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lidarhmp", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("synth", help="generate a synthetic scan dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--seqs", type=int, required=True)
    s.add_argument("--frames", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--fps", type=float, default=10.0)
    s.add_argument("--noise-ratio", type=float, default=0.0)
    s.add_argument("--occl-ratio", type=float, default=0.0)
    s.add_argument("--dist-min", type=float, default=6.0)
    s.add_argument("--dist-max", type=float, default=27.0)
    s.set_defaults(fn=cmd_synth)

    t = sub.add_parser("train", help="train from a JSON run config")
    t.add_argument("--data", required=True)
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True, help="checkpoint directory")
    t.add_argument("--resume", help="checkpoint directory to continue from")
    t.add_argument("--epochs", type=int, help="target epoch count (overrides config)")
    t.add_argument("--max-steps", type=int)
    t.add_argument("--val-fraction", type=float, default=0.1)
    t.add_argument("--curve", help="loss curve CSV (default: OUT/loss_curve.csv)")
    t.set_defaults(fn=cmd_train)

    def common(p):
        p.add_argument("--data", required=True)
        p.add_argument("--ckpt", required=True)
        p.add_argument("--split", choices=("all", "train", "val"), default="all")
        p.add_argument("--horizons", type=lambda x: [int(v) for v in _floats(x)],
                       help="comma-separated ms (default: all that fit)")

    e = sub.add_parser("eval", help="MPJPE per horizon")
    common(e)
    e.add_argument("--report", help="output JSON (default: stdout)")
    e.set_defaults(fn=cmd_eval)

    p = sub.add_parser("predict", help="predicted future joints for one window")
    common(p)
    p.add_argument("--sample", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_predict)

    g = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    g.add_argument("--full", action="store_true", help="also check the micro model end to end")
    g.set_defaults(fn=cmd_gradcheck)

    w = sub.add_parser("sweep", help="robustness sweep")
    common(w)
    w.add_argument("--mode", choices=("occlusion", "noise", "distance"), required=True)
    w.add_argument("--levels", type=_floats, default=[0.0, 20.0, 40.0, 80.0])
    w.add_argument("--report")
    w.set_defaults(fn=cmd_sweep)
    return ap


def main(argv=None) -> int:
    _cap_blas()
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from .dataset import FormatError
    from .harness.checkpoint import CheckpointCorruption
    try:
        return args.fn(args)
    except (OSError, FormatError, CheckpointCorruption, json.JSONDecodeError) as exc:
        print(f"lidarhmp {args.cmd}: I/O error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, ArithmeticError) as exc:
        print(f"lidarhmp {args.cmd}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
