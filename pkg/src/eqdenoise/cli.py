"""Command-line entry point: ``eqdenoise {verify-equivariance,train,denoise,report}``.

Exit status: 0 on success (and, for ``verify-equivariance``, only if every
criterion passes), 1 when criteria fail, 2 for usage, config or input errors.
"""

import argparse
import contextlib
import csv
import json
import logging
import math
import os
import shutil
import sys
import tempfile
from importlib import resources

import numpy as np

from . import checkpoint
from .config import ConfigError, read, train_config, verify_config
from .data import list_images, read_image, write_image
from .harness import write_csv, write_json
from .selfsup import psnr, ssim
from .train import TrainConfig, TrainingError, build_model, denoise, train
from .verify import run as run_verification

log = logging.getLogger("eqdenoise")

OK, FAILED, ERROR = 0, 1, 2


class CommandError(Exception):
    pass


@contextlib.contextmanager
def staged_output(out):
    """Write into a scratch directory; move files into ``out`` only on success."""
    parent = os.path.dirname(os.path.abspath(out)) or "."
    os.makedirs(parent, exist_ok=True)
    tmp = tempfile.mkdtemp(prefix=".eqdenoise-", dir=parent)
    try:
        yield tmp
        os.makedirs(out, exist_ok=True)
        for name in os.listdir(tmp):
            os.replace(os.path.join(tmp, name), os.path.join(out, name))
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


def default_verify_config():
    return str(resources.files("eqdenoise").joinpath("default_verify.ini"))


# ----------------------------------------------------------------------------
# verify-equivariance
# ----------------------------------------------------------------------------


def cmd_verify(args):
    path = args.config or default_verify_config()
    cfg = verify_config(read(path), path, args.seed)
    try:
        reports, summary = run_verification(cfg)
    except KeyError as exc:
        raise CommandError(exc.args[0]) from None
    with staged_output(args.out) as tmp:
        write_csv(reports, os.path.join(tmp, "equivariance.csv"))
        write_json(summary, os.path.join(tmp, "summary.json"))
        shutil.copyfile(path, os.path.join(tmp, "config.ini"))
    for e in summary["reports"]:
        slope = e.get("slope")
        detail = "exact" if e.get("exact") else (f"slope {slope:.3f}" if slope is not None else "")
        print(f"{'PASS' if e['pass'] else 'FAIL'}  {e['operator']:<10} theta={e['theta']:.4f}  {detail}")
    print(f"overall: {'PASS' if summary['pass'] else 'FAIL'}  (reports in {args.out})")
    return OK if summary["pass"] else FAILED


# ----------------------------------------------------------------------------
# train
# ----------------------------------------------------------------------------


def cmd_train(args):
    if not args.config:
        raise CommandError("train needs --config")
    cfg = train_config(read(args.config), args.config, args.seed)
    resolved = json.dumps(cfg.to_dict(), indent=2, default=list)
    if args.dry_run:
        print(resolved)
        return OK
    if not cfg.dataset:
        raise CommandError("no dataset configured ([train] dataset)")
    try:
        list_images(cfg.dataset)
    except FileNotFoundError as exc:
        raise CommandError(str(exc)) from None
    if args.resume and not os.path.exists(os.path.join(args.out, "checkpoint.bin")):
        raise CommandError(f"--resume given but {args.out}/checkpoint.bin does not exist")
    os.makedirs(args.out, exist_ok=True)
    shutil.copyfile(args.config, os.path.join(args.out, "config.ini"))
    with open(os.path.join(args.out, "run.json"), "w") as fh:
        fh.write(resolved)
    try:
        _, summary = train(cfg, args.out, resume=args.resume)
    except (TrainingError, FileNotFoundError, ValueError) as exc:
        raise CommandError(str(exc)) from None
    print(json.dumps(summary, indent=2))
    return OK


# ----------------------------------------------------------------------------
# denoise
# ----------------------------------------------------------------------------


def _inputs(paths):
    out = []
    for p in paths:
        out.extend(list_images(p) if os.path.isdir(p) else [p])
    if not out:
        raise CommandError("no input images")
    for p in out:
        if not os.path.isfile(p):
            raise CommandError(f"input image not found: {p}")
    return out


def cmd_denoise(args):
    try:
        tensors, meta = checkpoint.load(args.checkpoint)
    except (OSError, ValueError) as exc:
        raise CommandError(f"cannot read checkpoint: {exc}") from None
    if args.config:
        cfg = train_config(read(args.config), args.config, args.seed)
    elif meta and "config" in meta:
        cfg = TrainConfig.from_dict(meta["config"])
    else:
        raise CommandError("checkpoint has no stored config; pass --config")
    net = build_model(cfg)
    try:
        net.load_state_dict(tensors)
    except (KeyError, ValueError) as exc:
        raise CommandError(f"checkpoint does not match the network: {exc.args[0]}") from None
    paths = _inputs(args.inputs)
    rows = []
    with staged_output(args.out) as tmp:
        for path in paths:
            noisy = read_image(path, cfg.rgb)
            out = denoise(net, cfg, noisy)
            name = os.path.basename(path)
            write_image(os.path.join(tmp, name), out)
            if args.reference:
                ref_path = os.path.join(args.reference, name)
                if not os.path.isfile(ref_path):
                    raise CommandError(f"no reference image {ref_path}")
                clean = read_image(ref_path, cfg.rgb)
                row = {"image": name, "psnr": psnr(out, clean), "ssim": ssim(out, clean),
                       "noisy_psnr": psnr(noisy, clean), "noisy_ssim": ssim(noisy, clean)}
                rows.append(row)
                print(f"{name}: PSNR {_fmt(row['psnr'])} dB (noisy {_fmt(row['noisy_psnr'])}), "
                      f"SSIM {row['ssim']:.4f} (noisy {row['noisy_ssim']:.4f})")
        if rows:
            with open(os.path.join(tmp, "denoise_metrics.csv"), "w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=list(rows[0]))
                w.writeheader()
                w.writerows(rows)
    print(f"wrote {len(paths)} image(s) to {args.out}")
    return OK


def _fmt(v):
    return "inf" if math.isinf(v) else f"{v:.2f}"


# ----------------------------------------------------------------------------
# report
# ----------------------------------------------------------------------------

REPORT_COLUMNS = ["run", "method", "model", "noise", "dataset", "final_loss", "val_psnr", "val_ssim"]
_BEST = {"final_loss": min, "val_psnr": max, "val_ssim": max}


def _run_row(run_dir):
    path = os.path.join(run_dir, "metrics.csv")
    if not os.path.isfile(path):
        raise CommandError(f"no metrics.csv in {run_dir}")
    with open(path, newline="") as fh:
        metrics = list(csv.DictReader(fh))
    if not metrics:
        raise CommandError(f"{path} is empty")
    info = {}
    if os.path.isfile(os.path.join(run_dir, "run.json")):
        with open(os.path.join(run_dir, "run.json")) as fh:
            info = json.load(fh)
    noise = info.get("noise", {})
    last_val = [r for r in metrics if r["val_psnr"]]
    return {
        "run": os.path.basename(os.path.normpath(run_dir)),
        "method": info.get("method", ""),
        "model": info.get("model", ""),
        "noise": f"{noise.get('kind', '')}{'' if not noise else '/' + format(noise.get('sigma', 0), 'g')}",
        "dataset": os.path.basename(os.path.normpath(info["dataset"])) if info.get("dataset") else "",
        "final_loss": float(metrics[-1]["loss"]),
        "val_psnr": float(last_val[-1]["val_psnr"]) if last_val else None,
        "val_ssim": float(last_val[-1]["val_ssim"]) if last_val else None,
    }


def build_report(run_dirs):
    """Rows, per-column means and the best run per numeric column."""
    if not run_dirs:
        raise CommandError("report needs at least one run directory")
    rows = [_run_row(d) for d in run_dirs]
    means, best = {}, {}
    for col, pick in _BEST.items():
        vals = [r[col] for r in rows if r[col] is not None]
        if vals:
            means[col] = float(np.mean(vals))
            target = pick(vals)
            best[col] = [r["run"] for r in rows if r[col] == target]
    return {"rows": rows, "mean": means, "best": best}


def cmd_report(args):
    report = build_report(args.runs)
    with staged_output(args.out) as tmp:
        with open(os.path.join(tmp, "report.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(REPORT_COLUMNS + ["best"])
            for r in report["rows"]:
                marks = [c for c in _BEST if r["run"] in report["best"].get(c, [])]
                w.writerow([_cell(r[c]) for c in REPORT_COLUMNS] + [";".join(marks)])
            w.writerow(["mean", "", "", "", ""] + [_cell(report["mean"].get(c)) for c in _BEST] + [""])
        write_json(report, os.path.join(tmp, "report.json"))
    _print_table(report)
    return OK


def _cell(v):
    if v is None:
        return ""
    return repr(v) if isinstance(v, float) else v


def _print_table(report):
    head = f"{'run':<16}{'method':<8}{'model':<10}{'noise':<16}{'loss':>12}{'PSNR':>10}{'SSIM':>9}"
    print(head)
    for r in report["rows"]:
        def cell(col, width, spec):
            v = r[col]
            text = "-" if v is None else format(v, spec)
            star = "*" if r["run"] in report["best"].get(col, []) else " "
            return f"{text + star:>{width}}"
        print(f"{r['run']:<16}{r['method']:<8}{r['model']:<10}{r['noise']:<16}"
              f"{cell('final_loss', 12, '.5f')}{cell('val_psnr', 10, '.2f')}{cell('val_ssim', 9, '.4f')}")
    m = report["mean"]
    print(f"{'mean':<50}{m.get('final_loss', float('nan')):>11.5f} {m.get('val_psnr', float('nan')):>9.2f} "
          f"{m.get('val_ssim', float('nan')):>8.4f}")


# ----------------------------------------------------------------------------
# argument parsing
# ----------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="eqdenoise", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify-equivariance", help="measure equivariance errors and fit convergence rates")
    p.add_argument("--config", help="INI file (default: packaged default suite)")
    p.add_argument("--out", default="verify-out", help="report directory")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("train", help="self-supervised training")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="run", help="run directory (checkpoint, metrics, config copy)")
    p.add_argument("--seed", type=int)
    p.add_argument("--dry-run", action="store_true", help="print the resolved config and exit")
    p.add_argument("--resume", action="store_true", help="continue from <out>/checkpoint.bin")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("denoise", help="denoise images with a trained checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("inputs", nargs="+", help="image files or directories")
    p.add_argument("--out", default="denoised")
    p.add_argument("--config", help="architecture config (default: the one stored in the checkpoint)")
    p.add_argument("--reference", help="directory of clean images with matching names")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("report", help="merge run directories into one comparison table")
    p.add_argument("runs", nargs="*")
    p.add_argument("--out", default="report")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CommandError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ERROR


if __name__ == "__main__":
    sys.exit(main())
