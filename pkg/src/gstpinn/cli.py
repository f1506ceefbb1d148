"""Command line harness: reference, train, evaluate, compare.

Exit codes: 0 success, 2 configuration or input error, 3 training divergence.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import jax.numpy as jnp
import numpy as np

from . import diffnet, plotting
from .config import ConfigError, ExperimentConfig, mode_warnings
from .metrics import evaluate, predict_grid, write_error_field
from .optimize import TrainingDiverged, train
from .reference import SolverError, read_solution, solve

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 2, 3

COMPARE_MODES = ("pinn", "stpinn", "gstpinn")


class InputError(RuntimeError):
    pass


def _stamp(cfg: ExperimentConfig) -> dict:
    return {"config_hash": cfg.hash, "seed": cfg.seed}


def _stamp_text(cfg) -> str:
    return f"config_hash={cfg.hash} seed={cfg.seed}"


def load_config(args) -> ExperimentConfig:
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(("run", "seed", args.seed))
    if args.mode is not None:
        overrides.append(("run", "mode", args.mode))
    if args.out is not None:
        overrides.append(("run", "out", args.out))
    if args.deterministic:
        overrides.append(("run", "deterministic", True))
    if args.labeled is not None:
        overrides.append(("sampling", "n_labeled", args.labeled))
    if args.config:
        cfg = ExperimentConfig.load(args.config, overrides)
    else:
        cfg = ExperimentConfig.from_dict({}, overrides)
    return cfg.resolved()


def _out_dir(cfg) -> Path:
    out = Path(cfg["run"]["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def get_reference(cfg, out: Path | None = None, required: bool = False):
    """Saved reference from eval.reference or out/reference.csv, else solve (and cache)."""
    ev = cfg["eval"]
    candidates = [Path(ev["reference"])] if ev["reference"] else []
    if out is not None:
        candidates.append(out / "reference.csv")
    for path in candidates:
        if path.exists():
            ref = read_solution(path)
            if ref.problem != cfg.problem() or ref.values.shape != (ev["n_t"], ev["n_x"]):
                raise InputError(f"reference {path} does not match the configured problem/grid")
            return ref
    if required:
        raise InputError("no reference solution found (set eval.reference or run `reference` first)")
    ref = solve(cfg.problem(), ev["n_x"], ev["n_t"], min_cells=ev["min_cells"] or None, rtol=ev["rtol"])
    if out is not None:
        ref.save(out / "reference.csv", **_stamp(cfg))
    return ref


def cmd_reference(cfg, args) -> int:
    out = _out_dir(cfg)
    ev = cfg["eval"]
    ref = solve(cfg.problem(), ev["n_x"], ev["n_t"], min_cells=ev["min_cells"] or None, rtol=ev["rtol"])
    path = out / "reference.csv"
    ref.save(path, **_stamp(cfg))
    cfg.save(out / "config.toml")
    print(f"reference written to {path} ({ref.solver_meta['scheme']}, dt={ref.solver_meta['dt']:.3g})")
    return EXIT_OK


def run_training(cfg, out: Path, reference=None, verbose=True):
    cfg.save(out / "config.toml")
    if reference is None and (cfg["sampling"]["n_labeled"] > 0 or verbose):
        reference = get_reference(cfg, out)

    def progress(rec):
        if verbose:
            mse = "" if rec.mse is None else f" mse={rec.mse:.4e}"
            print(f"iter {rec.iteration:6d} loss={rec.loss.total:.4e}{mse} pseudo={rec.pseudo_count}", flush=True)

    stamp = _stamp(cfg)
    try:
        params, hist, pseudo = train(cfg, reference, out_dir=out, progress=progress)
    except TrainingDiverged as exc:
        exc.history.write_csv(out / "history.csv", **stamp)
        exc.history.write_pseudo_log(out / "pseudo_log.csv", **stamp)
        raise
    diffnet.save_checkpoint(out / "checkpoint.bin", params, config_hash=cfg.hash, seed=cfg.seed,
                            iterations=cfg["optimizer"]["iterations"])
    hist.write_csv(out / "history.csv", **stamp)
    hist.write_pseudo_log(out / "pseudo_log.csv", **stamp)
    return params, hist, pseudo, reference


def cmd_train(cfg, args) -> int:
    for w in mode_warnings(cfg):
        print(f"warning: {w}", file=sys.stderr)
    out = _out_dir(cfg)
    run_training(cfg, out)
    print(f"training outputs written to {out}")
    return EXIT_OK


def write_report(cfg, params, reference, out: Path, **extra):
    """ErrorReport CSV, error field, heatmaps and fixed-time slices."""
    stamp = _stamp(cfg)
    text = _stamp_text(cfg)
    rep = evaluate(params, reference)
    with open(out / "metrics.csv", "w", newline="") as fh:
        fh.write("# errors against the in-repo reference solver; rel_l2 = discrete 2-norm ratio over the grid\n")
        for k, v in stamp.items():
            fh.write(f"# {k}={v}\n")
        row = {**extra, **rep.row()}
        w = csv.DictWriter(fh, fieldnames=list(row))
        w.writeheader()
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    write_error_field(out / "error_field.csv", reference, rep.error_field, **stamp)
    pred = predict_grid(params, reference)
    plotting.solution_heatmaps(out, reference, pred, text)
    times = [t for t in plotting.SLICE_TIMES[cfg.kind] if reference.t[0] <= t <= reference.t[-1]]

    def predict_at(t, x):
        pts = jnp.asarray(np.column_stack([np.full(x.size, t), x]))
        return np.asarray(diffnet.forward_batch(params, pts))

    rows = plotting.slice_rows(reference, predict_at, times)
    plotting.write_slices(out / "slices.csv", out / "slices.svg", rows, times, text, stamp)
    return rep


def cmd_evaluate(cfg, args) -> int:
    out = _out_dir(cfg)
    ckpt = Path(args.checkpoint) if args.checkpoint else out / "checkpoint.bin"
    if not ckpt.exists():
        raise InputError(f"checkpoint {ckpt} not found")
    params, _ = diffnet.load_checkpoint(ckpt)
    if tuple(params.layer_sizes) != cfg.layer_sizes:
        raise InputError(f"checkpoint layer sizes {params.layer_sizes} differ from config {cfg.layer_sizes}")
    reference = read_solution(args.reference) if args.reference else get_reference(cfg, out, required=True)
    rep = evaluate(params, reference, keep_field=False)
    write_report(cfg, params, reference, out)
    print(f"mse={rep.mse:.6e} rel_l2={rep.rel_l2 if rep.rel_l2 is None else f'{rep.rel_l2:.6e}'} "
          f"max_abs={rep.max_abs:.6e}")
    return EXIT_OK


def cmd_compare(cfg, args) -> int:
    out = _out_dir(cfg)
    reference = get_reference(cfg, out)
    labeled = cfg["sampling"]["n_labeled"] or 100
    rows = []
    histories = {}
    for mode in COMPARE_MODES:
        for n_lab, tag in ((labeled, "labeled"), (0, "unlabeled")):
            sub_cfg = cfg.replace(run__mode=mode, sampling__n_labeled=n_lab,
                                  run__out=str(out / f"{mode}_{tag}"))
            sub = _out_dir(sub_cfg)
            print(f"== {mode} ({tag})", flush=True)
            params, hist, _, _ = run_training(sub_cfg, sub, reference, verbose=args.verbose)
            rep = write_report(sub_cfg, params, reference, sub, mode=mode, data=tag)
            histories[f"{mode} ({tag})"] = hist
            rows.append({"mode": mode, "data": tag, "n_labeled": n_lab, "rel_l2": rep.rel_l2,
                         "mse": rep.mse, "config_hash": sub_cfg.hash, "seed": sub_cfg.seed})
    with open(out / "compare.csv", "w", newline="") as fh:
        fh.write("# errors against the in-repo reference solver\n")
        for k, v in _stamp(cfg).items():
            fh.write(f"# {k}={v}\n")
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else ("undefined" if v is None else v)
                        for k, v in r.items()})
    plotting.history_plot(out / "mse_history.svg", histories, _stamp_text(cfg))
    cfg.save(out / "config.toml")
    for r in rows:
        print(f"{r['mode']:8s} {r['data']:10s} rel_l2={r['rel_l2']:.4e} mse={r['mse']:.4e}")
    return EXIT_OK


COMMANDS = {"reference": cmd_reference, "train": cmd_train, "evaluate": cmd_evaluate, "compare": cmd_compare}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML experiment file (defaults used when omitted)")
    common.add_argument("--seed", type=int)
    common.add_argument("--mode", choices=["pinn", "gpinn", "stpinn", "gstpinn"])
    common.add_argument("--out", help="output directory")
    common.add_argument("--deterministic", action="store_true", help="require a fixed seed")
    common.add_argument("--labeled", type=int, help="number of labeled reference points")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config field")

    parser = argparse.ArgumentParser(prog="gstpinn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("reference", parents=[common], help="solve and save the reference solution")
    sub.add_parser("train", parents=[common], help="train one model")
    ev = sub.add_parser("evaluate", parents=[common], help="score a checkpoint against the reference")
    ev.add_argument("--checkpoint")
    ev.add_argument("--reference")
    cmp_ = sub.add_parser("compare", parents=[common], help="run the mode x labeled-data matrix")
    cmp_.add_argument("--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        for field, msg in exc.errors:
            print(f"config error: {field}: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except (InputError, SolverError, diffnet.DiffNetError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDiverged as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
