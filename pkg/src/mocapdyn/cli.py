"""Command-line entry point wiring the pipeline end to end.

Subcommands: gen, fit, eval, baseline, ablate, sweep, split.  Exit codes:
0 success, 1 validation/input error, 2 finished with a convergence
warning.  ``--deterministic`` makes every run byte-reproducible (fixed
seeds are already the default; the flag additionally drops timestamps
from run manifests).  Output schemas are documented in docs/cli.md.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from . import skeleton as sk
from .baselines import (FeatureWindow, MlpHyper, analytical_predict,
                        build_features, com_acceleration_filtered,
                        load_model, mlp_predict_and_complete, save_model,
                        train_mlp, wrench_targets)
from .bench import (AblationConfig, Prediction, analytical_sweep_predictor,
                    evaluate, export_ablation, filter_sweep, run_ablation)
from .comfit import GRAVITY_VEC
from .dynfit import DynConfig, fit_trial, inverse_dynamics, save_fit
from .errors import (ConvergenceWarning, FitError, GenerationError,
                     InputError, ParseError)
from .kinefit import KinConfig, PoseSeries
from .skeleton_io import load_skeleton
from .synthgen import (GroundTruth, add_plate_drift, generate, hide_forces,
                       hopping_scenario, load_truth, save_truth,
                       standing_scenario, treadmill_scenario,
                       walking_scenario)
from .trial_io import (SubjectMeta, contact_phases, load_trial, save_trial,
                       subject_split)


@dataclass
class RunConfig:
    """Paper-standard pipeline defaults."""

    cutoff_hz: float = 30.0
    fps: float = 100.0
    alpha: float = 1e-3
    seed: int = 0
    split_ratios: tuple = (0.90, 0.05, 0.05)


DEFAULTS = RunConfig()


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise InputError(message)


def _resolve_skeleton(name_or_path: str) -> sk.Skeleton:
    builtins = sk.builtin_models()
    if name_or_path in builtins:
        return builtins[name_or_path]
    p = Path(name_or_path)
    if p.exists():
        return load_skeleton(p)
    raise InputError(f"unknown model {name_or_path!r}; builtins: "
                     + ", ".join(sorted(builtins)))


def _write_manifest(out_dir: Path, name: str, args, outputs) -> None:
    manifest = {
        "tool": "mocapdyn",
        "version": __version__,
        "subcommand": args.subcommand,
        "arguments": {k: v for k, v in sorted(vars(args).items())
                      if k not in ("func",)},
        "outputs": sorted(str(Path(o).name) for o in outputs),
    }
    if not args.deterministic:
        manifest["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    path = out_dir / f"{name}_manifest.json"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# subcommands

def _cmd_gen(args) -> int:
    factories = {
        "standing": standing_scenario,
        "walking": walking_scenario,
        "hopping": hopping_scenario,
        "treadmill": treadmill_scenario,
    }
    kwargs = dict(duration=args.duration, marker_noise=args.marker_noise,
                  force_noise=args.force_noise, seed=args.seed,
                  subject_mass=args.subject_mass)
    if args.scenario == "treadmill":
        kwargs["belt_speed"] = args.belt_speed
    cfg = factories[args.scenario](**kwargs)
    cfg.dt = 1.0 / args.fps
    cfg.subject_id = args.subject_id
    trial, truth = generate(cfg)
    if args.plate_drift > 0:
        add_plate_drift(trial, args.plate_drift, seed=args.seed + 1)
    if args.hide_k > 0:
        trial, _ = hide_forces(trial, args.hide_k, args.hide_foot)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trial_path = out / f"{args.name}.trial"
    truth_path = out / f"{args.name}.truth"
    save_trial(trial, trial_path)
    save_truth(truth, truth_path)
    _write_manifest(out, args.name, args, [trial_path, truth_path])
    return 0


def _cmd_fit(args) -> int:
    skeleton = _resolve_skeleton(args.model)
    trial = load_trial(args.trial)
    kin_cfg = KinConfig(fit_scales=not args.no_scales)
    dyn_cfg = DynConfig(cutoff_hz=args.cutoff_hz, max_outer=args.max_outer,
                        fit_scales=not args.no_scales)
    code = 0
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        fit, sol, _ = fit_trial(skeleton, trial, kin_config=kin_cfg,
                                dyn_config=dyn_cfg, alpha=args.alpha)
        if any(issubclass(w.category, ConvergenceWarning) for w in caught):
            for w in caught:
                print(f"warning: {w.message}", file=sys.stderr)
            code = 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fit_path = out / f"{args.name}.fit"
    save_fit(fit, fit_path)
    quality = {
        "marker_rms_cm": fit.quality.marker_rms_cm,
        "linear_residual_BW": fit.quality.linear_residual_BW,
        "angular_residual_BWh": fit.quality.angular_residual_BWh,
        "passes_hicks": fit.quality.passes_hicks,
        "estimated_mass_kg": sol.mass,
        "total_mass_kg": fit.total_mass,
    }
    quality_path = out / f"{args.name}_quality.json"
    with open(quality_path, "w", encoding="utf-8", newline="") as fh:
        json.dump(quality, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(out, args.name, args, [fit_path, quality_path])
    print(f"passes_hicks: {fit.quality.passes_hicks}")
    return code


def _load_prediction(path) -> tuple:
    truth = load_truth(path)
    T = truth.poses.length
    return Prediction(truth.poses.dt, truth.com_acc,
                      truth.wrenches.reshape(T, 2, 6), truth.tau), truth


def _cmd_eval(args) -> int:
    pred, _ = _load_prediction(args.pred)
    truth, _ = _load_prediction(args.truth)
    meta = SubjectMeta(args.mass, args.height)
    rep = evaluate(pred, truth, meta)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{args.name}_metrics.csv"
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("com_acc_err_m_s2,grm_err_Nm_kg,grf_err_N_kg,"
                 "torque_err_Nm_kg\n")
        fh.write(",".join(repr(float(v)) for v in rep.metrics()) + "\n")
    _write_manifest(out, args.name, args, [csv_path])
    return 0


def _prediction_truth(skeleton, poses: PoseSeries, wrenches, mass
                      ) -> GroundTruth:
    """Package a wrench prediction as a truth-format file payload."""
    tau, _ = inverse_dynamics(skeleton, poses.q, poses.qd, poses.qdd,
                              wrenches)
    com = sk.center_of_mass(skeleton, poses.q)
    com_acc = wrenches[:, :, 3:6].sum(axis=1) / mass + GRAVITY_VEC
    weights = np.zeros((poses.length, 2))
    return GroundTruth(poses, np.asarray(wrenches, dtype=float), tau, com,
                       com_acc, weights, skeleton)


def _corpus_pairs(corpus: Path):
    pairs = []
    for trial_path in sorted(corpus.glob("*.trial")):
        truth_path = trial_path.with_suffix(".truth")
        if not truth_path.exists():
            raise InputError(f"missing companion truth file for "
                             f"{trial_path.name}")
        pairs.append((load_trial(trial_path), load_truth(truth_path)))
    if not pairs:
        raise InputError(f"no .trial files in {corpus}")
    return pairs


def _cmd_baseline(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    skeleton = _resolve_skeleton(args.model)
    if args.mode == "analytical":
        trial = load_trial(args.trial)
        truth = load_truth(args.truth)
        pred = analytical_predict(skeleton, truth.poses,
                                  contact_phases(trial), trial.meta.mass,
                                  args.cutoff_hz)
        payload = _prediction_truth(skeleton, truth.poses, pred,
                                    trial.meta.mass)
        pred_path = out / f"{args.name}.truth"
        save_truth(payload, pred_path)
        _write_manifest(out, args.name, args, [pred_path])
        return 0
    if args.mode == "train":
        pairs = _corpus_pairs(Path(args.corpus))
        X, Y = [], []
        for trial, truth in pairs:
            X.append(build_features(skeleton, truth.poses))
            Y.append(wrench_targets(truth.wrenches, trial.meta.mass))
        hyper = MlpHyper(lr=args.lr, epochs=args.epochs, seed=args.seed)
        model, history = train_mlp(np.vstack(X), np.vstack(Y), hyper)
        model_path = out / f"{args.name}.mlp"
        save_model(model, model_path)
        loss_path = out / f"{args.name}_loss.csv"
        with open(loss_path, "w", encoding="utf-8", newline="") as fh:
            fh.write("epoch,train_mse\n")
            for i, loss in enumerate(history, start=1):
                fh.write(f"{i},{repr(loss)}\n")
        _write_manifest(out, args.name, args, [model_path, loss_path])
        return 0
    # predict
    trial = load_trial(args.trial)
    truth = load_truth(args.truth)
    model = load_model(args.model_file)
    wrenches, qdd, tau = mlp_predict_and_complete(model, skeleton,
                                                  truth.poses,
                                                  trial.meta.mass)
    poses = PoseSeries(truth.poses.dt, truth.poses.q, truth.poses.qd, qdd)
    payload = _prediction_truth(skeleton, poses, wrenches, trial.meta.mass)
    pred_path = out / f"{args.name}.truth"
    save_truth(payload, pred_path)
    _write_manifest(out, args.name, args, [pred_path])
    return 0


def _cmd_ablate(args) -> int:
    skeleton = _resolve_skeleton(args.model)
    trial = load_trial(args.trial)
    cfg = AblationConfig(
        k=args.k, foot=args.foot, alpha=args.alpha,
        kin_config=KinConfig(fit_scales=False),
        dyn_config=DynConfig(max_outer=args.max_outer, fit_scales=False))
    result = run_ablation(skeleton, trial, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table_path = out / f"{args.name}_table.csv"
    knee_path = out / f"{args.name}_knee.csv"
    export_ablation(result, table_path, knee_path)
    _write_manifest(out, args.name, args, [table_path, knee_path])
    for name, resid, rms in result.table():
        print(f"{name}: linear residual {resid:.2f} N, "
              f"marker RMS {rms:.3f} cm")
    return 0


def _cmd_sweep(args) -> int:
    skeleton = _resolve_skeleton(args.model)
    trial = load_trial(args.trial)
    truth = load_truth(args.truth)
    cutoffs = [float(c) for c in args.cutoffs.split(",")]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{args.name}_sweep.csv"
    filter_sweep(analytical_sweep_predictor,
                 [(skeleton, trial, truth.poses)], cutoffs,
                 csv_path=csv_path)
    _write_manifest(out, args.name, args, [csv_path])
    return 0


def _cmd_split(args) -> int:
    corpus = Path(args.corpus)
    paths = sorted(corpus.glob("*.trial"))
    trials = [load_trial(p) for p in paths]
    ratios = tuple(float(r) for r in args.ratios.split(","))
    splits, assignment = subject_split(trials, ratios, args.seed)
    by_split = {name: [] for name in ("train", "dev", "test")}
    for path, trial in zip(paths, trials):
        by_split[assignment[trial.subject_id]].append(path.name)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    split_path = out / f"{args.name}_split.json"
    with open(split_path, "w", encoding="utf-8", newline="") as fh:
        json.dump({"subjects": assignment, "files": by_split}, fh,
                  indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(out, args.name, args, [split_path])
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="mocapdyn",
                     description=__doc__.splitlines()[0],
                     formatter_class=fmt)
    sub = parser.add_subparsers(dest="subcommand", required=True,
                                parser_class=_Parser)

    def common(p):
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--name", default="run", help="output file stem")
        p.add_argument("--deterministic", action="store_true",
                       help="byte-reproducible mode: single-threaded, "
                            "no timestamps in manifests")

    p = sub.add_parser("gen", help="generate a synthetic trial",
                       formatter_class=fmt)
    p.add_argument("--scenario", default="walking",
                   choices=["standing", "walking", "hopping", "treadmill"])
    p.add_argument("--duration", type=float, default=5.0, help="seconds")
    p.add_argument("--fps", type=float, default=DEFAULTS.fps,
                   help="frames per second")
    p.add_argument("--marker-noise", type=float, default=0.0, help="m")
    p.add_argument("--force-noise", type=float, default=0.0, help="N")
    p.add_argument("--plate-drift", type=float, default=0.0,
                   help="slow force-plate error sigma, N")
    p.add_argument("--belt-speed", type=float, default=1.1, help="m/s")
    p.add_argument("--subject-mass", type=float, default=None, help="kg")
    p.add_argument("--subject-id", default="synth")
    p.add_argument("--seed", type=int, default=DEFAULTS.seed)
    p.add_argument("--hide-k", type=int, default=0,
                   help="hide every k-th step (0 = keep all forces)")
    p.add_argument("--hide-foot", default="right",
                   choices=["left", "right"])
    common(p)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("fit", help="reconstruct dynamics from a trial",
                       formatter_class=fmt)
    p.add_argument("--trial", required=True)
    p.add_argument("--model", default="biped12")
    p.add_argument("--alpha", type=float, default=DEFAULTS.alpha,
                   help="hidden-acceleration regularization")
    p.add_argument("--cutoff-hz", type=float, default=DEFAULTS.cutoff_hz)
    p.add_argument("--max-outer", type=int, default=3)
    p.add_argument("--no-scales", action="store_true",
                   help="skip bone-scale fitting")
    common(p)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("eval", help="benchmark metrics on prediction files",
                       formatter_class=fmt)
    p.add_argument("--pred", required=True, help="prediction .truth file")
    p.add_argument("--truth", required=True, help="reference .truth file")
    p.add_argument("--mass", type=float, default=70.0, help="kg")
    p.add_argument("--height", type=float, default=1.75, help="m")
    common(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("baseline", help="analytical / MLP baselines",
                       formatter_class=fmt)
    p.add_argument("--mode", required=True,
                   choices=["analytical", "train", "predict"])
    p.add_argument("--model", default="biped12", help="skeleton model")
    p.add_argument("--trial", help="input .trial file")
    p.add_argument("--truth", help="companion .truth file (poses)")
    p.add_argument("--corpus", help="directory of .trial/.truth pairs")
    p.add_argument("--model-file", help="trained .mlp file (predict mode)")
    p.add_argument("--cutoff-hz", type=float, default=DEFAULTS.cutoff_hz)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--seed", type=int, default=DEFAULTS.seed)
    common(p)
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("ablate", help="hidden-step ablation study",
                       formatter_class=fmt)
    p.add_argument("--trial", required=True,
                   help=".trial file with fully observed forces")
    p.add_argument("--model", default="biped12")
    p.add_argument("--k", type=int, default=3, help="hide every k-th step")
    p.add_argument("--foot", default="right", choices=["left", "right"])
    p.add_argument("--alpha", type=float, default=DEFAULTS.alpha)
    p.add_argument("--max-outer", type=int, default=1)
    common(p)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("sweep", help="filter-cutoff sweep",
                       formatter_class=fmt)
    p.add_argument("--trial", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--model", default="biped12")
    p.add_argument("--cutoffs", default="10,20,30,40",
                   help="comma-separated ascending Hz")
    common(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("split", help="subject-level train/dev/test split",
                       formatter_class=fmt)
    p.add_argument("--corpus", required=True)
    p.add_argument("--ratios", default="0.9,0.05,0.05")
    p.add_argument("--seed", type=int, default=DEFAULTS.seed)
    common(p)
    p.set_defaults(func=_cmd_split)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (InputError, ParseError, GenerationError, FitError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:      # argparse --help
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
