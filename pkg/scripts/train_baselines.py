#!/usr/bin/env python3
"""Baseline benchmark: MLP vs analytical force prediction.

Builds a multi-subject synthetic walking corpus, splits it by subject,
trains the windowed-feature MLP on the train split, and reports the
benchmark metrics of the MLP, the analytical F = m(a - g) baseline, and
the perfect oracle on the held-out test subjects.
"""

import argparse
import time
from pathlib import Path

import numpy as np

from mocapdyn.baselines import (MlpHyper, analytical_predict, build_features,
                                mlp_predict_and_complete, save_model,
                                train_mlp, wrench_targets)
from mocapdyn.bench import Prediction, evaluate, merge_reports
from mocapdyn.comfit import GRAVITY_VEC
from mocapdyn.synthgen import generate, walking_scenario
from mocapdyn.trial_io import SubjectMeta, contact_phases, subject_split


def truth_prediction(trial, truth):
    T = truth.poses.length
    return Prediction(trial.dt, truth.com_acc,
                      truth.wrenches.reshape(T, 2, 6), truth.tau)


def main():
    ap = argparse.ArgumentParser(
        description=__doc__,
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    ap.add_argument("--subjects", type=int, default=20)
    ap.add_argument("--duration", type=float, default=4.0, help="s per trial")
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/baselines")
    args = ap.parse_args()

    t0 = time.monotonic()
    rng = np.random.default_rng(args.seed)
    packs = []
    for i in range(args.subjects):
        mass = float(rng.uniform(55.0, 95.0))
        trial, truth = generate(walking_scenario(
            duration=args.duration, subject_mass=mass, marker_noise=1e-3,
            force_noise=5.0, seed=100 + i))
        trial.subject_id = f"subj{i:02d}"
        packs.append((trial, truth))
    _, assign = subject_split([t for t, _ in packs], (0.90, 0.05, 0.05),
                              seed=args.seed)
    by = {"train": [], "dev": [], "test": []}
    for trial, truth in packs:
        by[assign[trial.subject_id]].append((trial, truth))
    print({k: len(v) for k, v in by.items()}, "subjects per split")

    X = np.vstack([build_features(truth.skeleton, truth.poses)
                   for _, truth in by["train"]])
    Y = np.vstack([wrench_targets(truth.wrenches, trial.meta.mass)
                   for trial, truth in by["train"]])
    model, history = train_mlp(X, Y, MlpHyper(lr=args.lr, epochs=args.epochs,
                                              seed=args.seed))
    print(f"train MSE {history[0]:.4f} -> {history[-1]:.4f} "
          f"over {args.epochs} epochs")

    reports = {"mlp": [], "analytical": [], "oracle": []}
    for trial, truth in by["test"]:
        meta = SubjectMeta(trial.meta.mass, trial.meta.height)
        ref = truth_prediction(trial, truth)
        w, qdd, tau = mlp_predict_and_complete(model, truth.skeleton,
                                               truth.poses, trial.meta.mass)
        com = w[:, :, 3:6].sum(axis=1) / trial.meta.mass + GRAVITY_VEC
        reports["mlp"].append(evaluate(
            Prediction(trial.dt, com, w, tau), ref, meta))
        wa = analytical_predict(truth.skeleton, truth.poses,
                                contact_phases(trial), trial.meta.mass)
        com_a = wa[:, :, 3:6].sum(axis=1) / trial.meta.mass + GRAVITY_VEC
        reports["analytical"].append(evaluate(
            Prediction(trial.dt, com_a, wa, truth.tau), ref, meta))
        reports["oracle"].append(evaluate(truth_prediction(trial, truth),
                                          ref, meta))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_model(model, out / "mlp_baseline.mlp")
    with open(out / "metrics.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("predictor,com_acc_err_m_s2,grm_err_Nm_kg,grf_err_N_kg,"
                 "torque_err_Nm_kg\n")
        for name, reps in reports.items():
            rep = merge_reports(reps)
            fh.write(name + "," + ",".join(repr(float(v))
                                           for v in rep.metrics()) + "\n")
            print(f"{name:10s} com {rep.com_acc_err:.3f} m/s^2  "
                  f"grm {rep.grm_err:.3f} Nm/kg  grf {rep.grf_err:.3f} N/kg  "
                  f"tau {rep.torque_err:.3f} Nm/kg")
    print(f"elapsed {time.monotonic() - t0:.0f} s; wrote {out}/metrics.csv")


if __name__ == "__main__":
    main()
