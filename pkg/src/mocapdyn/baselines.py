"""Reference predictors for the ground-reaction benchmark.

* Analytical: F = m a from the filtered kinematic CoM acceleration, split
  evenly between the feet during double support, zero ground moments.
* MLP: a from-scratch two-layer sigmoid network (hidden 512) trained with
  mini-batch RMSprop on mass-normalized foot wrenches, fed a causal window
  of poses, filtered accelerations, and joint centers in the pelvis frame.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from . import skeleton as sk
from .comfit import GRAVITY_VEC
from .dynfit import inverse_dynamics
from .errors import FitError, InputError, ParseError
from .kinefit import PoseSeries, pose_derivatives
from .signals import TimeSeries, butterworth_lowpass, central_difference2
from .synthgen import PIPELINE_CUTOFF, PIPELINE_ORDER, PIPELINE_PREFILTER
from .trial_io import ContactPhase


# ---------------------------------------------------------------------------
# analytical baseline

def com_acceleration_filtered(skeleton, poses: PoseSeries,
                              cutoff_hz: float = 30.0, order: int = 3):
    """CoM acceleration by central differencing of the kinematic CoM,
    zero-phase low-passed at the given cutoff."""
    com = sk.center_of_mass(skeleton, poses.q)
    acc = central_difference2(TimeSeries(poses.dt, com))
    if poses.length > 3 * order:
        acc = butterworth_lowpass(acc, min(cutoff_hz, 0.499 / poses.dt),
                                  order)
    return acc.samples


def analytical_predict(skeleton, poses: PoseSeries, contact_phases, mass,
                       cutoff_hz: float = 30.0, order: int = 3):
    """(T, 2, 6) wrench prediction: F = m (a_com - g) on the loaded feet,
    split evenly during double support; all moments zero."""
    acc = com_acceleration_filtered(skeleton, poses, cutoff_hz, order)
    T = poses.length
    if len(contact_phases) != T:
        raise InputError("contact phase list must align with poses")
    F = mass * (acc - GRAVITY_VEC)
    out = np.zeros((T, 2, 6))
    for t, phase in enumerate(contact_phases):
        if phase is ContactPhase.double:
            out[t, 0, 3:6] = 0.5 * F[t]
            out[t, 1, 3:6] = 0.5 * F[t]
        elif phase is ContactPhase.single_left:
            out[t, 0, 3:6] = F[t]
        elif phase is ContactPhase.single_right:
            out[t, 1, 3:6] = F[t]
    return out


# ---------------------------------------------------------------------------
# features

@dataclass
class FeatureWindow:
    history_length: int = 50
    stride: int = 5

    @property
    def taps(self):
        """Offsets into the past: t, t - stride, ..., t - (history - stride)."""
        return list(range(0, self.history_length, self.stride))


def _per_frame_features(skeleton, poses: PoseSeries):
    """(T, D) per-frame features: q, filtered qdd, and the non-root joint
    centers expressed in the pelvis (root body) frame."""
    if poses.qdd is None:
        pose_derivatives(poses, PIPELINE_CUTOFF, PIPELINE_ORDER,
                         prefilter=PIPELINE_PREFILTER)
    st = sk.kin_state(skeleton, poses.q)
    Rr = st.R[0]
    pr = st.p[0]
    centers = [np.einsum("tji,tj->ti", Rr, st.p[b] - pr)
               for b in range(1, skeleton.n_bodies)]
    return np.concatenate([poses.q, poses.qdd] + centers, axis=1)


def build_features(skeleton, poses: PoseSeries,
                   window: FeatureWindow | None = None):
    """(T, D * n_taps) causal feature windows; frames before the start of
    the trial replicate frame 0."""
    window = window or FeatureWindow()
    per = _per_frame_features(skeleton, poses)
    T = per.shape[0]
    cols = []
    for tap in window.taps:
        idx = np.maximum(np.arange(T) - tap, 0)
        assert np.all(idx <= np.arange(T))  # causal by construction
        cols.append(per[idx])
    return np.concatenate(cols, axis=1)


def wrench_targets(wrenches: np.ndarray, mass: float) -> np.ndarray:
    """(T, 12) mass-normalized (left wrench, right wrench) targets."""
    return np.asarray(wrenches, dtype=float).reshape(len(wrenches), -1) / mass


# ---------------------------------------------------------------------------
# MLP

@dataclass
class MlpHyper:
    lr: float = 1e-4
    batch: int = 32
    epochs: int = 10
    hidden: int = 512
    decay: float = 0.9
    eps: float = 1e-8
    seed: int = 0


@dataclass
class MlpModel:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    feat_mean: np.ndarray
    feat_std: np.ndarray
    seed: int = 0

    def params(self):
        return [self.W1, self.b1, self.W2, self.b2]


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def init_mlp(n_in: int, n_out: int = 12, hidden: int = 512,
             seed: int = 0) -> MlpModel:
    rng = np.random.default_rng(seed)
    lim1 = 1.0 / np.sqrt(n_in)
    lim2 = 1.0 / np.sqrt(hidden)
    return MlpModel(rng.uniform(-lim1, lim1, (n_in, hidden)),
                    rng.uniform(-lim1, lim1, hidden),
                    rng.uniform(-lim2, lim2, (hidden, n_out)),
                    rng.uniform(-lim2, lim2, n_out),
                    np.zeros(n_in), np.ones(n_in), seed)


def mlp_forward(model: MlpModel, X: np.ndarray) -> np.ndarray:
    Xn = (X - model.feat_mean) / model.feat_std
    return _sigmoid(Xn @ model.W1 + model.b1) @ model.W2 + model.b2


def loss_and_grads(model: MlpModel, X: np.ndarray, Y: np.ndarray):
    """Mean-squared-error loss and backpropagated parameter gradients."""
    Xn = (X - model.feat_mean) / model.feat_std
    h = _sigmoid(Xn @ model.W1 + model.b1)
    pred = h @ model.W2 + model.b2
    err = pred - Y
    n = X.shape[0] * Y.shape[1]
    loss = float(np.sum(err ** 2) / n)
    d_pred = 2.0 * err / n
    gW2 = h.T @ d_pred
    gb2 = d_pred.sum(axis=0)
    d_h = d_pred @ model.W2.T * h * (1.0 - h)
    gW1 = Xn.T @ d_h
    gb1 = d_h.sum(axis=0)
    return loss, [gW1, gb1, gW2, gb2]


def train_mlp(X: np.ndarray, Y: np.ndarray,
              hyper: MlpHyper | None = None):
    """Mini-batch RMSprop training; features are z-scored with train-split
    statistics stored on the model.  Returns (model, per-epoch loss list)."""
    hyper = hyper or MlpHyper()
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape[0] != Y.shape[0] or X.shape[0] == 0:
        raise InputError("features and targets must align and be non-empty")
    model = init_mlp(X.shape[1], Y.shape[1], hyper.hidden, hyper.seed)
    model.feat_mean = X.mean(axis=0)
    model.feat_std = np.maximum(X.std(axis=0), 1e-8)
    rng = np.random.default_rng(hyper.seed)
    accum = [np.zeros_like(p) for p in model.params()]
    history = []
    n = X.shape[0]
    for epoch in range(hyper.epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, hyper.batch):
            idx = order[start:start + hyper.batch]
            loss, grads = loss_and_grads(model, X[idx], Y[idx])
            if not np.isfinite(loss):
                raise FitError(
                    f"loss became non-finite at epoch {epoch}: check the "
                    "learning rate and feature normalization")
            losses.append(loss)
            for p, g, a in zip(model.params(), grads, accum):
                a *= hyper.decay
                a += (1.0 - hyper.decay) * g * g
                p -= hyper.lr * g / (np.sqrt(a) + hyper.eps)
        history.append(float(np.mean(losses)))
    if history and history[-1] >= history[0] and history[0] > 0:
        raise FitError("training failed to reduce the loss")
    return model, history


def mlp_predict_and_complete(model: MlpModel, skeleton, poses: PoseSeries,
                             mass: float,
                             window: FeatureWindow | None = None):
    """Predict foot wrenches and make the kinematics dynamically consistent.

    The predicted total force fixes the CoM acceleration (zdd = sum f / m
    + g); the root-translation entries of qdd are shifted so the model CoM
    acceleration matches it, and joint torques come from inverse dynamics.
    Returns (wrenches (T, 2, 6), qdd, tau).
    """
    X = build_features(skeleton, poses, window)
    pred = mlp_forward(model, X) * mass
    T = poses.length
    wrenches = pred.reshape(T, 2, 6)
    zdd = wrenches[:, :, 3:6].sum(axis=1) / mass + GRAVITY_VEC
    qdd = poses.qdd.copy()
    com_acc = sk.com_acceleration(skeleton, poses.q, poses.qd, qdd)
    qdd[:, 3:6] += zdd - com_acc
    tau, _ = inverse_dynamics(skeleton, poses.q, poses.qd, qdd, wrenches)
    return wrenches, qdd, tau


# ---------------------------------------------------------------------------
# model files

MODEL_HEADER = "mlpmodel v1"


def save_model(model: MlpModel, path) -> None:
    buf = io.StringIO()
    buf.write(MODEL_HEADER + "\n")
    buf.write(f"dims {model.W1.shape[0]} {model.W1.shape[1]} "
              f"{model.W2.shape[1]}\n")
    buf.write(f"seed {model.seed}\n")
    for name in ("W1", "b1", "W2", "b2", "feat_mean", "feat_std"):
        arr = getattr(model, name)
        buf.write(name + " " + ",".join(repr(float(v))
                                        for v in np.ravel(arr)) + "\n")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def load_model(path) -> MlpModel:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != MODEL_HEADER:
        raise ParseError(f"expected header {MODEL_HEADER!r}", line=1)
    fields = {}
    dims = None
    seed = 0
    for ln, line in enumerate(lines[1:], start=2):
        key, _, value = line.partition(" ")
        try:
            if key == "dims":
                dims = tuple(int(v) for v in value.split())
            elif key == "seed":
                seed = int(value)
            else:
                fields[key] = np.array([float(v) for v in value.split(",")])
        except ValueError as exc:
            raise ParseError(f"bad value: {exc}", line=ln) from exc
    if dims is None or len(dims) != 3:
        raise ParseError("missing dims line")
    n_in, hidden, n_out = dims
    try:
        return MlpModel(fields["W1"].reshape(n_in, hidden), fields["b1"],
                        fields["W2"].reshape(hidden, n_out), fields["b2"],
                        fields["feat_mean"], fields["feat_std"], seed)
    except (KeyError, ValueError) as exc:
        raise ParseError(f"incomplete model file: {exc}") from exc
