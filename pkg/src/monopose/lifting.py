"""Residual fully-connected 2D-to-3D lifting network in plain numpy.

The network maps normalised keypoints (``2n`` values in ``[-1, 1]``) to a
root-relative pose in millimetres::

    h0 = relu(W_in x + b_in)
    h_{k+1} = h_k + relu(W2_k relu(W1_k h_k + b1_k) + b2_k)
    y = output_scale_mm * (W_out h_K + b_out)

Only the ``n - 1`` non-root joints are produced by ``W_out``; the root
triple is inserted as zeros so root-relativity holds by construction.
Everything runs in float64.
"""

from dataclasses import asdict, dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_keypoint_batch, check_pose_batch
from .core import Keypoints2D, Pose3D
from .exceptions import DivergedLoss, NonFiniteActivation, SchemaError

MODEL_FORMAT_VERSION = 1
#: Learning rate of the full-width network; the desk-scale default is larger.
FULL_SCALE_LEARNING_RATE = 2.5e-4


@dataclass(frozen=True)
class LiftingConfig:
    n_joints: int = 17
    hidden_width: int = 256
    n_residual_blocks: int = 2
    learning_rate: float = 1e-3
    lr_decay_factor: float = 10.0
    lr_decay_epoch: int = 40
    rmsprop_rho: float = 0.9
    rmsprop_eps: float = 1e-8
    seed: int = 0
    n_epochs: int = 100
    batch_size: int = 32
    root_index: int = 0
    image_w: float = 1000.0
    image_h: float = 800.0
    output_scale_mm: float = 1000.0

    def __post_init__(self):
        if self.n_joints < 2:
            raise ValueError("n_joints must be >= 2")
        if self.hidden_width <= 0:
            raise ValueError("hidden_width must be > 0")
        if self.n_residual_blocks < 0:
            raise ValueError("n_residual_blocks must be >= 0")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if not 0 <= self.rmsprop_rho < 1:
            raise ValueError("rmsprop_rho must be in [0, 1)")
        if self.batch_size <= 0 or self.n_epochs < 0:
            raise ValueError("batch_size must be > 0 and n_epochs >= 0")
        if not 0 <= self.root_index < self.n_joints:
            raise ValueError("root_index out of range")

    def lr_at(self, epoch):
        if epoch >= self.lr_decay_epoch:
            return self.learning_rate / self.lr_decay_factor
        return self.learning_rate


def param_shapes(config):
    """Ordered ``name -> shape`` map of every trainable array."""
    h, n = config.hidden_width, config.n_joints
    shapes = {"in_W": (h, 2 * n), "in_b": (h,)}
    for k in range(config.n_residual_blocks):
        shapes[f"res{k}_W1"] = (h, h)
        shapes[f"res{k}_b1"] = (h,)
        shapes[f"res{k}_W2"] = (h, h)
        shapes[f"res{k}_b2"] = (h,)
    shapes["out_W"] = (3 * (n - 1), h)
    shapes["out_b"] = (3 * (n - 1),)
    return shapes


def n_parameters(config):
    return int(sum(np.prod(s) for s in param_shapes(config).values()))


class LiftingModel:
    """Config plus named float64 parameter arrays."""

    def __init__(self, config, params):
        shapes = param_shapes(config)
        if list(params) != list(shapes):
            raise ValueError("parameter names do not match config")
        clean = {}
        for name, shape in shapes.items():
            arr = np.array(params[name], dtype=np.float64)
            if arr.shape != tuple(shape):
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} contains non-finite values")
            arr.setflags(write=False)
            clean[name] = arr
        self.config = config
        self.params = clean

    @classmethod
    def _trusted(cls, config, params):
        model = cls.__new__(cls)
        model.config = config
        model.params = params
        return model

    @classmethod
    def initialize(cls, config):
        rng = np.random.default_rng(config.seed)
        params = {}
        for name, shape in param_shapes(config).items():
            fan_in = shape[1] if len(shape) == 2 else _fan_in_of_bias(name, config)
            bound = 1.0 / np.sqrt(fan_in)
            params[name] = rng.uniform(-bound, bound, size=shape)
        return cls(config, params)

    @property
    def n_parameters(self):
        return sum(a.size for a in self.params.values())

    def flat(self):
        return np.concatenate([a.ravel() for a in self.params.values()])

    def with_flat(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        out, i = {}, 0
        for name, arr in self.params.items():
            out[name] = theta[i:i + arr.size].reshape(arr.shape)
            i += arr.size
        return LiftingModel(self.config, out)

    def with_params(self, **updates):
        params = dict(self.params)
        params.update(updates)
        return LiftingModel(self.config, params)

    def to_dict(self):
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "kind": "lifting_model",
            "config": asdict(self.config),
            "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                       for k, v in self.params.items()},
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format_version") != MODEL_FORMAT_VERSION:
            raise SchemaError(f"unsupported model format_version {d.get('format_version')!r}",
                              "format_version")
        try:
            config = LiftingConfig(**d["config"])
            params = {k: np.asarray(v["data"], dtype=np.float64).reshape(v["shape"])
                      for k, v in d["params"].items()}
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(str(exc), "params") from exc
        return cls(config, params)

    def __eq__(self, other):
        return (isinstance(other, LiftingModel) and self.config == other.config
                and all(np.array_equal(self.params[k], other.params[k]) for k in self.params))

    __hash__ = None


def _fan_in_of_bias(name, config):
    if name == "in_b":
        return 2 * config.n_joints
    return config.hidden_width


def normalize_keypoints(keypoints, image_w, image_h):
    """Map pixel coordinates to ``[-1, 1]`` by image width and height."""
    kp = np.asarray(keypoints, dtype=np.float64)
    scale = np.array([2.0 / image_w, 2.0 / image_h])
    return kp * scale - 1.0


def _relu(x):
    return np.maximum(x, 0.0)


def _forward_cache(model, X):
    p = model.params
    cache = {"x": X}
    a = X @ p["in_W"].T + p["in_b"]
    h = _relu(a)
    cache["a_in"] = a
    cache["h0"] = h
    for k in range(model.config.n_residual_blocks):
        z1 = h @ p[f"res{k}_W1"].T + p[f"res{k}_b1"]
        r1 = _relu(z1)
        z2 = r1 @ p[f"res{k}_W2"].T + p[f"res{k}_b2"]
        h = h + _relu(z2)
        cache[f"z1_{k}"], cache[f"r1_{k}"], cache[f"z2_{k}"] = z1, r1, z2
        cache[f"h{k + 1}"] = h
    raw = h @ p["out_W"].T + p["out_b"]
    if not np.isfinite(raw).all():
        raise NonFiniteActivation("non-finite network output")
    cache["raw"] = raw
    return raw, cache


def _insert_root(raw, config):
    m = raw.shape[0]
    n = config.n_joints
    out = np.zeros((m, n, 3))
    keep = np.arange(n) != config.root_index
    out[:, keep, :] = raw.reshape(m, n - 1, 3) * config.output_scale_mm
    return out.reshape(m, 3 * n)


def forward(model, keypoints):
    """Network output for normalised ``2n`` inputs; ``3n`` root-relative mm.

    Accepts a single vector or an ``(m, 2n)`` batch.
    """
    X = np.asarray(keypoints, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != 2 * model.config.n_joints:
        raise ValueError(f"expected {2 * model.config.n_joints} inputs, got {X.shape[1]}")
    raw, _ = _forward_cache(model, X)
    out = _insert_root(raw, model.config)
    return out[0] if single else out


def loss(pred, target, root_index=0):
    """Mean squared Euclidean error over non-root joints, in mm^2.

    ``pred`` is a ``3n`` vector (or ``(m, 3n)`` batch); ``target`` a
    :class:`Pose3D`, ``(n, 3)`` array, or matching batch.  Batches average
    over samples as well.
    """
    t = target.joints if isinstance(target, Pose3D) else np.asarray(target, dtype=np.float64)
    p = np.asarray(pred, dtype=np.float64)
    p = p.reshape(-1, t.shape[-2] if t.ndim >= 2 else p.size // 3, 3)
    t = t.reshape(p.shape)
    keep = np.arange(p.shape[1]) != root_index
    d2 = ((p[:, keep] - t[:, keep]) ** 2).sum(axis=2)
    return float(d2.mean())


def loss_and_grad(model, X, Y):
    """Batch loss and its gradient with respect to every parameter.

    ``X`` is ``(m, 2n)`` normalised input, ``Y`` is ``(m, n, 3)`` targets.
    """
    cfg = model.config
    p = model.params
    raw, c = _forward_cache(model, X)
    m, n = X.shape[0], cfg.n_joints
    keep = np.arange(n) != cfg.root_index
    pred = raw.reshape(m, n - 1, 3) * cfg.output_scale_mm
    diff = pred - Y[:, keep, :]
    value = float((diff ** 2).sum() / (m * (n - 1)))
    g_raw = (2.0 * cfg.output_scale_mm / (m * (n - 1))) * diff.reshape(m, -1)

    grads = {}
    K = cfg.n_residual_blocks
    h_last = c[f"h{K}"]
    grads["out_W"] = g_raw.T @ h_last
    grads["out_b"] = g_raw.sum(axis=0)
    g_h = g_raw @ p["out_W"]
    for k in reversed(range(K)):
        g_z2 = g_h * (c[f"z2_{k}"] > 0)
        grads[f"res{k}_W2"] = g_z2.T @ c[f"r1_{k}"]
        grads[f"res{k}_b2"] = g_z2.sum(axis=0)
        g_z1 = (g_z2 @ p[f"res{k}_W2"]) * (c[f"z1_{k}"] > 0)
        grads[f"res{k}_W1"] = g_z1.T @ c[f"h{k}"]
        grads[f"res{k}_b1"] = g_z1.sum(axis=0)
        g_h = g_h + g_z1 @ p[f"res{k}_W1"]
    g_a = g_h * (c["a_in"] > 0)
    grads["in_W"] = g_a.T @ c["x"]
    grads["in_b"] = g_a.sum(axis=0)
    return value, {name: grads[name] for name in p}


def rmsprop_step(params, grads, state, lr, rho=0.9, eps=1e-8):
    """One RMSProp update; returns ``(new_params, new_state)``.

    Works elementwise on arrays or on dicts of arrays with matching keys.
    """
    if isinstance(params, dict):
        new_p, new_s = {}, {}
        for k in params:
            new_p[k], new_s[k] = rmsprop_step(params[k], grads[k], state[k], lr, rho, eps)
        return new_p, new_s
    g = np.asarray(grads, dtype=np.float64)
    v = rho * np.asarray(state, dtype=np.float64) + (1.0 - rho) * g * g
    theta = np.asarray(params, dtype=np.float64) - lr * g / (np.sqrt(v) + eps)
    return theta, v


def _dataset_arrays(dataset, config):
    X, Y = [], []
    for kp, pose in dataset:
        joints = kp.joints if isinstance(kp, Keypoints2D) else np.asarray(kp)
        X.append(joints)
        Y.append(pose.joints if isinstance(pose, Pose3D) else np.asarray(pose))
    X = check_keypoint_batch(np.stack(X), config.n_joints, "keypoints")
    Y = check_pose_batch(np.stack(Y), config.n_joints, "poses")
    return normalize_keypoints(X, config.image_w, config.image_h).reshape(len(X), -1), Y


def train(model, dataset, config=None):
    """Minibatch RMSProp training.

    ``dataset`` is a sequence of ``(Keypoints2D | (n, 2) px, Pose3D | (n, 3))``
    pairs.  Returns ``(trained_model, trace)`` where ``trace[0]`` is the
    loss before training and ``trace[e]`` the full-dataset loss after epoch
    ``e``.  Shuffling is driven by ``config.seed`` so runs are reproducible.
    """
    config = config or model.config
    if len(dataset) == 0:
        raise ValueError("dataset must be non-empty")
    X, Y = _dataset_arrays(dataset, config)
    return train_arrays(model, X, Y, config)


def _full_loss(model, X, Y):
    try:
        raw, _ = _forward_cache(model, X)
    except NonFiniteActivation as exc:
        raise DivergedLoss(f"training loss became non-finite: {exc}") from exc
    value = loss(_insert_root(raw, model.config), Y, model.config.root_index)
    if not np.isfinite(value):
        raise DivergedLoss("training loss became non-finite")
    return value


def train_arrays(model, X, Y, config=None):
    config = config or model.config
    rng = np.random.default_rng(config.seed)
    params = {k: v.copy() for k, v in model.params.items()}
    state = {k: np.zeros_like(v) for k, v in params.items()}
    current = LiftingModel._trusted(config, params)
    trace = [_full_loss(current, X, Y)]
    m = X.shape[0]
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(config.n_epochs):
            lr = config.lr_at(epoch)
            order = rng.permutation(m)
            for start in range(0, m, config.batch_size):
                idx = order[start:start + config.batch_size]
                try:
                    value, grads = loss_and_grad(current, X[idx], Y[idx])
                except NonFiniteActivation as exc:
                    raise DivergedLoss(f"epoch {epoch}: {exc}") from exc
                if not np.isfinite(value):
                    raise DivergedLoss(f"epoch {epoch}: non-finite minibatch loss")
                params, state = rmsprop_step(params, grads, state, lr,
                                             config.rmsprop_rho, config.rmsprop_eps)
                current = LiftingModel._trusted(config, params)
            trace.append(_full_loss(current, X, Y))
    return LiftingModel(config, current.params), trace


def gradient_check(model, sample, perturbation=1e-5, n_checks=200, seed=0, grad_fn=None):
    """Largest relative error between analytic and central-difference gradients.

    ``sample`` is ``(normalised 2n input, (n, 3) target)``.  ``grad_fn``
    overrides the analytic gradient (used to test that corrupted gradients
    are caught); it takes ``(model, X, Y)`` and returns a dict like
    :func:`loss_and_grad`.
    """
    if not 1e-6 <= perturbation <= 1e-4:
        raise ValueError("perturbation must lie in [1e-6, 1e-4]")
    x, target = sample
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    t = target.joints if isinstance(target, Pose3D) else np.asarray(target, dtype=np.float64)
    Y = t.reshape(1, -1, 3)
    grads = (grad_fn or (lambda mdl, a, b: loss_and_grad(mdl, a, b)[1]))(model, X, Y)
    analytic = np.concatenate([grads[k].ravel() for k in model.params])
    theta = model.flat()
    rng = np.random.default_rng(seed)
    idx = rng.choice(theta.size, size=min(n_checks, theta.size), replace=False)

    def f(th):
        raw, _ = _forward_cache(model.with_flat(th), X)
        return loss(_insert_root(raw, model.config), Y, model.config.root_index)

    worst = 0.0
    for i in idx:
        plus, minus = theta.copy(), theta.copy()
        plus[i] += perturbation
        minus[i] -= perturbation
        numeric = (f(plus) - f(minus)) / (2.0 * perturbation)
        denom = max(abs(numeric), abs(analytic[i]), 1e-12)
        worst = max(worst, abs(numeric - analytic[i]) / denom)
    return worst


class PoseLifter(RegressorMixin, BaseEstimator):
    """scikit-learn regressor wrapping the residual lifting network.

    ``fit`` takes pixel keypoints ``(m, n, 2)`` (or ``(m, 2n)``) and
    root-relative poses ``(m, n, 3)`` in millimetres.  ``predict`` returns
    ``(m, n, 3)``.
    """

    def __init__(self, hidden_width=256, n_residual_blocks=2, learning_rate=1e-3,
                 lr_decay_factor=10.0, lr_decay_epoch=40, rmsprop_rho=0.9,
                 rmsprop_eps=1e-8, n_epochs=100, batch_size=32, image_w=1000.0,
                 image_h=800.0, root_index=0, output_scale_mm=1000.0, seed=0):
        self.hidden_width = hidden_width
        self.n_residual_blocks = n_residual_blocks
        self.learning_rate = learning_rate
        self.lr_decay_factor = lr_decay_factor
        self.lr_decay_epoch = lr_decay_epoch
        self.rmsprop_rho = rmsprop_rho
        self.rmsprop_eps = rmsprop_eps
        self.n_epochs = n_epochs
        self.batch_size = batch_size
        self.image_w = image_w
        self.image_h = image_h
        self.root_index = root_index
        self.output_scale_mm = output_scale_mm
        self.seed = seed

    def _config(self, n_joints):
        return LiftingConfig(
            n_joints=n_joints, hidden_width=self.hidden_width,
            n_residual_blocks=self.n_residual_blocks, learning_rate=self.learning_rate,
            lr_decay_factor=self.lr_decay_factor, lr_decay_epoch=self.lr_decay_epoch,
            rmsprop_rho=self.rmsprop_rho, rmsprop_eps=self.rmsprop_eps, seed=self.seed,
            n_epochs=self.n_epochs, batch_size=self.batch_size, root_index=self.root_index,
            image_w=self.image_w, image_h=self.image_h, output_scale_mm=self.output_scale_mm)

    def fit(self, X, y):
        X = check_keypoint_batch(X)
        Y = check_pose_batch(y, X.shape[1])
        if X.shape[0] != Y.shape[0]:
            raise ValueError("X and y have different numbers of samples")
        config = self._config(X.shape[1])
        Xn = normalize_keypoints(X, config.image_w, config.image_h).reshape(len(X), -1)
        self.model_, self.loss_trace_ = train_arrays(LiftingModel.initialize(config), Xn, Y)
        self.n_joints_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_keypoint_batch(X, self.n_joints_)
        cfg = self.model_.config
        Xn = normalize_keypoints(X, cfg.image_w, cfg.image_h).reshape(len(X), -1)
        return forward(self.model_, Xn).reshape(len(X), self.n_joints_, 3)

    def score(self, X, y, sample_weight=None):
        """Negative mean squared non-root joint error (mm^2); higher is better."""
        Y = check_pose_batch(y)
        return -loss(self.predict(X).reshape(len(Y), -1), Y, self.root_index)

    @classmethod
    def from_model(cls, model):
        cfg = model.config
        est = cls(**{k: getattr(cfg, k) for k in cls._get_param_names()})
        est.model_ = model
        est.n_joints_ = cfg.n_joints
        est.loss_trace_ = []
        return est

    def lift(self, keypoints):
        """Lift one :class:`Keypoints2D` to a :class:`Pose3D`."""
        out = self.predict(keypoints.joints[None])[0]
        out[self.root_index] = 0.0
        return Pose3D(out, self.root_index)


