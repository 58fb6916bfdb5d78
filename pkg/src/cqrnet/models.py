"""Small neural quantile predictors with hand-written backpropagation.

Families
--------
* LinearQuantileNet: out = eta(x . beta), eta identity or ELU. Column 0 of
  the covariate matrix is the intercept slot (x0 = 1).
* RegularizedLinearNet: adds inverted input dropout (training only) and L2
  weight decay; the intercept slot is exempt from both.
* StackedUnitNet: one hidden layer of k units (tanh/sigmoid/elu/relu) with a
  linear output aggregation; kept behind the same interface but not part of
  the default model lists.
* LstmQuantileNet: a single LSTM cell unrolled over the lag window (scalar
  inputs, oldest lag first) followed by a linear aggregation of the final
  hidden state.
* MirrorWrapper: negates inputs and outputs of an inner net, which is how
  right-censored data is handled (fit the inner net on the negated,
  left-censored dataset at level 1 - theta).

All nets share the same contract: `forward(X)` for evaluation,
`forward_train(X, rng)` to record the state backprop needs, and
`backward(dpred)` returning parameter gradients for the summed upstream
signal. Gradients include the L2 term where applicable.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "LinearQuantileNet",
    "RegularizedLinearNet",
    "StackedUnitNet",
    "LstmQuantileNet",
    "MirrorWrapper",
    "init_weights",
    "net_from_dict",
]


def _elu(z):
    return np.where(z > 0.0, z, np.expm1(z))


def _elu_deriv(z):
    return np.where(z > 0.0, 1.0, np.exp(np.minimum(z, 0.0)))


def _sigmoid(z):
    # overflow-safe in both tails
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


_ACTIVATIONS = {
    "identity": (lambda z: z, lambda z: np.ones_like(z)),
    "elu": (_elu, _elu_deriv),
    "tanh": (np.tanh, lambda z: 1.0 - np.tanh(z) ** 2),
    "sigmoid": (_sigmoid, lambda z: _sigmoid(z) * (1.0 - _sigmoid(z))),
    "relu": (
        lambda z: np.maximum(z, 0.0),
        lambda z: (z > 0.0).astype(float),
    ),
}


class _Net:
    """Shared plumbing: parameter dict, cache handling, serialization."""

    family = "base"
    param_order: tuple

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self._cache = None

    # -- evaluation / training forward ------------------------------------
    def forward(self, X):
        raise NotImplementedError

    def forward_train(self, X, rng=None):
        # Default: training forward equals evaluation forward, plus cache.
        raise NotImplementedError

    def backward(self, dpred):
        raise NotImplementedError

    def _require_cache(self):
        if self._cache is None:
            raise RuntimeError("backward called without a recorded forward pass")
        return self._cache

    def l2_penalty(self) -> float:
        return 0.0

    # -- housekeeping ------------------------------------------------------
    def copy(self):
        import copy as _copy

        dup = _copy.copy(self)
        dup.params = {k: v.copy() for k, v in self.params.items()}
        dup._cache = None
        return dup

    def config(self) -> dict:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "config": self.config(),
            "params": {k: self.params[k].tolist() for k in self.param_order},
        }

    def _load_params(self, params: dict):
        for k in self.param_order:
            arr = np.asarray(params[k], dtype=float)
            if arr.shape != self.params[k].shape:
                raise ValueError(f"parameter {k} has shape {arr.shape}, expected {self.params[k].shape}")
            self.params[k] = arr


class LinearQuantileNet(_Net):
    """Single neuron: out = eta(x . beta)."""

    family = "linear"
    param_order = ("beta",)

    def __init__(self, dim, activation="identity"):
        super().__init__()
        if activation not in ("identity", "elu"):
            raise ValueError(f"unsupported activation {activation!r}")
        self.dim = int(dim)
        self.activation = activation
        self._act, self._act_deriv = _ACTIVATIONS[activation]
        self.params = {"beta": np.zeros(self.dim)}

    def _check(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise ValueError(f"covariates must have shape (n, {self.dim}), got {X.shape}")
        return X

    def forward(self, X):
        X = self._check(X)
        return self._act(X @ self.params["beta"])

    def forward_train(self, X, rng=None):
        X = self._check(X)
        z = X @ self.params["beta"]
        self._cache = (X, z)
        return self._act(z)

    def backward(self, dpred):
        X, z = self._require_cache()
        dz = np.asarray(dpred, dtype=float) * self._act_deriv(z)
        return {"beta": X.T @ dz}

    def config(self):
        return {"dim": self.dim, "activation": self.activation}


class RegularizedLinearNet(LinearQuantileNet):
    """Linear neuron with inverted input dropout and L2 weight decay.

    Dropout multiplies each retained non-intercept input by 1/(1 - rate)
    during training and is the identity at evaluation. The decay term adds
    l2_coeff * beta to the weight gradient, intercept excluded.
    """

    family = "reg_linear"

    def __init__(self, dim, activation="identity", dropout_rate=0.2, l2_coeff=1e-3):
        super().__init__(dim, activation)
        if not 0.0 <= dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {dropout_rate}")
        if l2_coeff < 0.0:
            raise ValueError(f"l2_coeff must be nonnegative, got {l2_coeff}")
        self.dropout_rate = float(dropout_rate)
        self.l2_coeff = float(l2_coeff)

    def forward_train(self, X, rng=None, dropout_mask=None):
        X = self._check(X)
        if dropout_mask is None and self.dropout_rate > 0.0:
            if rng is None:
                raise ValueError("training forward with dropout needs an rng or an explicit mask")
            keep = rng.random((X.shape[0], self.dim - 1)) >= self.dropout_rate
            dropout_mask = keep / (1.0 - self.dropout_rate)
        if dropout_mask is not None:
            Xd = X.copy()
            Xd[:, 1:] = Xd[:, 1:] * dropout_mask
        else:
            Xd = X
        z = Xd @ self.params["beta"]
        self._cache = (Xd, z)
        return self._act(z)

    def backward(self, dpred):
        grads = super().backward(dpred)
        decay = self.l2_coeff * self.params["beta"]
        decay[0] = 0.0
        grads["beta"] = grads["beta"] + decay
        return grads

    def l2_penalty(self) -> float:
        beta = self.params["beta"]
        return 0.5 * self.l2_coeff * float(np.sum(beta[1:] ** 2))

    def config(self):
        cfg = super().config()
        cfg.update({"dropout_rate": self.dropout_rate, "l2_coeff": self.l2_coeff})
        return cfg


class StackedUnitNet(_Net):
    """One hidden layer of `units` nonlinear neurons, linear aggregation."""

    family = "stacked"
    param_order = ("w_hidden", "w_out", "b_out")

    def __init__(self, dim, units=1, activation="tanh", l2_coeff=0.0):
        super().__init__()
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unsupported activation {activation!r}")
        self.dim = int(dim)
        self.units = int(units)
        self.activation = activation
        self.l2_coeff = float(l2_coeff)
        self._act, self._act_deriv = _ACTIVATIONS[activation]
        self.params = {
            "w_hidden": np.zeros((self.units, self.dim)),
            "w_out": np.zeros(self.units),
            "b_out": np.zeros(1),
        }

    def _check(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise ValueError(f"covariates must have shape (n, {self.dim}), got {X.shape}")
        return X

    def forward(self, X):
        X = self._check(X)
        hidden = self._act(X @ self.params["w_hidden"].T)
        return hidden @ self.params["w_out"] + self.params["b_out"][0]

    def forward_train(self, X, rng=None):
        X = self._check(X)
        z1 = X @ self.params["w_hidden"].T
        hidden = self._act(z1)
        self._cache = (X, z1, hidden)
        return hidden @ self.params["w_out"] + self.params["b_out"][0]

    def backward(self, dpred):
        X, z1, hidden = self._require_cache()
        d = np.asarray(dpred, dtype=float)
        dhidden = d[:, None] * self.params["w_out"][None, :]
        dz1 = dhidden * self._act_deriv(z1)
        grads = {
            "w_hidden": dz1.T @ X,
            "w_out": hidden.T @ d,
            "b_out": np.array([d.sum()]),
        }
        if self.l2_coeff > 0.0:
            grads["w_hidden"] = grads["w_hidden"] + self.l2_coeff * self.params["w_hidden"]
            grads["w_out"] = grads["w_out"] + self.l2_coeff * self.params["w_out"]
        return grads

    def l2_penalty(self) -> float:
        if self.l2_coeff == 0.0:
            return 0.0
        return 0.5 * self.l2_coeff * float(
            np.sum(self.params["w_hidden"] ** 2) + np.sum(self.params["w_out"] ** 2)
        )

    def config(self):
        return {
            "dim": self.dim,
            "units": self.units,
            "activation": self.activation,
            "l2_coeff": self.l2_coeff,
        }


class LstmQuantileNet(_Net):
    """LSTM over the scalar lag sequence, then linear output aggregation.

    Covariate rows follow the lag-matrix convention (intercept slot first,
    then lags newest-first); the recurrence consumes the lags oldest-first.
    Gate order in the stacked parameters is (input, forget, output,
    candidate); sigmoid gates, tanh candidate and cell output.
    """

    family = "lstm"
    param_order = ("w_x", "w_h", "b", "w_out", "b_out")

    def __init__(self, lags=7, hidden_size=8, output_bias=True, intercept_column=True):
        super().__init__()
        self.lags = int(lags)
        self.hidden_size = int(hidden_size)
        if self.lags < 1 or self.hidden_size < 1:
            raise ValueError("lags and hidden_size must be positive")
        self.output_bias = bool(output_bias)
        self.intercept_column = bool(intercept_column)
        h = self.hidden_size
        self.params = {
            "w_x": np.zeros(4 * h),
            "w_h": np.zeros((4 * h, h)),
            "b": np.zeros(4 * h),
            "w_out": np.zeros(h),
            "b_out": np.zeros(1),
        }

    @property
    def dim(self):
        return self.lags + (1 if self.intercept_column else 0)

    def _sequence(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise ValueError(f"covariates must have shape (n, {self.dim}), got {X.shape}")
        lag_cols = X[:, 1:] if self.intercept_column else X
        # lag columns are newest-first; the recurrence runs oldest-first
        return lag_cols[:, ::-1]

    def _step(self, x_t, h_prev, c_prev):
        hsz = self.hidden_size
        z = x_t[:, None] * self.params["w_x"][None, :] + h_prev @ self.params["w_h"].T + self.params["b"][None, :]
        gates = _sigmoid(z[:, : 3 * hsz])
        gi = gates[:, :hsz]
        gf = gates[:, hsz : 2 * hsz]
        go = gates[:, 2 * hsz :]
        gc = np.tanh(z[:, 3 * hsz :])
        c = gf * c_prev + gi * gc
        tanh_c = np.tanh(c)
        h = go * tanh_c
        return gi, gf, gc, go, c, tanh_c, h

    def forward(self, X):
        seq = self._sequence(X)
        n = seq.shape[0]
        h = np.zeros((n, self.hidden_size))
        c = np.zeros((n, self.hidden_size))
        for t in range(seq.shape[1]):
            *_, c, _, h = self._step(seq[:, t], h, c)
        out = h @ self.params["w_out"]
        if self.output_bias:
            out = out + self.params["b_out"][0]
        return out

    def forward_train(self, X, rng=None):
        seq = self._sequence(X)
        n = seq.shape[0]
        h = np.zeros((n, self.hidden_size))
        c = np.zeros((n, self.hidden_size))
        steps = []
        for t in range(seq.shape[1]):
            gi, gf, gc, go, c_new, tanh_c, h_new = self._step(seq[:, t], h, c)
            steps.append((seq[:, t], h, c, gi, gf, gc, go, c_new, tanh_c))
            h, c = h_new, c_new
        self._cache = (steps, h)
        out = h @ self.params["w_out"]
        if self.output_bias:
            out = out + self.params["b_out"][0]
        return out

    def backward(self, dpred):
        steps, h_last = self._require_cache()
        d = np.asarray(dpred, dtype=float)
        hsz = self.hidden_size
        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        grads["w_out"] = h_last.T @ d
        if self.output_bias:
            grads["b_out"] = np.array([d.sum()])
        dh = d[:, None] * self.params["w_out"][None, :]
        dc = np.zeros_like(dh)
        for x_t, h_prev, c_prev, gi, gf, gc, go, c_new, tanh_c in reversed(steps):
            do = dh * tanh_c
            dc = dc + dh * go * (1.0 - tanh_c**2)
            di = dc * gc
            dcand = dc * gi
            df = dc * c_prev
            dz = np.concatenate(
                [
                    di * gi * (1.0 - gi),
                    df * gf * (1.0 - gf),
                    do * go * (1.0 - go),
                    dcand * (1.0 - gc**2),
                ],
                axis=1,
            )
            grads["w_x"] += dz.T @ x_t
            grads["w_h"] += dz.T @ h_prev
            grads["b"] += dz.sum(axis=0)
            dh = dz @ self.params["w_h"]
            dc = dc * gf
        return grads

    def config(self):
        return {
            "lags": self.lags,
            "hidden_size": self.hidden_size,
            "output_bias": self.output_bias,
            "intercept_column": self.intercept_column,
        }


class MirrorWrapper(_Net):
    """Negate-and-mirror view of an inner net for right-censored data.

    predict(x; theta) = -inner.predict(-x; 1-theta); the training pipeline
    fits the inner net on the negated (left-censored) dataset, so this
    wrapper only has to mirror evaluation. The intercept slot keeps its
    +1 convention and is not negated.
    """

    family = "mirror"
    param_order = ()

    def __init__(self, inner, intercept_column=True):
        super().__init__()
        self.inner = inner
        self.intercept_column = bool(intercept_column)

    @property
    def params(self):
        return self.inner.params

    @params.setter
    def params(self, value):
        # _Net.__init__ assigns an empty dict before `inner` exists; ignore it.
        if hasattr(self, "inner"):
            self.inner.params = value

    def mirror_inputs(self, X):
        X = np.asarray(X, dtype=float)
        Xm = -X
        if self.intercept_column:
            Xm = Xm.copy()
            Xm[:, 0] = X[:, 0]
        return Xm

    def forward(self, X):
        return -self.inner.forward(self.mirror_inputs(X))

    def forward_train(self, X, rng=None):
        raise RuntimeError(
            "MirrorWrapper is an evaluation view; train the inner net on the mirrored dataset instead"
        )

    def backward(self, dpred):
        raise RuntimeError("MirrorWrapper does not backpropagate; train the inner net")

    def copy(self):
        return MirrorWrapper(self.inner.copy(), intercept_column=self.intercept_column)

    def config(self):
        return {"intercept_column": self.intercept_column}

    def to_dict(self):
        return {"family": self.family, "config": self.config(), "inner": self.inner.to_dict()}


def init_weights(net, scheme, seed=None):
    """Initialize parameters in place and return the net.

    scheme "ones" fills every parameter with 1; "standard_normal" draws
    each parameter i.i.d. N(0,1) from a generator seeded with `seed`,
    except the LSTM recurrent matrix which is scaled by 1/sqrt(hidden)
    to keep the unrolled cell trainable.
    """
    if isinstance(net, MirrorWrapper):
        init_weights(net.inner, scheme, seed)
        return net
    if scheme == "ones":
        for name in net.param_order:
            net.params[name] = np.ones_like(net.params[name])
    elif scheme == "standard_normal":
        rng = np.random.default_rng(seed)
        for name in net.param_order:
            draw = rng.standard_normal(net.params[name].shape)
            if name == "w_h":
                draw = draw / np.sqrt(net.hidden_size)
            net.params[name] = draw
    else:
        raise ValueError(f"unknown init scheme {scheme!r}")
    return net


_FAMILIES = {
    "linear": LinearQuantileNet,
    "reg_linear": RegularizedLinearNet,
    "stacked": StackedUnitNet,
    "lstm": LstmQuantileNet,
}


def net_from_dict(payload):
    """Rebuild a net from its to_dict() document."""
    family = payload["family"]
    if family == "mirror":
        inner = net_from_dict(payload["inner"])
        return MirrorWrapper(inner, **payload["config"])
    try:
        cls = _FAMILIES[family]
    except KeyError:
        raise ValueError(f"unknown net family {family!r}") from None
    net = cls(**payload["config"])
    net._load_params(payload["params"])
    return net
