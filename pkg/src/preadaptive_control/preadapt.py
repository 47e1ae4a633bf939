"""Two-layer sigmoid network computing the reinitialization value for theta_hat.

The network maps the two features [e, |edot_hat|] through a hidden layer of
width h to an n-vector; when an onset event fires, the current estimate is
replaced by that output.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ConfigError


def sigmoid(x):
    """Element-wise logistic 1 / (1 + exp(-x)); saturates, never overflows."""
    return expit(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class PreadaptNet:
    """Weights of the reinitialization network.

    W: hidden-to-output, h x n.  V: input-to-hidden, 2 x h.
    Output is W.T @ sigmoid(V.T @ [e, |edot_hat|]).
    """

    W: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.W, dtype=float))
        V = np.atleast_2d(np.asarray(self.V, dtype=float))
        if V.shape[0] != 2:
            raise ConfigError("input dimension is fixed at 2 (features [e, |edot|])")
        if V.shape[1] != W.shape[0]:
            raise ConfigError("hidden widths of V and W disagree")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(V))):
            raise ConfigError("network weights must be finite")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "V", V)

    @property
    def hidden(self):
        return self.W.shape[0]

    @property
    def n(self):
        return self.W.shape[1]

    @classmethod
    def random(cls, n, hidden, seed, scale=0.5):
        """Seeded i.i.d. uniform [-scale, scale] initialization."""
        rng = np.random.default_rng(seed)
        W = rng.uniform(-scale, scale, size=(hidden, n))
        V = rng.uniform(-scale, scale, size=(2, hidden))
        return cls(W=W, V=V)

    def to_dict(self):
        """Flat row-major serialization for the run-summary file."""
        return {
            "hidden": int(self.hidden),
            "n": int(self.n),
            "W": [float(v) for v in self.W.reshape(-1)],
            "V": [float(v) for v in self.V.reshape(-1)],
        }

    @classmethod
    def from_dict(cls, d):
        h, n = int(d["hidden"]), int(d["n"])
        W = np.asarray(d["W"], dtype=float).reshape(h, n)
        V = np.asarray(d["V"], dtype=float).reshape(2, h)
        return cls(W=W, V=V)


def theta_init(net, e, edot_hat):
    """Forward pass; the rate feature enters as an absolute value.

    Returns (theta_I, sigma_h, input2) so the learner can snapshot the
    activations that produced the reinitialization.
    """
    input2 = np.array([e, abs(edot_hat)], dtype=float)
    sigma_h = sigmoid(net.V.T @ input2)
    return net.W.T @ sigma_h, sigma_h, input2


def apply_preadaptation(att, e_u, theta_hat, theta_I):
    """theta_hat <- theta_I exactly when Att = 1 and E_u = 1."""
    if att and e_u:
        return np.array(theta_I, dtype=float)
    return theta_hat
