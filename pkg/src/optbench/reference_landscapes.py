"""Two small non-synthetic landscapes: a TD value problem and a 1-d
autoencoder.

The TD landscape is a two-state Markov reward process whose query field is
the expected temporal-difference update direction.  That field is not the
gradient of any scalar function (it has curl for asymmetric chains); its
unique zero is the value function solving (I - discount * P) V = R.

The autoencoder landscape is the squared reconstruction error of a one-unit
sigmoid autoencoder on a single input, L = (x + t2 * sigmoid(x * t1))^2,
with an analytic gradient and a saddle at the origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .stochastic import DOMAIN_ENV, derive_stream

__all__ = [
    "TwoStateTD",
    "td_expected_field",
    "td_sample_update",
    "Autoencoder1D",
]


def _stationary_two_state(p):
    """Stationary distribution of a 2-state chain (flow balance)."""
    a, b = p[0][1], p[1][0]
    total = a + b
    if total <= 0.0:
        return np.array([0.5, 0.5])
    return np.array([b / total, a / total])


@dataclass(frozen=True)
class TwoStateTD:
    """A two-state Markov reward process evaluated by TD(0).

    ``transitions`` is the row-stochastic 2x2 matrix, ``rewards`` the
    per-state reward, ``discount`` in [0, 1).  The default chain is
    asymmetric, which gives the update field a genuine rotational part.
    """

    transitions: tuple = ((0.6, 0.4), (0.1, 0.9))
    rewards: tuple = (0.0, 1.0)
    discount: float = 0.2

    def __post_init__(self):
        p = self.transitions
        if len(p) != 2 or any(len(row) != 2 for row in p):
            raise ValueError("transitions must be 2x2")
        for row in p:
            if any(x < 0.0 for x in row) or abs(sum(row) - 1.0) > 1e-12:
                raise ValueError(f"transition row {row!r} is not a distribution")
        if not (0.0 <= self.discount < 1.0):
            raise ValueError("discount must lie in [0, 1)")

    @property
    def matrix(self):
        return np.array(self.transitions, dtype=float)

    @property
    def reward_vector(self):
        return np.array(self.rewards, dtype=float)

    def fixed_point(self):
        """The true value function: solve (I - discount * P) V = R."""
        p = self.matrix
        return np.linalg.solve(np.eye(2) - self.discount * p, self.reward_vector)

    def stationary(self):
        return _stationary_two_state(self.transitions)

    def to_dict(self):
        return {
            "transitions": [list(r) for r in self.transitions],
            "rewards": list(self.rewards),
            "discount": self.discount,
        }

    @classmethod
    def from_dict(cls, doc):
        if doc is None:
            return cls()
        return cls(
            transitions=tuple(tuple(r) for r in doc.get("transitions", cls.transitions)),
            rewards=tuple(doc.get("rewards", cls.rewards)),
            discount=doc.get("discount", cls.discount),
        )


def td_expected_field(model, theta):
    """Expected TD(0) update direction per state at value estimate ``theta``.

    Component s is E_{s'}[ r(s) + discount * theta_{s'} - theta_s ], the
    average update applied when state s is refreshed.  Affine in theta with
    matrix (discount * P - I), whose asymmetry is the field's curl.
    """
    theta = np.asarray(theta, dtype=float)
    p = model.matrix
    return model.reward_vector + model.discount * (p @ theta) - theta


def td_sample_update(model, theta, ctx):
    """One sampled TD(0) update.

    Draws the visited state from the chain's stationary distribution and a
    successor from the transition row; the returned vector is zero except
    for the visited component, which carries the TD error.  Averaged over
    draws this equals the expected field weighted by the visitation
    probabilities.
    """
    theta = np.asarray(theta, dtype=float)
    stream = derive_stream(ctx, domain=DOMAIN_ENV)
    rho = model.stationary()
    s = 0 if stream.random() < rho[0] else 1
    row = model.transitions[s]
    s_next = 0 if stream.random() < row[0] else 1
    delta = model.rewards[s] + model.discount * theta[s_next] - theta[s]
    out = np.zeros(2)
    out[s] = delta
    return out


@dataclass(frozen=True)
class Autoencoder1D:
    """Squared reconstruction error of a one-weight-pair autoencoder.

    L(t1, t2) = (x + t2 * sigmoid(x * t1))^2 for a single scalar input x.
    The surface has a curved valley of exact reconstructions and a saddle
    at the origin.
    """

    x: float = 1.0

    def loss(self, theta):
        t1, t2 = float(theta[0]), float(theta[1])
        r = self.x + t2 * _sigmoid(self.x * t1)
        return r * r

    def gradient(self, theta):
        t1, t2 = float(theta[0]), float(theta[1])
        s = _sigmoid(self.x * t1)
        r = self.x + t2 * s
        ds = s * (1.0 - s)
        return np.array(
            [2.0 * r * t2 * ds * self.x, 2.0 * r * s]
        )

    def to_dict(self):
        return {"x": self.x}

    @classmethod
    def from_dict(cls, doc):
        if doc is None:
            return cls()
        return cls(x=doc.get("x", 1.0))


def _sigmoid(z):
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)
