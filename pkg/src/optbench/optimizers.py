"""First-order optimizer families under a uniform stepping interface.

Every optimizer exposes

    reset(theta0)          allocate state for a fresh run
    query_point(theta)     where the next gradient is requested
    step(theta, grad)      one update, returns the new parameters
    eval_point(theta)      the point whose loss is scored
    state_dict()           JSON-serializable state, bit-exact round trip
    load_state_dict(d)     restore

``query_point`` exists for the lookahead-gradient variant of momentum and
``eval_point`` for the averaging family; for everything else both are the
identity.  ``step`` touches no global state, so runs are reproducible and
optimizers can be checkpointed mid run and resumed exactly.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "AlgorithmSetup",
    "Optimizer",
    "make_optimizer",
    "family_names",
    "family_hyper_names",
    "default_grid",
    "default_setups",
    "grid_setups",
    "ADAPTIVE_EPS",
    "RPROP_GROW",
    "RPROP_SHRINK",
    "RPROP_STEP_MIN",
    "RPROP_STEP_MAX",
]

# Denominator guard of the gradient-normalizing families.
ADAPTIVE_EPS = 1e-10

RPROP_GROW = 1.2
RPROP_SHRINK = 0.5
RPROP_STEP_MIN = 1e-12
RPROP_STEP_MAX = 50.0


@dataclass(frozen=True)
class AlgorithmSetup:
    """An optimizer family plus one concrete hyperparameter assignment."""

    family: str
    hyper: dict

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown optimizer family {self.family!r}")
        expected = _FAMILIES[self.family].hyper_names
        got = tuple(sorted(self.hyper))
        if got != tuple(sorted(expected)):
            raise ValueError(
                f"{self.family} expects hyperparameters {sorted(expected)}, "
                f"got {sorted(got)}"
            )
        for name, value in self.hyper.items():
            if not (isinstance(value, (int, float)) and math.isfinite(value)):
                raise ValueError(f"{self.family}.{name} must be a finite number")
            if value <= 0.0 and name != "exponent":
                raise ValueError(f"{self.family}.{name} must be positive")

    def to_dict(self):
        return {"family": self.family, "hyper": dict(sorted(self.hyper.items()))}

    @classmethod
    def from_dict(cls, doc):
        return cls(family=doc["family"], hyper=dict(doc["hyper"]))


class Optimizer:
    family = None
    hyper_names = ()

    def __init__(self, hyper):
        self.hyper = dict(hyper)
        self.step_count = 0

    def reset(self, theta0):
        self.step_count = 0

    def query_point(self, theta):
        return theta

    def eval_point(self, theta):
        return theta

    def step(self, theta, grad):
        raise NotImplementedError

    # -- checkpointing ----------------------------------------------------

    _state_arrays = ()
    _state_scalars = ()

    def state_dict(self):
        d = {"family": self.family, "step_count": self.step_count}
        for name in self._state_arrays:
            arr = getattr(self, name)
            d[name] = None if arr is None else [float(x) for x in arr]
        for name in self._state_scalars:
            d[name] = getattr(self, name)
        return d

    def load_state_dict(self, d):
        if d.get("family") != self.family:
            raise ValueError(
                f"state for family {d.get('family')!r} loaded into {self.family!r}"
            )
        self.step_count = int(d["step_count"])
        for name in self._state_arrays:
            v = d[name]
            setattr(self, name, None if v is None else np.array(v, dtype=float))
        for name in self._state_scalars:
            setattr(self, name, d[name])


class Sgd(Optimizer):
    family = "sgd"
    hyper_names = ("eta0",)

    def __init__(self, hyper):
        super().__init__(hyper)
        self.eta0 = float(hyper["eta0"])

    def step(self, theta, grad):
        self.step_count += 1
        return theta - self.eta0 * grad


class SgdAnneal(Optimizer):
    """SGD with a 1/(1 + decay * t) learning-rate schedule."""

    family = "sgd-anneal"
    hyper_names = ("eta0", "decay")

    def __init__(self, hyper):
        super().__init__(hyper)
        self.eta0 = float(hyper["eta0"])
        self.decay = float(hyper["decay"])

    def step(self, theta, grad):
        eta = self.eta0 / (1.0 + self.decay * self.step_count)
        self.step_count += 1
        return theta - eta * grad


class Momentum(Optimizer):
    """Heavy-ball: v <- mu v - eta0 g; theta <- theta + v."""

    family = "momentum"
    hyper_names = ("eta0", "mu")
    _state_arrays = ("velocity",)

    def __init__(self, hyper):
        super().__init__(hyper)
        self.eta0 = float(hyper["eta0"])
        self.mu = float(hyper["mu"])
        self.velocity = None

    def reset(self, theta0):
        super().reset(theta0)
        self.velocity = np.zeros_like(np.asarray(theta0, dtype=float))

    def step(self, theta, grad):
        self.step_count += 1
        self.velocity = self.mu * self.velocity - self.eta0 * grad
        return theta + self.velocity


class Nesterov(Momentum):
    """Heavy-ball with the gradient taken at the lookahead point."""

    family = "nesterov"

    def query_point(self, theta):
        return theta + self.mu * self.velocity


class Averaging(Optimizer):
    """Decaying-rate SGD scored at a running parameter average.

    The iterate moves with eta_t = eta0 * t^(-exponent); the reported point
    is theta_bar <- (1 - w_t) theta_bar + w_t theta with
    w_t = max(decay, 1/t), t counted from 1.
    """

    family = "averaging"
    hyper_names = ("eta0", "decay", "exponent")
    _state_arrays = ("avg",)

    def __init__(self, hyper):
        super().__init__(hyper)
        self.eta0 = float(hyper["eta0"])
        self.decay = float(hyper["decay"])
        self.exponent = float(hyper["exponent"])
        self.avg = None

    def reset(self, theta0):
        super().reset(theta0)
        self.avg = np.array(theta0, dtype=float)

    def step(self, theta, grad):
        self.step_count += 1
        t = self.step_count
        eta = self.eta0 * t ** (-self.exponent)
        theta = theta - eta * grad
        w = max(self.decay, 1.0 / t)
        self.avg = (1.0 - w) * self.avg + w * theta
        return theta

    def eval_point(self, theta):
        return self.avg


class Adagrad(Optimizer):
    """Per-dimension rates shrinking with the accumulated squared gradient."""

    family = "adagrad"
    hyper_names = ("eta0",)
    _state_arrays = ("accum",)

    def __init__(self, hyper):
        super().__init__(hyper)
        self.eta0 = float(hyper["eta0"])
        self.accum = None

    def reset(self, theta0):
        super().reset(theta0)
        self.accum = np.zeros_like(np.asarray(theta0, dtype=float))

    def step(self, theta, grad):
        self.step_count += 1
        self.accum = self.accum + grad * grad
        return theta - self.eta0 * grad / (np.sqrt(self.accum) + ADAPTIVE_EPS)


class Adadelta(Optimizer):
    """Rate-free method scaling steps by RMS(past deltas)/RMS(past grads).

    ``decay`` is (1 - gamma) of the exponential moving averages and
    ``regularizer`` sits inside both square roots, so the very first step
    has size sqrt(reg / (decay g^2 + reg)) along -g.
    """

    family = "adadelta"
    hyper_names = ("decay", "regularizer")
    _state_arrays = ("sq_grad", "sq_delta")

    def __init__(self, hyper):
        super().__init__(hyper)
        self.decay = float(hyper["decay"])
        self.regularizer = float(hyper["regularizer"])
        self.sq_grad = None
        self.sq_delta = None

    def reset(self, theta0):
        super().reset(theta0)
        z = np.zeros_like(np.asarray(theta0, dtype=float))
        self.sq_grad = z.copy()
        self.sq_delta = z.copy()

    def step(self, theta, grad):
        self.step_count += 1
        gamma = 1.0 - self.decay
        reg = self.regularizer
        self.sq_grad = gamma * self.sq_grad + self.decay * grad * grad
        delta = -np.sqrt(self.sq_delta + reg) / np.sqrt(self.sq_grad + reg) * grad
        self.sq_delta = gamma * self.sq_delta + self.decay * delta * delta
        return theta + delta


class Idbd(Optimizer):
    """Per-dimension log learning rates adapted by a meta gradient.

    beta <- beta + meta * g * h;  eta = exp(beta);  theta <- theta - eta g;
    h <- h * max(0, 1 - eta) - eta g.  Rates start at eta0.
    """

    family = "idbd"
    hyper_names = ("eta0", "meta")
    _state_arrays = ("log_rates", "trace")

    def __init__(self, hyper):
        super().__init__(hyper)
        self.eta0 = float(hyper["eta0"])
        self.meta = float(hyper["meta"])
        self.log_rates = None
        self.trace = None

    def reset(self, theta0):
        super().reset(theta0)
        theta0 = np.asarray(theta0, dtype=float)
        self.log_rates = np.full_like(theta0, math.log(self.eta0))
        self.trace = np.zeros_like(theta0)

    def step(self, theta, grad):
        self.step_count += 1
        self.log_rates = self.log_rates + self.meta * grad * self.trace
        eta = np.exp(self.log_rates)
        theta = theta - eta * grad
        self.trace = self.trace * np.maximum(0.0, 1.0 - eta) - eta * grad
        return theta


class Rprop(Optimizer):
    """Sign-based steps with multiplicative size adaptation.

    Step sizes grow by 1.2 after agreeing gradient signs and shrink by 0.5
    after a sign flip, clipped to [1e-12, 50]; on a flip the gradient is
    treated as zero for the move so the dimension pauses one step.
    """

    family = "rprop"
    hyper_names = ("eta0",)
    _state_arrays = ("step_sizes", "prev_grad")

    def __init__(self, hyper):
        super().__init__(hyper)
        self.eta0 = float(hyper["eta0"])
        self.step_sizes = None
        self.prev_grad = None

    def reset(self, theta0):
        super().reset(theta0)
        theta0 = np.asarray(theta0, dtype=float)
        self.step_sizes = np.full_like(theta0, self.eta0)
        self.prev_grad = np.zeros_like(theta0)

    def step(self, theta, grad):
        self.step_count += 1
        agree = grad * self.prev_grad
        grow = agree > 0.0
        flip = agree < 0.0
        self.step_sizes = np.where(
            grow,
            np.minimum(self.step_sizes * RPROP_GROW, RPROP_STEP_MAX),
            np.where(
                flip,
                np.maximum(self.step_sizes * RPROP_SHRINK, RPROP_STEP_MIN),
                self.step_sizes,
            ),
        )
        effective = np.where(flip, 0.0, grad)
        theta = theta - np.sign(effective) * self.step_sizes
        self.prev_grad = effective
        return theta


class Rmsprop(Optimizer):
    """Running-RMS normalized steps, with the effective rate bounded.

    E[g^2] <- decay E[g^2] + (1 - decay) g^2; the per-dimension rate is
    eta0/sqrt(E[g^2] + eps), floored at eta0 and capped at eta_max before
    multiplying the gradient.
    """

    family = "rmsprop"
    hyper_names = ("eta0", "eta_max", "decay")
    _state_arrays = ("sq_grad",)

    def __init__(self, hyper):
        super().__init__(hyper)
        self.eta0 = float(hyper["eta0"])
        self.eta_max = float(hyper["eta_max"])
        self.decay = float(hyper["decay"])
        if self.eta_max < self.eta0:
            raise ValueError("rmsprop needs eta_max >= eta0")
        self.sq_grad = None

    def reset(self, theta0):
        super().reset(theta0)
        self.sq_grad = np.zeros_like(np.asarray(theta0, dtype=float))

    def step(self, theta, grad):
        self.step_count += 1
        self.sq_grad = self.decay * self.sq_grad + (1.0 - self.decay) * grad * grad
        raw = self.eta0 / np.sqrt(self.sq_grad + ADAPTIVE_EPS)
        eta = np.clip(raw, self.eta0, self.eta_max)
        return theta - eta * grad


class ConjGrad(Optimizer):
    """Nonlinear conjugate gradient (Polak-Ribiere+) with a fixed step.

    The mixing coefficient is floored at zero and the direction resets to
    steepest descent every d steps, d being the parameter dimension.
    """

    family = "cg"
    hyper_names = ("eta0",)
    _state_arrays = ("prev_grad", "direction")

    def __init__(self, hyper):
        super().__init__(hyper)
        self.eta0 = float(hyper["eta0"])
        self.prev_grad = None
        self.direction = None

    def reset(self, theta0):
        super().reset(theta0)
        theta0 = np.asarray(theta0, dtype=float)
        self.prev_grad = np.zeros_like(theta0)
        self.direction = np.zeros_like(theta0)

    def step(self, theta, grad):
        d = theta.shape[0] if hasattr(theta, "shape") else 1
        restart = self.step_count % d == 0
        denom = float(self.prev_grad @ self.prev_grad)
        if restart or denom <= 0.0:
            beta = 0.0
        else:
            beta = max(0.0, float(grad @ (grad - self.prev_grad)) / denom)
        self.direction = -grad + beta * self.direction
        self.prev_grad = np.array(grad, dtype=float)
        self.step_count += 1
        return theta + self.eta0 * self.direction


_FAMILIES = {
    cls.family: cls
    for cls in (
        Sgd,
        SgdAnneal,
        Momentum,
        Nesterov,
        Averaging,
        Adagrad,
        Adadelta,
        Idbd,
        Rprop,
        Rmsprop,
        ConjGrad,
    )
}


def family_names():
    return list(_FAMILIES)


def family_hyper_names(family):
    return tuple(_FAMILIES[family].hyper_names)


def all_hyper_names():
    names = set()
    for cls in _FAMILIES.values():
        names.update(cls.hyper_names)
    return names


def make_optimizer(setup):
    """Instantiate an optimizer from an AlgorithmSetup."""
    return _FAMILIES[setup.family](setup.hyper)


# -- default hyperparameter grids --------------------------------------------

# Initial learning rates, one per decade.
_ETAS = (1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0)
# Momentum terms, log spaced in (1 - mu).
_MUS = (0.1, 0.9, 0.99, 0.999)
# Averaging / adadelta decay terms, one per decade up to 0.5.
_DECAYS = (1e-4, 1e-3, 1e-2, 1e-1, 0.5)


def default_grid(family):
    """The built-in hyperparameter grid of a family, as name -> values."""
    if family in ("sgd", "adagrad", "rprop", "cg"):
        return {"eta0": list(_ETAS)}
    if family == "sgd-anneal":
        return {"eta0": list(_ETAS), "decay": [1e-2, 1e-1, 1.0]}
    if family in ("momentum", "nesterov"):
        return {"eta0": list(_ETAS), "mu": list(_MUS)}
    if family == "averaging":
        return {
            "eta0": list(_ETAS),
            "decay": list(_DECAYS),
            "exponent": [0.5, 0.75, 1.0],
        }
    if family == "adadelta":
        return {
            "decay": list(_DECAYS),
            "regularizer": [1e-6, 1e-5, 1e-4, 1e-3, 1e-2],
        }
    if family == "idbd":
        return {"eta0": list(_ETAS), "meta": [1e-3, 1e-2, 1e-1]}
    if family == "rmsprop":
        return {
            "eta0": list(_ETAS),
            "eta_max": [10.0, 100.0, 1000.0],
            "decay": [0.9, 0.99],
        }
    raise ValueError(f"unknown optimizer family {family!r}")


def grid_setups(family, grid):
    """Cartesian product of a hyperparameter grid into setups."""
    names = sorted(grid)
    if tuple(sorted(names)) != tuple(sorted(family_hyper_names(family))):
        raise ValueError(
            f"grid for {family} must define exactly {sorted(family_hyper_names(family))}"
        )
    setups = []
    for combo in itertools.product(*(grid[n] for n in names)):
        setups.append(AlgorithmSetup(family, dict(zip(names, combo))))
    return setups


def default_setups():
    """Every built-in family crossed with its default grid."""
    out = []
    for family in _FAMILIES:
        out.extend(grid_setups(family, default_grid(family)))
    return out
