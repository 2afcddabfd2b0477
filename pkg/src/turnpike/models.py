"""Model registry and JSON configuration documents.

Matrix models are stored with every field spelled out (matrices as
row-major nested lists, the nonlinearity by kind); ``heat2d`` is stored as
its :class:`~turnpike.heat.HeatConfig`.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError
from .heat import HeatConfig, build_heat_system
from .linalg import InnerProduct
from .ocp_core import ControlSystem, CostFunctional
from .steady import SteadyOptions


@dataclass
class Model:
    """Everything needed to run one experiment on a named problem."""

    name: str
    system: ControlSystem
    cost: CostFunctional
    x0: np.ndarray
    T: float
    dt: float
    state_norm: InnerProduct      # X in the turnpike deviation
    control_norm: InnerProduct    # U
    adjoint_norm: InnerProduct    # Y
    steady_options: SteadyOptions = field(default_factory=SteadyOptions)
    document: dict = field(default_factory=dict)

    @property
    def h1_norm(self):
        return self.system.H1 if self.system.H1 is not None else self.system.X


def _cubic(coeff):
    def f(x, u):
        return coeff * x ** 3

    def fx(x, u):
        return np.diag(3.0 * coeff * x ** 2)

    def fu(x, u):
        return np.zeros((x.size, np.size(u)))

    def second(x, u, p):
        m = np.size(u)
        return np.diag(6.0 * coeff * x * p), np.zeros((x.size, m)), np.zeros((m, m))

    return f, fx, fu, second


def _mat(a, shape):
    a = np.asarray(a, dtype=float)
    return a.reshape(shape)


def model_from_document(doc):
    """Build a :class:`Model` from a JSON-compatible dict."""
    kind = doc.get("model")
    if kind == "heat2d":
        cfg = HeatConfig.from_dict(doc.get("config", {}))
        system, cost, w = build_heat_system(cfg)
        return Model("heat2d", system, cost, np.zeros(system.n_state), cfg.T, cfg.dt,
                     w.h1, w.boundary, w.l2, SteadyOptions(warm_start="linearized"),
                     {"model": "heat2d", "config": cfg.to_dict()})
    try:
        n, m = int(doc["n_state"]), int(doc["n_control"])
        A = _mat(doc["lin_state_op"], (n, n))
        B = _mat(doc["control_op"], (n, m))
        c = doc["cost"]
        Q, R = _mat(c["Q"], (n, n)), _mat(c["R"], (m, m))
        x_d, u_d = _mat(c["x_d"], (n,)), _mat(c["u_d"], (m,))
        x0 = _mat(doc["x0"], (n,))
    except KeyError as exc:
        raise ArgumentError(f"model document is missing field {exc}") from exc
    nl = doc.get("nonlinearity", {"kind": "none"})
    if nl["kind"] == "none":
        f = fx = fu = second = None
    elif nl["kind"] == "cubic":
        f, fx, fu, second = _cubic(float(nl.get("coeff", -1.0)))
    else:
        raise ArgumentError(f"unknown nonlinearity kind {nl['kind']!r}")
    sx = _mat(doc.get("state_inner", np.eye(n)), (n, n))
    su = _mat(doc.get("control_inner", np.eye(m)), (m, m))
    h1 = _mat(doc["h1_inner"], (n, n)) if doc.get("h1_inner") is not None else None
    system = ControlSystem(n, m, A, B, f, fx, fu, sx, su, h1, second, name=kind or "custom")
    cost = CostFunctional.quadratic(Q, x_d, R, u_d)
    return Model(kind or "custom", system, cost, x0, float(doc.get("T", 10.0)),
                 float(doc.get("dt", 0.05)), system.X, system.U, system.X,
                 SteadyOptions(), dict(doc))


def _scalar_doc(name, a, b, q, r, x_d, x0, nonlinearity=None, T=20.0, dt=0.05):
    return {
        "model": name, "n_state": 1, "n_control": 1,
        "lin_state_op": [[a]], "control_op": [[b]],
        "nonlinearity": nonlinearity or {"kind": "none"},
        "state_inner": [[1.0]], "control_inner": [[1.0]],
        "cost": {"Q": [[q]], "x_d": [x_d], "R": [[r]], "u_d": [0.0]},
        "x0": [x0], "T": T, "dt": dt,
    }


def _registry():
    return {
        "lq-tracking": lambda: _scalar_doc("lq-tracking", -1.0, 1.0, 1.0, 1.0, 1.0, 0.0),
        "lq1d": lambda: _scalar_doc("lq1d", -1.0, 1.0, 1.0, 1.0, 0.0, 1.0),
        "cubic1d": lambda: _scalar_doc("cubic1d", 0.0, 1.0, 1.0, 1.0, 1.0, 0.0,
                                       {"kind": "cubic", "coeff": -1.0}),
        "zero": lambda: _scalar_doc("zero", -1.0, 1.0, 1.0, 1.0, 0.0, 0.0, T=10.0),
        # unstable, uncontrolled, unpenalised first mode: no turnpike in the state
        "nonturnpike": lambda: {
            "model": "nonturnpike", "n_state": 2, "n_control": 1,
            "lin_state_op": [[1.0, 0.0], [0.0, -1.0]], "control_op": [[0.0], [1.0]],
            "nonlinearity": {"kind": "none"},
            "cost": {"Q": [[0.0, 0.0], [0.0, 1.0]], "x_d": [0.0, 1.0], "R": [[1.0]], "u_d": [0.0]},
            "x0": [0.1, 0.0], "T": 10.0, "dt": 0.05,
        },
        "heat2d": lambda: {"model": "heat2d", "config": HeatConfig().to_dict()},
    }


MODEL_NAMES = tuple(_registry())


def model_document(name, **overrides):
    """Default JSON document for a registered model, with top-level overrides.

    For ``heat2d`` the overrides are applied to the heat config.
    """
    reg = _registry()
    if name not in reg:
        raise ArgumentError(f"unknown model {name!r}; known: {', '.join(reg)}")
    doc = reg[name]()
    if name == "heat2d":
        doc["config"].update(overrides)
    else:
        doc.update(overrides)
    return doc


def get_model(name, **overrides):
    return model_from_document(model_document(name, **overrides))


def load_model(path):
    with open(path) as fh:
        return model_from_document(json.load(fh))


def save_model(model, path):
    with open(path, "w") as fh:
        json.dump(model.document, fh, indent=2)
