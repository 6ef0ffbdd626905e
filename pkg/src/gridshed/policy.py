"""Recurrent shed-control policy with a flat-parameter view.

One gated recurrent (LSTM) layer followed by one fully connected hidden
layer and a linear head. The head emits a shed fraction per controllable
bus, squashed into [0, 0.2] through 0.1*(1+tanh(.)), plus five raw
criterion outputs that downstream masking squashes into physical bounds.

Parameters live in a single flat float64 vector with a fixed, documented
layout so evolutionary-strategy perturbations are plain vector adds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

N_CRITERION_OUTPUTS = 5
PARAMS_VERSION = 1


@dataclass(frozen=True)
class PolicyDims:
    n_monitored: int
    n_controllable: int
    latent_dim: int = 16
    hidden_size: int = 32
    fc_size: int = 32

    def validate(self):
        for name in ("n_monitored", "n_controllable", "latent_dim", "hidden_size", "fc_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"policy dimension {name} must be positive")

    @property
    def input_dim(self) -> int:
        return self.n_monitored + self.n_controllable + self.latent_dim

    @property
    def output_dim(self) -> int:
        return self.n_controllable + N_CRITERION_OUTPUTS


def layout_for(dims: PolicyDims) -> tuple[tuple[str, tuple[int, ...]], ...]:
    """Fixed tensor order; gate rows in lstm.* are [input, forget, cell, output]."""
    h, f = dims.hidden_size, dims.fc_size
    return (
        ("lstm.w_x", (4 * h, dims.input_dim)),
        ("lstm.w_h", (4 * h, h)),
        ("lstm.b", (4 * h,)),
        ("fc.w", (f, h)),
        ("fc.b", (f,)),
        ("head.w", (dims.output_dim, f)),
        ("head.b", (dims.output_dim,)),
    )


def layout_size(layout) -> int:
    return int(sum(int(np.prod(shape)) for _, shape in layout))


@dataclass
class PolicyParams:
    flat: np.ndarray
    layout: tuple[tuple[str, tuple[int, ...]], ...]
    version: int = PARAMS_VERSION
    _tensors: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.flat = np.asarray(self.flat, dtype=float)
        expected = layout_size(self.layout)
        if self.flat.shape != (expected,):
            raise ValueError(
                f"flat parameter vector has shape {self.flat.shape}, layout requires ({expected},)"
            )

    @property
    def size(self) -> int:
        return self.flat.shape[0]

    def tensors(self) -> dict[str, np.ndarray]:
        """Named views into the flat vector (flatten/unflatten is the identity)."""
        if not self._tensors:
            offset = 0
            for name, shape in self.layout:
                n = int(np.prod(shape))
                self._tensors[name] = self.flat[offset:offset + n].reshape(shape)
                offset += n
        return self._tensors

    def with_flat(self, flat: np.ndarray) -> "PolicyParams":
        return PolicyParams(flat=flat, layout=self.layout, version=self.version)


@dataclass
class RecurrentState:
    hidden: np.ndarray
    cell: np.ndarray

    @classmethod
    def zeros(cls, hidden_size: int) -> "RecurrentState":
        return cls(hidden=np.zeros(hidden_size), cell=np.zeros(hidden_size))


@dataclass
class PolicyOutput:
    shed_actions: np.ndarray
    criterion_raw: np.ndarray


def init_params(dims: PolicyDims, seed: int) -> PolicyParams:
    """Zero-mean init scaled by 0.1/sqrt(fan-in); biases start at zero."""
    dims.validate()
    rng = np.random.default_rng(seed)
    layout = layout_for(dims)
    pieces = []
    fan_in = {
        "lstm.w_x": dims.input_dim,
        "lstm.w_h": dims.hidden_size,
        "fc.w": dims.hidden_size,
        "head.w": dims.fc_size,
    }
    for name, shape in layout:
        n = int(np.prod(shape))
        if name in fan_in:
            pieces.append(rng.standard_normal(n) * (0.1 / np.sqrt(fan_in[name])))
        else:
            pieces.append(np.zeros(n))
    return PolicyParams(flat=np.concatenate(pieces), layout=layout)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def forward(
    params: PolicyParams,
    state_vector: np.ndarray,
    latent: np.ndarray,
    recurrent: RecurrentState,
    dims: PolicyDims,
) -> tuple[PolicyOutput, RecurrentState]:
    """Pure single-step forward pass.

    Raises on dimension mismatch or non-finite inputs; never mutates its
    arguments, so any number of evaluations may share one parameter view.
    """
    x_in = np.asarray(state_vector, dtype=float)
    c_in = np.asarray(latent, dtype=float)
    if x_in.shape != (dims.n_monitored + dims.n_controllable,):
        raise ValueError(
            f"state vector must have length {dims.n_monitored + dims.n_controllable}, "
            f"got {x_in.shape}"
        )
    if c_in.shape != (dims.latent_dim,):
        raise ValueError(f"latent must have length {dims.latent_dim}, got {c_in.shape}")
    if not (np.all(np.isfinite(x_in)) and np.all(np.isfinite(c_in))):
        raise ValueError("policy inputs must be finite")

    t = params.tensors()
    h = dims.hidden_size
    x = np.concatenate([x_in, c_in])
    z = t["lstm.w_x"] @ x + t["lstm.w_h"] @ recurrent.hidden + t["lstm.b"]
    i_gate = _sigmoid(z[:h])
    f_gate = _sigmoid(z[h:2 * h])
    g_cand = np.tanh(z[2 * h:3 * h])
    o_gate = _sigmoid(z[3 * h:])
    cell = f_gate * recurrent.cell + i_gate * g_cand
    hidden = o_gate * np.tanh(cell)

    u = np.tanh(t["fc.w"] @ hidden + t["fc.b"])
    y = t["head.w"] @ u + t["head.b"]
    shed = 0.1 * (1.0 + np.tanh(y[:dims.n_controllable]))
    output = PolicyOutput(shed_actions=shed, criterion_raw=y[dims.n_controllable:])
    return output, RecurrentState(hidden=hidden, cell=cell)
