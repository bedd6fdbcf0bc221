"""Minimal neural-network layer zoo on top of the tape.

Layers own persistent Parameters (plain float64 arrays); calling a layer with
tape Vars binds the weights on that tape, so the same module object is reused
across training iterations. Everything is float64.

Initialization: weights uniform in +-1/sqrt(fan_in), biases zero, except the
LSTM forget-gate bias which starts at +1.0 (standard remedy for early
gradient flow through the cell state).
"""

from __future__ import annotations

import numpy as np

from .autodiff import Parameter, Var, ops


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Dense:
    """Affine layer y = x W + b with optional activation ('tanh' or None)."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator,
                 activation: str | None = None, name: str = "dense"):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.activation = activation
        self.W = Parameter(_uniform(rng, in_dim, (in_dim, out_dim)), f"{name}.W")
        self.b = Parameter(np.zeros(out_dim), f"{name}.b")

    def __call__(self, x: Var):
        t = x.tape
        y = t.affine(x, t.bind(self.W), t.bind(self.b))
        if self.activation == "tanh":
            y = ops.tanh(y)
        return y

    def parameters(self):
        yield self.W
        yield self.b


class LstmCell:
    """Single LSTM cell; gate order (input, forget, cell, output).

    Weights are one stacked matrix applied to [x, h], so a step is one matmul
    plus the fused pointwise update.
    """

    def __init__(self, in_dim: int, hidden: int, rng: np.random.Generator,
                 name: str = "lstm"):
        self.in_dim = in_dim
        self.hidden = hidden
        fan = in_dim + hidden
        self.W = Parameter(_uniform(rng, fan, (fan, 4 * hidden)), f"{name}.W")
        b = np.zeros(4 * hidden)
        b[hidden : 2 * hidden] = 1.0  # forget gate
        self.b = Parameter(b, f"{name}.b")

    def step(self, x: Var, h: Var, c: Var):
        t = x.tape
        pre = t.affine_cat(x, h, t.bind(self.W), t.bind(self.b))
        hc = t.lstm_point(pre, c)
        H = self.hidden
        return hc[:, :H], hc[:, H:]

    def parameters(self):
        yield self.W
        yield self.b


def lstm_step(cell: LstmCell, x: Var, h: Var, c: Var):
    """Functional form of one LSTM update; returns (h', c')."""
    return cell.step(x, h, c)


class LstmStack:
    """Stacked LSTM layers with a linear readout head."""

    def __init__(self, in_dim: int, hidden_sizes: list[int], out_dim: int,
                 rng: np.random.Generator, name: str = "stack"):
        self.hidden_sizes = list(hidden_sizes)
        self.cells = []
        d = in_dim
        for li, h in enumerate(hidden_sizes):
            self.cells.append(LstmCell(d, h, rng, name=f"{name}.l{li}"))
            d = h
        self.head = Dense(d, out_dim, rng, activation=None, name=f"{name}.head")

    def step(self, x: Var, hs: list[Var], cs: list[Var]):
        """One time step through every layer; returns (out, new_hs, new_cs)."""
        new_hs, new_cs = [], []
        inp = x
        for cell, h, c in zip(self.cells, hs, cs):
            h2, c2 = cell.step(inp, h, c)
            new_hs.append(h2)
            new_cs.append(c2)
            inp = h2
        return self.head(inp), new_hs, new_cs

    def parameters(self):
        for cell in self.cells:
            yield from cell.parameters()
        yield from self.head.parameters()


class Mlp:
    """Dense stack with tanh hidden activations and linear output."""

    def __init__(self, in_dim: int, hidden_sizes: list[int], out_dim: int,
                 rng: np.random.Generator, name: str = "mlp"):
        self.layers = []
        d = in_dim
        for li, h in enumerate(hidden_sizes):
            self.layers.append(Dense(d, h, rng, activation="tanh", name=f"{name}.l{li}"))
            d = h
        self.layers.append(Dense(d, out_dim, rng, activation=None,
                                 name=f"{name}.l{len(hidden_sizes)}"))

    def __call__(self, x: Var):
        for layer in self.layers:
            x = layer(x)
        return x

    def parameters(self):
        for layer in self.layers:
            yield from layer.parameters()
