"""Parameter container and module tree with torchvision-style dotted names."""

from __future__ import annotations

import numpy as np


class Param:
    __slots__ = ("value", "grad", "name")

    def __init__(self, value, name=""):
        self.value = np.asarray(value)
        self.grad = np.zeros_like(self.value)
        self.name = name

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Param({self.name!r}, shape={self.value.shape})"


class Module:
    """Base layer.

    Subclasses register parameters in ``self._params``, non-trainable state
    (batch-norm running statistics) in ``self._buffers`` and sub-layers in
    ``self._children``. ``backward`` returns the gradient w.r.t. the input of
    the most recent ``forward`` and accumulates into ``Param.grad``.
    """

    def __init__(self):
        self._params: dict[str, Param] = {}
        self._buffers: dict[str, np.ndarray] = {}
        self._children: dict[str, Module] = {}
        self.training = True

    def add_param(self, name, value) -> Param:
        p = Param(value, name)
        self._params[name] = p
        return p

    def add_child(self, name, module):
        self._children[name] = module
        return module

    def named_parameters(self, prefix=""):
        for name, p in self._params.items():
            yield prefix + name, p
        for cname, child in self._children.items():
            yield from child.named_parameters(f"{prefix}{cname}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix=""):
        for name in self._buffers:
            yield prefix + name, self, name
        for cname, child in self._children.items():
            yield from child.named_buffers(f"{prefix}{cname}.")

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: p.value for name, p in self.named_parameters()}
        for name, owner, key in self.named_buffers():
            state[name] = owner._buffers[key]
        return state

    def load_state_dict(self, state, strict=True):
        """Copy arrays into parameters and buffers by name; returns names not found in ``state``."""
        missing = []
        for name, p in self.named_parameters():
            if name not in state:
                missing.append(name)
                continue
            value = np.asarray(state[name])
            if value.shape != p.value.shape:
                raise ValueError(f"{name}: shape {value.shape} != {p.value.shape}")
            p.value[...] = value
        for name, owner, key in self.named_buffers():
            if name not in state:
                missing.append(name)
                continue
            owner._buffers[key][...] = np.asarray(state[name])
        if strict and missing:
            raise KeyError(f"missing tensors: {missing}")
        return missing

    def train(self, mode=True):
        self.training = mode
        for child in self._children.values():
            child.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def astype(self, dtype):
        for p in self.parameters():
            p.value = p.value.astype(dtype)
            p.grad = np.zeros_like(p.value)
        for _, owner, key in self.named_buffers():
            owner._buffers[key] = owner._buffers[key].astype(dtype)
        return self

    @property
    def dtype(self):
        for p in self.parameters():
            return p.value.dtype
        return np.dtype(np.float64)

    def n_parameters(self) -> int:
        return sum(p.value.size for p in self.parameters())

    def __call__(self, x):
        return self.forward(x)

    def forward(self, x):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError


class Sequential(Module):
    def __init__(self, *named_layers):
        super().__init__()
        for name, layer in named_layers:
            self.add_child(name, layer)

    def __iter__(self):
        return iter(self._children.values())

    def __getitem__(self, name):
        return self._children[name]

    def forward(self, x):
        for layer in self._children.values():
            x = layer.forward(x)
        return x

    def backward(self, dout):
        for layer in reversed(list(self._children.values())):
            dout = layer.backward(dout)
        return dout
