"""Named parameter collection with share-groups."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .numerics import Init, Rng, Tensor, init_param


@dataclass
class _Entry:
    tensor: Tensor
    init: Init
    group: str


class ParamStore:
    """Maps parameter names to tensors.

    Names in the same share-group point at one :class:`Tensor`, so their
    gradients accumulate into a single ``.grad`` and an optimiser updates
    them once.  The group id is the name of the first (canonical) member.
    """

    def __init__(self, seed=0):
        self.rng = Rng(seed)
        self._entries: dict[str, _Entry] = {}

    def add(self, name, shape, init=Init()):
        if name in self._entries:
            raise ConfigError(f"duplicate parameter name {name!r}")
        if any(int(s) <= 0 for s in shape):
            raise ConfigError(f"parameter {name!r} has non-positive extent {tuple(shape)}")
        t = Tensor(init_param(self.rng, shape, init, name), requires_grad=True, op=name)
        self._entries[name] = _Entry(t, init, name)
        return t

    def alias(self, name, target):
        """Make ``name`` refer to the tensor behind ``target``."""
        src = self._entries[target]
        old = self._entries.get(name)
        if old is not None and old.tensor.shape != src.tensor.shape:
            raise ConfigError(f"cannot alias {name!r} {old.tensor.shape} to "
                              f"{target!r} {src.tensor.shape}")
        self._entries[name] = _Entry(src.tensor, src.init, src.group)

    def reinit(self, name, init):
        """Redraw a parameter (and every alias of it) under a new scheme."""
        e = self._entries[name]
        e.tensor.data[...] = init_param(self.rng, e.tensor.shape, init, e.group)
        for other in self._entries.values():
            if other.tensor is e.tensor:
                other.init = init

    def __getitem__(self, name) -> Tensor:
        try:
            return self._entries[name].tensor
        except KeyError:
            raise ConfigError(f"no parameter named {name!r}") from None

    def __contains__(self, name):
        return name in self._entries

    def __len__(self):
        return len(self._entries)

    def names(self):
        return list(self._entries)

    def group_of(self, name):
        return self._entries[name].group

    def init_of(self, name):
        return self._entries[name].init

    def named_tensors(self):
        """(canonical name, tensor) for each distinct tensor, in declaration order."""
        seen = set()
        out = []
        for e in self._entries.values():
            if id(e.tensor) not in seen:
                seen.add(id(e.tensor))
                out.append((e.group, e.tensor))
        return out

    def num_scalars(self):
        return int(sum(t.size for _, t in self.named_tensors()))

    def zero_grad(self):
        for _, t in self.named_tensors():
            t.grad = None

    def state_dict(self):
        return {n: t.data.copy() for n, t in self.named_tensors()}

    def load_state_dict(self, state):
        for n, t in self.named_tensors():
            t.data[...] = np.asarray(state[n])
