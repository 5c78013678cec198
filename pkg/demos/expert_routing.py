"""Show how a Switch layer routes tokens and which ones overflow the expert capacity."""

import numpy as np

from workbench import ModelConfig
from workbench.arch import capacity_for, declare_experts, switch_ffn
from workbench.numerics import Tensor
from workbench.params import ParamStore


def main():
    cfg = ModelConfig.tiny(d_model=8).with_variant(**{"arch.kind": "switch", "experts.n": 4,
                                                      "experts.capacity_factor": 1.0})
    store = ParamStore(3)
    declare_experts(store, "demo", cfg)
    x = np.random.default_rng(0).normal(size=(12, 8))
    _, aux, routing = switch_ffn(Tensor(x), store, "demo", cfg, return_routing=True)
    print(f"capacity per expert: {capacity_for(12, 4, 1, 1.0)}")
    for t in range(12):
        e = routing["choices"][t, 0]
        status = "kept" if routing["kept"][t, 0] else "dropped"
        print(f"token {t:2d} -> expert {e} ({status}, p={routing['probs'][t, e]:.3f})")
    print(f"load-balance loss: {aux.item():.4f}")


if __name__ == "__main__":
    main()
