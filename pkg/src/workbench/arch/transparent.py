"""Decoder memories formed as learned mixtures of all encoder activations."""

from __future__ import annotations

from ..errors import ConfigError
from ..numerics import Init, add, index, mul, softmax


def declare_transparent(store, config):
    """One row of mixing logits per decoder layer over the encoder's L+1
    activations (embedding output included).  Zero logits start every
    decoder layer at the uniform average."""
    store.add("dec.transparent", (config.n_dec_layers, config.n_enc_layers + 1), Init.zeros())


def transparent_attention_memory(encoder_outputs, weights):
    """memory_j = sum_i softmax(weights[j])_i * encoder_outputs[i].

    ``encoder_outputs`` holds L+1 tensors of equal shape and ``weights`` is
    a [L_dec, L+1] tensor of logits.  Returns one memory per decoder layer.
    """
    if weights.shape[1] != len(encoder_outputs):
        raise ConfigError(f"{weights.shape[1]} mixing logits for {len(encoder_outputs)} encoder outputs")
    w = softmax(weights, axis=-1)
    memories = []
    for j in range(weights.shape[0]):
        mem = None
        for i, h in enumerate(encoder_outputs):
            term = mul(h, index(w, (j, slice(i, i + 1))))
            mem = term if mem is None else add(mem, term)
        memories.append(mem)
    return memories
