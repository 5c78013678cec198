"""Whole-block architecture variants."""

from .conv import conv_block, declare_conv, light_dynamic_conv
from .experts import capacity_for, declare_experts, dispatch, load_balance_loss, moe_ffn, switch_ffn
from .funnel import funnel_encode, funnel_length, pool_sequence
from .pkm import brute_force_slots, declare_pkm, pkm_lookup, select_slots
from .synthesizer import declare_synthesizer, synthesizer_attention, synthetic_logits
from .transparent import declare_transparent, transparent_attention_memory
from .universal import declare_halting, halting_unit, universal_step

__all__ = ["conv_block", "declare_conv", "light_dynamic_conv", "capacity_for", "declare_experts",
           "dispatch", "load_balance_loss", "moe_ffn", "switch_ffn", "funnel_encode", "funnel_length",
           "pool_sequence", "brute_force_slots", "declare_pkm", "pkm_lookup", "select_slots",
           "declare_synthesizer", "synthesizer_attention", "synthetic_logits", "declare_transparent",
           "transparent_attention_memory", "declare_halting", "halting_unit", "universal_step"]
