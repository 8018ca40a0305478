"""Closed-form bit-channel expressions and SC decoding for large polar kernels."""

from .compiler import compile_kernel, compile_l, compile_w, plan_metrics
from .construction import ga_construct, monte_carlo_construct, select_info_set, union_bound_fer
from .decoder import CodeSpec, brute_force_bit_channel, eval_plan, reference_sc_decode, sc_decode
from .gf2 import KernelMatrix, builtin_kernel, encode, load_kernel, validate_kernel
from .plan import DecodingPlan, plans_from_json, plans_to_json

__version__ = "0.1.0"

__all__ = [
    "CodeSpec", "DecodingPlan", "KernelMatrix", "brute_force_bit_channel", "builtin_kernel",
    "compile_kernel", "compile_l", "compile_w", "encode", "eval_plan", "ga_construct", "load_kernel",
    "monte_carlo_construct", "plan_metrics", "plans_from_json", "plans_to_json", "reference_sc_decode",
    "sc_decode", "select_info_set", "union_bound_fer", "validate_kernel",
]
