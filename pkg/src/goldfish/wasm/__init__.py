"""Minimal WebAssembly core-subset toolchain: WAT assembler, decoder, interpreter.

Supports the integer subset the guest ABI needs: i32/i64 numerics, linear
memory with bulk copy/fill, void-typed structured control flow, direct calls,
and imported host functions. No floats, tables, call_indirect, or WASI.
"""

from .wat import wat_to_wasm
from .module import Module, decode_module
from .interp import Instance, ExecLimits

__all__ = ["wat_to_wasm", "Module", "decode_module", "Instance", "ExecLimits"]
