"""Binary module decoder and structural validation.

Decodes the supported core subset into a Module whose function bodies are
flattened instruction lists with branch targets resolved to absolute program
counters, so instantiation does no per-invocation decoding work.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..errors import ModuleInvalid

I32 = 0x7F
I64 = 0x7E

_SUPPORTED_VALTYPES = {I32, I64}

# Internal op codes for the flattened representation. Branch-shaped ops carry
# absolute targets; numeric ops keep their wire opcode.
OP_BR = 0x0C          # arg = absolute pc
OP_BR_IF = 0x0D       # arg = absolute pc (taken when truthy)
OP_BR_TABLE = 0x0E    # arg = (tuple of pcs, default pc)
OP_IF_FALSE = 0x04    # arg = absolute pc of else/end (jump when falsy)
OP_CALL = 0x10
OP_RETURN = 0x0F
OP_UNREACHABLE = 0x00
OP_NOP = 0x01
OP_END = 0x0B
OP_BR_IF_RETURN = 0x8000  # lowered br_if to function level


@dataclass
class FuncType:
    params: tuple[int, ...]
    results: tuple[int, ...]


@dataclass
class FuncImport:
    module: str
    name: str
    type_idx: int


@dataclass
class Function:
    type_idx: int
    n_params: int
    n_locals: int
    code: list  # list of (op, arg) tuples, flattened


@dataclass
class Module:
    types: list[FuncType] = field(default_factory=list)
    imports: list[FuncImport] = field(default_factory=list)
    functions: list[Function] = field(default_factory=list)  # module-defined only
    mem_min: int = 0
    mem_max: Optional[int] = None
    has_memory: bool = False
    globals_init: list[int] = field(default_factory=list)
    globals_mut: list[bool] = field(default_factory=list)
    exports: dict[str, tuple[int, int]] = field(default_factory=dict)  # name -> (kind, idx)
    data: list[tuple[int, bytes]] = field(default_factory=list)

    def func_type(self, func_idx: int) -> FuncType:
        n_imports = len(self.imports)
        if func_idx < n_imports:
            return self.types[self.imports[func_idx].type_idx]
        return self.types[self.functions[func_idx - n_imports].type_idx]

    def export_func(self, name: str) -> int:
        entry = self.exports.get(name)
        if entry is None or entry[0] != 0:
            raise ModuleInvalid(f"missing required export {name!r}")
        return entry[1]


class _Cursor:
    __slots__ = ("buf", "pos", "end")

    def __init__(self, buf: bytes, pos: int = 0, end: Optional[int] = None):
        self.buf = buf
        self.pos = pos
        self.end = len(buf) if end is None else end

    def u8(self) -> int:
        if self.pos >= self.end:
            raise ModuleInvalid("unexpected end of module")
        b = self.buf[self.pos]
        self.pos += 1
        return b

    def take(self, n: int) -> bytes:
        if self.pos + n > self.end:
            raise ModuleInvalid("unexpected end of module")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def leb_u(self) -> int:
        result = 0
        shift = 0
        while True:
            b = self.u8()
            result |= (b & 0x7F) << shift
            if not b & 0x80:
                return result
            shift += 7
            if shift > 63:
                raise ModuleInvalid("LEB128 too long")

    def leb_s(self, bits: int) -> int:
        result = 0
        shift = 0
        while True:
            b = self.u8()
            result |= (b & 0x7F) << shift
            shift += 7
            if not b & 0x80:
                if shift < bits and b & 0x40:
                    result |= -(1 << shift)
                return result
            if shift > bits + 7:
                raise ModuleInvalid("LEB128 too long")

    def name(self) -> str:
        n = self.leb_u()
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError:
            raise ModuleInvalid("bad utf-8 in name") from None


def decode_module(binary: bytes) -> Module:
    """Decode and structurally validate a binary module.

    Raises ModuleInvalid for malformed bytes or constructs outside the
    supported subset (floats, tables, call_indirect, start sections,
    imported memories/globals).
    """
    if len(binary) < 8 or binary[:4] != b"\x00asm":
        raise ModuleInvalid("bad magic: not a wasm module")
    if binary[4:8] != b"\x01\x00\x00\x00":
        raise ModuleInvalid("unsupported wasm version")

    mod = Module()
    cur = _Cursor(binary, 8)
    code_bodies: list[tuple[int, int]] = []  # (start, end) spans of code entries
    func_type_indices: list[int] = []
    last_section = 0

    while cur.pos < len(binary):
        sid = cur.u8()
        size = cur.leb_u()
        start = cur.pos
        end = start + size
        if end > len(binary):
            raise ModuleInvalid("section extends past end of module")
        if sid != 0:
            if sid <= last_section:
                raise ModuleInvalid(f"section {sid} out of order")
            last_section = sid
        body = _Cursor(binary, start, end)

        if sid == 0:
            pass  # custom section: skipped
        elif sid == 1:
            for _ in range(body.leb_u()):
                if body.u8() != 0x60:
                    raise ModuleInvalid("bad functype tag")
                params = tuple(body.u8() for _ in range(body.leb_u()))
                results = tuple(body.u8() for _ in range(body.leb_u()))
                for t in params + results:
                    if t not in _SUPPORTED_VALTYPES:
                        raise ModuleInvalid(f"unsupported value type 0x{t:02x}")
                if len(results) > 1:
                    raise ModuleInvalid("multi-value results unsupported")
                mod.types.append(FuncType(params, results))
        elif sid == 2:
            for _ in range(body.leb_u()):
                imod = body.name()
                iname = body.name()
                kind = body.u8()
                if kind != 0x00:
                    raise ModuleInvalid("only function imports supported")
                tidx = body.leb_u()
                if tidx >= len(mod.types):
                    raise ModuleInvalid("import type index out of range")
                mod.imports.append(FuncImport(imod, iname, tidx))
        elif sid == 3:
            for _ in range(body.leb_u()):
                tidx = body.leb_u()
                if tidx >= len(mod.types):
                    raise ModuleInvalid("function type index out of range")
                func_type_indices.append(tidx)
        elif sid == 4:
            raise ModuleInvalid("tables unsupported")
        elif sid == 5:
            count = body.leb_u()
            if count > 1:
                raise ModuleInvalid("multiple memories unsupported")
            if count == 1:
                flags = body.u8()
                mod.mem_min = body.leb_u()
                mod.mem_max = body.leb_u() if flags & 0x01 else None
                mod.has_memory = True
        elif sid == 6:
            for _ in range(body.leb_u()):
                vt = body.u8()
                if vt not in _SUPPORTED_VALTYPES:
                    raise ModuleInvalid("unsupported global type")
                mut = body.u8()
                opcode = body.u8()
                if opcode == 0x41:
                    init = body.leb_s(32)
                elif opcode == 0x42:
                    init = body.leb_s(64)
                else:
                    raise ModuleInvalid("unsupported global initializer")
                if body.u8() != 0x0B:
                    raise ModuleInvalid("unterminated global initializer")
                mod.globals_init.append(init & (0xFFFFFFFF if vt == I32 else 0xFFFFFFFFFFFFFFFF))
                mod.globals_mut.append(mut == 1)
        elif sid == 7:
            for _ in range(body.leb_u()):
                name = body.name()
                kind = body.u8()
                idx = body.leb_u()
                if name in mod.exports:
                    raise ModuleInvalid(f"duplicate export {name!r}")
                mod.exports[name] = (kind, idx)
        elif sid == 8:
            raise ModuleInvalid("start section unsupported")
        elif sid == 9:
            raise ModuleInvalid("element section unsupported")
        elif sid == 10:
            for _ in range(body.leb_u()):
                sz = body.leb_u()
                code_bodies.append((body.pos, body.pos + sz))
                body.take(sz)
        elif sid == 11:
            for _ in range(body.leb_u()):
                flags = body.leb_u()
                if flags != 0x00:
                    raise ModuleInvalid("only active memory-0 data segments supported")
                if body.u8() != 0x41:
                    raise ModuleInvalid("data offset must be i32.const")
                offset = body.leb_s(32)
                if body.u8() != 0x0B:
                    raise ModuleInvalid("unterminated data offset")
                blob = bytes(body.take(body.leb_u()))
                mod.data.append((offset, blob))
        else:
            raise ModuleInvalid(f"unknown section id {sid}")
        if sid != 0 and body.pos != end:
            raise ModuleInvalid(f"section {sid} has trailing bytes")
        cur.pos = end

    if len(func_type_indices) != len(code_bodies):
        raise ModuleInvalid("function and code section counts differ")

    for tidx, (start, end) in zip(func_type_indices, code_bodies):
        mod.functions.append(_decode_body(binary, start, end, tidx, mod))

    n_funcs = len(mod.imports) + len(mod.functions)
    for func in mod.functions:
        for op, arg in func.code:
            if op == OP_CALL and arg >= n_funcs:
                raise ModuleInvalid("call index out of range")

    for name, (kind, idx) in mod.exports.items():
        if kind == 0 and idx >= n_funcs:
            raise ModuleInvalid(f"export {name!r} references missing function")
        if kind == 2 and not mod.has_memory:
            raise ModuleInvalid(f"export {name!r} references missing memory")
    return mod


# Wire opcodes that carry no immediate and survive into the flat form as-is.
_PLAIN_MIN = 0x1A
_PLAIN_OPS = frozenset(
    [0x1A, 0x1B]
    + list(range(0x45, 0x5B))   # i32/i64 comparisons
    + list(range(0x67, 0x8B))   # i32/i64 arithmetic
    + [0xA7, 0xAC, 0xAD]
)
_MEM_OPS = frozenset(
    [0x28, 0x29, 0x2C, 0x2D, 0x2E, 0x2F, 0x30, 0x31, 0x32, 0x33, 0x34, 0x35,
     0x36, 0x37, 0x3A, 0x3B, 0x3C, 0x3D, 0x3E]
)
_VAR_OPS = frozenset([0x20, 0x21, 0x22, 0x23, 0x24])


def _decode_body(binary: bytes, start: int, end: int, type_idx: int, mod: Module) -> Function:
    cur = _Cursor(binary, start, end)
    n_params = len(mod.types[type_idx].params)
    n_locals = 0
    for _ in range(cur.leb_u()):
        count = cur.leb_u()
        vt = cur.u8()
        if vt not in _SUPPORTED_VALTYPES:
            raise ModuleInvalid("unsupported local type")
        n_locals += count
    if n_locals > 1024:
        raise ModuleInvalid("too many locals")

    code: list[tuple] = []
    # control stack entries: (kind, fixup targets)
    # kind: 'block' (br -> end), 'loop' (br -> start), 'if'
    ctrl: list[dict] = [{"kind": "func", "br_fixups": [], "start": 0}]

    def fixup(entry: dict, target: int) -> None:
        for pos in entry["br_fixups"]:
            op = code[pos]
            if op[0] == OP_BR_TABLE:
                pcs, default = op[1]
                pcs = tuple(target if pc is None else pc for pc in pcs)
                default = target if default is None else default
                code[pos] = (OP_BR_TABLE, (pcs, default))
            else:
                code[pos] = (op[0], target)

    while True:
        opcode = cur.u8()
        if opcode == 0x02 or opcode == 0x03:  # block / loop
            bt = cur.u8()
            if bt != 0x40:
                raise ModuleInvalid("typed blocks unsupported")
            ctrl.append({"kind": "block" if opcode == 0x02 else "loop",
                         "br_fixups": [], "start": len(code)})
        elif opcode == 0x04:  # if
            bt = cur.u8()
            if bt != 0x40:
                raise ModuleInvalid("typed ifs unsupported")
            code.append((OP_IF_FALSE, None))
            ctrl.append({"kind": "if", "br_fixups": [], "start": len(code) - 1,
                         "if_pos": len(code) - 1})
        elif opcode == 0x05:  # else
            entry = ctrl[-1]
            if entry.get("kind") != "if" or "if_pos" not in entry:
                raise ModuleInvalid("else outside if")
            code.append((OP_BR, None))  # then-branch jumps over else body
            entry["br_fixups"].append(len(code) - 1)
            code[entry["if_pos"]] = (OP_IF_FALSE, len(code))
            del entry["if_pos"]
        elif opcode == 0x0B:  # end
            entry = ctrl.pop()
            target = len(code)
            if entry["kind"] == "loop":
                fixup(entry, entry["start"])
            else:
                if "if_pos" in entry:
                    code[entry["if_pos"]] = (OP_IF_FALSE, target)
                    del entry["if_pos"]
                fixup(entry, target)
            if not ctrl:
                if cur.pos != end:
                    raise ModuleInvalid("trailing bytes after function end")
                break
        elif opcode == 0x0C or opcode == 0x0D:  # br / br_if
            depth = cur.leb_u()
            if depth >= len(ctrl):
                raise ModuleInvalid("branch depth out of range")
            entry = ctrl[len(ctrl) - 1 - depth]
            if entry["kind"] == "loop":
                code.append((opcode, entry["start"]))
            elif entry["kind"] == "func":
                code.append((OP_RETURN, None) if opcode == 0x0C else (OP_BR_IF_RETURN, None))
            else:
                code.append((opcode, None))
                entry["br_fixups"].append(len(code) - 1)
        elif opcode == 0x0E:  # br_table
            count = cur.leb_u()
            depths = [cur.leb_u() for _ in range(count)]
            default_depth = cur.leb_u()
            pcs: list = []
            pending = []
            for pos_i, depth in enumerate(depths + [default_depth]):
                if depth >= len(ctrl):
                    raise ModuleInvalid("br_table depth out of range")
                entry = ctrl[len(ctrl) - 1 - depth]
                if entry["kind"] == "loop":
                    pcs.append(entry["start"])
                elif entry["kind"] == "func":
                    raise ModuleInvalid("br_table to function level unsupported")
                else:
                    pcs.append(None)
                    pending.append((entry, pos_i))
            code.append((OP_BR_TABLE, (tuple(pcs[:-1]), pcs[-1])))
            for entry, _ in pending:
                entry["br_fixups"].append(len(code) - 1)
        elif opcode == 0x0F:
            code.append((OP_RETURN, None))
        elif opcode == 0x10:
            code.append((OP_CALL, cur.leb_u()))
        elif opcode == 0x00:
            code.append((OP_UNREACHABLE, None))
        elif opcode == 0x01:
            pass  # nop elided
        elif opcode in _VAR_OPS:
            code.append((opcode, cur.leb_u()))
        elif opcode in _MEM_OPS:
            cur.leb_u()  # align hint ignored
            offset = cur.leb_u()
            code.append((opcode, offset))
        elif opcode == 0x3F or opcode == 0x40:  # memory.size / grow
            if cur.u8() != 0x00:
                raise ModuleInvalid("bad memory index")
            code.append((opcode, None))
        elif opcode == 0x41:
            code.append((opcode, cur.leb_s(32) & 0xFFFFFFFF))
        elif opcode == 0x42:
            code.append((opcode, cur.leb_s(64) & 0xFFFFFFFFFFFFFFFF))
        elif opcode in _PLAIN_OPS:
            code.append((opcode, None))
        elif opcode == 0xFC:
            sub = cur.leb_u()
            if sub == 10:
                if cur.u8() != 0x00 or cur.u8() != 0x00:
                    raise ModuleInvalid("bad memory.copy operands")
                code.append((0xFC0A, None))
            elif sub == 11:
                if cur.u8() != 0x00:
                    raise ModuleInvalid("bad memory.fill operand")
                code.append((0xFC0B, None))
            else:
                raise ModuleInvalid(f"unsupported 0xFC op {sub}")
        else:
            raise ModuleInvalid(f"unsupported opcode 0x{opcode:02x}")

    code.append((OP_RETURN, None))
    return Function(type_idx, n_params, n_locals, code)
