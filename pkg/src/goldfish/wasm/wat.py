"""Tiny WAT (WebAssembly text) assembler for the supported core subset.

Handles the s-expression module grammar needed by the built-in handlers and
tests: imports, one memory, mutable globals, data segments, functions with
named params/locals/labels, exports, and both flat and folded instruction
forms. Blocks, loops, and ifs are void-typed.
"""

from __future__ import annotations

import struct
from typing import Any, List, Optional, Tuple

from ..errors import ModuleInvalid

# valtype encodings
_VALTYPES = {"i32": 0x7F, "i64": 0x7E}

_SECTION_TYPE = 1
_SECTION_IMPORT = 2
_SECTION_FUNC = 3
_SECTION_MEMORY = 5
_SECTION_GLOBAL = 6
_SECTION_EXPORT = 7
_SECTION_CODE = 10
_SECTION_DATA = 11


def _leb_u(value: int) -> bytes:
    if value < 0:
        raise ValueError("unsigned LEB of negative value")
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def _leb_s(value: int) -> bytes:
    out = bytearray()
    more = True
    while more:
        byte = value & 0x7F
        value >>= 7
        if (value == 0 and not byte & 0x40) or (value == -1 and byte & 0x40):
            more = False
        else:
            byte |= 0x80
        out.append(byte)
    return bytes(out)


def _vec(items: list[bytes]) -> bytes:
    return _leb_u(len(items)) + b"".join(items)


def _name(text: str) -> bytes:
    raw = text.encode("utf-8")
    return _leb_u(len(raw)) + raw


# ---------------------------------------------------------------------------
# S-expression reader
# ---------------------------------------------------------------------------

def _tokenize(text: str) -> list[str]:
    tokens: list[str] = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c in " \t\r\n":
            i += 1
        elif c == ";" and i + 1 < n and text[i + 1] == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif c == "(" and i + 1 < n and text[i + 1] == ";":
            depth = 1
            i += 2
            while i < n and depth:
                if text.startswith("(;", i):
                    depth += 1
                    i += 2
                elif text.startswith(";)", i):
                    depth -= 1
                    i += 2
                else:
                    i += 1
        elif c in "()":
            tokens.append(c)
            i += 1
        elif c == '"':
            j = i + 1
            while j < n and text[j] != '"':
                if text[j] == "\\":
                    j += 1
                j += 1
            if j >= n:
                raise ModuleInvalid("unterminated string in WAT")
            tokens.append(text[i : j + 1])
            i = j + 1
        else:
            j = i
            while j < n and text[j] not in ' \t\r\n()";':
                j += 1
            tokens.append(text[i:j])
            i = j
    return tokens


def _parse_sexpr(tokens: list[str], pos: int) -> tuple[Any, int]:
    tok = tokens[pos]
    if tok == "(":
        items = []
        pos += 1
        while tokens[pos] != ")":
            node, pos = _parse_sexpr(tokens, pos)
            items.append(node)
        return items, pos + 1
    if tok == ")":
        raise ModuleInvalid("unbalanced parens in WAT")
    return tok, pos + 1


def _parse_string(tok: str) -> bytes:
    assert tok.startswith('"') and tok.endswith('"')
    body = tok[1:-1]
    out = bytearray()
    i = 0
    while i < len(body):
        c = body[i]
        if c != "\\":
            out.extend(c.encode("utf-8"))
            i += 1
            continue
        nxt = body[i + 1]
        if nxt == "n":
            out.append(0x0A)
            i += 2
        elif nxt == "t":
            out.append(0x09)
            i += 2
        elif nxt == "\\":
            out.append(0x5C)
            i += 2
        elif nxt == '"':
            out.append(0x22)
            i += 2
        else:
            out.append(int(body[i + 1 : i + 3], 16))
            i += 3
    return bytes(out)


def _parse_int(tok: str) -> int:
    tok = tok.replace("_", "")
    return int(tok, 0)


# ---------------------------------------------------------------------------
# Instruction table
# ---------------------------------------------------------------------------

# mnemonic -> (opcode, immediate kind)
# kinds: none, local, global, func, label, memarg, i32, i64
_INSTRS: dict[str, tuple[int, str]] = {
    "unreachable": (0x00, "none"),
    "nop": (0x01, "none"),
    "br": (0x0C, "label"),
    "br_if": (0x0D, "label"),
    "return": (0x0F, "none"),
    "call": (0x10, "func"),
    "drop": (0x1A, "none"),
    "select": (0x1B, "none"),
    "local.get": (0x20, "local"),
    "local.set": (0x21, "local"),
    "local.tee": (0x22, "local"),
    "global.get": (0x23, "global"),
    "global.set": (0x24, "global"),
    "i32.load": (0x28, "memarg"),
    "i64.load": (0x29, "memarg"),
    "i32.load8_s": (0x2C, "memarg"),
    "i32.load8_u": (0x2D, "memarg"),
    "i32.load16_s": (0x2E, "memarg"),
    "i32.load16_u": (0x2F, "memarg"),
    "i32.store": (0x36, "memarg"),
    "i64.store": (0x37, "memarg"),
    "i32.store8": (0x3A, "memarg"),
    "i32.store16": (0x3B, "memarg"),
    "memory.size": (0x3F, "zero"),
    "memory.grow": (0x40, "zero"),
    "i32.const": (0x41, "i32"),
    "i64.const": (0x42, "i64"),
    "i32.eqz": (0x45, "none"),
    "i32.eq": (0x46, "none"),
    "i32.ne": (0x47, "none"),
    "i32.lt_s": (0x48, "none"),
    "i32.lt_u": (0x49, "none"),
    "i32.gt_s": (0x4A, "none"),
    "i32.gt_u": (0x4B, "none"),
    "i32.le_s": (0x4C, "none"),
    "i32.le_u": (0x4D, "none"),
    "i32.ge_s": (0x4E, "none"),
    "i32.ge_u": (0x4F, "none"),
    "i64.eqz": (0x50, "none"),
    "i64.eq": (0x51, "none"),
    "i64.ne": (0x52, "none"),
    "i64.lt_s": (0x53, "none"),
    "i64.lt_u": (0x54, "none"),
    "i64.gt_s": (0x55, "none"),
    "i64.gt_u": (0x56, "none"),
    "i64.le_s": (0x57, "none"),
    "i64.le_u": (0x58, "none"),
    "i64.ge_s": (0x59, "none"),
    "i64.ge_u": (0x5A, "none"),
    "i32.clz": (0x67, "none"),
    "i32.ctz": (0x68, "none"),
    "i32.popcnt": (0x69, "none"),
    "i32.add": (0x6A, "none"),
    "i32.sub": (0x6B, "none"),
    "i32.mul": (0x6C, "none"),
    "i32.div_s": (0x6D, "none"),
    "i32.div_u": (0x6E, "none"),
    "i32.rem_s": (0x6F, "none"),
    "i32.rem_u": (0x70, "none"),
    "i32.and": (0x71, "none"),
    "i32.or": (0x72, "none"),
    "i32.xor": (0x73, "none"),
    "i32.shl": (0x74, "none"),
    "i32.shr_s": (0x75, "none"),
    "i32.shr_u": (0x76, "none"),
    "i32.rotl": (0x77, "none"),
    "i32.rotr": (0x78, "none"),
    "i64.clz": (0x79, "none"),
    "i64.ctz": (0x7A, "none"),
    "i64.popcnt": (0x7B, "none"),
    "i64.add": (0x7C, "none"),
    "i64.sub": (0x7D, "none"),
    "i64.mul": (0x7E, "none"),
    "i64.div_s": (0x7F, "none"),
    "i64.div_u": (0x80, "none"),
    "i64.rem_s": (0x81, "none"),
    "i64.rem_u": (0x82, "none"),
    "i64.and": (0x83, "none"),
    "i64.or": (0x84, "none"),
    "i64.xor": (0x85, "none"),
    "i64.shl": (0x86, "none"),
    "i64.shr_s": (0x87, "none"),
    "i64.shr_u": (0x88, "none"),
    "i64.rotl": (0x89, "none"),
    "i64.rotr": (0x8A, "none"),
    "i32.wrap_i64": (0xA7, "none"),
    "i64.extend_i32_s": (0xAC, "none"),
    "i64.extend_i32_u": (0xAD, "none"),
}

_BULK = {"memory.copy": 10, "memory.fill": 11}


class _FuncContext:
    """Name resolution scopes while assembling one function body."""

    def __init__(self, assembler: "_Assembler", local_names: dict[str, int]):
        self.asm = assembler
        self.locals = local_names
        self.labels: list[Optional[str]] = []

    def local_idx(self, tok: str) -> int:
        if tok.startswith("$"):
            try:
                return self.locals[tok]
            except KeyError:
                raise ModuleInvalid(f"unknown local {tok}") from None
        return _parse_int(tok)

    def label_depth(self, tok: str) -> int:
        if tok.startswith("$"):
            for depth, name in enumerate(reversed(self.labels)):
                if name == tok:
                    return depth
            raise ModuleInvalid(f"unknown label {tok}")
        return _parse_int(tok)


class _Assembler:
    def __init__(self) -> None:
        self.types: list[tuple[tuple[int, ...], tuple[int, ...]]] = []
        self.imports: list[bytes] = []
        self.func_names: dict[str, int] = {}
        self.global_names: dict[str, int] = {}
        self.func_type_idx: list[int] = []  # for module-defined funcs
        self.import_count = 0
        self.bodies: list[bytes] = []
        self.memory: Optional[tuple[int, Optional[int]]] = None
        self.globals: list[bytes] = []
        self.exports: list[bytes] = []
        self.data: list[bytes] = []

    def type_idx(self, params: tuple[int, ...], results: tuple[int, ...]) -> int:
        sig = (params, results)
        try:
            return self.types.index(sig)
        except ValueError:
            self.types.append(sig)
            return len(self.types) - 1

    def func_idx(self, tok: str) -> int:
        if tok.startswith("$"):
            try:
                return self.func_names[tok]
            except KeyError:
                raise ModuleInvalid(f"unknown function {tok}") from None
        return _parse_int(tok)

    def global_idx(self, tok: str) -> int:
        if tok.startswith("$"):
            try:
                return self.global_names[tok]
            except KeyError:
                raise ModuleInvalid(f"unknown global {tok}") from None
        return _parse_int(tok)


def _valtype(tok: str) -> int:
    try:
        return _VALTYPES[tok]
    except KeyError:
        raise ModuleInvalid(f"unsupported value type {tok!r}") from None


def _sig_of(node: list) -> tuple[tuple[int, ...], tuple[int, ...], list[str]]:
    """Extract (params, results, param names) from a func head."""
    params: list[int] = []
    results: list[int] = []
    names: list[str] = []
    for item in node:
        if isinstance(item, list) and item and item[0] == "param":
            rest = item[1:]
            if rest and isinstance(rest[0], str) and rest[0].startswith("$"):
                names.append(rest[0])
                params.append(_valtype(rest[1]))
            else:
                for t in rest:
                    names.append("")
                    params.append(_valtype(t))
        elif isinstance(item, list) and item and item[0] == "result":
            for t in item[1:]:
                results.append(_valtype(t))
    return tuple(params), tuple(results), names


def _emit_instr(ctx: _FuncContext, out: bytearray, node: Any) -> None:
    """Emit one instruction (atom sequence handled by caller) or folded form."""
    if isinstance(node, str):
        raise ModuleInvalid(f"stray atom {node!r} in body")
    if not node:
        raise ModuleInvalid("empty expression in body")
    head = node[0]

    if head in ("block", "loop"):
        label = None
        idx = 1
        if idx < len(node) and isinstance(node[idx], str) and node[idx].startswith("$"):
            label = node[idx]
            idx += 1
        out.append(0x02 if head == "block" else 0x03)
        out.append(0x40)  # void block type
        ctx.labels.append(label)
        _emit_body(ctx, out, node[idx:])
        ctx.labels.pop()
        out.append(0x0B)
        return

    if head == "if":
        label = None
        idx = 1
        if idx < len(node) and isinstance(node[idx], str) and node[idx].startswith("$"):
            label = node[idx]
            idx += 1
        rest = node[idx:]
        then_body = else_body = None
        cond_forms = []
        for item in rest:
            if isinstance(item, list) and item and item[0] == "then":
                then_body = item[1:]
            elif isinstance(item, list) and item and item[0] == "else":
                else_body = item[1:]
            else:
                cond_forms.append(item)
        if then_body is None:
            raise ModuleInvalid("if without (then ...)")
        for form in cond_forms:
            _emit_instr(ctx, out, form)
        out.append(0x04)
        out.append(0x40)
        ctx.labels.append(label)
        _emit_body(ctx, out, then_body)
        if else_body is not None:
            out.append(0x05)
            _emit_body(ctx, out, else_body)
        ctx.labels.pop()
        out.append(0x0B)
        return

    if not isinstance(head, str):
        raise ModuleInvalid("expected instruction mnemonic")

    # folded form: (op imm? operand-forms...)
    if head in _BULK:
        for form in node[1:]:
            _emit_instr(ctx, out, form)
        out.append(0xFC)
        out += _leb_u(_BULK[head])
        out.append(0x00)
        if head == "memory.copy":
            out.append(0x00)
        return

    try:
        opcode, kind = _INSTRS[head]
    except KeyError:
        raise ModuleInvalid(f"unsupported instruction {head!r}") from None

    operands: list[Any] = []
    imm = bytearray()
    rest = node[1:]
    if kind == "local":
        imm += _leb_u(ctx.local_idx(rest[0]))
        operands = rest[1:]
    elif kind == "global":
        imm += _leb_u(ctx.asm.global_idx(rest[0]))
        operands = rest[1:]
    elif kind == "func":
        imm += _leb_u(ctx.asm.func_idx(rest[0]))
        operands = rest[1:]
    elif kind == "label":
        imm += _leb_u(ctx.label_depth(rest[0]))
        operands = rest[1:]
    elif kind == "i32":
        imm += _leb_s(_parse_int(rest[0]))
        operands = rest[1:]
    elif kind == "i64":
        imm += _leb_s(_parse_int(rest[0]))
        operands = rest[1:]
    elif kind == "memarg":
        offset = 0
        align = 0
        operands = []
        for item in rest:
            if isinstance(item, str) and item.startswith("offset="):
                offset = _parse_int(item[7:])
            elif isinstance(item, str) and item.startswith("align="):
                align = _parse_int(item[6:]).bit_length() - 1
            else:
                operands.append(item)
        imm += _leb_u(align) + _leb_u(offset)
    elif kind == "zero":
        imm.append(0x00)
        operands = rest
    else:
        operands = rest

    for form in operands:
        _emit_instr(ctx, out, form)
    out.append(opcode)
    out += imm


def _emit_body(ctx: _FuncContext, out: bytearray, forms: list) -> None:
    """Emit a body given as a list of folded forms and/or flat atoms."""
    i = 0
    while i < len(forms):
        item = forms[i]
        if isinstance(item, list):
            _emit_instr(ctx, out, item)
            i += 1
            continue
        # flat atom form: mnemonic followed by its immediates as atoms
        head = item
        if head == "end":
            raise ModuleInvalid("flat end not supported; use folded blocks")
        group: list[Any] = [head]
        opcode_kind = _INSTRS.get(head, (0, "none"))[1] if head in _INSTRS else "none"
        if head in _INSTRS and opcode_kind in ("local", "global", "func", "label", "i32", "i64"):
            group.append(forms[i + 1])
            i += 2
        elif head in _INSTRS and opcode_kind == "memarg":
            j = i + 1
            while j < len(forms) and isinstance(forms[j], str) and (
                forms[j].startswith("offset=") or forms[j].startswith("align=")
            ):
                group.append(forms[j])
                j += 1
            i = j
        else:
            i += 1
        _emit_instr(ctx, out, group)


def _assemble_func(asm: _Assembler, node: list) -> tuple[Optional[str], list, bytes, int]:
    """First pass parsed the header; this emits one code entry."""
    idx = 1
    name = None
    if idx < len(node) and isinstance(node[idx], str) and node[idx].startswith("$"):
        name = node[idx]
        idx += 1
    export_names = []
    while idx < len(node) and isinstance(node[idx], list) and node[idx] and node[idx][0] == "export":
        export_names.append(_parse_string(node[idx][1]).decode("utf-8"))
        idx += 1
    params, results, param_names = _sig_of(node[idx:])
    local_names: dict[str, int] = {}
    local_types: list[int] = []
    body_forms: list = []
    for item in node[idx:]:
        if isinstance(item, list) and item and item[0] == "param":
            continue
        if isinstance(item, list) and item and item[0] == "result":
            continue
        if isinstance(item, list) and item and item[0] == "local":
            rest = item[1:]
            if rest and isinstance(rest[0], str) and rest[0].startswith("$"):
                local_names[rest[0]] = len(params) + len(local_types)
                local_types.append(_valtype(rest[1]))
            else:
                for t in rest:
                    local_types.append(_valtype(t))
            continue
        body_forms.append(item)
    for pos, pname in enumerate(param_names):
        if pname:
            local_names[pname] = pos

    ctx = _FuncContext(asm, local_names)
    code = bytearray()
    _emit_body(ctx, code, body_forms)
    code.append(0x0B)

    # group consecutive identical local types into runs
    runs: list[tuple[int, int]] = []
    for t in local_types:
        if runs and runs[-1][1] == t:
            runs[-1] = (runs[-1][0] + 1, t)
        else:
            runs.append((1, t))
    locals_enc = _leb_u(len(runs)) + b"".join(_leb_u(n) + bytes([t]) for n, t in runs)
    body = locals_enc + bytes(code)
    entry = _leb_u(len(body)) + body

    type_idx = asm.type_idx(params, results)
    exports = [(ename, name) for ename in export_names]
    return name, exports, entry, type_idx


def wat_to_wasm(text: str) -> bytes:
    """Assemble WAT source into a binary module."""
    tokens = _tokenize(text)
    if not tokens:
        raise ModuleInvalid("empty WAT source")
    tree, pos = _parse_sexpr(tokens, 0)
    if pos != len(tokens):
        raise ModuleInvalid("trailing tokens after module")
    if not isinstance(tree, list) or not tree or tree[0] != "module":
        raise ModuleInvalid("expected (module ...)")

    asm = _Assembler()
    func_nodes: list[list] = []
    standalone_exports: list[tuple[str, str]] = []

    # pass 1: declare names/indices so calls can be forward references
    for node in tree[1:]:
        if not isinstance(node, list) or not node:
            raise ModuleInvalid("bad module field")
        head = node[0]
        if head == "import":
            mod = _parse_string(node[1]).decode("utf-8")
            field = _parse_string(node[2]).decode("utf-8")
            desc = node[3]
            if desc[0] != "func":
                raise ModuleInvalid("only func imports supported")
            di = 1
            fname = None
            if di < len(desc) and isinstance(desc[di], str) and desc[di].startswith("$"):
                fname = desc[di]
                di += 1
            params, results, _ = _sig_of(desc[di:])
            tidx = asm.type_idx(params, results)
            if fname:
                asm.func_names[fname] = asm.import_count
            asm.imports.append(_name(mod) + _name(field) + b"\x00" + _leb_u(tidx))
            asm.import_count += 1
        elif head == "func":
            fname = node[1] if len(node) > 1 and isinstance(node[1], str) and node[1].startswith("$") else None
            if fname:
                asm.func_names[fname] = asm.import_count + len(func_nodes)
            func_nodes.append(node)
        elif head == "global":
            gname = node[1] if isinstance(node[1], str) and node[1].startswith("$") else None
            gi = 2 if gname else 1
            gtype = node[gi]
            if isinstance(gtype, list) and gtype[0] == "mut":
                mut, vt = 1, _valtype(gtype[1])
            else:
                mut, vt = 0, _valtype(gtype)
            init = node[gi + 1]
            opcode, _ = _INSTRS[init[0]]
            enc = bytes([vt, mut, opcode]) + _leb_s(_parse_int(init[1])) + b"\x0b"
            if gname:
                asm.global_names[gname] = len(asm.globals)
            asm.globals.append(enc)
        elif head == "memory":
            idx = 1
            while idx < len(node) and isinstance(node[idx], list):
                if node[idx][0] == "export":
                    standalone_exports.append((_parse_string(node[idx][1]).decode("utf-8"), "memory"))
                idx += 1
            nums = [int(x) for x in node[idx:]]
            asm.memory = (nums[0], nums[1] if len(nums) > 1 else None)
        elif head == "data":
            off_expr = node[1]
            offset = _parse_int(off_expr[1])
            blob = b"".join(_parse_string(s) for s in node[2:])
            asm.data.append(b"\x00\x41" + _leb_s(offset) + b"\x0b" + _leb_u(len(blob)) + blob)
        elif head == "export":
            ename = _parse_string(node[1]).decode("utf-8")
            desc = node[2]
            standalone_exports.append((ename, desc))
        else:
            raise ModuleInvalid(f"unsupported module field {head!r}")

    # pass 2: assemble bodies
    entries: list[bytes] = []
    for node in func_nodes:
        _, exports, entry, type_idx = _assemble_func(asm, node)
        asm.func_type_idx.append(type_idx)
        entries.append(entry)
        for ename, fname in exports:
            target = fname if fname else str(asm.import_count + len(entries) - 1)
            asm.exports.append(_name(ename) + b"\x00" + _leb_u(asm.func_idx(target)))

    for ename, desc in standalone_exports:
        if desc == "memory" or (isinstance(desc, list) and desc and desc[0] == "memory"):
            asm.exports.append(_name(ename) + b"\x02" + _leb_u(0))
        elif isinstance(desc, list) and desc and desc[0] == "func":
            asm.exports.append(_name(ename) + b"\x00" + _leb_u(asm.func_idx(desc[1])))
        else:
            raise ModuleInvalid(f"unsupported export descriptor {desc!r}")

    # emit sections
    def section(sid: int, content: bytes) -> bytes:
        return bytes([sid]) + _leb_u(len(content)) + content

    out = bytearray(b"\x00asm\x01\x00\x00\x00")
    type_entries = []
    for params, results in asm.types:
        type_entries.append(
            b"\x60" + _vec([bytes([t]) for t in params]) + _vec([bytes([t]) for t in results])
        )
    if type_entries:
        out += section(_SECTION_TYPE, _vec(type_entries))
    if asm.imports:
        out += section(_SECTION_IMPORT, _vec(asm.imports))
    if asm.func_type_idx:
        out += section(_SECTION_FUNC, _vec([_leb_u(t) for t in asm.func_type_idx]))
    if asm.memory is not None:
        lo, hi = asm.memory
        if hi is None:
            enc = b"\x00" + _leb_u(lo)
        else:
            enc = b"\x01" + _leb_u(lo) + _leb_u(hi)
        out += section(_SECTION_MEMORY, _vec([enc]))
    if asm.globals:
        out += section(_SECTION_GLOBAL, _vec(asm.globals))
    if asm.exports:
        out += section(_SECTION_EXPORT, _vec(asm.exports))
    if entries:
        out += section(_SECTION_CODE, _vec(entries))
    if asm.data:
        out += section(_SECTION_DATA, _vec(asm.data))
    return bytes(out)
