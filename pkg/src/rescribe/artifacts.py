"""Challenge-binary ground truth: artifact maps, symbol indices, renames.

The interchange file (one per binary, produced by exporter scripts run
inside each disassembler, see tools/) lists functions with their basic
blocks' rendered text, globals, strings, and cross-references. From it we
build sanitized symbol-to-function and symbol-to-block maps, dropping
symbols that occur in more than one function (non-discriminative) and
symbols on the stoplist (mnemonics, registers, directives).

Renames recorded during a session shift the symbol universe over time;
`SymbolTimeline.index_at` answers "what did this name mean at time t".
"""

from __future__ import annotations

import json
import string
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import DanglingXref, DuplicateAddress, SchemaViolation
from .session import Timestamp
from .util import format_address, parse_address, sha256_hex

# Tool-generated name prefixes, longest first so dword_ wins over word_.
_TOOL_PREFIXES = (
    "dword_",
    "qword_",
    "byte_",
    "word_",
    "fun_",
    "dat_",
    "lab_",
    "sub_",
    "loc_",
    "off_",
    "unk_",
)

_STRIP_CHARS = string.punctuation + string.whitespace

_TOKEN_CHARS = set(string.ascii_letters + string.digits + "_.$@")


def sanitize_symbol(raw: str) -> str:
    """Canonical form of a displayed symbol: lowercase, prefix-stripped.

    Lowercases, trims leading/trailing punctuation, collapses internal
    whitespace, and strips tool prefixes, iterating to a fixpoint so the
    result is idempotent. May be empty; callers discard empties.
    """
    s = raw
    while True:
        t = s.lower().strip(_STRIP_CHARS)
        t = " ".join(t.split())
        changed = True
        while changed:
            changed = False
            for prefix in _TOOL_PREFIXES:
                if t.startswith(prefix):
                    t = t[len(prefix):]
                    changed = True
        if t == s:
            return t
        s = t


def tokenize_line(line: str) -> list[str]:
    """Symbol-shaped tokens of a rendered disassembly line."""
    tokens = []
    cur = []
    for ch in line:
        if ch in _TOKEN_CHARS:
            cur.append(ch)
        elif cur:
            tokens.append("".join(cur))
            cur = []
    if cur:
        tokens.append("".join(cur))
    return tokens


def load_default_stoplist() -> set[str]:
    text = resources.files("rescribe").joinpath("data/stoplist.txt").read_text("utf-8")
    return parse_stoplist(text)


def parse_stoplist(text: str) -> set[str]:
    out = set()
    for line in text.splitlines():
        line = line.split("#", 1)[0]
        for word in line.split():
            key = sanitize_symbol(word)
            if key:
                out.add(key)
    return out


# ---------------------------------------------------------------------------
# Artifact map
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BlockRecord:
    address: int
    text_lines: tuple[str, ...]


@dataclass(frozen=True)
class FunctionRecord:
    entry_address: int
    name: str
    blocks: tuple[BlockRecord, ...]


@dataclass(frozen=True)
class GlobalRecord:
    address: int
    name: str
    type_name: str


@dataclass(frozen=True)
class StringRecord:
    address: int
    literal: str


@dataclass(frozen=True)
class XrefRecord:
    from_address: int
    to_address: int
    kind: str  # call | data | string


@dataclass(frozen=True)
class BinaryArtifactMap:
    binary_id: str
    functions: tuple[FunctionRecord, ...]
    globals: tuple[GlobalRecord, ...]
    strings: tuple[StringRecord, ...]
    xrefs: tuple[XrefRecord, ...]

    def function_at(self, entry: int) -> FunctionRecord | None:
        for fn in self.functions:
            if fn.entry_address == entry:
                return fn
        return None


def import_artifact_map(path: str | Path) -> BinaryArtifactMap:
    """Load and validate an interchange file."""
    path = Path(path)
    try:
        obj = json.loads(path.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"{path.name}: invalid JSON ({exc})") from exc
    return artifact_map_from_obj(obj, source=path.name)


def artifact_map_from_obj(obj: dict, source: str = "artifact map") -> BinaryArtifactMap:
    if not isinstance(obj.get("binary_id"), str) or not obj["binary_id"]:
        raise SchemaViolation(f"{source}: field 'binary_id' must be a non-empty string")

    functions = []
    seen_entries: set[int] = set()
    seen_blocks: set[int] = set()
    for i, f in enumerate(obj.get("functions", [])):
        entry = parse_address(f.get("entry", ""), f"{source}: functions[{i}].entry")
        if entry in seen_entries:
            raise DuplicateAddress(f"{source}: duplicate function entry {format_address(entry)}")
        seen_entries.add(entry)
        name = f.get("name")
        if not isinstance(name, str) or not name:
            raise SchemaViolation(f"{source}: functions[{i}].name must be a non-empty string")
        blocks = []
        for j, b in enumerate(f.get("blocks", [])):
            addr = parse_address(b.get("addr", ""), f"{source}: functions[{i}].blocks[{j}].addr")
            if addr in seen_blocks:
                raise DuplicateAddress(
                    f"{source}: block {format_address(addr)} assigned to more than one function"
                )
            seen_blocks.add(addr)
            lines = b.get("lines")
            if not isinstance(lines, list) or not lines:
                raise SchemaViolation(
                    f"{source}: functions[{i}].blocks[{j}].lines must be a non-empty list"
                )
            blocks.append(BlockRecord(address=addr, text_lines=tuple(str(x) for x in lines)))
        blocks.sort(key=lambda b: b.address)
        functions.append(FunctionRecord(entry_address=entry, name=name, blocks=tuple(blocks)))

    globals_ = []
    seen_globals: set[int] = set()
    for i, g in enumerate(obj.get("globals", [])):
        addr = parse_address(g.get("addr", ""), f"{source}: globals[{i}].addr")
        if addr in seen_globals:
            raise DuplicateAddress(f"{source}: duplicate global address {format_address(addr)}")
        seen_globals.add(addr)
        globals_.append(GlobalRecord(address=addr, name=str(g.get("name", "")), type_name=str(g.get("type", ""))))

    strings_ = []
    for i, s in enumerate(obj.get("strings", [])):
        addr = parse_address(s.get("addr", ""), f"{source}: strings[{i}].addr")
        strings_.append(StringRecord(address=addr, literal=str(s.get("literal", ""))))

    known = (
        seen_entries
        | seen_blocks
        | seen_globals
        | {s.address for s in strings_}
    )
    xrefs = []
    for i, x in enumerate(obj.get("xrefs", [])):
        src = parse_address(x.get("from", ""), f"{source}: xrefs[{i}].from")
        dst = parse_address(x.get("to", ""), f"{source}: xrefs[{i}].to")
        kind = x.get("kind")
        if kind not in ("call", "data", "string"):
            raise SchemaViolation(f"{source}: xrefs[{i}].kind must be call, data, or string")
        if src not in known:
            raise DanglingXref(f"{source}: xrefs[{i}].from {format_address(src)} is unknown")
        if dst not in known:
            raise DanglingXref(f"{source}: xrefs[{i}].to {format_address(dst)} is unknown")
        xrefs.append(XrefRecord(from_address=src, to_address=dst, kind=kind))

    return BinaryArtifactMap(
        binary_id=obj["binary_id"],
        functions=tuple(functions),
        globals=tuple(globals_),
        strings=tuple(strings_),
        xrefs=tuple(xrefs),
    )


def artifact_map_to_obj(amap: BinaryArtifactMap) -> dict:
    return {
        "binary_id": amap.binary_id,
        "functions": [
            {
                "entry": format_address(f.entry_address),
                "name": f.name,
                "blocks": [
                    {"addr": format_address(b.address), "lines": list(b.text_lines)}
                    for b in f.blocks
                ],
            }
            for f in amap.functions
        ],
        "globals": [
            {"addr": format_address(g.address), "name": g.name, "type": g.type_name}
            for g in amap.globals
        ],
        "strings": [
            {"addr": format_address(s.address), "literal": s.literal} for s in amap.strings
        ],
        "xrefs": [
            {"from": format_address(x.from_address), "to": format_address(x.to_address), "kind": x.kind}
            for x in amap.xrefs
        ],
    }


def load_original_names(path: str | Path) -> dict[int, str]:
    """Entry address to original (unstripped) name, for friendlier output."""
    amap = import_artifact_map(path)
    return {f.entry_address: f.name for f in amap.functions}


# ---------------------------------------------------------------------------
# Symbol index
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SymbolIndex:
    """Sanitized symbol lookups at one point in time.

    `symbol_to_function` and `symbol_to_block` contain only discriminative
    symbols (occurring in exactly one function / block) that survive the
    stoplist. `global_names` and `display_names` track current artifact
    names for rename resolution and friendly rendering.
    """

    symbol_to_function: dict[str, int]
    symbol_to_block: dict[str, tuple[int, int]]
    stoplist_fingerprint: str
    global_names: dict[str, int] = field(default_factory=dict)
    display_names: dict[int, str] = field(default_factory=dict)
    global_display_names: dict[int, str] = field(default_factory=dict)

    def resolve_function(self, token_text: str) -> int | None:
        key = sanitize_symbol(token_text)
        return self.symbol_to_function.get(key) if key else None

    def resolve_global(self, token_text: str) -> int | None:
        key = sanitize_symbol(token_text)
        return self.global_names.get(key) if key else None

    def display_name(self, entry: int) -> str:
        return self.display_names.get(entry, format_address(entry))


class _NameState:
    """Mutable token-occurrence state the timeline replays renames over."""

    def __init__(self, amap: BinaryArtifactMap):
        self.function_tokens: dict[int, Counter] = {}
        self.block_tokens: dict[tuple[int, int], Counter] = {}
        self.display_names: dict[int, str] = {}
        self.global_names: dict[str, int] = {}
        self.global_display_names: dict[int, str] = {}
        for fn in amap.functions:
            self.display_names[fn.entry_address] = fn.name
            fn_counter: Counter = Counter()
            for blk in fn.blocks:
                blk_counter: Counter = Counter()
                for line in blk.text_lines:
                    for tok in tokenize_line(line):
                        key = sanitize_symbol(tok)
                        if key:
                            blk_counter[key] += 1
                fn_counter.update(blk_counter)
                self.block_tokens[(fn.entry_address, blk.address)] = blk_counter
            self.function_tokens[fn.entry_address] = fn_counter
        for g in amap.globals:
            key = sanitize_symbol(g.name)
            if key:
                self.global_names[key] = g.address
            self.global_display_names[g.address] = g.name

    def copy(self) -> "_NameState":
        dup = object.__new__(_NameState)
        dup.function_tokens = {k: Counter(v) for k, v in self.function_tokens.items()}
        dup.block_tokens = {k: Counter(v) for k, v in self.block_tokens.items()}
        dup.display_names = dict(self.display_names)
        dup.global_names = dict(self.global_names)
        dup.global_display_names = dict(self.global_display_names)
        return dup

    def _swap_key(self, counter: Counter, old: str, new: str) -> None:
        if old in counter:
            counter[new] += counter.pop(old)

    def contains_key(self, key: str) -> bool:
        return (
            key in self.global_names
            or any(key in c for c in self.function_tokens.values())
        )

    def apply(self, ev: "RenameEvent") -> None:
        old = sanitize_symbol(ev.old_name)
        new = sanitize_symbol(ev.new_name)
        if not old or not new:
            return
        if ev.scope == "local":
            entry = ev.entry
            if entry in self.function_tokens:
                self._swap_key(self.function_tokens[entry], old, new)
                for (fe, ba), counter in self.block_tokens.items():
                    if fe == entry:
                        self._swap_key(counter, old, new)
            return
        # Function and global names render everywhere they are referenced.
        for counter in self.function_tokens.values():
            self._swap_key(counter, old, new)
        for counter in self.block_tokens.values():
            self._swap_key(counter, old, new)
        if ev.scope == "function" and ev.entry is not None:
            self.display_names[ev.entry] = ev.new_name
        if ev.scope == "global":
            addr = self.global_names.pop(old, None)
            if addr is None and ev.entry is not None:
                addr = ev.entry
            if addr is not None:
                self.global_names[new] = addr
                self.global_display_names[addr] = ev.new_name


def _index_from_state(state: _NameState, stoplist: set[str], stoplist_fp: str) -> SymbolIndex:
    fn_occurrence: dict[str, set[int]] = {}
    for entry, counter in state.function_tokens.items():
        for key in counter:
            fn_occurrence.setdefault(key, set()).add(entry)
    blk_occurrence: dict[str, set[tuple[int, int]]] = {}
    for loc, counter in state.block_tokens.items():
        for key in counter:
            blk_occurrence.setdefault(key, set()).add(loc)
    symbol_to_function = {
        key: next(iter(entries))
        for key, entries in fn_occurrence.items()
        if len(entries) == 1 and key not in stoplist
    }
    symbol_to_block = {
        key: next(iter(locs))
        for key, locs in blk_occurrence.items()
        if len(locs) == 1 and key not in stoplist
    }
    return SymbolIndex(
        symbol_to_function=symbol_to_function,
        symbol_to_block=symbol_to_block,
        stoplist_fingerprint=stoplist_fp,
        global_names=dict(state.global_names),
        display_names=dict(state.display_names),
        global_display_names=dict(state.global_display_names),
    )


def stoplist_fingerprint(stoplist: set[str]) -> str:
    return sha256_hex("\n".join(sorted(stoplist)))[:16]


def build_symbol_index(amap: BinaryArtifactMap, stoplist: set[str] | None = None) -> SymbolIndex:
    """Symbol index of the map as imported (before any renames)."""
    stoplist = load_default_stoplist() if stoplist is None else {sanitize_symbol(s) for s in stoplist}
    stoplist.discard("")
    return _index_from_state(_NameState(amap), stoplist, stoplist_fingerprint(stoplist))


# ---------------------------------------------------------------------------
# Renames over time
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RenameEvent:
    t: Timestamp
    scope: str  # function | global | local
    old_name: str
    new_name: str
    entry: int | None = None  # renamed function / global address / enclosing function

    def __post_init__(self):
        if self.scope not in ("function", "global", "local"):
            raise SchemaViolation(f"rename scope must be function, global, or local, got {self.scope!r}")


class SymbolTimeline:
    """Base index plus a time-sorted list of renames.

    Views are built lazily and cached per number of applied renames;
    a view is an immutable snapshot safe for concurrent readers.
    """

    def __init__(self, amap: BinaryArtifactMap, stoplist: set[str] | None = None):
        self.amap = amap
        self._stoplist = (
            load_default_stoplist() if stoplist is None else {sanitize_symbol(s) for s in stoplist}
        )
        self._stoplist.discard("")
        self._stoplist_fp = stoplist_fingerprint(self._stoplist)
        self._base_state = _NameState(amap)
        self.renames: list[RenameEvent] = []
        self._states: list[_NameState] = [self._base_state]  # state after k renames
        self._views: dict[int, SymbolIndex] = {}

    @property
    def base(self) -> SymbolIndex:
        return self._view(0)

    def append_rename(self, ev: RenameEvent) -> None:
        if self.renames and ev.t < self.renames[-1].t:
            raise SchemaViolation("renames must be appended in time order")
        old_key = sanitize_symbol(ev.old_name)
        if not old_key or not self._states[-1].contains_key(old_key):
            raise SchemaViolation(f"rename old name {ev.old_name!r} not resolvable at t={ev.t}")
        state = self._states[-1].copy()
        state.apply(ev)
        self.renames.append(ev)
        self._states.append(state)

    def _view(self, k: int) -> SymbolIndex:
        if k not in self._views:
            self._views[k] = _index_from_state(self._states[k], self._stoplist, self._stoplist_fp)
        return self._views[k]

    def prewarm_views(self) -> None:
        """Materialize every view so concurrent readers only hit the cache."""
        for k in range(len(self.renames) + 1):
            self._view(k)

    def index_at(self, t: Timestamp) -> SymbolIndex:
        """Index reflecting every rename with event time <= t."""
        k = 0
        while k < len(self.renames) and self.renames[k].t <= t:
            k += 1
        return self._view(k)


def symbol_index_at(timeline: SymbolTimeline, t: Timestamp) -> SymbolIndex:
    return timeline.index_at(t)
