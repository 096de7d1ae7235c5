"""Layer-2 context: co-changed files, structural dependencies, latest function change.

The version-control history is consumed through the :class:`Commit` value type
(hash, author date, message, per-file hunks, renames) so the backing store is
swappable: a JSONL file, an in-memory fixture, or ``git log`` parsing all feed
the same miners.
"""
from __future__ import annotations

import ast
import json
import subprocess
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .core import FunctionSpan


class DependencyParseError(ValueError):
    """Buggy-function source that does not parse; carries the error location."""

    def __init__(self, exc: SyntaxError):
        super().__init__(f"cannot parse source at line {exc.lineno}, column {exc.offset}: {exc.msg}")
        self.lineno = exc.lineno
        self.offset = exc.offset


@dataclass(frozen=True)
class Hunk:
    """One unified-diff hunk in old-file and new-file line coordinates."""

    old_start: int
    old_len: int
    new_start: int
    new_len: int
    lines: tuple[str, ...] = ()

    def header(self) -> str:
        return f"@@ -{self.old_start},{self.old_len} +{self.new_start},{self.new_len} @@"


@dataclass(frozen=True)
class Commit:
    """One commit of the abstract log: metadata, touched files, per-file hunks."""

    hash: str
    author_date: datetime
    message: str
    files: tuple[str, ...]
    hunks: Mapping[str, tuple[Hunk, ...]] = field(default_factory=dict)
    renames: Mapping[str, str] = field(default_factory=dict)  # new path -> old path


@dataclass(frozen=True)
class CoOccurrence:
    file_path: str
    co_commit_count: int

    def __post_init__(self) -> None:
        if self.co_commit_count < 1:
            raise ValueError("co-occurrence entries require at least one shared commit")


@dataclass(frozen=True)
class Definition:
    """A resolved function or class: dotted name, source text, defining file."""

    qualified_name: str
    source: str
    file_path: str


@dataclass(frozen=True)
class CalledDefinitions:
    """Resolved callee/reference definitions plus the names that could not be resolved."""

    entries: tuple[Definition, ...]
    unresolved: tuple[str, ...]


@dataclass(frozen=True)
class DependencySet:
    called_definitions: tuple[Definition, ...]
    caller_definitions: tuple[Definition, ...]

    def __post_init__(self) -> None:
        for entries in (self.called_definitions, self.caller_definitions):
            names = [d.qualified_name for d in entries]
            if len(names) != len(set(names)):
                raise ValueError("duplicate qualified names in a dependency list")


@dataclass(frozen=True)
class ChangeRecord:
    commit_hash: str
    author_date: datetime
    message: str
    function_diff: str


@dataclass(frozen=True)
class RepoContext:
    """The Layer-2 bundle handed to the prompt builder."""

    co_occurring: tuple[CoOccurrence, ...]
    dependencies: DependencySet
    latest_change: ChangeRecord | None
    unresolved_names: tuple[str, ...] = ()


def mine_co_occurring_files(
    history: Sequence[Commit], buggy_file: str, top_n: int = 5
) -> list[CoOccurrence]:
    """Files most frequently committed together with ``buggy_file``.

    Ranked by co-commit count descending, ties broken by ascending path; the
    buggy file itself is excluded, as are files that never co-occur.
    """
    if top_n < 0:
        raise ValueError("top_n must be non-negative")
    counts: Counter[str] = Counter()
    for commit in history:
        if buggy_file in commit.files:
            for path in commit.files:
                if path != buggy_file:
                    counts[path] += 1
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    return [CoOccurrence(file_path=path, co_commit_count=count) for path, count in ranked[:top_n]]


# --- import/name resolution -------------------------------------------------


@dataclass(frozen=True)
class ImportBinding:
    """One name bound by an import: local name -> (module, optional member)."""

    local_name: str
    module: str
    member: str | None = None


def module_name_for(file_path: str) -> str:
    """Dotted module name of a repo-relative ``.py`` path."""
    parts = list(Path(file_path).with_suffix("").parts)
    if parts and parts[-1] == "__init__":
        parts = parts[:-1]
    return ".".join(parts)


def _package_of(file_path: str | None) -> str:
    if not file_path:
        return ""
    module = module_name_for(file_path)
    if file_path.endswith("__init__.py"):
        return module
    return module.rpartition(".")[0]


def parse_import_bindings(
    import_statements: Iterable[str], *, package: str = ""
) -> list[ImportBinding]:
    """Bindings created by plain, from-, and aliased imports.

    ``package`` is the importing file's package, used to absolutize relative
    imports. Star imports bind nothing resolvable and are skipped.
    """
    bindings: list[ImportBinding] = []
    for statement in import_statements:
        try:
            tree = ast.parse(statement.strip())
        except SyntaxError:
            continue
        for node in ast.walk(tree):
            if isinstance(node, ast.Import):
                for alias in node.names:
                    if alias.asname:
                        bindings.append(ImportBinding(alias.asname, alias.name))
                    else:
                        top = alias.name.split(".")[0]
                        bindings.append(ImportBinding(top, top))
            elif isinstance(node, ast.ImportFrom):
                if node.level == 0:
                    base = node.module or ""
                else:
                    parts = package.split(".") if package else []
                    if node.level - 1 > 0:
                        parts = parts[: len(parts) - (node.level - 1)] if node.level - 1 <= len(parts) else []
                    base = ".".join(parts + ([node.module] if node.module else []))
                for alias in node.names:
                    if alias.name == "*":
                        continue
                    bindings.append(ImportBinding(alias.asname or alias.name, base, alias.name))
    return bindings


def _module_file(checkout: Path, dotted: str) -> Path | None:
    if not dotted:
        return None
    base = checkout.joinpath(*dotted.split("."))
    candidate = base.with_suffix(".py")
    if candidate.is_file():
        return candidate
    init = base / "__init__.py"
    if init.is_file():
        return init
    return None


def _definition_node(tree: ast.Module, path_chain: Sequence[str]) -> ast.AST | None:
    """Walk class nesting to the named def/class; None when any segment is missing."""
    body: Sequence[ast.stmt] = tree.body
    node: ast.AST | None = None
    for index, segment in enumerate(path_chain):
        node = None
        for candidate in body:
            if isinstance(candidate, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)):
                if candidate.name == segment:
                    node = candidate
                    break
        if node is None:
            return None
        if index + 1 < len(path_chain):
            if not isinstance(node, ast.ClassDef):
                return None
            body = node.body
    return node


def _node_source(file_lines: Sequence[str], node: ast.AST) -> str:
    first = node.lineno
    decorators = getattr(node, "decorator_list", [])
    if decorators:
        first = min(first, min(d.lineno for d in decorators))
    end = node.end_lineno if node.end_lineno is not None else node.lineno
    return "".join(file_lines[first - 1 : end])


def _read_lines(path: Path) -> list[str]:
    with path.open("r", encoding="utf-8", newline="") as handle:
        return handle.read().splitlines(keepends=True)


class _LocalNameCollector(ast.NodeVisitor):
    """Names bound inside the function body: params, assignments, loop targets, etc."""

    def __init__(self) -> None:
        self.names: set[str] = set()

    def _add_target(self, target: ast.expr) -> None:
        for node in ast.walk(target):
            if isinstance(node, ast.Name):
                self.names.add(node.id)

    def visit_FunctionDef(self, node: ast.FunctionDef) -> None:
        self.names.add(node.name)
        args = node.args
        for arg in [*args.posonlyargs, *args.args, *args.kwonlyargs]:
            self.names.add(arg.arg)
        if args.vararg:
            self.names.add(args.vararg.arg)
        if args.kwarg:
            self.names.add(args.kwarg.arg)
        self.generic_visit(node)

    visit_AsyncFunctionDef = visit_FunctionDef  # type: ignore[assignment]

    def visit_ClassDef(self, node: ast.ClassDef) -> None:
        self.names.add(node.name)
        self.generic_visit(node)

    def visit_Assign(self, node: ast.Assign) -> None:
        for target in node.targets:
            self._add_target(target)
        self.generic_visit(node)

    def visit_AugAssign(self, node: ast.AugAssign) -> None:
        self._add_target(node.target)
        self.generic_visit(node)

    def visit_AnnAssign(self, node: ast.AnnAssign) -> None:
        self._add_target(node.target)
        self.generic_visit(node)

    def visit_NamedExpr(self, node: ast.NamedExpr) -> None:
        self._add_target(node.target)
        self.generic_visit(node)

    def visit_For(self, node: ast.For) -> None:
        self._add_target(node.target)
        self.generic_visit(node)

    visit_AsyncFor = visit_For  # type: ignore[assignment]

    def visit_withitem(self, node: ast.withitem) -> None:
        if node.optional_vars is not None:
            self._add_target(node.optional_vars)
        self.generic_visit(node)

    def visit_ExceptHandler(self, node: ast.ExceptHandler) -> None:
        if node.name:
            self.names.add(node.name)
        self.generic_visit(node)

    def visit_comprehension(self, node: ast.comprehension) -> None:
        self._add_target(node.target)
        self.generic_visit(node)


def _attribute_chain(node: ast.expr) -> list[str] | None:
    """``a.b.c`` -> ["a", "b", "c"]; None when the base is not a plain name."""
    parts: list[str] = []
    current = node
    while isinstance(current, ast.Attribute):
        parts.append(current.attr)
        current = current.value
    if isinstance(current, ast.Name):
        parts.append(current.id)
        parts.reverse()
        return parts
    return None


def _collect_references(tree: ast.AST) -> list[tuple[str, ...]]:
    """Call targets plus bare-name loads, in first-occurrence order."""
    references: list[tuple[str, ...]] = []
    seen: set[tuple[str, ...]] = set()

    def add(chain: Sequence[str]) -> None:
        key = tuple(chain)
        if key not in seen:
            seen.add(key)
            references.append(key)

    for node in ast.walk(tree):
        if isinstance(node, ast.Call):
            chain = _attribute_chain(node.func)
            if chain:
                add(chain)
        elif isinstance(node, ast.Name) and isinstance(node.ctx, ast.Load):
            add((node.id,))
    return references


class _Resolver:
    """Resolves dotted references to in-repo definitions through import bindings."""

    def __init__(self, checkout: Path, bindings: Sequence[ImportBinding]):
        self.checkout = checkout
        self.bindings = {b.local_name: b for b in bindings}
        self._tree_cache: dict[Path, tuple[ast.Module, list[str]]] = {}

    def _load(self, path: Path) -> tuple[ast.Module, list[str]]:
        if path not in self._tree_cache:
            lines = _read_lines(path)
            self._tree_cache[path] = (ast.parse("".join(lines)), lines)
        return self._tree_cache[path]

    def _definition_in(self, module: str, path_chain: Sequence[str]) -> Definition | None:
        module_path = _module_file(self.checkout, module)
        if module_path is None or not path_chain:
            return None
        try:
            tree, lines = self._load(module_path)
        except SyntaxError:
            return None
        node = _definition_node(tree, path_chain)
        if node is None:
            return None
        qualified = ".".join([module, *path_chain])
        return Definition(
            qualified_name=qualified,
            source=_node_source(lines, node),
            file_path=str(module_path.relative_to(self.checkout)),
        )

    def resolve(self, module: str, chain: Sequence[str]) -> Definition | None:
        """Find ``chain`` under ``module``, absorbing leading segments that are submodules."""
        for split in range(len(chain) - 1, -1, -1):
            candidate_module = ".".join([module, *chain[:split]]) if split else module
            if _module_file(self.checkout, candidate_module) is None:
                continue
            definition = self._definition_in(candidate_module, chain[split:])
            if definition is not None:
                return definition
        return None

    def resolve_binding(self, binding: ImportBinding, rest: Sequence[str]) -> Definition | None:
        if binding.member is None:
            return self.resolve(binding.module, rest) if rest else None
        # "from M import x": x may be a def in M or the submodule M.x
        definition = self.resolve(binding.module, [binding.member, *rest])
        if definition is not None:
            return definition
        return self.resolve(f"{binding.module}.{binding.member}", rest) if rest else None


def extract_called_definitions(
    buggy_source: str,
    imports: Sequence[str],
    checkout: str | Path,
    *,
    source_file: str | None = None,
) -> CalledDefinitions:
    """Definitions of functions and classes referenced by the buggy function.

    Resolution goes through the file's import bindings (plain, from-, aliased)
    and same-file top-level definitions; attribute chains resolve on their
    leftmost resolvable segment. Locally bound names are ignored; everything
    else that cannot be resolved in-repo (builtins, third-party modules) lands
    in the unresolved side list.
    """
    checkout = Path(checkout)
    try:
        tree = ast.parse(_dedent(buggy_source))
    except SyntaxError as exc:
        raise DependencyParseError(exc) from exc

    locals_collector = _LocalNameCollector()
    locals_collector.visit(tree)
    local_names = locals_collector.names

    package = _package_of(source_file)
    resolver = _Resolver(checkout, parse_import_bindings(imports, package=package))

    same_file_defs: dict[str, Definition] = {}
    if source_file is not None:
        source_path = checkout / source_file
        if source_path.is_file():
            module = module_name_for(source_file)
            try:
                file_tree, file_lines = resolver._load(source_path)
            except SyntaxError:
                file_tree, file_lines = None, []
            if file_tree is not None:
                for node in file_tree.body:
                    if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)):
                        same_file_defs[node.name] = Definition(
                            qualified_name=f"{module}.{node.name}" if module else node.name,
                            source=_node_source(file_lines, node),
                            file_path=source_file,
                        )

    entries: list[Definition] = []
    entry_names: set[str] = set()
    unresolved: list[str] = []
    unresolved_seen: set[str] = set()

    def add_entry(definition: Definition) -> None:
        if definition.qualified_name not in entry_names:
            entry_names.add(definition.qualified_name)
            entries.append(definition)

    def add_unresolved(dotted: str) -> None:
        if dotted not in unresolved_seen:
            unresolved_seen.add(dotted)
            unresolved.append(dotted)

    for chain in _collect_references(tree):
        base = chain[0]
        if base in local_names:
            continue
        if len(chain) == 1:
            if base in same_file_defs:
                add_entry(same_file_defs[base])
                continue
            binding = resolver.bindings.get(base)
            if binding is not None:
                if binding.member is None:
                    continue  # bare module reference, nothing to extract
                definition = resolver.resolve_binding(binding, [])
                if definition is not None:
                    add_entry(definition)
                else:
                    add_unresolved(f"{binding.module}.{binding.member}")
                continue
            add_unresolved(base)  # builtins and unknown globals end up here
        else:
            binding = resolver.bindings.get(base)
            if binding is None:
                continue  # attribute chain on a local/unknown object
            definition = resolver.resolve_binding(binding, list(chain[1:]))
            if definition is not None:
                add_entry(definition)
            else:
                prefix = binding.module if binding.member is None else f"{binding.module}.{binding.member}"
                add_unresolved(".".join([prefix, *chain[1:]]))
    return CalledDefinitions(entries=tuple(entries), unresolved=tuple(unresolved))


def _dedent(source: str) -> str:
    import textwrap

    return textwrap.dedent(source)


def _binding_target(binding: ImportBinding, chain: Sequence[str]) -> str | None:
    """Dotted name a call chain refers to once its base alias is substituted."""
    rest = list(chain[1:])
    if binding.member is None:
        if not rest:
            return None
        return ".".join([binding.module, *rest])
    return ".".join([binding.module, binding.member, *rest])


def find_callers(
    qualified_name: str,
    co_occurring: Sequence[CoOccurrence],
    checkout: str | Path,
) -> list[Definition]:
    """Definitions inside the co-occurring files that invoke the buggy function.

    A definition qualifies when it textually calls the terminal name and that
    call resolves to ``qualified_name`` through the file's imports. The search
    scope is exactly the co-occurring files.
    """
    checkout = Path(checkout)
    terminal = qualified_name.rpartition(".")[2]
    callers: list[Definition] = []
    seen: set[str] = set()
    for occurrence in co_occurring:
        path = checkout / occurrence.file_path
        if path.suffix != ".py" or not path.is_file():
            continue
        lines = _read_lines(path)
        try:
            tree = ast.parse("".join(lines))
        except SyntaxError:
            continue
        module = module_name_for(occurrence.file_path)
        bindings = {
            b.local_name: b
            for b in parse_import_bindings(
                [ast.unparse(node) for node in ast.walk(tree) if isinstance(node, (ast.Import, ast.ImportFrom))],
                package=_package_of(occurrence.file_path),
            )
        }

        def invokes_target(definition_node: ast.AST) -> bool:
            for node in ast.walk(definition_node):
                if not isinstance(node, ast.Call):
                    continue
                chain = _attribute_chain(node.func)
                if not chain or chain[-1] != terminal:
                    continue
                binding = bindings.get(chain[0])
                if binding is None:
                    continue
                if _binding_target(binding, chain) == qualified_name:
                    return True
            return False

        def walk_definitions(body: Sequence[ast.stmt], prefix: str) -> None:
            for node in body:
                if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
                    qualified = f"{prefix}.{node.name}" if prefix else node.name
                    if invokes_target(node) and qualified not in seen:
                        seen.add(qualified)
                        callers.append(
                            Definition(
                                qualified_name=qualified,
                                source=_node_source(lines, node),
                                file_path=occurrence.file_path,
                            )
                        )
                elif isinstance(node, ast.ClassDef):
                    walk_definitions(node.body, f"{prefix}.{node.name}" if prefix else node.name)

        walk_definitions(tree.body, module)
    return callers


# --- latest change ------------------------------------------------------------


def _hunk_overlaps(hunk: Hunk, start: int, end: int) -> bool:
    if hunk.new_len > 0:
        return not (hunk.new_start + hunk.new_len - 1 < start or hunk.new_start > end)
    # pure deletion: sits between new_start and new_start + 1
    return start - 1 <= hunk.new_start <= end


def latest_change(
    history: Sequence[Commit], span: FunctionSpan, fix_commit: str
) -> ChangeRecord | None:
    """Most recent commit strictly before the fix whose hunks overlap the span.

    The span's line range is walked backward through intervening diffs with
    hunk-offset arithmetic; a rename of the span's file terminates the scan
    (no rename detection, matching the function-granular framing).
    """
    cut = len(history)
    fix_date: datetime | None = None
    for index, commit in enumerate(history):
        if commit.hash == fix_commit:
            cut = index
            fix_date = commit.author_date
            break
    eligible = [
        commit
        for commit in history[:cut]
        if fix_date is None or commit.author_date < fix_date
    ]
    start, end = span.start_line, span.end_line
    current_path = span.file_path
    for commit in reversed(eligible):
        hunks = tuple(commit.hunks.get(current_path, ()))
        overlapping = [h for h in hunks if _hunk_overlaps(h, start, end)]
        if overlapping:
            diff_lines = []
            for hunk in overlapping:
                diff_lines.append(hunk.header())
                diff_lines.extend(hunk.lines)
            return ChangeRecord(
                commit_hash=commit.hash,
                author_date=commit.author_date,
                message=commit.message,
                function_diff="\n".join(diff_lines),
            )
        if current_path in commit.renames:
            return None  # rename terminates the backward scan
        # shift the tracked range into this commit's pre-image coordinates
        delta = sum(
            h.old_len - h.new_len
            for h in hunks
            if h.new_start + max(h.new_len, 1) - 1 < start
        )
        start += delta
        end += delta
        if start < 1:
            return None
    return None


# --- commit log ingestion -----------------------------------------------------


def _parse_date(value: str) -> datetime:
    parsed = datetime.fromisoformat(value.replace("Z", "+00:00"))
    if parsed.tzinfo is None:
        parsed = parsed.replace(tzinfo=timezone.utc)
    return parsed


def load_commit_log(path: str | Path) -> list[Commit]:
    """Commit log from a JSONL file, ordered by author date ascending."""
    commits: list[Commit] = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            raw = json.loads(line)
            hunks = {
                file_path: tuple(
                    Hunk(
                        old_start=h["old_start"],
                        old_len=h["old_len"],
                        new_start=h["new_start"],
                        new_len=h["new_len"],
                        lines=tuple(h.get("lines", ())),
                    )
                    for h in file_hunks
                )
                for file_path, file_hunks in raw.get("hunks", {}).items()
            }
            commits.append(
                Commit(
                    hash=raw["hash"],
                    author_date=_parse_date(raw["author_date"]),
                    message=raw["message"],
                    files=tuple(raw["files"]),
                    hunks=hunks,
                    renames=dict(raw.get("renames", {})),
                )
            )
    commits.sort(key=lambda c: c.author_date)
    return commits


def read_git_log(repo_dir: str | Path) -> list[Commit]:
    """Commit log of a local git repository via ``git log`` (first-parent order).

    Hunk coordinates come from zero-context unified diffs; renames are taken
    from git's rename summary lines.
    """
    fmt = "%H%x1f%aI%x1f%s"
    output = subprocess.run(
        ["git", "log", "--reverse", "--first-parent", f"--pretty=format:{fmt}", "--unified=0", "-p"],
        cwd=str(repo_dir),
        check=True,
        capture_output=True,
        text=True,
    ).stdout
    commits: list[Commit] = []
    current: dict | None = None
    current_file: str | None = None

    def flush() -> None:
        if current is not None:
            commits.append(
                Commit(
                    hash=current["hash"],
                    author_date=current["date"],
                    message=current["message"],
                    files=tuple(sorted(current["hunks"].keys() | current["renames"].keys())),
                    hunks={k: tuple(v) for k, v in current["hunks"].items()},
                    renames=current["renames"],
                )
            )

    pending_hunk: list | None = None

    def close_hunk() -> None:
        nonlocal pending_hunk
        if pending_hunk is not None and current is not None and current_file is not None:
            header, body = pending_hunk
            current["hunks"].setdefault(current_file, []).append(
                Hunk(
                    old_start=header[0],
                    old_len=header[1],
                    new_start=header[2],
                    new_len=header[3],
                    lines=tuple(body),
                )
            )
        pending_hunk = None

    for line in output.splitlines():
        if "\x1f" in line and not line.startswith(("+", "-", "@", " ")):
            close_hunk()
            flush()
            commit_hash, date, message = line.split("\x1f", 2)
            current = {
                "hash": commit_hash,
                "date": _parse_date(date),
                "message": message,
                "hunks": {},
                "renames": {},
            }
            current_file = None
        elif current is None:
            continue
        elif line.startswith("diff --git "):
            close_hunk()
            # "diff --git a/old b/new"; take the post-image path
            current_file = line.split(" b/", 1)[1] if " b/" in line else None
            if current_file is not None:
                current["hunks"].setdefault(current_file, [])
        elif line.startswith("rename from "):
            current["_rename_from"] = line[len("rename from ") :]
        elif line.startswith("rename to "):
            current["renames"][line[len("rename to ") :]] = current.pop("_rename_from", "")
        elif line.startswith("@@") and current_file is not None:
            close_hunk()
            header = line.split("@@")[1].strip()
            old_part, new_part = header.split(" ")
            old_start, old_len = _parse_range(old_part[1:])
            new_start, new_len = _parse_range(new_part[1:])
            pending_hunk = [(old_start, old_len, new_start, new_len), []]
        elif pending_hunk is not None and line.startswith(("+", "-", " ")) and not line.startswith(("+++", "---")):
            pending_hunk[1].append(line)
    close_hunk()
    flush()
    commits.sort(key=lambda c: c.author_date)
    return commits


def _parse_range(spec: str) -> tuple[int, int]:
    if "," in spec:
        start, length = spec.split(",")
        return int(start), int(length)
    return int(spec), 1
