"""SMILES subset reader and canonical writer.

Supported: organic atoms C N O F, aromatic c n o, bracket atoms ``[X]``,
``[XH]``, ``[XHk]`` (X may also be H), bonds ``- = # :``, branches and ring
closures ``1``-``9`` / ``%nn``. Charges, isotopes, stereo marks, atom classes
and dots are rejected.
"""

from __future__ import annotations

from rlvae.chemgraph.aromatic import KekulizeError, kekulize, perceive_aromaticity
from rlvae.chemgraph.canon import canonical_ranks
from rlvae.chemgraph.graph import AROMATIC, DOUBLE, MAX_VALENCE, SINGLE, TRIPLE, GraphError, MolGraph

_BOND_SYMBOLS = {"-": SINGLE, "=": DOUBLE, "#": TRIPLE, ":": AROMATIC}
_ORGANIC = {"C": "C", "N": "N", "O": "O", "F": "F", "c": "C", "n": "N", "o": "O"}
_BRACKET_ELEMENTS = {"H", "C", "N", "O", "F", "c", "n", "o"}
_KNOWN_UNSUPPORTED = ("Cl", "Br", "B", "S", "P", "I", "s", "p", "b", "Si", "Se", "se", "as")


class SmilesError(ValueError):
    """SMILES rejected; ``reason`` is a short machine-readable category."""

    def __init__(self, message: str, position: int | None = None, reason: str = "syntax"):
        if position is not None:
            message = f"{message} at position {position}"
        super().__init__(message)
        self.position = position
        self.reason = reason


def strip_stereo(text: str) -> str:
    """Drop ``/``, ``\\`` and ``@`` marks."""
    return text.replace("/", "").replace("\\", "").replace("@", "")


def _parse_bracket(text: str, pos: int) -> tuple[str, bool, int, int]:
    end = text.find("]", pos)
    if end < 0:
        raise SmilesError("unterminated bracket atom", pos)
    body = text[pos + 1 : end]
    if not body:
        raise SmilesError("empty bracket atom", pos)
    if body[0].isdigit():
        raise SmilesError("isotopes are not supported", pos, reason="isotope")
    if "+" in body or "-" in body:
        raise SmilesError("formal charges are not supported", pos, reason="charge")
    if "@" in body:
        raise SmilesError("stereochemistry is not supported (use strip_stereo)", pos, reason="stereo")
    if ":" in body:
        raise SmilesError("atom classes are not supported", pos)
    sym = body[0]
    rest = body[1:]
    if rest[:1].islower() and sym.isupper():
        raise SmilesError(f"unsupported element {sym + rest[0]!r}", pos, reason="element")
    if sym not in _BRACKET_ELEMENTS:
        raise SmilesError(f"unsupported element {sym!r}", pos, reason="element")
    h = 0
    if rest:
        if rest[0] != "H":
            raise SmilesError(f"unexpected {rest!r} in bracket atom", pos)
        digits = rest[1:]
        if digits == "":
            h = 1
        elif digits.isdigit() and len(digits) == 1:
            h = int(digits)
        else:
            raise SmilesError(f"bad hydrogen count {rest!r}", pos)
    element = "H" if sym == "H" else _ORGANIC[sym]
    return element, sym.islower(), h, end + 1


def _tokenize_atoms(text: str):
    """Parse into raw atoms ``(element, aromatic, explicit_h)`` and bonds ``(i, j, symbol)``."""
    atoms: list[tuple[str, bool, int | None]] = []
    bonds: list[tuple[int, int, str | None]] = []
    bonded: set[tuple[int, int]] = set()
    rings: dict[int, tuple[int, str | None, int]] = {}
    branch: list[int] = []
    prev: int | None = None
    pending: str | None = None
    pending_pos = 0
    pos = 0
    n = len(text)

    def add_bond(i: int, j: int, sym: str | None, at: int) -> None:
        key = (min(i, j), max(i, j))
        if i == j:
            raise SmilesError("ring closure onto the same atom", at)
        if key in bonded:
            raise SmilesError("duplicate bond", at)
        bonded.add(key)
        bonds.append((i, j, sym))

    while pos < n:
        ch = text[pos]
        if ch in _BOND_SYMBOLS:
            if pending is not None:
                raise SmilesError("two consecutive bond symbols", pos)
            if prev is None:
                raise SmilesError("bond without a preceding atom", pos)
            pending, pending_pos = ch, pos
            pos += 1
        elif ch == "(":
            if prev is None or pending is not None:
                raise SmilesError("branch must follow an atom", pos)
            branch.append(prev)
            pos += 1
        elif ch == ")":
            if not branch:
                raise SmilesError("unmatched ')'", pos)
            if pending is not None:
                raise SmilesError("dangling bond before ')'", pos)
            prev = branch.pop()
            pos += 1
        elif ch.isdigit() or ch == "%":
            if prev is None:
                raise SmilesError("ring closure without an atom", pos)
            if ch == "%":
                num = text[pos + 1 : pos + 3]
                if len(num) != 2 or not num.isdigit():
                    raise SmilesError("bad %nn ring closure", pos)
                digit, step = int(num), 3
            else:
                digit, step = int(ch), 1
            if digit in rings:
                other, sym, open_pos = rings.pop(digit)
                if sym is not None and pending is not None and sym != pending:
                    raise SmilesError("conflicting ring-closure bond symbols", pos)
                add_bond(other, prev, pending if pending is not None else sym, pos)
            else:
                rings[digit] = (prev, pending, pos)
            pending = None
            pos += step
        elif ch in "/\\@":
            raise SmilesError("stereochemistry is not supported (use strip_stereo)", pos, reason="stereo")
        elif ch == ".":
            raise SmilesError("disconnected input ('.') is not supported", pos, reason="disconnected")
        elif ch == "[":
            element, arom, h, nxt = _parse_bracket(text, pos)
            atoms.append((element, arom, h))
            cur = len(atoms) - 1
            if prev is not None:
                add_bond(prev, cur, pending, pending_pos)
            pending = None
            prev = cur
            pos = nxt
        elif ch in _ORGANIC:
            for bad in _KNOWN_UNSUPPORTED:
                if text.startswith(bad, pos) and len(bad) > 1:
                    raise SmilesError(f"unsupported element {bad!r}", pos, reason="element")
            atoms.append((_ORGANIC[ch], ch.islower(), None))
            cur = len(atoms) - 1
            if prev is not None:
                add_bond(prev, cur, pending, pending_pos)
            pending = None
            prev = cur
            pos += 1
        elif ch.isalpha():
            raise SmilesError(f"unsupported element {ch!r}", pos, reason="element")
        elif ch in "+-":
            raise SmilesError("formal charges are not supported", pos, reason="charge")
        else:
            raise SmilesError(f"unexpected character {ch!r}", pos)
    if pending is not None:
        raise SmilesError("dangling bond at end of input", pending_pos)
    if branch:
        raise SmilesError("unclosed branch", n)
    if rings:
        digit, (_, _, open_pos) = next(iter(rings.items()))
        raise SmilesError(f"unmatched ring-closure digit {digit}", open_pos, reason="ring")
    return atoms, bonds


def parse_smiles(text: str, *, strip: bool = False) -> MolGraph:
    """Parse a SMILES string into a connected MolGraph (aromatic form kept)."""
    if strip:
        text = strip_stereo(text)
    text = text.strip()
    if not text:
        raise SmilesError("empty SMILES", 0)
    raw_atoms, raw_bonds = _tokenize_atoms(text)
    atoms = [e for e, _, _ in raw_atoms]
    bonds = []
    for i, j, sym in raw_bonds:
        if sym is None:
            order = AROMATIC if raw_atoms[i][1] and raw_atoms[j][1] else SINGLE
        else:
            order = _BOND_SYMBOLS[sym]
        bonds.append((i, j, order))
    other = [0] * len(atoms)
    arom = [0] * len(atoms)
    for i, j, o in bonds:
        for a in (i, j):
            if o == AROMATIC:
                arom[a] += 1
            else:
                other[a] += o
    hcounts = []
    for a, (element, is_arom, explicit_h) in enumerate(raw_atoms):
        cap = MAX_VALENCE[element]
        if is_arom and arom[a] == 0:
            raise SmilesError(f"atom {a} marked aromatic outside an aromatic ring", reason="kekulize")
        if arom[a] and not is_arom:
            raise SmilesError(f"aromatic bond on non-aromatic atom {a}", reason="kekulize")
        spare = cap - other[a] - arom[a]
        if explicit_h is not None:
            h = explicit_h
        elif arom[a]:
            h = spare - 1 if spare >= 1 else 0
        else:
            h = spare
        if h < 0 or spare < h:
            raise SmilesError(f"valence exceeded on atom {a} ({element})", reason="valence")
        hcounts.append(h)
    graph = MolGraph(atoms, bonds, hcounts, check=False)
    if not graph.is_connected():
        raise SmilesError("molecule is disconnected", reason="disconnected")
    try:
        kekulize(graph).validate()
        graph.validate()
    except KekulizeError as exc:
        raise SmilesError(str(exc), reason="kekulize") from None
    except GraphError as exc:
        raise SmilesError(str(exc), reason="valence") from None
    return graph


def _atom_symbol(g: MolGraph, a: int, arom: list[bool]) -> str:
    e = g.atoms[a]
    h = g.hcounts[a]
    if e == "H":
        return "[HH]" if h else "[H]"
    if arom[a]:
        if h and e == "N":
            return "[nH]"
        return e.lower()
    return e


def _bond_symbol(g: MolGraph, a: int, b: int, arom: list[bool]) -> str:
    o = g.adjacency[a][b]
    if o == DOUBLE:
        return "="
    if o == TRIPLE:
        return "#"
    if o == SINGLE and arom[a] and arom[b]:
        return "-"
    return ""


def write_smiles(g: MolGraph, ranks: list[int]) -> str:
    """Write ``g`` with a DFS that always prefers lower-ranked atoms."""
    n = g.n_atoms
    if n == 0:
        return ""
    adj = g.adjacency
    arom = [AROMATIC in nb.values() for nb in adj]
    nbrs = [sorted(adj[a], key=ranks.__getitem__) for a in range(n)]
    start = min(range(n), key=ranks.__getitem__)
    # Pass 1: DFS tree and ring-closure (back) edges.
    children: list[list[int]] = [[] for _ in range(n)]
    openings: list[list[int]] = [[] for _ in range(n)]
    closings: list[list[int]] = [[] for _ in range(n)]
    visited = [False] * n
    seen_ring: set[tuple[int, int]] = set()
    stack = [(start, -1, 0)]
    visited[start] = True
    while stack:
        a, parent, k = stack.pop()
        while k < len(nbrs[a]):
            b = nbrs[a][k]
            k += 1
            if b == parent:
                continue
            if visited[b]:
                key = (min(a, b), max(a, b))
                if key not in seen_ring:
                    seen_ring.add(key)
                    openings[b].append(a)
                    closings[a].append(b)
                continue
            visited[b] = True
            children[a].append(b)
            stack.append((a, parent, k))
            stack.append((b, a, 0))
            break
    # Pass 2: emit.
    out: list[str] = []
    free_digits = list(range(1, 100))
    digit_of: dict[tuple[int, int], int] = {}

    def ring_label(d: int) -> str:
        return str(d) if d < 10 else f"%{d:02d}"

    def emit(a: int) -> None:
        out.append(_atom_symbol(g, a, arom))
        released = []
        if closings[a]:
            for b in sorted(closings[a], key=lambda x: digit_of[(x, a)]):
                d = digit_of.pop((b, a))
                out.append(ring_label(d))
                released.append(d)
        if openings[a]:
            for b in sorted(openings[a], key=ranks.__getitem__):
                d = free_digits.pop(0)
                digit_of[(a, b)] = d
                out.append(_bond_symbol(g, a, b, arom) + ring_label(d))
        if released:
            free_digits.extend(released)
            free_digits.sort()
        kids = children[a]
        for idx, b in enumerate(kids):
            last = idx == len(kids) - 1
            if not last:
                out.append("(")
            out.append(_bond_symbol(g, a, b, arom))
            emit(b)
            if not last:
                out.append(")")

    emit(start)
    return "".join(out)


def canonicalize(g: MolGraph) -> MolGraph:
    """Kekulize then re-perceive aromaticity."""
    return perceive_aromaticity(g)


def write_canonical_smiles(g: MolGraph) -> str:
    """Canonical SMILES: invariant under atom relabeling and Kekulé choice."""
    if g.n_atoms == 0:
        return ""
    a = perceive_aromaticity(g)
    return write_smiles(a, canonical_ranks(a))


def canonical_smiles(text: str, *, strip: bool = False) -> str:
    return write_canonical_smiles(parse_smiles(text, strip=strip))
