"""SMILES parsing, circular fingerprints and structure edits for repeating units.

Only the subset of SMILES needed for polymer repeating units is understood:
organic-subset and bracket atoms, lowercase aromatic atoms, ``- = # :`` bonds,
branches, ring closures (``0-9`` and ``%nn``) and the ``*`` attachment point.
Stereo marks ``/`` and ``\\`` are read as plain single bonds.
"""

from __future__ import annotations

import enum
import functools
import math
import struct
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Literal

import numpy as np

__all__ = [
    "Atom",
    "Bond",
    "BondOrder",
    "Molecule",
    "Fingerprint",
    "SmilesError",
    "EmptyInput",
    "UnclosedBranch",
    "UnpairedRingClosure",
    "UnknownElement",
    "WidthMismatch",
    "IndexOutOfRange",
    "EmptyResult",
    "parse_smiles",
    "hydrogen_count",
    "atom_invariants",
    "ecfp_fingerprint",
    "fingerprint_smiles",
    "explain_bits",
    "tanimoto",
    "delete_atoms",
    "canonical_pair_order",
    "fnv1a64",
]

WILDCARD = "*"

# fmt: off
_ELEMENTS = (
    "H He Li Be B C N O F Ne Na Mg Al Si P S Cl Ar K Ca Sc Ti V Cr Mn Fe Co Ni Cu Zn "
    "Ga Ge As Se Br Kr Rb Sr Y Zr Nb Mo Tc Ru Rh Pd Ag Cd In Sn Sb Te I Xe Cs Ba La Ce "
    "Pr Nd Pm Sm Eu Gd Tb Dy Ho Er Tm Yb Lu Hf Ta W Re Os Ir Pt Au Hg Tl Pb Bi Po At Rn "
    "Fr Ra Ac Th Pa U Np Pu Am Cm Bk Cf Es Fm Md No Lr Rf Db Sg Bh Hs Mt Ds Rg Cn Nh Fl "
    "Mc Lv Ts Og"
).split()
# fmt: on
ATOMIC_NUMBER = {sym: z for z, sym in enumerate(_ELEMENTS, start=1)}
ATOMIC_NUMBER[WILDCARD] = 0

_ORGANIC = ("Cl", "Br", "B", "C", "N", "O", "P", "S", "F", "I")
_AROMATIC_ORGANIC = ("b", "c", "n", "o", "p", "s")
_AROMATIC_BRACKET = ("se", "as", "b", "c", "n", "o", "p", "s")

# Allowed valences, lowest first; the first one that fits the bond sum wins.
_VALENCES = {
    "B": (3,),
    "C": (4,),
    "N": (3, 5),
    "O": (2,),
    "P": (3, 5),
    "S": (2, 4, 6),
    "F": (1,),
    "Cl": (1,),
    "Br": (1,),
    "I": (1,),
}


class SmilesError(ValueError):
    """Raised when a SMILES string cannot be parsed; ``offset`` is the character index."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class EmptyInput(SmilesError):
    pass


class UnclosedBranch(SmilesError):
    pass


class UnpairedRingClosure(SmilesError):
    pass


class UnknownElement(SmilesError):
    pass


class WidthMismatch(ValueError):
    pass


class IndexOutOfRange(IndexError):
    pass


class EmptyResult(ValueError):
    pass


class BondOrder(enum.IntEnum):
    SINGLE = 1
    DOUBLE = 2
    TRIPLE = 3
    AROMATIC = 4

    @property
    def valence_contribution(self) -> float:
        return 1.5 if self is BondOrder.AROMATIC else float(self.value)


_BOND_SYMBOLS = {
    "-": BondOrder.SINGLE,
    "/": BondOrder.SINGLE,
    "\\": BondOrder.SINGLE,
    "=": BondOrder.DOUBLE,
    "#": BondOrder.TRIPLE,
    ":": BondOrder.AROMATIC,
}


@dataclass(frozen=True)
class Atom:
    element: str
    aromatic: bool = False
    formal_charge: int = 0
    explicit_h: int | None = None
    ring_member: bool = False
    degree: int = 0

    @property
    def is_wildcard(self) -> bool:
        return self.element == WILDCARD

    @property
    def atomic_number(self) -> int:
        return ATOMIC_NUMBER[self.element]


@dataclass(frozen=True)
class Bond:
    a: int
    b: int
    order: BondOrder


@dataclass(frozen=True)
class Molecule:
    atoms: tuple[Atom, ...]
    bonds: tuple[Bond, ...]
    source_text: str = ""

    def __post_init__(self):
        n = len(self.atoms)
        seen = set()
        degree = [0] * n
        for bond in self.bonds:
            if not (0 <= bond.a < n and 0 <= bond.b < n) or bond.a == bond.b:
                raise ValueError(f"bond {bond} references invalid atoms")
            key = frozenset((bond.a, bond.b))
            if key in seen:
                raise ValueError(f"duplicate bond between atoms {bond.a} and {bond.b}")
            seen.add(key)
            if bond.order is BondOrder.AROMATIC and not (
                self.atoms[bond.a].aromatic and self.atoms[bond.b].aromatic
            ):
                raise ValueError(f"aromatic bond between non-aromatic atoms {bond.a}-{bond.b}")
            degree[bond.a] += 1
            degree[bond.b] += 1
        for i, atom in enumerate(self.atoms):
            if atom.degree != degree[i]:
                raise ValueError(f"atom {i} degree {atom.degree} != {degree[i]} incident bonds")
            if atom.is_wildcard and (atom.formal_charge or atom.aromatic):
                raise ValueError("attachment points carry no charge and are never aromatic")

    def __len__(self) -> int:
        return len(self.atoms)

    def neighbors(self, i: int) -> list[tuple[int, BondOrder]]:
        return self._adjacency[i]

    @functools.cached_property
    def _adjacency(self) -> list[list[tuple[int, BondOrder]]]:
        adj: list[list[tuple[int, BondOrder]]] = [[] for _ in self.atoms]
        for bond in self.bonds:
            adj[bond.a].append((bond.b, bond.order))
            adj[bond.b].append((bond.a, bond.order))
        return adj


def _ring_flags(n: int, bonds: list[Bond]) -> list[bool]:
    """An atom is a ring member iff one of its bonds is not a bridge."""
    adj: list[list[int]] = [[] for _ in range(n)]
    for k, bond in enumerate(bonds):
        adj[bond.a].append(k)
        adj[bond.b].append(k)
    flags = [False] * n
    for k, bond in enumerate(bonds):
        # bond k lies on a cycle iff b is reachable from a without it
        stack, seen = [bond.a], {bond.a}
        found = False
        while stack and not found:
            u = stack.pop()
            for e in adj[u]:
                if e == k:
                    continue
                other = bonds[e].b if bonds[e].a == u else bonds[e].a
                if other == bond.b:
                    found = True
                    break
                if other not in seen:
                    seen.add(other)
                    stack.append(other)
        if found:
            flags[bond.a] = flags[bond.b] = True
    return flags


def _assemble(protos: list[Atom], bonds: list[Bond], source: str) -> Molecule:
    degree = [0] * len(protos)
    for bond in bonds:
        degree[bond.a] += 1
        degree[bond.b] += 1
    rings = _ring_flags(len(protos), bonds)
    atoms = tuple(
        Atom(
            element=p.element,
            aromatic=p.aromatic,
            formal_charge=p.formal_charge,
            explicit_h=p.explicit_h,
            ring_member=rings[i],
            degree=degree[i],
        )
        for i, p in enumerate(protos)
    )
    return Molecule(atoms=atoms, bonds=tuple(bonds), source_text=source)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.atoms: list[Atom] = []
        self.bonds: list[Bond] = []
        self.pairs: set[frozenset[int]] = set()
        # ring label -> (atom index, bond symbol or None, offset of the label)
        self.rings: dict[int, tuple[int, str | None, int]] = {}

    def parse(self) -> Molecule:
        text = self.text
        prev: int | None = None
        pending_bond: tuple[str, int] | None = None
        branches: list[tuple[int | None, int]] = []

        while self.pos < len(text):
            ch = text[self.pos]
            start = self.pos
            if ch == "(":
                if prev is None or pending_bond is not None:
                    raise SmilesError("branch must follow an atom", start)
                branches.append((prev, start))
                self.pos += 1
            elif ch == ")":
                if not branches:
                    raise UnclosedBranch("unmatched ')'", start)
                if pending_bond is not None:
                    raise SmilesError("bond symbol before ')'", pending_bond[1])
                prev, _ = branches.pop()
                self.pos += 1
            elif ch in _BOND_SYMBOLS:
                if prev is None or pending_bond is not None:
                    raise SmilesError(f"unexpected bond symbol {ch!r}", start)
                pending_bond = (ch, start)
                self.pos += 1
            elif ch == ".":
                if prev is None or pending_bond is not None:
                    raise SmilesError("unexpected '.'", start)
                prev = None
                self.pos += 1
            elif ch.isdigit() or ch == "%":
                if prev is None:
                    raise SmilesError("ring closure must follow an atom", start)
                label = self._ring_label()
                self._ring(prev, label, pending_bond[0] if pending_bond else None, start)
                pending_bond = None
            else:
                idx = self._atom()
                if prev is not None:
                    self._bond(prev, idx, pending_bond[0] if pending_bond else None, start)
                elif pending_bond is not None:
                    raise SmilesError("bond symbol without a preceding atom", pending_bond[1])
                pending_bond = None
                prev = idx

        if pending_bond is not None:
            raise SmilesError("dangling bond symbol", pending_bond[1])
        if branches:
            raise UnclosedBranch("unclosed '('", branches[-1][1])
        if self.rings:
            first = min(offset for _, _, offset in self.rings.values())
            raise UnpairedRingClosure("unpaired ring closure", first)
        return _assemble(self.atoms, self.bonds, text)

    def _ring_label(self) -> int:
        text = self.text
        if text[self.pos] == "%":
            digits = text[self.pos + 1 : self.pos + 3]
            if len(digits) != 2 or not digits.isdigit():
                raise SmilesError("'%' must be followed by two digits", self.pos)
            self.pos += 3
            return int(digits)
        self.pos += 1
        return int(text[self.pos - 1])

    def _ring(self, atom: int, label: int, symbol: str | None, offset: int) -> None:
        if label not in self.rings:
            self.rings[label] = (atom, symbol, offset)
            return
        other, other_symbol, _ = self.rings.pop(label)
        if symbol and other_symbol and _BOND_SYMBOLS[symbol] != _BOND_SYMBOLS[other_symbol]:
            raise SmilesError("conflicting ring-closure bond symbols", offset)
        self._bond(other, atom, symbol or other_symbol, offset)

    def _bond(self, a: int, b: int, symbol: str | None, offset: int) -> None:
        key = frozenset((a, b))
        if a == b or key in self.pairs:
            raise SmilesError("duplicate or self bond", offset)
        if symbol is None:
            aromatic = self.atoms[a].aromatic and self.atoms[b].aromatic
            order = BondOrder.AROMATIC if aromatic else BondOrder.SINGLE
        else:
            order = _BOND_SYMBOLS[symbol]
            if order is BondOrder.AROMATIC and not (self.atoms[a].aromatic and self.atoms[b].aromatic):
                raise SmilesError("aromatic bond between non-aromatic atoms", offset)
        self.pairs.add(key)
        self.bonds.append(Bond(a, b, order))

    def _atom(self) -> int:
        text, start = self.text, self.pos
        ch = text[start]
        if ch == "[":
            atom = self._bracket_atom()
        elif ch == WILDCARD:
            self.pos += 1
            atom = Atom(WILDCARD)
        else:
            for sym in _ORGANIC:
                if text.startswith(sym, start):
                    self.pos += len(sym)
                    atom = Atom(sym)
                    break
            else:
                if ch in _AROMATIC_ORGANIC:
                    self.pos += 1
                    atom = Atom(ch.upper(), aromatic=True)
                else:
                    raise UnknownElement(f"unknown element or symbol {ch!r}", start)
        self.atoms.append(atom)
        return len(self.atoms) - 1

    def _bracket_atom(self) -> Atom:
        text, open_at = self.text, self.pos
        close = text.find("]", open_at)
        if close < 0:
            raise SmilesError("unclosed '['", open_at)
        body = text[open_at + 1 : close]
        i = 0
        if body[:1].isdigit():
            raise SmilesError("isotopes are not supported", open_at + 1)
        if body.startswith(WILDCARD):
            symbol, aromatic, i = WILDCARD, False, 1
        else:
            symbol = None
            for sym in _AROMATIC_BRACKET:
                if body.startswith(sym):
                    symbol, aromatic, i = sym.capitalize(), True, len(sym)
                    break
            if symbol is None:
                two, one = body[:2], body[:1]
                if len(two) == 2 and two[1].islower() and two in ATOMIC_NUMBER:
                    symbol = two
                elif one in ATOMIC_NUMBER and one != WILDCARD:
                    symbol = one
                else:
                    raise UnknownElement(f"unknown element in {body!r}", open_at + 1)
                aromatic, i = False, len(symbol)
        if body[i : i + 1] == "@":
            raise SmilesError("stereochemistry is not supported", open_at + 1 + i)
        h = 0
        if body[i : i + 1] == "H":
            i += 1
            j = i
            while j < len(body) and body[j].isdigit():
                j += 1
            h = int(body[i:j]) if j > i else 1
            i = j
        charge = 0
        if body[i : i + 1] in ("+", "-"):
            sign = 1 if body[i] == "+" else -1
            j = i + 1
            while j < len(body) and body[j].isdigit():
                j += 1
            if j > i + 1:
                charge = sign * int(body[i + 1 : j])
            else:
                while j < len(body) and body[j] == body[i]:
                    j += 1
                charge = sign * (j - i)
            i = j
        if i != len(body):
            raise SmilesError(f"unsupported bracket atom syntax {body!r}", open_at + 1 + i)
        if symbol == WILDCARD and (charge or h):
            raise SmilesError("attachment point cannot carry charge or hydrogens", open_at)
        self.pos = close + 1
        return Atom(symbol, aromatic=aromatic, formal_charge=charge, explicit_h=h)


def parse_smiles(text: str) -> Molecule:
    """Parse ``text`` into a :class:`Molecule`.

    >>> m = parse_smiles("*CC*")
    >>> len(m.atoms), len(m.bonds)
    (4, 3)
    """
    if not text or not text.strip():
        raise EmptyInput("empty SMILES", 0)
    return _Parser(text).parse()


def hydrogen_count(m: Molecule, i: int) -> int:
    """Explicit H for bracket atoms, default-valence implicit H otherwise."""
    atom = m.atoms[i]
    if atom.explicit_h is not None:
        return atom.explicit_h
    if atom.is_wildcard or atom.element not in _VALENCES:
        return 0
    used = math.ceil(sum(order.valence_contribution for _, order in m.neighbors(i)) - 1e-9)
    for valence in _VALENCES[atom.element]:
        if valence >= used:
            return valence - used
    return 0


FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * FNV_PRIME) & _MASK64
    return h


def atom_invariants(m: Molecule) -> list[int]:
    """Initial 64-bit identifier for every atom.

    Hashes ``(atomic number, degree, formal charge, H count, ring flag,
    aromatic flag)`` packed as little-endian int64; the attachment point
    uses atomic number 0.
    """
    codes = []
    for i, atom in enumerate(m.atoms):
        payload = struct.pack(
            "<6q",
            atom.atomic_number,
            atom.degree,
            atom.formal_charge,
            hydrogen_count(m, i),
            int(atom.ring_member),
            int(atom.aromatic),
        )
        codes.append(fnv1a64(payload))
    return codes


def _environment_codes(m: Molecule, radius: int) -> list[list[int]]:
    """Per-round identifier lists; entry ``[r][i]`` is atom i's code after r rounds."""
    rounds = [atom_invariants(m)]
    for r in range(1, radius + 1):
        prev = rounds[-1]
        nxt = []
        for i in range(len(m.atoms)):
            pairs = sorted((int(order), prev[j]) for j, order in m.neighbors(i))
            payload = struct.pack("<qQ", r, prev[i]) + b"".join(struct.pack("<qQ", o, c) for o, c in pairs)
            nxt.append(fnv1a64(payload))
        rounds.append(nxt)
    return rounds


@dataclass(frozen=True, eq=False)
class Fingerprint:
    bits: np.ndarray
    width: int = 2048
    radius: int = 2

    def __post_init__(self):
        if self.width <= 0 or self.width & (self.width - 1):
            raise ValueError(f"fingerprint width must be a power of two, got {self.width}")
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.shape != (self.width,):
            raise ValueError(f"bit vector shape {bits.shape} != ({self.width},)")
        bits = bits.copy()
        bits.flags.writeable = False
        object.__setattr__(self, "bits", bits)

    def __eq__(self, other):
        if not isinstance(other, Fingerprint):
            return NotImplemented
        return self.width == other.width and bool(np.array_equal(self.bits, other.bits))

    def __hash__(self):
        return hash((self.width, self.bits.tobytes()))

    def on_bits(self) -> list[int]:
        return np.flatnonzero(self.bits).tolist()

    @property
    def popcount(self) -> int:
        return int(self.bits.sum())

    @classmethod
    def from_on_bits(cls, on: Iterable[int], width: int = 2048, radius: int = 2) -> Fingerprint:
        bits = np.zeros(width, dtype=np.uint8)
        bits[list(on)] = 1
        return cls(bits, width, radius)


def _check_params(radius: int, width: int) -> None:
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    if width <= 0 or width & (width - 1):
        raise ValueError(f"width must be a power of two, got {width}")


def ecfp_fingerprint(m: Molecule, radius: int = 2, width: int = 2048) -> Fingerprint:
    """Circular fingerprint: every identifier of every round sets bit ``id % width``."""
    _check_params(radius, width)
    bits = np.zeros(width, dtype=np.uint8)
    for codes in _environment_codes(m, radius):
        for code in codes:
            bits[code % width] = 1
    return Fingerprint(bits, width, radius)


def explain_bits(m: Molecule, radius: int = 2, width: int = 2048) -> dict[int, list[tuple[int, int]]]:
    """Map each set bit to the ``(atom index, radius)`` environments that produced it."""
    _check_params(radius, width)
    table: dict[int, list[tuple[int, int]]] = defaultdict(list)
    for r, codes in enumerate(_environment_codes(m, radius)):
        for i, code in enumerate(codes):
            table[code % width].append((i, r))
    return dict(sorted(table.items()))


@functools.lru_cache(maxsize=4096)
def fingerprint_smiles(smiles: str, radius: int = 2, width: int = 2048) -> Fingerprint:
    return ecfp_fingerprint(parse_smiles(smiles), radius, width)


def _same_width(a: Fingerprint, b: Fingerprint) -> None:
    if a.width != b.width:
        raise WidthMismatch(f"fingerprint widths differ: {a.width} vs {b.width}")


def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    _same_width(a, b)
    union = int(np.count_nonzero(a.bits | b.bits))
    if union == 0:
        return 1.0
    return int(np.count_nonzero(a.bits & b.bits)) / union


def delete_atoms(m: Molecule, victims: Iterable[int]) -> Molecule:
    """Remove ``victims`` and their bonds; surviving atoms keep their relative order."""
    victims = set(victims)
    bad = [v for v in victims if not 0 <= v < len(m.atoms)]
    if bad:
        raise IndexOutOfRange(f"atom indices out of range: {sorted(bad)}")
    keep = [i for i in range(len(m.atoms)) if i not in victims]
    if not keep:
        raise EmptyResult("deleting every atom leaves an empty molecule")
    remap = {old: new for new, old in enumerate(keep)}
    bonds = [
        Bond(remap[b.a], remap[b.b], b.order) for b in m.bonds if b.a in remap and b.b in remap
    ]
    return _assemble([m.atoms[i] for i in keep], bonds, m.source_text)


def canonical_pair_order(fa: Fingerprint, fb: Fingerprint) -> Literal["keep", "swap"]:
    """``"swap"`` iff ``fb`` sorts strictly before ``fa`` as a bit sequence."""
    _same_width(fa, fb)
    diff = np.flatnonzero(fa.bits != fb.bits)
    if diff.size == 0:
        return "keep"
    first = diff[0]
    return "swap" if fb.bits[first] < fa.bits[first] else "keep"
