"""Thermodynamic compatibility baselines.

Flory-Huggins free energy of mixing, the interaction parameter estimated from
Hildebrand solubility parameters, and a heat-of-mixing threshold classifier.
Solubility parameters are in (cal/cm^3)^1/2 unless ``units="si"`` is passed,
in which case they are in MPa^1/2 and the gas constant switches to J/(mol K).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

__all__ = [
    "R_CAL",
    "R_SI",
    "DomainError",
    "MissingField",
    "FloryHugginsInput",
    "HspRecord",
    "flory_huggins_dg",
    "chi_from_hsp",
    "heat_of_mixing",
    "hsp_classify",
    "load_hsp_table",
]

R_CAL = 1.98720  # cal / (mol K)
R_SI = 8.314462618  # J / (mol K); with delta in MPa^1/2, V in cm^3/mol
DEFAULT_THRESHOLD = 0.010  # cal/mol


class DomainError(ValueError):
    pass


class MissingField(ValueError):
    pass


@dataclass(frozen=True)
class FloryHugginsInput:
    n1: float
    n2: float
    phi1: float
    phi2: float
    chi12: float

    def __post_init__(self):
        for name in ("phi1", "phi2"):
            phi = getattr(self, name)
            if not 0.0 < phi < 1.0:
                raise DomainError(f"{name} must lie strictly inside (0, 1), got {phi}")
        if abs(self.phi1 + self.phi2 - 1.0) > 1e-9:
            raise DomainError(f"phi1 + phi2 must equal 1, got {self.phi1 + self.phi2}")
        if self.n1 < 0 or self.n2 < 0:
            raise DomainError("mole numbers must be non-negative")


def flory_huggins_dg(inp: FloryHugginsInput) -> float:
    """Dimensionless mixing free energy ``dG/RT = n1 ln phi1 + n2 ln phi2 + n1 phi2 chi``.

    The interaction term is written as ``n1 * phi2 * chi`` and is therefore
    not symmetric under relabelling the components.
    """
    return inp.n1 * math.log(inp.phi1) + inp.n2 * math.log(inp.phi2) + inp.n1 * inp.phi2 * inp.chi12


def chi_from_hsp(v: float, t: float, d1: float, d2: float, units: Literal["cal", "si"] = "cal") -> float:
    """``chi = V / (R T) * (d1 - d2)**2`` for segment volume ``v`` (cm^3/mol) at ``t`` kelvin."""
    if v <= 0 or t <= 0:
        raise DomainError(f"segment volume and temperature must be positive, got v={v}, t={t}")
    r = {"cal": R_CAL, "si": R_SI}[units]
    return v / (r * t) * (d1 - d2) ** 2


@dataclass(frozen=True)
class HspRecord:
    polymer_name: str
    delta: float
    density: float | None = None
    molar_mass_repeat: float | None = None

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"{self.polymer_name}: solubility parameter must be positive")
        if self.density is not None and not self.density > 0:
            raise ValueError(f"{self.polymer_name}: density must be positive")
        if self.molar_mass_repeat is not None and not self.molar_mass_repeat > 0:
            raise ValueError(f"{self.polymer_name}: repeat-unit molar mass must be positive")


def heat_of_mixing(a: HspRecord, b: HspRecord, fraction_a: float) -> float:
    """Heat of mixing per mole of repeating units, in cal/mol.

    Follows the solubility-parameter treatment of B. Schneier, "Polymer
    compatibility", J. Appl. Polym. Sci. 17, 3175 (1973): repeating units are
    the mixing segments, ``fraction_a`` is the weight fraction of ``a``, and
    the Scatchard-Hildebrand enthalpy density ``phi_a phi_b (d_a - d_b)**2``
    is multiplied by the mean segment molar volume.  With weight fractions
    ``w`` this reduces to::

        dH = w_a w_b / (w_a rho_b + w_b rho_a) / (w_a / M_a + w_b / M_b) * (d_a - d_b)**2
    """
    for rec in (a, b):
        if rec.density is None or rec.molar_mass_repeat is None:
            raise MissingField(f"{rec.polymer_name}: density and repeat-unit molar mass are required")
    if not 0.0 <= fraction_a <= 1.0:
        raise DomainError(f"fraction_a must lie in [0, 1], got {fraction_a}")
    wa, wb = fraction_a, 1.0 - fraction_a
    if wa == 0.0 or wb == 0.0:
        return 0.0
    moles = wa / a.molar_mass_repeat + wb / b.molar_mass_repeat
    volume = wa / a.density + wb / b.density
    phi_a = (wa / a.density) / volume
    return (volume / moles) * phi_a * (1.0 - phi_a) * (a.delta - b.delta) ** 2


def hsp_classify(
    a: HspRecord, b: HspRecord, fraction_a: float = 0.5, threshold: float = DEFAULT_THRESHOLD
) -> tuple[Literal["compatible", "incompatible"], float]:
    """Compatible iff the heat of mixing does not exceed ``threshold`` (cal/mol)."""
    if not threshold > 0:
        raise DomainError("threshold must be positive")
    dh = heat_of_mixing(a, b, fraction_a)
    return ("compatible" if dh <= threshold else "incompatible"), dh


def load_hsp_table(path: str | Path) -> dict[str, HspRecord]:
    """Read ``polymer_name,delta,density,molar_mass_repeat``; ``#`` lines are comments."""
    table: dict[str, HspRecord] = {}
    with Path(path).open(encoding="utf-8", newline="") as fh:
        rows = csv.reader(line for line in fh if line.strip() and not line.lstrip().startswith("#"))
        header = next(rows, None)
        if header is None or [h.strip() for h in header] != ["polymer_name", "delta", "density", "molar_mass_repeat"]:
            raise ValueError(f"{path}: header must be polymer_name,delta,density,molar_mass_repeat")
        for fields in rows:
            name, delta, density, mass = (f.strip() for f in fields)
            table[name] = HspRecord(
                name, float(delta), float(density) if density else None, float(mass) if mass else None
            )
    return table
