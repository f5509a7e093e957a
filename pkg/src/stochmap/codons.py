"""Codon tables for the 61-state sense-codon model.

The standard nuclear genetic code is embedded as a constant.  Codon states
are enumerated in lexicographic A < C < G < T order with the three stop
codons (TAA, TAG, TGA) removed; this order is fixed and documented here so
that state indices are stable across runs and file formats.
"""

import itertools

BASES = "ACGT"

# Standard code (NCBI translation table 1), indexed with base order T, C, A, G
# as customarily printed: codon index = 16*i1 + 4*i2 + i3 over "TCAG".
_AA_TCAG = (
    "FFLLSSSSYY**CC*WLLLLPPPPHHQQRRRR"
    "IIIMTTTTNNKKSSRRVVVVAAAADDEEGGGG"
)
_TCAG = "TCAG"

STOP_CODONS = ("TAA", "TAG", "TGA")


def _amino_acid_table():
    table = {}
    for i1, b1 in enumerate(_TCAG):
        for i2, b2 in enumerate(_TCAG):
            for i3, b3 in enumerate(_TCAG):
                table[b1 + b2 + b3] = _AA_TCAG[16 * i1 + 4 * i2 + i3]
    return table


AMINO_ACID = _amino_acid_table()

# 61 sense codons, lexicographic A < C < G < T.
SENSE_CODONS = tuple(
    "".join(c)
    for c in itertools.product(BASES, repeat=3)
    if AMINO_ACID["".join(c)] != "*"
)

CODON_INDEX = {codon: i for i, codon in enumerate(SENSE_CODONS)}

_PURINES = frozenset("AG")
_PYRIMIDINES = frozenset("CT")


def is_transition(base_a, base_b):
    """True when the substitution base_a <-> base_b is a transition
    (purine <-> purine or pyrimidine <-> pyrimidine)."""
    if base_a == base_b:
        raise ValueError("bases are identical; not a substitution")
    return ({base_a, base_b} <= _PURINES) or ({base_a, base_b} <= _PYRIMIDINES)


def codon_difference(codon_a, codon_b):
    """Positions at which two codons differ, as a tuple of indices 0..2."""
    return tuple(p for p in range(3) if codon_a[p] != codon_b[p])
