"""Belief-mass calculus on the two-state frame {free, occupied}.

Every mass function is represented by the pair (m_free, m_occ); the mass on
the whole frame (ignorance) is always derived as ``1 - m_free - m_occ`` and
never stored.  Scalar helpers operate on :class:`MassCell`, the ``*_arrays``
variants work elementwise on numpy arrays and are what the grid code uses.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

CONFLICT_EPS = 1e-12
# clamping after combination may only absorb rounding noise
_CLAMP_SLACK = 1e-9
NUM_CLASSES = 2


class TotalConflict(ArithmeticError):
    """Raised when two mass functions contradict each other completely."""


class NonFiniteEvidence(ValueError):
    pass


@dataclass(frozen=True)
class MassCell:
    m_free: float = 0.0
    m_occ: float = 0.0

    def __post_init__(self):
        f, o = self.m_free, self.m_occ
        if not (f >= -_CLAMP_SLACK and o >= -_CLAMP_SLACK and f + o <= 1.0 + _CLAMP_SLACK):
            raise ValueError(f"invalid masses m_free={f!r}, m_occ={o!r}")

    @property
    def uncertainty(self) -> float:
        return 1.0 - self.m_free - self.m_occ

    @classmethod
    def vacuous(cls) -> "MassCell":
        return cls(0.0, 0.0)


@dataclass(frozen=True)
class EvidenceCell:
    e_free: float
    e_occ: float

    def __post_init__(self):
        if not (math.isfinite(self.e_free) and math.isfinite(self.e_occ)):
            raise NonFiniteEvidence(f"evidence must be finite, got ({self.e_free}, {self.e_occ})")
        if self.e_free < 0 or self.e_occ < 0:
            raise ValueError("evidence must be non-negative")


def _clamp(x):
    assert np.all(x > -_CLAMP_SLACK) and np.all(x < 1.0 + _CLAMP_SLACK), "clamp moved a mass by > 1e-9"
    return np.clip(x, 0.0, 1.0)


def combine_arrays(af, ao, bf, bo):
    """Elementwise Dempster combination.

    Returns ``(m_free, m_occ, conflict)`` where ``conflict`` is the mass
    kappa that fell on the empty set.  Cells with ``1 - kappa <= 1e-12`` come
    back as NaN; callers decide how to handle them.

    The sums are grouped symmetrically so that swapping the operands gives
    bit-identical results.
    """
    af, ao, bf, bo = (np.asarray(v, dtype=np.float64) for v in (af, ao, bf, bo))
    au = 1.0 - af - ao
    bu = 1.0 - bf - bo
    kappa = af * bo + ao * bf
    num_f = af * bf + (af * bu + au * bf)
    num_o = ao * bo + (ao * bu + au * bo)
    norm = 1.0 - kappa
    total = norm <= CONFLICT_EPS
    with np.errstate(divide="ignore", invalid="ignore"):
        mf = np.where(total, np.nan, num_f / np.where(total, 1.0, norm))
        mo = np.where(total, np.nan, num_o / np.where(total, 1.0, norm))
    ok = ~total
    mf[ok] = _clamp(mf[ok])
    mo[ok] = _clamp(mo[ok])
    return mf, mo, kappa


def dempster_combine(a: MassCell, b: MassCell) -> MassCell:
    """Dempster's rule of combination for two cells."""
    mf, mo, kappa = combine_arrays(a.m_free, a.m_occ, b.m_free, b.m_occ)
    if not np.isfinite(mf):
        raise TotalConflict(f"conflict {float(kappa)!r} leaves nothing to normalize")
    return MassCell(float(mf), float(mo))


def pignistic_arrays(m_free, m_occ):
    """Pignistic occupancy probability; ignorance is split evenly."""
    m_free = np.asarray(m_free, dtype=np.float64)
    m_occ = np.asarray(m_occ, dtype=np.float64)
    return m_occ + 0.5 * (1.0 - m_free - m_occ)


def pignistic_p_occupied(c: MassCell) -> float:
    return c.m_occ + 0.5 * (1.0 - c.m_free - c.m_occ)


def pignistic_p_free(c: MassCell) -> float:
    return 1.0 - pignistic_p_occupied(c)


def evidence_to_mass_arrays(e_free, e_occ):
    """Map non-negative evidence to (m_free, m_occ, u) via the Dirichlet strength."""
    e_free = np.asarray(e_free, dtype=np.float64)
    e_occ = np.asarray(e_occ, dtype=np.float64)
    if not (np.all(np.isfinite(e_free)) and np.all(np.isfinite(e_occ))):
        raise NonFiniteEvidence("evidence contains NaN or inf")
    strength = e_free + e_occ + NUM_CLASSES
    return e_free / strength, e_occ / strength, NUM_CLASSES / strength


def evidence_to_mass(c: EvidenceCell) -> tuple[MassCell, float]:
    """Return the mass cell and its uncertainty mass ``u = K / S``."""
    mf, mo, u = evidence_to_mass_arrays(c.e_free, c.e_occ)
    return MassCell(float(mf), float(mo)), float(u)
