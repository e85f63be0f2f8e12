"""Posterior summaries for reporting: model-selection slots, averaged
intensities, and the comparison table."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import THETA_VOLUME, AllocationVector, SampleSet, SummaryModel
from .sem import robust_location_scale


def bms_summary(samples: SampleSet) -> tuple[int, list[tuple[float, float]]]:
    """Per-slot (mu, s) summaries after conditioning on the most probable k.

    Selects the k with highest empirical posterior probability (ties go to
    the smaller k), sorts each retained sample's frequencies, and reports the
    robust location/scale of every sorted slot.  Information from all other
    model orders is discarded by construction.
    """
    ks = np.array([s.k for s in samples.samples])
    counts = np.bincount(ks)
    map_k = int(np.argmax(counts))  # argmax returns the first max: smaller k wins ties
    if map_k == 0:
        return 0, []
    sel = np.sort(
        np.array([s.theta for s in samples.samples if s.k == map_k], dtype=float),
        axis=1,
    )
    return map_k, [robust_location_scale(sel[:, j]) for j in range(map_k)]


def _intensity(points: np.ndarray, m: int, bins: int) -> tuple[np.ndarray, np.ndarray]:
    edges = np.linspace(0.0, THETA_VOLUME, bins + 1)
    counts, _ = np.histogram(points, bins=edges)
    width = THETA_VOLUME / bins
    centers = (edges[:-1] + edges[1:]) / 2.0
    return centers, counts / (m * width)


def bma_intensity(samples: SampleSet, bins: int) -> tuple[np.ndarray, np.ndarray]:
    """Histogram intensity of all frequencies across all samples.

    Scaled by 1/(M * binwidth), so the integral over (0, pi) equals the
    posterior mean of k.  Returns (bin centers, intensity).
    """
    if bins < 2:
        raise ValueError("bins must be >= 2")
    pts = np.array([t for s in samples.samples for t in s.theta], dtype=float)
    return _intensity(pts, len(samples), bins)


def background_intensity(
    samples: SampleSet, final_allocations, bins: int
) -> tuple[np.ndarray, np.ndarray]:
    """Histogram intensity of the points allocated to the background.

    Same normalization as bma_intensity; the integral approximates the fitted
    expected background count.  This is where the outliers of the sample set
    show up.
    """
    if bins < 2:
        raise ValueError("bins must be >= 2")
    if len(final_allocations) != len(samples):
        raise ValueError("allocations must align one-to-one with samples")
    pts = []
    for s, z in zip(samples.samples, final_allocations):
        if len(z) != s.k:
            raise ValueError("allocation length mismatch")
        pts.extend(t for t, l in zip(s.theta, z.z) if l == 0)
    return _intensity(np.array(pts, dtype=float), len(samples), bins)


def mixture_pdf(model: SummaryModel, grid: np.ndarray) -> np.ndarray:
    """Sum of pi_l * N(. | mu_l, s2_l) over the fitted components."""
    out = np.zeros_like(grid, dtype=float)
    for c in model.components:
        out += (
            c.pi
            * np.exp(-((grid - c.mu) ** 2) / (2.0 * c.s2))
            / math.sqrt(2.0 * math.pi * c.s2)
        )
    return out


@dataclass(frozen=True)
class SummaryRow:
    """One line of the comparison table; None marks an absent side."""

    component: int
    mu: float | None
    s: float | None
    pi: float | None
    mu_bms: float | None
    s_bms: float | None


def _match_sorted(proposed_mus: list[float], bms_mus: list[float]) -> list[int | None]:
    """Monotone minimal-|mu| alignment of BMS slots to proposed components.

    Returns, per proposed component, the matched BMS slot index or None.
    Both inputs must be sorted.  Assumes len(bms) <= len(proposed); cost is
    the classic sequence-alignment dynamic program.
    """
    np_, nb = len(proposed_mus), len(bms_mus)
    inf = math.inf
    # cost[i][j]: best cost matching first j bms slots within first i proposed
    cost = [[inf] * (nb + 1) for _ in range(np_ + 1)]
    for i in range(np_ + 1):
        cost[i][0] = 0.0
    for i in range(1, np_ + 1):
        for j in range(1, min(i, nb) + 1):
            skip = cost[i - 1][j]
            take = cost[i - 1][j - 1] + abs(proposed_mus[i - 1] - bms_mus[j - 1])
            cost[i][j] = min(skip, take)
    match: list[int | None] = [None] * np_
    i, j = np_, nb
    while j > 0:
        if i > j - 1 and cost[i][j] == cost[i - 1][j]:
            i -= 1
        else:
            match[i - 1] = j - 1
            i -= 1
            j -= 1
    return match


def make_summary_table(
    model: SummaryModel, bms_slots: list[tuple[float, float]]
) -> list[SummaryRow]:
    """Comparison table of the fitted components against the fixed-k slots.

    Rows are sorted by mean.  Each BMS slot is aligned with the nearest
    fitted component (monotone, injective); sides without a counterpart get
    None entries, rendered as dashes in the CSV.
    """
    comps = sorted(model.components, key=lambda c: c.mu)
    slots = sorted(bms_slots)
    rows: list[SummaryRow] = []
    if len(slots) <= len(comps):
        match = _match_sorted([c.mu for c in comps], [s[0] for s in slots])
        for i, comp in enumerate(comps):
            b = slots[match[i]] if match[i] is not None else None
            rows.append(
                SummaryRow(
                    0, comp.mu, math.sqrt(comp.s2), comp.pi,
                    b[0] if b else None, b[1] if b else None,
                )
            )
    else:
        match = _match_sorted([s[0] for s in slots], [c.mu for c in comps])
        for j, slot in enumerate(slots):
            c = comps[match[j]] if match[j] is not None else None
            rows.append(
                SummaryRow(
                    0,
                    c.mu if c else None,
                    math.sqrt(c.s2) if c else None,
                    c.pi if c else None,
                    slot[0], slot[1],
                )
            )
    rows.sort(key=lambda r: r.mu if r.mu is not None else r.mu_bms)
    return [
        SummaryRow(i + 1, r.mu, r.s, r.pi, r.mu_bms, r.s_bms)
        for i, r in enumerate(rows)
    ]
