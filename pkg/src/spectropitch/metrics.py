"""Contour evaluation: Pearson correlation, accuracy rate, banding, aggregation.

Correlation is measured over the frames where the reference is voiced. A
contour with zero variance there has no defined correlation; it is reported
with band ``"degenerate"`` and left out of the band percentages.
"""

import csv
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DegenerateInput, NoVoicedFrames

STRONG = 0.7
MODERATE = 0.5
BANDS = ("strong", "moderate", "weak")
REPORT_FIELDS = ("entry_id", "snr_db", "rho", "rho_band", "ar", "n_voiced", "transition_errors")


def pearson(x, y) -> float:
    """cov(x, y) / (sigma_x * sigma_y) with population normalization.

    Raises DegenerateInput when either input has zero variance.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("pearson needs two 1-d sequences of equal length")
    if x.size < 2:
        raise ValueError("pearson needs at least two samples")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = np.sqrt(np.mean(dx * dx))
    sy = np.sqrt(np.mean(dy * dy))
    if sx == 0 or sy == 0:
        raise DegenerateInput("zero variance input")
    rho = np.mean(dx * dy) / (sx * sy)
    return float(np.clip(rho, -1.0, 1.0))


def band(rho: float, strong: float = STRONG, moderate: float = MODERATE) -> str:
    """Correlation category; both thresholds are inclusive lower bounds."""
    if rho >= strong:
        return "strong"
    if rho >= moderate:
        return "moderate"
    return "weak"


def _f0(c):
    return np.asarray(getattr(c, "f0_hz", c), dtype=np.float64)


def accuracy_rate(est, truth, tolerance: float = 0.05):
    """Fraction of reference-voiced frames estimated within ``tolerance``.

    A frame counts as correct when the estimate is voiced and its relative
    deviation from the reference is at most ``tolerance`` (inclusive).

    Returns
    -------
    ar : float
    n_correct : int
    n_voiced : int
    """
    e, t = _f0(est), _f0(truth)
    if e.shape != t.shape:
        raise ValueError(f"contours differ in length: {e.shape} vs {t.shape}")
    voiced = t > 0
    n_voiced = int(voiced.sum())
    if n_voiced == 0:
        raise NoVoicedFrames("reference has no voiced frames")
    # small slack keeps exact 5% deviations inclusive despite float rounding
    rel = np.abs(e[voiced] - t[voiced]) / t[voiced]
    correct = (e[voiced] > 0) & (rel <= tolerance + 1e-12)
    n_correct = int(correct.sum())
    return n_correct / n_voiced, n_correct, n_voiced


def boundary_frames(truth) -> np.ndarray:
    """Mask of frames on either side of a voiced/unvoiced switch in ``truth``."""
    v = _f0(truth) > 0
    mask = np.zeros(v.shape, dtype=bool)
    switch = np.flatnonzero(v[1:] != v[:-1])
    mask[switch] = True
    mask[switch + 1] = True
    return mask


def frame_errors(est, truth, tolerance: float = 0.05) -> np.ndarray:
    """Frames where the estimate is voiced but wrong.

    Wrong means the reference is unvoiced, or the deviation exceeds
    ``tolerance``. Missed voicing (estimate 0 on a voiced frame) is not
    flagged here.
    """
    e, t = _f0(est), _f0(truth)
    ev, tv = e > 0, t > 0
    rel = np.abs(e - t) / np.where(tv, t, 1.0)
    return ev & (~tv | (rel > tolerance + 1e-12))


def transition_artifacts(est, truth, tolerance: float = 0.05) -> int:
    """Number of erroneous voiced estimates adjacent to a voicing boundary."""
    return int((frame_errors(est, truth, tolerance) & boundary_frames(truth)).sum())


def count_boundaries(truth) -> int:
    v = _f0(truth) > 0
    return int(np.count_nonzero(v[1:] != v[:-1]))


@dataclass
class EvalReport:
    entry_id: str
    snr_db: float
    rho: float
    rho_band: str
    ar: float
    n_voiced: int
    transition_errors: int
    n_boundaries: int = 0

    @property
    def degenerate(self) -> bool:
        return self.rho_band == "degenerate"


def evaluate_contour(entry_id, est, truth, snr_db=float("nan"), tolerance: float = 0.05) -> EvalReport:
    """Full per-utterance report comparing ``est`` with ``truth``."""
    e, t = _f0(est), _f0(truth)
    ar, _, n_voiced = accuracy_rate(e, t, tolerance)
    voiced = t > 0
    try:
        rho = pearson(e[voiced], t[voiced])
        rho_band = band(rho)
    except (DegenerateInput, ValueError):
        rho, rho_band = 0.0, "degenerate"
    return EvalReport(entry_id, float(snr_db), rho, rho_band, ar, n_voiced,
                      transition_artifacts(e, t, tolerance), count_boundaries(t))


def aggregate(reports) -> dict:
    """Band distribution and per-SNR accuracy of a list of EvalReports.

    Returns a dict with ``band_counts`` (including ``degenerate``),
    ``band_pct`` over non-degenerate reports, ``ar_by_snr`` (mean AR per
    distinct SNR, ascending) and ``n_by_snr``.
    """
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to aggregate")
    counts = {b: 0 for b in BANDS + ("degenerate",)}
    for r in reports:
        counts[r.rho_band] += 1
    n_valid = len(reports) - counts["degenerate"]
    pct = {b: (100.0 * counts[b] / n_valid if n_valid else 0.0) for b in BANDS}
    snrs = sorted({r.snr_db for r in reports})
    ar_by_snr = {s: float(np.mean([r.ar for r in reports if r.snr_db == s])) for s in snrs}
    n_by_snr = {s: sum(r.snr_db == s for r in reports) for s in snrs}
    n_boundaries = sum(r.n_boundaries for r in reports)
    n_trans = sum(r.transition_errors for r in reports)
    return {
        "band_counts": counts,
        "band_pct": pct,
        "ar_by_snr": ar_by_snr,
        "n_by_snr": n_by_snr,
        "mean_ar": float(np.mean([r.ar for r in reports])),
        "transition_errors": n_trans,
        "n_boundaries": n_boundaries,
        "transition_errors_per_boundary": n_trans / n_boundaries if n_boundaries else 0.0,
    }


def write_reports_csv(reports, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_FIELDS)
        for r in sorted(reports, key=lambda r: r.entry_id):
            d = asdict(r)
            w.writerow([d["entry_id"], f"{r.snr_db:g}", f"{r.rho:.6f}", r.rho_band,
                        f"{r.ar:.6f}", r.n_voiced, r.transition_errors])


def write_summary_csv(summaries: dict, path) -> None:
    """Write ``{detector: aggregate(...)}`` as long-format rows.

    Columns are ``detector,metric,key,value``.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["detector", "metric", "key", "value"])
        for det, s in summaries.items():
            for b, c in s["band_counts"].items():
                w.writerow([det, "band_count", b, c])
            for b, p in s["band_pct"].items():
                w.writerow([det, "band_pct", b, f"{p:.4f}"])
            for snr, ar in s["ar_by_snr"].items():
                w.writerow([det, "ar_mean", f"{snr:g}", f"{ar:.6f}"])
            w.writerow([det, "transition", "errors", s["transition_errors"]])
            w.writerow([det, "transition", "boundaries", s["n_boundaries"]])
            w.writerow([det, "transition", "errors_per_boundary", f"{s['transition_errors_per_boundary']:.6f}"])
