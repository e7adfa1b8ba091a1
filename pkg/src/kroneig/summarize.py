# Posterior summaries: positivity probabilities, display thresholding,
# peak extraction and across-subject averaging.

from __future__ import annotations

import numpy as np
from scipy.special import ndtr


def positivity(mean, variance) -> np.ndarray:
    """Probability that the source activation is positive, Phi(mean / sd).

    Where the variance is zero the posterior is a point mass: the
    probability is a step in the mean, and 0.5 when the mean is zero too.
    """
    mean = np.asarray(mean, dtype=float)
    variance = np.asarray(variance, dtype=float)
    if mean.shape != variance.shape:
        raise ValueError(f"shape mismatch {mean.shape} vs {variance.shape}")
    if np.any(variance < 0):
        raise ValueError("variance must be nonnegative")
    out = np.empty_like(mean)
    pos = variance > 0
    out[pos] = ndtr(mean[pos] / np.sqrt(variance[pos]))
    zero = ~pos
    out[zero] = np.where(mean[zero] > 0, 1.0,
                         np.where(mean[zero] < 0, 0.0, 0.5))
    return out


def threshold_top_fraction(mean, fraction: float,
                           per_time: bool = False) -> np.ndarray:
    """Boolean mask of the ceil(fraction * N) largest |mean| entries.

    Ties at the cutoff go to the lower linear index.  With ``per_time``
    the selection is applied independently to each column.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    mean = np.asarray(mean, dtype=float)
    if per_time:
        if mean.ndim != 2:
            raise ValueError("per_time thresholding needs a 2-D matrix")
        cols = [threshold_top_fraction(mean[:, i], fraction)
                for i in range(mean.shape[1])]
        return np.column_stack(cols)
    flat = np.abs(mean).ravel()
    k = int(np.ceil(fraction * flat.size))
    # stable sort on (-|mean|, index): equal magnitudes keep index order
    order = np.argsort(-flat, kind="stable")
    mask = np.zeros(flat.size, dtype=bool)
    mask[order[:k]] = True
    return mask.reshape(mean.shape)


def peak_extract(time_series, times, window, polarity: str = "absolute"
                 ) -> tuple[float, float]:
    """Latency and amplitude of the strongest response inside a time window.

    ``polarity`` selects signed (largest value) or absolute (largest
    magnitude) peaks; ties return the earliest latency.  The returned
    amplitude is always the signed series value at the peak.
    """
    series = np.asarray(time_series, dtype=float).ravel()
    times = np.asarray(times, dtype=float).ravel()
    if series.shape != times.shape:
        raise ValueError("series and times must have equal length")
    t_a, t_b = window
    inside = (times >= t_a) & (times <= t_b)
    if not np.any(inside):
        raise ValueError(f"window [{t_a}, {t_b}] contains no samples")
    if polarity == "absolute":
        score = np.abs(series[inside])
    elif polarity == "signed":
        score = series[inside]
    else:
        raise ValueError(f"unknown polarity {polarity!r}")
    local = int(np.argmax(score))  # argmax returns the first maximum
    idx = np.flatnonzero(inside)[local]
    return float(times[idx]), float(series[idx])


def grand_average(per_subject_series, reference_series=None
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Across-subject mean waveform and its standard error.

    When ``reference_series`` is given (one per subject), each subject's
    series is first divided by the peak magnitude of their reference
    series, mirroring normalization to a reference condition.
    """
    series = [np.asarray(s, dtype=float).ravel() for s in per_subject_series]
    if len(series) < 2:
        raise ValueError("need at least two series for a SEM")
    n = len(series[0])
    if any(len(s) != n for s in series):
        raise ValueError("series lengths differ")
    if reference_series is not None:
        refs = [np.asarray(r, dtype=float).ravel() for r in reference_series]
        if len(refs) != len(series):
            raise ValueError("one reference series per subject required")
        series = [s / np.max(np.abs(r)) for s, r in zip(series, refs)]
    stacked = np.vstack(series)
    mean = stacked.mean(axis=0)
    sem = stacked.std(axis=0, ddof=1) / np.sqrt(len(series))
    return mean, sem
