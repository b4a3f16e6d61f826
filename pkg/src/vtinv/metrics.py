"""Contour error metrics, report aggregation, and significance testing.

Errors are computed per frame and per articulator over the 100 flattened
coordinates of that articulator, in millimeters (pixel spacing 1.62 mm/px):
RMSE of the residuals and median of their absolute values. Frame-level
values are then averaged per articulator and across articulators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .corpus import ARTICULATORS, PIXEL_SPACING_MM, FrameContours
from .errors import ContractError, FormatError

REPORT_CSV_HEADER = "articulator,rmse_mean_mm,rmse_std_mm,median_mean_mm,p_vs_baseline"
SIGNIFICANCE_ALPHA = 0.05


@dataclass(frozen=True)
class FrameArticulatorError:
    frame_index: int
    articulator: str
    rmse_mm: float
    median_mm: float


def frame_errors(
    pred: FrameContours,
    truth: FrameContours,
    residual: str = "coordinate",
    frame_index: int = 0,
) -> list[FrameArticulatorError]:
    """Per-articulator RMSE and median error (mm) for one frame.

    residual='coordinate' treats the 100 coordinates independently (the
    default); residual='point' uses the 50 Euclidean point distances.
    """
    out = []
    for a, name in enumerate(ARTICULATORS):
        diff_mm = PIXEL_SPACING_MM * (pred.points[a] - truth.points[a])  # (50, 2)
        if residual == "coordinate":
            r = diff_mm.ravel()
            rmse = math.sqrt(float(np.mean(r * r)))
            med = float(np.median(np.abs(r)))
        elif residual == "point":
            d = np.sqrt((diff_mm ** 2).sum(axis=1))
            rmse = math.sqrt(float(np.mean(d * d)))
            med = float(np.median(d))
        else:
            raise ContractError(f"unknown residual mode '{residual}'")
        out.append(FrameArticulatorError(frame_index, name, rmse, med))
    return out


def sequence_frame_errors(
    pred_frames: np.ndarray,
    truth_frames: np.ndarray,
    residual: str = "coordinate",
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized frame errors over whole sequences.

    Inputs are (T, 8, 50, 2) arrays; returns (rmse_mm, median_mm), each
    (T, 8). Matches frame_errors frame by frame.
    """
    if pred_frames.shape != truth_frames.shape:
        raise ContractError(
            f"shape mismatch {pred_frames.shape} vs {truth_frames.shape}"
        )
    diff_mm = PIXEL_SPACING_MM * (pred_frames - truth_frames)
    if residual == "coordinate":
        r = diff_mm.reshape(diff_mm.shape[0], 8, -1)  # (T, 8, 100)
    elif residual == "point":
        r = np.sqrt((diff_mm ** 2).sum(axis=3))  # (T, 8, 50)
    else:
        raise ContractError(f"unknown residual mode '{residual}'")
    rmse = np.sqrt((r ** 2).mean(axis=2))
    med = np.median(np.abs(r), axis=2)
    return rmse, med


@dataclass
class ArticulatorRow:
    articulator: str
    rmse_mean_mm: float
    rmse_std_mm: float
    median_mean_mm: float
    p_vs_baseline: float | None = None

    @property
    def significant(self) -> bool | None:
        if self.p_vs_baseline is None:
            return None
        return self.p_vs_baseline < SIGNIFICANCE_ALPHA


@dataclass
class EvalReport:
    """Table-shaped report: one row per articulator plus a final mean row."""

    rows: list[ArticulatorRow] = field(default_factory=list)
    mean_row: ArticulatorRow | None = None
    n_frames: int = 0

    def row(self, articulator: str) -> ArticulatorRow:
        for r in self.rows:
            if r.articulator == articulator:
                return r
        raise KeyError(articulator)

    def to_csv(self) -> str:
        lines = [REPORT_CSV_HEADER]
        for r in list(self.rows) + [self.mean_row]:
            p = "" if r.p_vs_baseline is None else "%.17g" % r.p_vs_baseline
            lines.append(
                f"{r.articulator},{'%.17g' % r.rmse_mean_mm},"
                f"{'%.17g' % r.rmse_std_mm},{'%.17g' % r.median_mean_mm},{p}"
            )
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "EvalReport":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0] != REPORT_CSV_HEADER:
            raise FormatError(f"report CSV must start with '{REPORT_CSV_HEADER}'")
        body = lines[1:]
        if len(body) != len(ARTICULATORS) + 1:
            raise FormatError(
                f"report CSV must have {len(ARTICULATORS) + 1} data rows, got {len(body)}"
            )
        rows = []
        for line_no, line in enumerate(body, start=2):
            parts = line.split(",")
            if len(parts) != 5:
                raise FormatError(f"line {line_no}: expected 5 fields")
            name = parts[0]
            try:
                vals = [float(v) for v in parts[1:4]]
                p = float(parts[4]) if parts[4] else None
            except ValueError:
                raise FormatError(f"line {line_no}: malformed number") from None
            rows.append(ArticulatorRow(name, vals[0], vals[1], vals[2], p))
        expected = list(ARTICULATORS) + ["mean"]
        if [r.articulator for r in rows] != expected:
            raise FormatError("report CSV rows out of canonical order")
        return cls(rows=rows[:-1], mean_row=rows[-1])


def aggregate_report(
    rmse_mm: np.ndarray,
    median_mm: np.ndarray,
) -> EvalReport:
    """Aggregate (n_frames, 8) per-frame errors into a report.

    Per articulator: mean and population std of frame RMSEs, mean of frame
    medians. The final row is the column-wise mean across the 8 articulators.
    """
    rmse_mm = np.asarray(rmse_mm, dtype=np.float64)
    median_mm = np.asarray(median_mm, dtype=np.float64)
    if rmse_mm.ndim != 2 or rmse_mm.shape[1] != len(ARTICULATORS):
        raise ContractError(f"expected (n_frames, 8) errors, got {rmse_mm.shape}")
    if rmse_mm.shape != median_mm.shape:
        raise ContractError("rmse and median arrays must have the same shape")
    if rmse_mm.shape[0] < 1:
        raise ContractError("need at least one frame to aggregate")
    rows = [
        ArticulatorRow(
            articulator=name,
            rmse_mean_mm=float(rmse_mm[:, a].mean()),
            rmse_std_mm=float(rmse_mm[:, a].std()),
            median_mean_mm=float(median_mm[:, a].mean()),
        )
        for a, name in enumerate(ARTICULATORS)
    ]
    mean_row = ArticulatorRow(
        articulator="mean",
        rmse_mean_mm=float(np.mean([r.rmse_mean_mm for r in rows])),
        rmse_std_mm=float(np.mean([r.rmse_std_mm for r in rows])),
        median_mean_mm=float(np.mean([r.median_mean_mm for r in rows])),
    )
    return EvalReport(rows=rows, mean_row=mean_row, n_frames=rmse_mm.shape[0])


# ---------------------------------------------------------------------------
# Student's t-test

def _betacf(a: float, b: float, x: float, tol: float = 1e-12, max_iter: int = 500) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) to about 1e-12."""
    if x < 0.0 or x > 1.0:
        raise ContractError("x must lie in [0, 1]")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log(1.0 - x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t_abs: float, df: float) -> float:
    """Two-sided p-value for |T| >= t_abs under Student's t with df degrees
    of freedom: I_{df/(df+t^2)}(df/2, 1/2)."""
    if t_abs == 0.0:
        return 1.0
    if math.isinf(t_abs):
        return 0.0
    x = df / (df + t_abs * t_abs)
    return regularized_incomplete_beta(df / 2.0, 0.5, x)


def t_test_from_stats(
    mean_a: float,
    var_a: float,
    n_a: int,
    mean_b: float,
    var_b: float,
    n_b: int,
) -> tuple[float, float]:
    """Pooled-variance two-sample t-test from sufficient statistics.

    Variances are population (divide-by-n) so that n*var equals the sum of
    squared deviations. Returns (t, two-sided p).
    """
    if n_a < 2 or n_b < 2:
        raise ContractError("both samples need at least 2 observations")
    df = n_a + n_b - 2
    pooled = (n_a * var_a + n_b * var_b) / df
    diff = mean_a - mean_b
    if pooled <= 0.0:
        if diff == 0.0:
            return 0.0, 1.0
        # degenerate: zero spread with distinct means
        return math.copysign(math.inf, diff), 0.0
    t = diff / math.sqrt(pooled * (1.0 / n_a + 1.0 / n_b))
    return t, t_sf_two_sided(abs(t), df)


def students_t_test(sample_a, sample_b) -> tuple[float, float]:
    """Pooled-variance two-sample Student's t-test, two-sided."""
    a = np.asarray(sample_a, dtype=np.float64).ravel()
    b = np.asarray(sample_b, dtype=np.float64).ravel()
    if a.size < 2 or b.size < 2:
        raise ContractError("both samples need at least 2 observations")
    return t_test_from_stats(
        float(a.mean()), float(a.var()), a.size,
        float(b.mean()), float(b.var()), b.size,
    )


def attach_baseline_comparison(
    report: EvalReport,
    rmse_mm: np.ndarray,
    baseline: EvalReport,
    baseline_n_frames: int,
) -> EvalReport:
    """Fill p_vs_baseline on every row of `report`.

    The current model contributes its raw per-frame RMSE samples; the
    baseline contributes sufficient statistics (mean, population std) read
    from its report, with its frame count supplied by the caller (both
    evaluations must cover the identical test frames). The mean row is
    compared through the per-frame across-articulator mean series against
    the baseline's mean-row statistics.
    """
    rmse_mm = np.asarray(rmse_mm, dtype=np.float64)
    if rmse_mm.shape[0] < 2 or baseline_n_frames < 2:
        raise ContractError("need at least 2 frames for a t-test")
    for a, row in enumerate(report.rows):
        base = baseline.row(row.articulator)
        sample = rmse_mm[:, a]
        _, p = t_test_from_stats(
            float(sample.mean()), float(sample.var()), sample.size,
            base.rmse_mean_mm, base.rmse_std_mm ** 2, baseline_n_frames,
        )
        row.p_vs_baseline = p
    overall = rmse_mm.mean(axis=1)
    _, p = t_test_from_stats(
        float(overall.mean()), float(overall.var()), overall.size,
        baseline.mean_row.rmse_mean_mm,
        baseline.mean_row.rmse_std_mm ** 2,
        baseline_n_frames,
    )
    report.mean_row.p_vs_baseline = p
    return report
