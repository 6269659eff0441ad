"""Structured check reports and deterministic rendering.

Every numeric lands in the text and CSV output through the same
12-significant-digit formatter, so identical configurations produce
byte-identical files.  CSV schema (fixed):

    check_id, frame, base, eps, measured, reference, error,
    fitted_order, tolerance, pass
"""

from __future__ import annotations

from dataclasses import dataclass, field

CSV_COLUMNS = ("check_id", "frame", "base", "eps", "measured", "reference",
               "error", "fitted_order", "tolerance", "pass")


def fmt(x) -> str:
    """Decimal text at 12 significant digits; empty for missing."""
    if x is None:
        return ""
    if isinstance(x, bool):
        return "pass" if x else "fail"
    if isinstance(x, (int,)):
        return str(x)
    x = float(x)
    if x != x:
        return ""
    return f"{x:.12g}"


@dataclass
class Rung:
    """One ladder measurement inside a check."""

    eps: float = None
    measured: float = None
    reference: float = None
    error: float = None


@dataclass
class CheckRow:
    """Outcome of a single named check, possibly with ladder rungs."""

    check_id: str
    passed: bool
    tolerance: float = None
    fitted_order: float = None
    rungs: list = field(default_factory=list)
    detail: str = ""

    @property
    def worst_error(self):
        errs = [r.error for r in self.rungs if r.error is not None]
        return max(errs) if errs else None

    @property
    def final_error(self):
        errs = [r.error for r in self.rungs if r.error is not None]
        return errs[-1] if errs else None


def render_text(title: str, checks, preamble=()) -> str:
    """Human-readable report; one verdict line per check."""
    lines = [title, "=" * len(title)]
    lines.extend(preamble)
    if preamble:
        lines.append("")
    for row in checks:
        verdict = "PASS" if row.passed else "FAIL"
        bits = []
        if row.final_error is not None:
            bits.append(f"final error {fmt(row.final_error)}")
        if row.fitted_order is not None and row.fitted_order == row.fitted_order:
            bits.append(f"order {fmt(row.fitted_order)}")
        if row.tolerance is not None:
            bits.append(f"tol {fmt(row.tolerance)}")
        suffix = f" ({', '.join(bits)})" if bits else ""
        lines.append(f"[{verdict}] {row.check_id}{suffix}")
        if row.detail:
            for piece in row.detail.split("\n"):
                lines.append(f"       {piece}")
    n_fail = sum(1 for row in checks if not row.passed)
    lines.append("")
    lines.append(f"{len(checks)} checks, {n_fail} failed")
    return "\n".join(lines) + "\n"


def render_csv(checks, frame_name: str = "", base_text: str = "") -> str:
    """CSV table, one row per rung (one bare row for rungless checks)."""
    out = [",".join(CSV_COLUMNS)]

    def emit(row, rung):
        out.append(",".join([
            row.check_id, frame_name, base_text,
            fmt(rung.eps), fmt(rung.measured), fmt(rung.reference),
            fmt(rung.error), fmt(row.fitted_order), fmt(row.tolerance),
            "pass" if row.passed else "fail",
        ]))

    for row in checks:
        if row.rungs:
            for rung in row.rungs:
                emit(row, rung)
        else:
            emit(row, Rung())
    return "\n".join(out) + "\n"


def vector_text(v) -> str:
    """Coordinate vector as semicolon-free decimal text."""
    return "(" + " ".join(fmt(float(c)) for c in v) + ")"
