"""Number formatting shared by every text output.

Values print with 10 digits after the decimal point, trailing zeros trimmed
(``1.1180339887``, ``1.5``, ``0``). Magnitudes outside [1e-4, 1e15) switch to
10 significant digits in exponent form so small residuals stay visible.
"""

import math

import numpy as np


def fmt_number(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if not math.isfinite(x):
        return str(x)
    if x == 0.0 or 1e-4 <= abs(x) < 1e15:
        out = np.format_float_positional(x, precision=10, unique=False, trim="-")
        return "0" if out in ("-0", "0") else out
    out = f"{x:.10g}"
    # rounding up next to the largest double would overflow on re-reading
    return out if math.isfinite(float(out)) else repr(x)


def canonical(x) -> float:
    """``x`` rounded to exactly what :func:`fmt_number` prints."""
    return float(fmt_number(x))
