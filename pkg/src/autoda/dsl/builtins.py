"""Reference proposal programs shipped with the package."""

from __future__ import annotations

from .parser import parse

FINAL_SOURCE = """\
# evolved proposal: step along the difference vector plus scaled noise
d = x0 - x1
norm = max(norm2(d), norm2(noise))
return x1 + s * (d + d / norm) + s * (noise + s * (noise / norm))
"""

INITIAL_SOURCE = """\
# seed-population sample: interpolate, then add, subtract or multiply noise
n0 = randn()
x = s * x0 + (1 - s) * x1 + n0 * noise
n1 = rand(0.5, 1.5)
return choice(x + n1 * noise; x - n1 * noise; x * (n1 * noise))
"""


def built_in_final():
    return parse(FINAL_SOURCE)


def built_in_initial():
    return parse(INITIAL_SOURCE)


BUILTINS = {"final": built_in_final, "initial": built_in_initial}
