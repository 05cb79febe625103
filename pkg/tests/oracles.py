"""Independent reference checkers used to freeze expected values.

Nothing here calls into the package's evaluator or auditor. Expressions are
read straight from their canonical byte encoding and compiled to plain
Python source, then brute-forced point by point.
"""

from __future__ import annotations

import itertools

OPS = {
    0x10: "min(255, {a} + {b})",
    0x11: "max(0, {a} - {b})",
    0x12: "(({a}) * ({b})) % 256",
    0x13: "min({a}, {b})",
    0x14: "max({a}, {b})",
    0x15: "(1 if {a} < {b} else 0)",
}


def _source(buf: bytes, pos: int) -> tuple[str, int]:
    tag = buf[pos]
    if tag == 0x01:
        return str(buf[pos + 1]), pos + 2
    if tag == 0x02:
        return f"x[{buf[pos + 1]}]", pos + 2
    if tag in OPS:
        a, pos2 = _source(buf, pos + 1)
        b, pos3 = _source(buf, pos2)
        return "(" + OPS[tag].format(a=a, b=b) + ")", pos3
    if tag == 0x20:
        c, p1 = _source(buf, pos + 1)
        t, p2 = _source(buf, p1)
        f, p3 = _source(buf, p2)
        return f"(({t}) if ({c}) != 0 else ({f}))", p3
    raise ValueError(f"unknown tag {tag}")


def compile_encoded_expr(buf: bytes):
    src, end = _source(buf, 0)
    assert end == len(buf)
    return eval(f"lambda x: {src}")  # noqa: S307 - source built from a closed grammar


def split_program(buf: bytes) -> tuple[int, list[bytes]]:
    """Return (arity, [declared, extra...]) as raw expression encodings."""
    assert buf[0] == 0x01
    arity, wm_len = buf[1], buf[2]
    pos = 3 + wm_len
    n_extra = buf[pos]
    pos += 1
    out = []
    for _ in range(1 + n_extra):
        _, end = _source(buf, pos)
        out.append(buf[pos:end])
        pos = end
    assert pos == len(buf)
    return arity, out


def brute_audit(program_bytes: bytes, ranges, reference_bytes: bytes):
    """('Pass',) | ('Incorrect', point) | ('Leak', k, (p0, p1))."""
    _, channels = split_program(program_bytes)
    declared = compile_encoded_expr(channels[0])
    ref = compile_encoded_expr(reference_bytes)
    points = list(itertools.product(*(range(lo, hi + 1) for lo, hi in ranges)))
    for x in points:
        if declared(x) != ref(x):
            return ("Incorrect", x)
    for k, enc in enumerate(channels[1:]):
        f = compile_encoded_expr(enc)
        first = f(points[0])
        for x in points[1:]:
            if f(x) != first:
                return ("Leak", k, (points[0], x))
    return ("Pass",)


def ubi_rank(s: int, h: int) -> int:
    return max(0, 100 - 2 * s - 3 * h)
