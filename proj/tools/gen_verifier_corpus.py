#!/usr/bin/env python3
"""Writes tests/data/verifier_corpus.jsonl.

Every case is built from a known value and a known rendering, so the expected
label follows from construction: two renderings of the same number match,
a perturbed value or a missing/unbalanced box does not.
"""

import json
import random
import sys
from fractions import Fraction
from pathlib import Path

rng = random.Random(20240611)
cases = []


def add(category, text, gold, expect):
    cases.append({"category": category, "text": text, "gold": gold, "expect": expect})


def wrap(answer):
    lead = rng.choice(["", "So ", "Thus the result is ", "We get "])
    return f"Let's compute. {lead}the final answer is \\boxed{{{answer}}}"


def frac_tex(q, macro="\\frac"):
    sign = "-" if q < 0 else ""
    q = abs(q)
    return f"{sign}{macro}{{{q.numerator}}}{{{q.denominator}}}"


def with_commas(n):
    return f"{n:,}"


# Integers, matching and off by one.
for _ in range(20):
    n = rng.randint(-500, 5000)
    add("integer", wrap(str(n)), str(n), 1)
    add("integer", wrap(str(n + rng.choice([-2, -1, 1, 3]))), str(n), 0)

# Nested braces: fractions inside the box, compared against p/q and decimals.
for _ in range(15):
    den = rng.choice([2, 4, 5, 8, 10, 20, 25])
    num = rng.randint(1, 3 * den)
    q = Fraction(num, den)
    if q.denominator == 1:
        continue
    add("nested", wrap(frac_tex(q)), f"{q.numerator}/{q.denominator}", 1)
    add("nested", wrap("\\dfrac{" + str(q.numerator) + "}{" + str(q.denominator) + "}"),
        str(float(q)), 1)
    add("nested", wrap("{" + frac_tex(q) + "}"), frac_tex(q), 1)
    add("nested", wrap(frac_tex(q + Fraction(1, q.denominator))), frac_tex(q), 0)

# Fractions versus decimals.
for _ in range(15):
    den = rng.choice([2, 4, 5, 8, 16, 25])
    num = rng.randint(1, 4 * den)
    q = Fraction(num, den)
    if q.denominator == 1:
        continue
    dec = format(float(q), "f").rstrip("0").rstrip(".")
    add("frac_vs_decimal", wrap(dec), frac_tex(q), 1)
    add("frac_vs_decimal", wrap(frac_tex(q, "\\tfrac")), dec, 1)
    add("frac_vs_decimal", wrap(dec + "0"), f"{q.numerator}/{q.denominator}", 1)
for den in [3, 6, 7, 9, 11]:
    q = Fraction(1, den)
    rounded = f"{float(q):.2f}"
    add("frac_vs_decimal", wrap(rounded), frac_tex(q), 0)
    add("frac_vs_decimal", wrap(f"{float(q):.4f}"), f"1/{den}", 0)

# Missing or broken boxes.
for _ in range(12):
    n = rng.randint(1, 999)
    add("missing_box", f"The answer is {n}.", str(n), 0)
    add("missing_box", f"The answer is $\\boxed{{{n}$.", str(n), 0)
add("missing_box", "", "1", 0)
add("missing_box", "\\boxed", "1", 0)
add("missing_box", "\\fbox{3}", "3", 0)

# Trailing punctuation inside and after the box.
for _ in range(12):
    n = rng.randint(1, 2000)
    add("punctuation", wrap(f"{n}.") + ".", str(n), 1)
    add("punctuation", wrap(str(n)) + ".", str(n), 1)
    add("punctuation", wrap(f"{n}..."), str(n), 1)
add("punctuation", wrap("7."), "7.", 1)

# Multiple boxes: the last one counts.
for _ in range(8):
    a, b = rng.sample(range(1, 400), 2)
    text = f"First try \\boxed{{{a}}}, but correcting: \\boxed{{{b}}}"
    add("multiple_boxes", text, str(b), 1)
    add("multiple_boxes", text, str(a), 0)

# Thousands separators.
for _ in range(8):
    n = rng.randint(1000, 9_999_999)
    add("commas", wrap(with_commas(n)), str(n), 1)
    add("commas", wrap(with_commas(n).replace(",", "{,}")), str(n), 1)
add("commas", wrap("1,23"), "123", 0)
add("commas", wrap("12,3456"), "123456", 0)

# Math-mode wrappers, spacing, \left/\right, assignments, signs, units.
for _ in range(6):
    n = rng.randint(-99, 99)
    add("wrappers", wrap(f"${n}$"), str(n), 1)
    add("wrappers", wrap(f"\\({n}\\)"), str(n), 1)
    add("wrappers", wrap(f"x = {n}"), str(n), 1)
    add("wrappers", wrap(f"\\text{{{n}}}"), str(n), 1)
for _ in range(4):
    n = rng.randint(10, 170)
    add("wrappers", wrap(f"{n}^\\circ"), str(n), 1)
    add("wrappers", wrap(f"{n}^{{\\circ}}"), str(n), 1)
add("wrappers", "\\boxed {42}", "42", 1)
add("wrappers", wrap("+5"), "5", 1)
add("wrappers", wrap("007"), "7", 1)
add("wrappers", wrap("-0"), "0", 1)
add("wrappers", wrap("2.50"), "5/2", 1)
add("wrappers", wrap("\\frac12"), "0.5", 1)
add("wrappers", wrap("-\\frac{3}{4}"), "-0.75", 1)
add("wrappers", wrap("\\frac{-3}{4}"), "-3/4", 1)
add("wrappers", wrap("1\\,000"), "1000", 1)

# Non-numeric answers compared as normalized text.
add("text", wrap("\\left(1, 2\\right)"), "(1,2)", 1)
add("text", wrap("(1, 2)"), "(2,1)", 0)
add("text", wrap("\\sqrt{2}"), "\\sqrt{2}", 1)
add("text", wrap("2\\sqrt{3}"), "2 \\sqrt{3}", 1)
add("text", wrap("\\sqrt{3}"), "\\sqrt{2}", 0)
add("text", wrap("\\text{yes}"), "yes", 1)
add("text", wrap("\\textbf{B}"), "B", 1)
add("text", wrap("B"), "C", 0)
add("text", wrap("\\pi"), "\\pi", 1)
add("text", wrap("2\\pi"), "\\pi", 0)
add("text", wrap("x^2+1"), "x^2 + 1", 1)
add("text", wrap("[0, 1)"), "[0,1)", 1)

out = Path(sys.argv[1]) if len(sys.argv) > 1 else (
    Path(__file__).resolve().parent.parent / "tests" / "data" / "verifier_corpus.jsonl")
out.parent.mkdir(parents=True, exist_ok=True)
with out.open("w") as f:
    for c in cases:
        f.write(json.dumps(c, ensure_ascii=False) + "\n")
print(f"{len(cases)} cases -> {out}")
