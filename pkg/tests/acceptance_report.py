"""Collects one pass/fail line per acceptance criterion for the terminal summary."""

RESULTS = []


def report(number, title, passed, detail=""):
    line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}"
    if detail:
        line += f" -- {detail}"
    RESULTS.append(line)
    print(line)
    return passed
