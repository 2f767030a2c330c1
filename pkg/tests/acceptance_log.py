"""Collects one PASS/FAIL line per acceptance criterion for the run summary."""

LINES: list[str] = []


def record(number: int, name: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {name} :: {detail}"
    LINES.append(line)
    print(line)
