"""Result records shared by hypothesis certifiers and the verification suite."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any


class HypothesisError(ValueError):
    """A problem ingredient violates a standing hypothesis."""

    def __init__(self, message: str, witness: dict | None = None):
        super().__init__(message)
        self.witness = witness or {}


@dataclass
class CheckResult:
    """Outcome of one named check.

    ``margin`` is the worst slack observed (positive means satisfied).
    Failing results must carry a witness describing the violation.
    """

    name: str
    status: str
    margin: float | None = None
    witness: dict[str, Any] = field(default_factory=dict)
    details: dict[str, Any] = field(default_factory=dict)
    seed: int | None = None

    def __post_init__(self):
        if self.status not in ("pass", "fail", "skip"):
            raise ValueError(f"unknown status {self.status!r}")
        if self.status == "fail" and not self.witness:
            raise ValueError(f"failing check {self.name!r} has no witness")

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def line(self) -> str:
        margin = "" if self.margin is None else f" margin={self.margin:.3e}"
        return f"{self.status.upper():4s} {self.name}{margin}"


def combine(name: str, parts: list[CheckResult], **details) -> CheckResult:
    """Fold sub-results into one: any fail fails, all-skip skips."""
    failed = [r for r in parts if r.status == "fail"]
    if failed:
        first = failed[0]
        return CheckResult(
            name,
            "fail",
            first.margin,
            witness={"failed": first.name, **first.witness},
            details={"parts": parts, **details},
        )
    if parts and all(r.status == "skip" for r in parts):
        return CheckResult(name, "skip", details={"parts": parts, **details})
    margins = [r.margin for r in parts if r.margin is not None]
    return CheckResult(
        name, "pass", min(margins) if margins else None, details={"parts": parts, **details}
    )
