"""Check reports: measured quantities against declared bounds."""

import math
from dataclasses import dataclass, field


def _ratio(measured, bound):
    if bound == 0:
        return 0.0 if measured == 0 else math.inf
    return measured / bound


@dataclass
class CheckReport:
    """Outcome of one check.

    ``measured`` and ``bound`` share their keys; each key is one inequality
    ``measured <= bound * (1 + tolerance)``. ``formulae`` records, per key,
    how the bound was obtained. A skipped check carries no rows and passes.
    """

    check_id: str
    measured: dict
    bound: dict
    formulae: dict
    tolerance: float
    tolerance_policy: str
    details: dict = field(default_factory=dict)
    skipped: str | None = None

    def __post_init__(self):
        if set(self.measured) != set(self.bound):
            raise ValueError(f"{self.check_id}: measured and bound keys differ")
        for where in (self.measured, self.bound):
            for k, v in where.items():
                v = float(v)
                if not math.isfinite(v):
                    raise ValueError(f"{self.check_id}: non-finite value for {k!r}")
                where[k] = v
        if not self.tolerance >= 0:
            raise ValueError("tolerance must be nonnegative")

    @classmethod
    def skip(cls, check_id, reason, tolerance=0.0, policy=""):
        return cls(check_id, {}, {}, {}, tolerance, policy, skipped=reason)

    @property
    def slack(self):
        return {k: _ratio(self.measured[k], self.bound[k]) for k in self.measured}

    @property
    def passed(self):
        return all(s <= 1.0 + self.tolerance for s in self.slack.values())

    @property
    def status(self):
        if self.skipped is not None:
            return "skipped"
        return "pass" if self.passed else "fail"

    def rows(self, scenario):
        """Flat CSV rows; the check id carries the row key when there are several."""
        if self.skipped is not None:
            return [{"check_id": self.check_id, "scenario": scenario, "measured": "",
                     "bound": "", "slack": "", "pass": "skipped"}]
        out = []
        slack = self.slack
        for k in self.measured:
            cid = self.check_id if len(self.measured) == 1 else f"{self.check_id}:{k}"
            out.append({
                "check_id": cid,
                "scenario": scenario,
                "measured": repr(self.measured[k]),
                "bound": repr(self.bound[k]),
                "slack": repr(slack[k]),
                "pass": "true" if slack[k] <= 1.0 + self.tolerance else "false",
            })
        return out

    def to_dict(self):
        return {
            "check_id": self.check_id,
            "status": self.status,
            "measured": dict(self.measured),
            "predicted_bound": dict(self.bound),
            "formulae": dict(self.formulae),
            "slack": self.slack,
            "tolerance": self.tolerance,
            "tolerance_policy": self.tolerance_policy,
            "details": self.details,
            **({"skipped": self.skipped} if self.skipped is not None else {}),
        }


def merge(check_id, reports, tolerance, policy, details=None):
    """Combine sub-reports that share one tolerance into a single report."""
    measured, bound, formulae = {}, {}, {}
    for prefix, rep in reports:
        for k in rep.measured:
            key = f"{prefix}/{k}" if prefix else k
            measured[key] = rep.measured[k]
            bound[key] = rep.bound[k]
            formulae[key] = rep.formulae.get(k, "")
    return CheckReport(check_id, measured, bound, formulae, tolerance, policy, details or {})
