"""Central finite-difference verification of taped gradients."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from ..errors import GradcheckError
from .autodiff import Parameter, Tensor, backward, no_grad
from .rng import SeededRng


@dataclass
class CoordinateCheck:
    path: str
    index: tuple[int, ...]
    analytic: float
    numeric: float
    rel_err: float


@dataclass
class GradcheckReport:
    tolerance: float
    step: float
    checks: list[CoordinateCheck] = field(default_factory=list)
    # element count of every checked parameter group
    sizes: dict[str, int] = field(default_factory=dict)

    @property
    def max_rel_err(self) -> float:
        return max((c.rel_err for c in self.checks), default=0.0)

    @property
    def failures(self) -> list[CoordinateCheck]:
        return [c for c in self.checks if c.rel_err > self.tolerance]

    @property
    def passed(self) -> bool:
        return not self.failures

    def per_group(self) -> dict[str, dict]:
        out: dict[str, dict] = {}
        for c in self.checks:
            g = out.setdefault(c.path, {"coords": 0, "max_rel_err": 0.0,
                                        "size": self.sizes.get(c.path)})
            g["coords"] += 1
            g["max_rel_err"] = max(g["max_rel_err"], c.rel_err)
        return out

    def to_dict(self) -> dict:
        return {
            "tolerance": self.tolerance,
            "step": self.step,
            "coords_checked": len(self.checks),
            "max_rel_err": self.max_rel_err,
            "passed": self.passed,
            "groups": self.per_group(),
            "failures": [vars(c) | {"index": list(c.index)} for c in self.failures],
        }


def relative_error(a: float, n: float, floor: float = 1e-8) -> float:
    """``|a - n| / max(|a|, |n|, floor)``; the floor only guards 0/0."""
    return abs(a - n) / max(abs(a), abs(n), floor)


def finite_difference_check(
    loss_fn: Callable[[], Tensor],
    params: Mapping[str, Parameter],
    tolerance: float = 1e-4,
    step: float = 1e-5,
    coords_per_param: int = 64,
    seed: int = 0,
    analytic: Mapping[str, np.ndarray] | None = None,
    strict: bool = True,
) -> GradcheckReport:
    """Compare analytic gradients of ``loss_fn()`` against central differences.

    Every parameter group contributes ``coords_per_param`` seeded coordinates
    (or all of them when it is smaller). ``analytic`` overrides the taped
    gradients, which is how negative controls are injected. With ``strict``
    a failing check raises :class:`GradcheckError` listing each bad coordinate.
    """
    flags = {name: p.trainable for name, p in params.items()}
    try:
        if analytic is None:
            for p in params.values():
                p.trainable = True
                p.zero_grad()
            backward(loss_fn())
            analytic = {name: p.grad.copy() for name, p in params.items()}

        rng = SeededRng(seed)
        report = GradcheckReport(tolerance=tolerance, step=step)
        with no_grad():
            for name in sorted(params):
                p = params[name]
                flat = p.data.reshape(-1)
                report.sizes[name] = int(flat.size)
                if flat.size <= coords_per_param:
                    picks = np.arange(flat.size)
                else:
                    picks = np.sort(rng.choice(flat.size, size=coords_per_param, replace=False))
                for k in picks:
                    orig = flat[k]
                    flat[k] = orig + step
                    f_plus = loss_fn().item()
                    flat[k] = orig - step
                    f_minus = loss_fn().item()
                    flat[k] = orig
                    numeric = (f_plus - f_minus) / (2.0 * step)
                    a = float(np.asarray(analytic[name]).reshape(-1)[k])
                    idx = tuple(int(i) for i in np.unravel_index(k, p.shape))
                    report.checks.append(
                        CoordinateCheck(name, idx, a, numeric, relative_error(a, numeric)))
    finally:
        for name, p in params.items():
            p.trainable = flags[name]
            p.zero_grad()

    if strict and not report.passed:
        lines = [f"  {c.path}{list(c.index)}: analytic={c.analytic:.10g} numeric={c.numeric:.10g} "
                 f"rel_err={c.rel_err:.3g}" for c in report.failures[:50]]
        raise GradcheckError(
            f"gradient check failed: {len(report.failures)} coordinates exceed "
            f"tolerance {tolerance:g}\n" + "\n".join(lines), report)
    return report
