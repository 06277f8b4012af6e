"""Central finite-difference gradient checking."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .params import NumericError, Parameter

STEP = 1e-5


@dataclass
class GradCheckReport:
    tolerance: float
    errors: dict = field(default_factory=dict)   # name -> max relative error
    checked: dict = field(default_factory=dict)  # name -> entries probed

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return all(e <= self.tolerance for e in self.errors.values())

    def lines(self):
        for name, err in self.errors.items():
            flag = "ok  " if err <= self.tolerance else "FAIL"
            yield f"{flag} {name:<48s} max_rel={err:.3e} n={self.checked[name]}"


def relative_error(analytic, numeric, floor=1e-6):
    """|a - n| / max(|a|, |n|, floor); the floor keeps near-zero entries
    from turning round-off into huge ratios."""
    a, n = np.asarray(analytic), np.asarray(numeric)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def grad_check(
    loss_and_grads: Callable[[], float],
    params: Sequence[Parameter],
    tolerance: float = 1e-4,
    step: float = STEP,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
    floor: float = 1e-6,
    scale_floor: float = 1e-4,
) -> GradCheckReport:
    """Compare analytic gradients against central differences.

    ``loss_and_grads()`` must zero the parameters' grads, run forward and
    backward, and return the scalar loss.  When ``max_entries`` is given,
    only that many randomly chosen entries of each parameter are probed.

    The relative-error denominator never drops below ``floor`` nor below
    ``scale_floor`` times the parameter's largest analytic entry.  Entries
    a million times smaller than their neighbours would otherwise be scored
    on finite-difference round-off alone.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    loss = loss_and_grads()
    if not np.isfinite(loss):
        raise NumericError(f"non-finite loss {loss}")
    analytic = {id(p): p.grad.copy() for p in params}
    report = GradCheckReport(tolerance)
    for p in params:
        g = analytic[id(p)]
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite analytic gradient in {p.name}")
        p_floor = max(floor, scale_floor * float(np.abs(g).max(initial=0.0)))
        flat = p.value.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = rng.choice(flat.size, size=max_entries, replace=False)
        worst = 0.0
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            lp = loss_and_grads()
            flat[i] = orig - step
            lm = loss_and_grads()
            flat[i] = orig
            if not (np.isfinite(lp) and np.isfinite(lm)):
                raise NumericError(f"non-finite loss while probing {p.name}[{i}]")
            num = (lp - lm) / (2 * step)
            worst = max(worst, float(relative_error(g.reshape(-1)[i], num, p_floor)))
        report.errors[p.name] = worst
        report.checked[p.name] = len(idx)
    loss_and_grads()  # leave grads consistent with the unperturbed values
    return report
