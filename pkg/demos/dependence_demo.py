"""Perturb the terminal value and watch the solution move proportionally."""

from rbsde import BarrierSpec, DriverSpec, TerminalSpec, dependence_study
from rbsde.experiments import ScenarioSpec

spec = ScenarioSpec(1.0, BarrierSpec("constant", (-0.4,)), BarrierSpec("constant", (0.4,)),
                    DriverSpec("affine", (0.5, 0.05, 0.05, -0.05)), TerminalSpec("clamp", (-0.2, 0.2)))
rep = dependence_study(spec.build(10), TerminalSpec("constant", (1.0,)), [0.2, 0.1, 0.05])
print("eps      E|xi_hat|^2   lhs          ratio")
for eps, e, lhs, r in rep.rows():
    print(f"{eps:<8} {e:<13.4g} {lhs:<12.4g} {r:.4g}")
print("C_hat =", rep.C_hat)
