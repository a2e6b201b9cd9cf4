"""Solve a resistance scenario by Picard iteration and inspect the contraction."""

from rbsde import BarrierSpec, DriverSpec, TerminalSpec, solve_picard, warm_start
from rbsde.experiments import ScenarioSpec

spec = ScenarioSpec(
    T=1.0,
    lower=BarrierSpec("constant", (-0.4,)),
    upper=BarrierSpec("constant", (0.4,)),
    driver=DriverSpec("affine", (0.5, 0.05, 0.05, -0.05), L1=0.05, L2=0.05),
    terminal=TerminalSpec("clamp", (-0.2, 0.2)),
)
scn = spec.build(10)

quad, rep = solve_picard(scn)
for n, d in enumerate(rep.distances, 1):
    print(f"iter {n:2d}  d = {d:.3e}")
print("Y_0 =", quad.Y[0, 0])
print("residuals:", rep.residuals)

warm, _ = solve_picard(scn, initial=warm_start(scn))
print("cold vs warm |dY| =", abs(quad.Y - warm.Y).max())
